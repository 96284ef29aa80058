#include "quadmpc/csv.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include "quadmpc/reference.hpp"

namespace quadmpc {

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path), width_(columns.size()) {
  if (!out_) throw InvalidArgument("cannot write " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != width_) throw InvalidArgument("CsvWriter: row width mismatch");
  buffer_.clear();
  char tmp[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buffer_.push_back(',');
    const auto res = std::to_chars(tmp, tmp + sizeof(tmp), values[i]);
    buffer_.append(tmp, res.ptr);
  }
  buffer_.push_back('\n');
  out_ << buffer_;
}

std::size_t CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw InvalidArgument("CSV column '" + name + "' not found");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.columns.size());
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      if (*end != ',') break;
      p = end + 1;
    }
    if (row.size() != t.columns.size()) {
      throw InvalidArgument(path.string() + ": malformed row " + std::to_string(t.rows.size() + 2));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

void append_vec(std::vector<std::string>& cols, const std::string& base) {
  for (const char* s : {"_x", "_y", "_z"}) cols.push_back(base + s);
}

void append_mat(std::vector<std::string>& cols, const std::string& base) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cols.push_back(base + "_" + std::to_string(r) + std::to_string(c));
  }
}

void push(std::vector<double>& v, const Vec3& a) { v.insert(v.end(), {a.x(), a.y(), a.z()}); }

void push(std::vector<double>& v, const Mat3& M) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v.push_back(M(r, c));
  }
}

}  // namespace

std::vector<std::string> state_columns() {
  std::vector<std::string> c = {"t"};
  append_vec(c, "p");
  append_vec(c, "v");
  append_mat(c, "R");
  append_vec(c, "w");
  c.push_back("T");
  append_vec(c, "tau");
  append_vec(c, "ad");
  c.push_back("rho");
  return c;
}

std::vector<std::string> reference_columns() {
  std::vector<std::string> c = {"t"};
  append_vec(c, "pbar");
  append_vec(c, "vbar");
  append_mat(c, "Rbar");
  append_vec(c, "wbar");
  c.push_back("Tbar");
  append_vec(c, "taubar");
  c.push_back("rho");
  return c;
}

std::vector<std::string> diag_columns() {
  return {"k", "t", "solve_time", "iterations", "kkt_residual", "cost", "active_mask", "converged"};
}

std::vector<std::string> constraint_columns() {
  std::vector<std::string> c = {"k", "t", "rho_now", "rho_next", "u_x", "u_y", "u_z"};
  for (const char* base : {"unified_lo_", "unified_up_", "lo_", "up_"}) {
    for (int j = 0; j < 6; ++j) c.push_back(base + std::to_string(j));
  }
  return c;
}

std::vector<double> state_row(double t, const QuadState& x, double T, const Vec3& tau,
                              const Vec3& a_d, double rho) {
  std::vector<double> v = {t};
  v.reserve(27);
  push(v, x.p);
  push(v, x.v);
  push(v, x.R);
  push(v, x.omega);
  v.push_back(T);
  push(v, tau);
  push(v, a_d);
  v.push_back(rho);
  return v;
}

std::vector<double> reference_row(const ReferencePoint& ref, double rho) {
  std::vector<double> v = {ref.t};
  v.reserve(24);
  push(v, ref.pbar);
  push(v, ref.vbar);
  push(v, ref.Rbar);
  push(v, ref.wbar);
  v.push_back(ref.Tbar);
  push(v, ref.taubar);
  v.push_back(rho);
  return v;
}

}  // namespace quadmpc
