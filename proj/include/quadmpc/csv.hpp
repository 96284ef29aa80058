#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "quadmpc/types.hpp"
#include "quadmpc/vehicle.hpp"

namespace quadmpc {

struct ReferencePoint;

/// Numeric CSV writer. Values use the shortest round-trip representation so
/// identical runs produce identical bytes.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t width_;
  std::string buffer_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Index of a column; throws InvalidArgument when absent.
  std::size_t col(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Column layouts of the run logs.
std::vector<std::string> state_columns();
std::vector<std::string> reference_columns();
std::vector<std::string> diag_columns();
std::vector<std::string> constraint_columns();

std::vector<double> state_row(double t, const QuadState& x, double T, const Vec3& tau,
                              const Vec3& a_d, double rho);
std::vector<double> reference_row(const ReferencePoint& ref, double rho);

}  // namespace quadmpc
