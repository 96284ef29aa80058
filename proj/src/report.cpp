#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "quadmpc/csv.hpp"
#include "quadmpc/harness.hpp"

namespace quadmpc {

std::vector<VariantOutcome> compare_variants(const ExperimentConfig& config) {
  const ExperimentSetup setup = prepare_experiment(config);

  std::vector<std::future<RunMetrics>> jobs;
  for (Variant v : config.variants) {
    jobs.push_back(std::async(std::launch::async, [&config, &setup, v] {
      ExperimentConfig c = config;
      if (!config.output_dir.empty()) c.output_dir = config.output_dir / to_string(v);
      return run_closed_loop(c, v, setup);
    }));
  }

  std::vector<VariantOutcome> outcomes;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    VariantOutcome o;
    o.variant = config.variants[i];
    try {
      o.metrics = jobs[i].get();
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    outcomes.push_back(std::move(o));
  }

  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    std::ofstream(config.output_dir / "report.md") << render_report(config, outcomes);

    std::ofstream csv(config.output_dir / "comparison.csv");
    csv << "variant,rmse_x,rmse_y,rmse_z,rmse_combined,avg_solve_time,max_solve_time,"
           "avg_iterations,max_kkt_residual,unconverged_solves,max_constraint_violation,"
           "max_dodecahedron_violation,max_sphere_violation,intersample_failures,min_thrust,"
           "max_thrust,thrust_clamps,error\n";
    csv << std::setprecision(17);
    for (const auto& o : outcomes) {
      csv << to_string(o.variant);
      if (o.metrics) {
        const RunMetrics& m = *o.metrics;
        csv << ',' << m.rmse_xyz.x() << ',' << m.rmse_xyz.y() << ',' << m.rmse_xyz.z() << ','
            << m.rmse_combined << ',' << m.avg_solve_time << ',' << m.max_solve_time << ','
            << m.avg_iterations << ',' << m.max_kkt_residual << ',' << m.unconverged_solves
            << ',' << m.max_constraint_violation << ',' << m.max_dodecahedron_violation << ','
            << m.max_sphere_violation << ',' << m.intersample_failures << ',' << m.min_thrust
            << ',' << m.max_thrust << ',' << m.thrust_clamps << ",\n";
      } else {
        std::string err = o.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        csv << std::string(17, ',') << '"' << err << "\"\n";
      }
    }
  }
  return outcomes;
}

namespace {

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string vec(const Vec3& v, int prec = 3) {
  return "(" + fmt(v.x(), prec) + ", " + fmt(v.y(), prec) + ", " + fmt(v.z(), prec) + ")";
}

}  // namespace

std::string render_report(const ExperimentConfig& config,
                          const std::vector<VariantOutcome>& outcomes) {
  std::ostringstream md;
  md << "# Closed-loop controller comparison\n\n";
  md << "## Setup\n\n";
  md << "- trajectory: `" << config.trajectory << "`";
  if (config.trajectory == "trig") md << " (scale " << config.trajectory_scale << ")";
  md << ", duration " << config.duration << " s, " << config.samples() << " samples\n";
  md << "- h = " << config.h << " s, gamma = " << config.gamma << " s, N = " << config.horizon
     << ", delta = " << config.delta << ", plant step " << config.h / config.substeps * 1e3
     << " ms\n";
  md << "- initial condition: p(0) = pbar(0) + " << vec(config.initial_offset)
     << " m, v(0) = " << vec(config.initial_velocity) << " m/s, omega(0) = "
     << vec(config.initial_rate) << " rad/s, R(0) "
     << (config.initial_attitude.isIdentity(1e-12) ? "= I" : "from config")
     << ", a_d(0) = eta(0) = 0\n";
  md << "- seed: " << config.seed << " (the closed loop is deterministic)\n";
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const RunMetrics& m = *o.metrics;
    md << "- rho_star = " << fmt(m.rho_star, 4) << ", min rho_k = " << fmt(m.rho_min, 4)
       << ", alpha + beta = " << fmt(m.alpha + m.beta, 4) << ", feasibility condition "
       << (m.feasibility ? "holds" : "FAILS") << "\n";
    break;
  }
  md << "\nCombined RMSE is sqrt(rmse_x^2 + rmse_y^2 + rmse_z^2), each per-axis RMSE taken over "
        "the position error at the MPC samples.\n\n";

  md << "## Tracking error\n\n";
  md << "| controller | RMSE x [m] | RMSE y [m] | RMSE z [m] | combined [m] | final error [m] |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& o : outcomes) {
    md << "| " << to_string(o.variant) << " | ";
    if (!o.metrics) {
      md << "failed | | | | |\n";
      continue;
    }
    const RunMetrics& m = *o.metrics;
    md << fmt(m.rmse_xyz.x()) << " | " << fmt(m.rmse_xyz.y()) << " | " << fmt(m.rmse_xyz.z())
       << " | " << fmt(m.rmse_combined) << " | " << fmt(m.final_position_error, 4) << " |\n";
  }

  md << "\n## Solver timing\n\n";
  md << "| controller | avg solve [ms] | max solve [ms] | avg iterations | max KKT residual | "
        "unconverged |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const RunMetrics& m = *o.metrics;
    md << "| " << to_string(o.variant) << " | " << fmt(m.avg_solve_time * 1e3, 2) << " | "
       << fmt(m.max_solve_time * 1e3, 2) << " | " << fmt(m.avg_iterations, 1) << " | "
       << sci(m.max_kkt_residual) << " | " << m.unconverged_solves << " |\n";
  }
  md << "\nThe MPC period is " << config.h * 1e3
     << " ms. The decoupled controller solves a single 12-state problem with "
        "axis-separable constraints, so its timing is not a per-axis figure.\n";

  md << "\n## Constraint activity\n\n";
  md << "Samples at which each bound of the applied input is active (upper / lower).\n\n";
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const RunMetrics& m = *o.metrics;
    md << "- " << to_string(o.variant) << ": ";
    const std::size_t n = m.active_counts.size() / 2;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) md << ", ";
      md << (o.variant == Variant::Coupled ? "face " : "axis ") << j << " "
         << m.active_counts[2 * j] << "/" << m.active_counts[2 * j + 1];
    }
    md << "\n";
  }

  md << "\n## Constraint audit\n\n";
  md << "| controller | own set excess | dodecahedron excess | sphere excess | intersample "
        "failures | thrust range [m/s^2] | clamps |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const RunMetrics& m = *o.metrics;
    md << "| " << to_string(o.variant) << " | " << sci(m.max_constraint_violation) << " | "
       << sci(m.max_dodecahedron_violation) << " | " << sci(m.max_sphere_violation) << " | "
       << m.intersample_failures << " | [" << fmt(m.min_thrust, 2) << ", "
       << fmt(m.max_thrust, 2) << "] | " << m.thrust_clamps << " |\n";
  }
  for (const auto& o : outcomes) {
    if (!o.metrics || o.variant != Variant::Coupled) continue;
    const bool ok = o.metrics->max_sphere_violation <= 1e-6;
    md << "\n|a_d(t)| <= rho(t) at every plant sub-step for the coupled controller: "
       << (ok ? "**yes**" : "**NO**") << "\n";
  }
  md << "\nExcess values are max(constraint value - bound); negative numbers are margins.\n";

  md << "\n## Notes\n\n";
  md << "- The baseline controller uses the time-invariant cube |a_d,i| <= min_t rho(t) / "
        "sqrt(3) with the same terminal cost as the other controllers and no additional "
        "stabilizing constraint.\n";

  bool any_error = false;
  for (const auto& o : outcomes) any_error = any_error || !o.metrics;
  if (any_error) {
    md << "\n## Failures\n\n";
    for (const auto& o : outcomes) {
      if (!o.metrics) md << "- " << to_string(o.variant) << ": " << o.error << "\n";
    }
  }
  return md.str();
}

bool AuditReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.passed; });
}

AuditReport audit_run(const std::filesystem::path& run_dir, double tol) {
  std::ifstream mf(run_dir / "metrics.json");
  if (!mf) throw InvalidArgument("audit: no metrics.json in " + run_dir.string());
  const nlohmann::json meta = nlohmann::json::parse(mf);
  const Variant variant = variant_from_string(meta.at("variant").get<std::string>());
  const double rho_star = meta.at("rho_star").get<double>();
  const double level = meta.at("baseline_level").get<double>();
  const double Tmax = meta.at("Tmax").get<double>();

  AuditReport report;
  auto check = [&](const std::string& name, double worst, double limit, std::size_t rows) {
    report.checks.push_back({name, worst <= limit, worst, rows});
  };

  const CsvTable st = read_csv(run_dir / "states.csv");
  const std::size_t iR = st.col("R_00"), iT = st.col("T"), iA = st.col("ad_x"),
                    iRho = st.col("rho");
  double so3 = 0.0, thrust = -INFINITY, sphere = -INFINITY, dodec = -INFINITY, own = -INFINITY;
  for (const auto& r : st.rows) {
    Mat3 R;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) R(a, b) = r[iR + 3 * a + b];
    }
    so3 = std::max({so3, (R.transpose() * R - Mat3::Identity()).norm(),
                    std::abs(R.determinant() - 1.0)});
    thrust = std::max({thrust, -r[iT], r[iT] - Tmax});
    const Vec3 ad(r[iA], r[iA + 1], r[iA + 2]);
    const double rho = r[iRho];
    sphere = std::max(sphere, ad.norm() - rho);
    double d = -INFINITY;
    for (const Vec3& c : face_normals()) d = std::max(d, std::abs(c.dot(ad)));
    dodec = std::max(dodec, d - rho);
    const double box = ad.cwiseAbs().maxCoeff();
    if (variant == Variant::Coupled) own = std::max(own, d - rho);
    if (variant == Variant::Decoupled) own = std::max(own, box - rho / std::sqrt(3.0));
    if (variant == Variant::Baseline) own = std::max(own, box - level);
  }
  check("rotation in SO(3)", so3, 1e-9, st.rows.size());
  check("thrust in [0, Tmax]", thrust, 0.0, st.rows.size());
  check("|a_d| <= rho(t)", sphere, tol, st.rows.size());
  check("a_d in dodecahedron(rho(t))", dodec, tol, st.rows.size());
  check("a_d in " + to_string(variant) + " set", own, tol, st.rows.size());

  const CsvTable ct = read_csv(run_dir / "constraints.csv");
  const std::size_t iu = ct.col("u_x"), ilo = ct.col("lo_0"), iup = ct.col("up_0"),
                    iulo = ct.col("unified_lo_0"), iuup = ct.col("unified_up_0");
  std::vector<Vec3> normals;
  if (variant == Variant::Coupled) {
    normals.assign(face_normals().begin(), face_normals().end());
  } else {
    normals = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  }
  double input = -INFINITY, cube = -INFINITY;
  for (const auto& r : ct.rows) {
    const Vec3 u(r[iu], r[iu + 1], r[iu + 2]);
    for (std::size_t j = 0; j < normals.size(); ++j) {
      const double c = normals[j].dot(u);
      input = std::max({input, c - r[iup + j], r[ilo + j] - c});
    }
    for (int j = 0; j < kNumFaces; ++j) {
      cube = std::max({cube, rho_star - r[iuup + j], r[iulo + j] + rho_star});
    }
  }
  check("input within its stage bounds", input, tol, ct.rows.size());
  check("cube(rho_star/sqrt(3)) inside unified set", cube, 1e-9, ct.rows.size());

  const CsvTable dt = read_csv(run_dir / "mpc_diag.csv");
  const std::size_t ik = dt.col("kkt_residual"), ic = dt.col("converged");
  double kkt = 0.0;
  for (const auto& r : dt.rows) {
    if (r[ic] == 1.0) kkt = std::max(kkt, r[ik]);
  }
  check("KKT residual of converged solves", kkt, 1e-6, dt.rows.size());
  return report;
}

}  // namespace quadmpc
