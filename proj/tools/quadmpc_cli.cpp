#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "quadmpc/harness.hpp"

using namespace quadmpc;

namespace {

struct Common {
  std::string config_file;
  std::string out;
  double duration = 0.0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output directory");
  cmd->add_option("--duration", c.duration, "override the simulated duration [s]");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config_file.empty() ? ExperimentConfig{}
                                               : ExperimentConfig::load(c.config_file);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.duration > 0.0) cfg.duration = c.duration;
  cfg.validate();
  return cfg;
}

void print_metrics(const RunMetrics& m) {
  std::printf("%-10s rmse (%.4f, %.4f, %.4f) combined %.4f m | solve avg %.2f ms max %.2f ms | "
              "iters %.1f | unconverged %d | intersample failures %d | thrust [%.2f, %.2f]\n",
              to_string(m.variant).c_str(), m.rmse_xyz.x(), m.rmse_xyz.y(), m.rmse_xyz.z(),
              m.rmse_combined, m.avg_solve_time * 1e3, m.max_solve_time * 1e3, m.avg_iterations,
              m.unconverged_solves, m.intersample_failures, m.min_thrust, m.max_thrust);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade MPC quadcopter tracking: closed-loop runs, comparison, certificates, audits"};
  app.require_subcommand(1);

  Common run_opts;
  std::string variant_name;
  auto* run = app.add_subcommand("run", "closed-loop run of one controller");
  add_common(run, run_opts);
  run->add_option("-v,--variant", variant_name, "coupled | decoupled | baseline");

  Common cmp_opts;
  auto* cmp = app.add_subcommand("compare", "run all configured controllers and write a report");
  add_common(cmp, cmp_opts);

  Common cert_opts;
  auto* cert = app.add_subcommand("certify", "build and validate the stability certificate");
  add_common(cert, cert_opts);

  std::string audit_dir;
  double audit_tol = 1e-6;
  auto* audit = app.add_subcommand("audit", "re-check a run directory against its invariants");
  audit->add_option("run_dir", audit_dir, "directory written by `run`")->required()->check(CLI::ExistingDirectory);
  audit->add_option("--tol", audit_tol, "constraint tolerance");

  auto* defaults = app.add_subcommand("config", "print the default config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig cfg = load_config(run_opts);
      const Variant v = variant_name.empty() ? cfg.variants.front() : variant_from_string(variant_name);
      const RunMetrics m = run_closed_loop(cfg, v);
      print_metrics(m);
      if (!cfg.output_dir.empty()) std::printf("logs written to %s\n", cfg.output_dir.c_str());
      return 0;
    }
    if (*cmp) {
      ExperimentConfig cfg = load_config(cmp_opts);
      const auto outcomes = compare_variants(cfg);
      int failures = 0;
      for (const auto& o : outcomes) {
        if (o.metrics) {
          print_metrics(*o.metrics);
        } else {
          ++failures;
          std::printf("%-10s FAILED: %s\n", to_string(o.variant).c_str(), o.error.c_str());
        }
      }
      if (!cfg.output_dir.empty()) {
        std::printf("report written to %s\n", (cfg.output_dir / "report.md").c_str());
      }
      return failures == 0 ? 0 : 1;
    }
    if (*cert) {
      ExperimentConfig cfg = load_config(cert_opts);
      const ExperimentSetup s = prepare_experiment(cfg);
      const Certificate& c = *s.certificate;
      std::printf("rho_star %.6f  kappa %.6g  lambda %.6g  theta %.6g  L_u %.6g  (%.3f s)\n",
                  c.rho_star, c.kappa, c.lambda, c.theta, c.Lu, s.certificate_seconds);
      for (const auto& [name, value] : c.residuals) std::printf("  %-28s %.3e\n", name.c_str(), value);
      std::printf("certificate %s\n", c.valid() ? "valid" : "INVALID");
      if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream(cfg.output_dir / "certificate.json") << c.to_json().dump(2) << "\n";
      }
      return c.valid() ? 0 : 1;
    }
    if (*audit) {
      const AuditReport r = audit_run(audit_dir, audit_tol);
      for (const auto& c : r.checks) {
        std::printf("%s  %-45s worst %+.3e over %zu rows\n", c.passed ? "PASS" : "FAIL",
                    c.name.c_str(), c.worst, c.rows);
      }
      return r.passed() ? 0 : 1;
    }
    if (*defaults) {
      std::cout << ExperimentConfig{}.to_json().dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
