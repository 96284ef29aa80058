#include "quadmpc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "quadmpc/csv.hpp"

namespace quadmpc {

namespace {

using nlohmann::json;

Vec3 read_vec3(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) {
    throw InvalidArgument(std::string("config: '") + key + "' must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

// Accepts a full nested matrix or the list of its diagonal entries.
Eigen::MatrixXd read_matrix(const json& j, Eigen::Index n, const char* key) {
  if (!j.is_array()) throw InvalidArgument(std::string("config: '") + key + "' must be an array");
  if (j.size() == static_cast<std::size_t>(n) && !j[0].is_array()) {
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = j[i].get<double>();
    return d.asDiagonal();
  }
  if (j.size() != static_cast<std::size_t>(n)) {
    throw InvalidArgument(std::string("config: '") + key + "' has the wrong size");
  }
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!j[r].is_array() || j[r].size() != static_cast<std::size_t>(n)) {
      throw InvalidArgument(std::string("config: '") + key + "' has a malformed row");
    }
    for (Eigen::Index c = 0; c < n; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

json write_matrix(const Eigen::MatrixXd& M) {
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(row);
  }
  return out;
}

json write_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) {
      throw InvalidArgument(std::string("config: unknown key '") + k + "' in " + where);
    }
  }
}

bool is_spd(const Eigen::MatrixXd& M) {
  if ((M - M.transpose()).norm() > 1e-12 * std::max(1.0, M.norm())) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  return llt.info() == Eigen::Success;
}

}  // namespace

int ExperimentConfig::samples() const {
  return static_cast<int>(std::llround(duration / h));
}

std::shared_ptr<const FlatTrajectory> ExperimentConfig::make_trajectory() const {
  if (trajectory == "trig") return std::make_shared<TrigTrajectory>(trajectory_scale);
  if (trajectory == "hover") return std::make_shared<HoverTrajectory>(hover_position, hover_heading);
  throw InvalidArgument("config: unknown trajectory '" + trajectory + "'");
}

MpcConfig ExperimentConfig::mpc_config(Variant v) const {
  MpcConfig c;
  c.horizon = horizon;
  c.Q = Q;
  c.R = R;
  c.variant = v;
  c.kkt_tolerance = kkt_tolerance;
  c.max_iterations = max_iterations;
  c.warm_start = warm_start;
  return c;
}

void ExperimentConfig::validate() const {
  if (variants.empty()) throw InvalidArgument("config: no variants");
  if (!(h > 0.0)) throw InvalidArgument("config: h must be positive");
  if (!(gamma > 0.0)) throw InvalidArgument("config: gamma must be positive");
  if (horizon < 1) throw InvalidArgument("config: horizon must be >= 1");
  if (!(duration > 0.0) || std::abs(duration / h - samples()) > 1e-9 * samples()) {
    throw InvalidArgument("config: duration must be a positive multiple of h");
  }
  if (substeps < 1) throw InvalidArgument("config: substeps must be >= 1");
  if (!(delta > 0.0)) throw InvalidArgument("config: delta must be positive");
  if (!is_spd(Q)) throw InvalidArgument("config: Q must be 12x12 SPD");
  if (!is_spd(R)) throw InvalidArgument("config: R must be 3x3 SPD");
  if (!is_spd(gains.K_omega) || !is_spd(gains.K_R) || (gains.k.array() <= 0.0).any()) {
    throw InvalidArgument("config: attitude gains must be positive");
  }
  if (kkt_tolerance <= 0.0 || max_iterations < 1) {
    throw InvalidArgument("config: bad solver settings");
  }
  plant.validate();
  make_trajectory();
}

json ExperimentConfig::to_json() const {
  json j;
  j["variants"] = json::array();
  for (Variant v : variants) j["variants"].push_back(to_string(v));
  j["h"] = h;
  j["gamma"] = gamma;
  j["horizon"] = horizon;
  j["Q"] = write_matrix(Q);
  j["R"] = write_matrix(R);
  j["kkt_tolerance"] = kkt_tolerance;
  j["max_iterations"] = max_iterations;
  j["warm_start"] = warm_start;
  j["max_failed_solves"] = max_failed_solves;
  j["gains"] = {{"K_omega", write_matrix(gains.K_omega)},
                {"K_R", write_matrix(gains.K_R)},
                {"k", write_vec3(gains.k)}};
  j["delta"] = delta;
  j["plant"] = {{"g", plant.g},
                {"J", write_matrix(plant.J)},
                {"drag", write_vec3(plant.drag)},
                {"A", write_matrix(plant.A)},
                {"C", write_matrix(plant.C)},
                {"tau_g", write_vec3(plant.tau_g)},
                {"Tmax", plant.Tmax}};
  j["duration"] = duration;
  j["substeps"] = substeps;
  j["trajectory"] = {{"type", trajectory},
                     {"scale", trajectory_scale},
                     {"position", write_vec3(hover_position)},
                     {"heading", hover_heading}};
  j["initial"] = {{"offset", write_vec3(initial_offset)},
                  {"velocity", write_vec3(initial_velocity)},
                  {"attitude", write_matrix(initial_attitude)},
                  {"rate", write_vec3(initial_rate)}};
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  reject_unknown(j,
                 {"variants", "h", "gamma", "horizon", "Q", "R", "kkt_tolerance",
                  "max_iterations", "warm_start", "max_failed_solves", "gains", "delta", "plant",
                  "duration", "substeps", "trajectory", "initial", "output_dir", "seed"},
                 "top level");
  ExperimentConfig c;
  try {
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j["variants"]) c.variants.push_back(variant_from_string(v.get<std::string>()));
    }
    c.h = j.value("h", c.h);
    c.gamma = j.value("gamma", c.gamma);
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("Q")) c.Q = read_matrix(j["Q"], 12, "Q");
    if (j.contains("R")) c.R = read_matrix(j["R"], 3, "R");
    c.kkt_tolerance = j.value("kkt_tolerance", c.kkt_tolerance);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.warm_start = j.value("warm_start", c.warm_start);
    c.max_failed_solves = j.value("max_failed_solves", c.max_failed_solves);
    c.delta = j.value("delta", c.delta);

    if (j.contains("plant")) {
      const json& p = j["plant"];
      reject_unknown(p, {"g", "J", "drag", "A", "C", "tau_g", "Tmax"}, "plant");
      c.plant.g = p.value("g", c.plant.g);
      if (p.contains("J")) c.plant.J = read_matrix(p["J"], 3, "plant.J");
      if (p.contains("drag")) c.plant.drag = read_vec3(p["drag"], "plant.drag");
      if (p.contains("A")) c.plant.A = read_matrix(p["A"], 3, "plant.A");
      if (p.contains("C")) c.plant.C = read_matrix(p["C"], 3, "plant.C");
      if (p.contains("tau_g")) c.plant.tau_g = read_vec3(p["tau_g"], "plant.tau_g");
      c.plant.Tmax = p.value("Tmax", c.plant.Tmax);
    }
    c.gains = AttitudeGains::defaults(c.plant);
    if (j.contains("gains")) {
      const json& g = j["gains"];
      reject_unknown(g, {"K_omega", "K_R", "k"}, "gains");
      if (g.contains("K_omega")) c.gains.K_omega = read_matrix(g["K_omega"], 3, "gains.K_omega");
      if (g.contains("K_R")) c.gains.K_R = read_matrix(g["K_R"], 3, "gains.K_R");
      if (g.contains("k")) c.gains.k = read_vec3(g["k"], "gains.k");
    }

    c.duration = j.value("duration", c.duration);
    c.substeps = j.value("substeps", c.substeps);
    if (j.contains("trajectory")) {
      const json& t = j["trajectory"];
      reject_unknown(t, {"type", "scale", "position", "heading"}, "trajectory");
      c.trajectory = t.value("type", c.trajectory);
      c.trajectory_scale = t.value("scale", c.trajectory_scale);
      if (t.contains("position")) c.hover_position = read_vec3(t["position"], "trajectory.position");
      c.hover_heading = t.value("heading", c.hover_heading);
    }
    if (j.contains("initial")) {
      const json& i = j["initial"];
      reject_unknown(i, {"offset", "velocity", "attitude", "rate"}, "initial");
      if (i.contains("offset")) c.initial_offset = read_vec3(i["offset"], "initial.offset");
      if (i.contains("velocity")) c.initial_velocity = read_vec3(i["velocity"], "initial.velocity");
      if (i.contains("attitude")) c.initial_attitude = read_matrix(i["attitude"], 3, "initial.attitude");
      if (i.contains("rate")) c.initial_rate = read_vec3(i["rate"], "initial.rate");
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidArgument("config: cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config: " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunMetrics::to_json() const {
  json j;
  j["variant"] = to_string(variant);
  j["samples"] = samples;
  j["rmse_xyz"] = write_vec3(rmse_xyz);
  j["rmse_combined"] = rmse_combined;
  j["initial_position_error"] = initial_position_error;
  j["final_position_error"] = final_position_error;
  j["avg_solve_time"] = avg_solve_time;
  j["max_solve_time"] = max_solve_time;
  j["avg_iterations"] = avg_iterations;
  j["max_kkt_residual"] = max_kkt_residual;
  j["unconverged_solves"] = unconverged_solves;
  j["max_constraint_violation"] = max_constraint_violation;
  j["max_dodecahedron_violation"] = max_dodecahedron_violation;
  j["max_sphere_violation"] = max_sphere_violation;
  j["intersample_failures"] = intersample_failures;
  j["max_cube_excess"] = max_cube_excess;
  j["min_thrust"] = min_thrust;
  j["max_thrust"] = max_thrust;
  j["thrust_clamps"] = thrust_clamps;
  j["max_so3_drift"] = max_so3_drift;
  j["rho_star"] = rho_star;
  j["rho_min"] = rho_min;
  j["baseline_level"] = baseline_level;
  j["feasibility"] = feasibility;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["active_counts"] = active_counts;
  j["wall_time"] = wall_time;
  return j;
}

ExperimentSetup prepare_experiment(const ExperimentConfig& config, bool build_cert) {
  config.validate();
  ExperimentSetup s;
  s.model = discretize(config.gamma, config.h, config.plant.drag);
  s.trajectory = config.make_trajectory();
  const auto samples = static_cast<std::size_t>(config.samples() + config.horizon);
  s.schedule = std::make_shared<const RhoSchedule>(
      build_rho_schedule(s.trajectory, config.plant, config.delta, config.h, samples,
                         s.model.alpha, s.model.beta));
  const double rho_star = compute_rho_star(s.schedule->rho_k, s.model.alpha, s.model.beta);
  if (!build_cert) return s;
  const auto start = std::chrono::steady_clock::now();
  s.certificate = std::make_shared<const Certificate>(
      build_certificate(s.model.Ad, s.model.Bd, config.Q, config.R, rho_star));
  s.certificate_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

namespace {

RunMetrics run_with_setup(const ExperimentConfig& config, Variant variant,
                          const ExperimentSetup& setup) {
  const auto wall_start = std::chrono::steady_clock::now();
  const PlantParams& plant = config.plant;
  const DiscreteModel& model = setup.model;
  const FlatTrajectory& traj = *setup.trajectory;
  const RhoSchedule& schedule = *setup.schedule;
  const Certificate& cert = *setup.certificate;
  const int K = config.samples();
  const int M = config.substeps;
  const double dt = config.h / M;
  const double a = model.alpha;
  const double b = model.beta;

  MpcController ctrl(config.mpc_config(variant), setup.certificate, model, setup.schedule);

  std::unique_ptr<CsvWriter> states, reference, diag, constraints;
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    states = std::make_unique<CsvWriter>(config.output_dir / "states.csv", state_columns());
    reference =
        std::make_unique<CsvWriter>(config.output_dir / "reference.csv", reference_columns());
    diag = std::make_unique<CsvWriter>(config.output_dir / "mpc_diag.csv", diag_columns());
    constraints =
        std::make_unique<CsvWriter>(config.output_dir / "constraints.csv", constraint_columns());
  }

  RunMetrics m;
  m.variant = variant;
  m.samples = K;
  m.rho_star = cert.rho_star;
  m.rho_min = schedule.minimum();
  m.baseline_level = ctrl.baseline_level();
  m.feasibility = schedule.feasible;
  m.alpha = a;
  m.beta = b;
  const int functionals = variant == Variant::Coupled ? kNumFaces : 3;
  m.active_counts.assign(2 * functionals, 0);
  m.min_thrust = std::numeric_limits<double>::infinity();
  m.max_thrust = -std::numeric_limits<double>::infinity();
  m.max_constraint_violation = -std::numeric_limits<double>::infinity();
  m.max_dodecahedron_violation = -std::numeric_limits<double>::infinity();
  m.max_sphere_violation = -std::numeric_limits<double>::infinity();
  m.max_cube_excess = -std::numeric_limits<double>::infinity();

  const ReferencePoint ref0 = flat_to_reference(traj, plant, 0.0, config.delta);
  QuadState x;
  x.p = ref0.pbar + config.initial_offset;
  x.v = config.initial_velocity;
  x.R = project_to_so3(config.initial_attitude);
  x.omega = config.initial_rate;
  Vec3 a_d = Vec3::Zero();
  Vec3 eta = Vec3::Zero();
  m.initial_position_error = config.initial_offset.norm();

  Vec3 sq_err = Vec3::Zero();
  double solve_time_sum = 0.0;
  double iter_sum = 0.0;
  m.max_kkt_residual = 0.0;

  for (int k = 0; k < K; ++k) {
    const double t_k = k * config.h;
    const ReferencePoint ref_k = flat_to_reference(traj, plant, t_k, config.delta);
    OuterState xs;
    xs.p_err = x.p - ref_k.pbar;
    xs.v_err = x.v - ref_k.vbar;
    xs.a_d = a_d;
    xs.eta = eta;
    sq_err += xs.p_err.cwiseAbs2();

    StepDiagnostics d;
    const Vec3 u = ctrl.step(xs.stacked(), k, &d);
    solve_time_sum += d.solve_time;
    m.max_solve_time = std::max(m.max_solve_time, d.solve_time);
    iter_sum += d.iterations;
    if (d.converged) {
      m.max_kkt_residual = std::max(m.max_kkt_residual, d.kkt_residual);
    } else if (++m.unconverged_solves > config.max_failed_solves) {
      std::ostringstream os;
      os << to_string(variant) << ": " << m.unconverged_solves
         << " MPC solves did not converge (last at k=" << k << ", t=" << t_k
         << ", kkt=" << d.kkt_residual << ", iterations=" << d.iterations << ")";
      throw SolverFailure(os.str());
    }
    for (int bit = 0; bit < 2 * functionals; ++bit) {
      if (d.active_mask & (1u << bit)) ++m.active_counts[bit];
    }

    const double rho_now = schedule.at(k);
    const double rho_next = schedule.at(k + 1);
    const InputBounds bounds =
        variant_constraints(variant, rho_now, rho_next, xs, model, ctrl.baseline_level());
    const SlabSet unified = unified_input_set(model, xs, rho_now, rho_next);
    for (int j = 0; j < kNumFaces; ++j) {
      m.max_cube_excess = std::max(
          {m.max_cube_excess, cert.rho_star - unified.up[j], unified.lo[j] + cert.rho_star});
    }
    if (!intersample_check(model, xs, u, schedule.rho_of_t, t_k, 20, 1e-6)) {
      ++m.intersample_failures;
    }

    if (diag) {
      diag->row({static_cast<double>(k), t_k, d.solve_time, static_cast<double>(d.iterations),
                 d.kkt_residual, d.cost, static_cast<double>(d.active_mask),
                 d.converged ? 1.0 : 0.0});
    }
    if (constraints) {
      std::vector<double> row = {static_cast<double>(k), t_k, rho_now, rho_next,
                                 u.x(), u.y(), u.z()};
      for (int j = 0; j < kNumFaces; ++j) row.push_back(unified.lo[j]);
      for (int j = 0; j < kNumFaces; ++j) row.push_back(unified.up[j]);
      for (int j = 0; j < kNumFaces; ++j) {
        row.push_back(j < functionals ? bounds.lo[j] : std::nan(""));
      }
      for (int j = 0; j < kNumFaces; ++j) {
        row.push_back(j < functionals ? bounds.up[j] : std::nan(""));
      }
      constraints->row(row);
    }

    for (int i = 0; i < M; ++i) {
      const double tau_s = i * dt;
      const double t = t_k + tau_s;
      const FilterSample fs = filter_response(config.gamma, a_d, eta, u, tau_s);
      const ReferencePoint ref = i == 0 ? ref_k : flat_to_reference(traj, plant, t, config.delta);
      const AttitudeCommand cmd = flatness_attitude(fs.a_d, fs.a_d_dot, fs.a_d_ddot, ref);
      const double T = std::clamp(cmd.T, 0.0, plant.Tmax);
      if (T != cmd.T) ++m.thrust_clamps;
      m.min_thrust = std::min(m.min_thrust, cmd.T);
      m.max_thrust = std::max(m.max_thrust, cmd.T);
      const Vec3 torque = inner_loop_torque(x, ref, cmd, config.gains, plant);

      const double rho_t = schedule.rho_of_t(t);
      double dodec = -std::numeric_limits<double>::infinity();
      for (const Vec3& c : face_normals()) dodec = std::max(dodec, std::abs(c.dot(fs.a_d)));
      dodec -= rho_t;
      const double sphere = fs.a_d.norm() - rho_t;
      const double box = fs.a_d.cwiseAbs().maxCoeff();
      double own = dodec;
      if (variant == Variant::Decoupled) own = box - rho_t / std::sqrt(3.0);
      if (variant == Variant::Baseline) own = box - ctrl.baseline_level();
      m.max_dodecahedron_violation = std::max(m.max_dodecahedron_violation, dodec);
      m.max_sphere_violation = std::max(m.max_sphere_violation, sphere);
      m.max_constraint_violation = std::max(m.max_constraint_violation, own);
      m.max_so3_drift = std::max(
          m.max_so3_drift, (x.R.transpose() * x.R - Mat3::Identity()).norm());

      if (states) states->row(state_row(t, x, T, torque, fs.a_d, rho_t));
      if (reference) reference->row(reference_row(ref, rho_t));

      x = integrate_rk4(x, plant, T, torque, dt);
    }

    a_d = a * a_d + b * eta + (1.0 - a - b) * u;
    eta = a * eta + (1.0 - a) * u;
  }

  const ReferencePoint ref_end = flat_to_reference(traj, plant, K * config.h, config.delta);
  m.final_position_error = (x.p - ref_end.pbar).norm();
  m.rmse_xyz = (sq_err / K).cwiseSqrt();
  m.rmse_combined = m.rmse_xyz.norm();
  m.avg_solve_time = solve_time_sum / K;
  m.avg_iterations = iter_sum / K;
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  if (!config.output_dir.empty()) {
    json out = m.to_json();
    out["Tmax"] = plant.Tmax;
    out["certificate"] = {{"kappa", cert.kappa}, {"lambda", cert.lambda}, {"theta", cert.theta},
                          {"Lu", cert.Lu}, {"residuals", cert.residuals}};
    out["config"] = config.to_json();
    std::ofstream(config.output_dir / "metrics.json") << out.dump(2) << "\n";
  }
  return m;
}

}  // namespace

RunMetrics run_closed_loop(const ExperimentConfig& config, Variant variant,
                           std::shared_ptr<const Certificate> cert) {
  ExperimentSetup setup = prepare_experiment(config, cert == nullptr);
  if (cert) setup.certificate = std::move(cert);
  return run_with_setup(config, variant, setup);
}

RunMetrics run_closed_loop(const ExperimentConfig& config, Variant variant,
                           const ExperimentSetup& setup) {
  return run_with_setup(config, variant, setup);
}

}  // namespace quadmpc
