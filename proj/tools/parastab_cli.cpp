#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "parastab/experiments.hpp"
#include "parastab/io.hpp"
#include "parastab/rhc.hpp"
#include "parastab/static_feedback.hpp"
#include "parastab/switching.hpp"

namespace {

std::filesystem::path output_root() {
  if (const char* env = std::getenv("PARASTAB_OUT")) return env;
  return "out";
}

parastab::Config overrides_from(const std::vector<std::string>& sets,
                                const std::string& config_path) {
  parastab::Config cfg;
  if (!config_path.empty()) cfg = parastab::Config::from_file(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw parastab::ConfigError("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

int run_static_feedback(const parastab::Config& overrides, const std::filesystem::path& dir) {
  using namespace parastab;
  std::filesystem::create_directories(dir);
  Config cfg = paper_profile();
  cfg.set("reaction", "-3-2|sin(t+x)|");
  cfg.set("convection", "|cos(t+x)|");
  cfg.merge(overrides);

  const SpectralModel model(cfg.number_or("nu", 0.1),
                            static_cast<int>(cfg.number_or("n_modes", 32)));
  Coefficients coeffs;
  coeffs.reaction = CoefficientField::preset(cfg.str_or("reaction", "one"));
  coeffs.convection = CoefficientField::preset(cfg.str_or("convection", "zero"));
  const ActuatorBank bank(static_cast<int>(cfg.number_or("M", 3)), cfg.number_or("r", 0.04));
  const ObliqueProjector projector = ObliqueProjector::build(model, bank);
  const double lambda = cfg.number_or("lambda", default_lambda(coeffs));
  const ClosedLoopFeedback feedback(projector, lambda);
  const double theta = cfg.number_or("theta", 0.5);

  EstimateOptions opts;
  opts.seed = static_cast<std::uint64_t>(cfg.number_or("seed", 1234));
  opts.quad_panels = static_cast<int>(cfg.number_or("quad_panels", 1024));
  const FeedbackConstants k = estimate_constants(model, coeffs, feedback, theta, opts);

  nlohmann::json j;
  j["C"] = k.C;
  j["mu"] = k.mu;
  j["theta"] = k.theta;
  j["T"] = k.T;
  j["K_frak"] = k.K_frak;
  j["D_Y"] = k.D_Y;
  j["C_rc"] = k.C_rc;
  j["lambda"] = k.lambda;
  j["M"] = k.M;
  j["projector_norm"] = projector.op_norm();
  j["projector_norm_large"] = projector.op_norm() > 50.0;  // sanity flag
  j["t_enlargements"] = k.t_enlargements;
  std::ofstream(dir / "constants.json") << j.dump(2) << "\n";

  // one closed-loop trajectory for inspection
  const double dt = cfg.number_or("dt", 1e-3);
  const int steps = static_cast<int>(std::lround(3.0 * k.T / dt));
  const SpectralArcTape tape = SpectralArcTape::build(model, coeffs, 0.0, dt, steps,
                                                      opts.quad_panels);
  std::mt19937_64 rng(opts.seed + 9);
  const Eigen::VectorXd y0 = random_unit_v_state(model, rng);
  const Trajectory traj = simulate_closed_loop(model, coeffs, tape, feedback, y0, 0.0, dt, steps);
  CsvWriter csv(dir / "closed_loop.csv", {"t", "l2_norm", "v_norm"});
  for (int s = 0; s <= steps; ++s)
    csv.row({traj.time(s), model.h_norm(traj.states[s]), model.v_norm(traj.states[s])});

  std::printf("constants: C=%.4g mu=%.4g T=%.4g K=%.4g D_Y=%.4g C_rc=%.4g |P|=%.4g\n", k.C, k.mu,
              k.T, k.K_frak, k.D_Y, k.C_rc, projector.op_norm());
  std::printf("wrote %s and %s\n", (dir / "constants.json").c_str(),
              (dir / "closed_loop.csv").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stabilizing controls for unstable 1D parabolic equations with a moving actuator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  app.add_option("--config", config_path, "TOML/JSON configuration file");
  app.add_option("--set", sets, "override key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory (default $PARASTAB_OUT or ./out)");

  auto* cmd_run = app.add_subcommand("run", "run a named experiment preset");
  std::string experiment;
  cmd_run->add_option("experiment", experiment,
                      "one of: example1, example2, switching-demo, stability-check")
      ->required();

  auto* cmd_sim = app.add_subcommand("simulate", "uncontrolled trajectory of an example system");
  int sim_example = 1;
  cmd_sim->add_option("--example", sim_example, "1 or 2")->check(CLI::Range(1, 2));

  auto* cmd_stab = app.add_subcommand("stability-check", "static-actuator stabilizability verdict");
  double stab_center = 0.5, stab_r = 0.04;
  cmd_stab->add_option("--center", stab_center, "actuator center");
  cmd_stab->add_option("--r", stab_r, "actuator width");

  auto* cmd_fb = app.add_subcommand("static-feedback",
                                    "oblique-projection feedback constants and closed loop");
  int fb_m = 3;
  double fb_r = 0.04, fb_theta = 0.5;
  cmd_fb->add_option("--M", fb_m, "actuator count");
  cmd_fb->add_option("--r", fb_r, "actuator width");
  cmd_fb->add_option("--theta", fb_theta, "squeeze factor");

  auto* cmd_switch = app.add_subcommand("switching", "switching/moving control pipeline");
  double sw_theta = 0.5, sw_r = 0.04;
  int sw_m = 3, sw_kmax = 3;
  std::string sw_mode = "empirical";
  cmd_switch->add_option("--theta", sw_theta, "squeeze factor");
  cmd_switch->add_option("--mode", sw_mode, "empirical or theoretical");
  cmd_switch->add_option("--k-max", sw_kmax, "number of concatenated intervals");
  cmd_switch->add_option("--M", sw_m, "actuator count");
  cmd_switch->add_option("--r", sw_r, "actuator width");

  auto* cmd_rhc = app.add_subcommand("rhc", "receding-horizon optimal control");
  int rhc_example = 1, rhc_m = 1;
  double rhc_beta = -1.0, rhc_tfinal = -1.0;
  std::string rhc_mode = "moving";
  cmd_rhc->add_option("--example", rhc_example, "1 or 2")->check(CLI::Range(1, 2));
  cmd_rhc->add_option("--beta", rhc_beta, "control weight");
  cmd_rhc->add_option("--mode", rhc_mode, "moving or static or uncontrolled");
  cmd_rhc->add_option("--M", rhc_m, "static actuator count");
  cmd_rhc->add_option("--t-final", rhc_tfinal, "simulated horizon");

  CLI11_PARSE(app, argc, argv);

  try {
    parastab::Config overrides = overrides_from(sets, config_path);
    const std::filesystem::path root =
        out_dir.empty() ? output_root() : std::filesystem::path(out_dir);

    if (cmd_run->parsed()) {
      const auto manifest = parastab::run_experiment(experiment, overrides, root / experiment);
      std::printf("experiment %s done; manifest hash %016llx\n", experiment.c_str(),
                  static_cast<unsigned long long>(manifest.content_hash));
      return 0;
    }
    if (cmd_sim->parsed()) {
      overrides.set("mode", "uncontrolled");
      const std::string name = sim_example == 1 ? "example1" : "example2";
      parastab::run_experiment(name, overrides, root / ("simulate-" + name));
      return 0;
    }
    if (cmd_stab->parsed()) {
      overrides.set_number("c0", stab_center);
      overrides.set_number("r", stab_r);
      const auto manifest =
          parastab::run_experiment("stability-check", overrides, root / "stability-check");
      std::ifstream in(root / "stability-check" / "verdict.json");
      std::string line;
      while (std::getline(in, line)) std::puts(line.c_str());
      return 0;
    }
    if (cmd_fb->parsed()) {
      overrides.set_number("M", fb_m);
      overrides.set_number("r", fb_r);
      overrides.set_number("theta", fb_theta);
      return run_static_feedback(overrides, root / "static-feedback");
    }
    if (cmd_switch->parsed()) {
      overrides.set_number("theta", sw_theta);
      overrides.set_number("M", sw_m);
      overrides.set_number("r", sw_r);
      overrides.set_number("k_max", sw_kmax);
      overrides.set("mode", sw_mode);
      parastab::run_experiment("switching-demo", overrides, root / "switching-demo");
      return 0;
    }
    if (cmd_rhc->parsed()) {
      if (rhc_beta > 0.0) overrides.set_number("beta", rhc_beta);
      if (rhc_tfinal > 0.0) overrides.set_number("t_final", rhc_tfinal);
      overrides.set("mode", rhc_mode);
      if (rhc_mode == "static") overrides.set_number("M", rhc_m);
      const std::string name = rhc_example == 1 ? "example1" : "example2";
      parastab::run_experiment(name, overrides, root / ("rhc-" + name + "-" + rhc_mode));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
