#include "slv/config.hpp"
#include "slv/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "Run configuration file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_flag("--quiet", c.quiet, "Suppress progress output");
}

slv::RunConfig load(const Common& c) {
  auto cfg = slv::load_config(c.config);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral Galerkin solver for strain-limiting viscoelastic dynamics on the periodic box"};
  app.require_subcommand(1);

  Common common;
  std::string resume;
  auto* run = app.add_subcommand("run", "Run one configuration");
  add_common(run, common);
  run->add_option("--resume", resume, "Continue from a checkpoint of the same configuration")
      ->check(CLI::ExistingFile);

  std::vector<long> n_list = {4, 8, 16, 32};
  auto* sweep_n = app.add_subcommand("sweep-n", "Run the configuration for each regularisation index n");
  add_common(sweep_n, common);
  sweep_n->add_option("--n-list", n_list, "Ascending n values")->delimiter(',')->capture_default_str();

  std::vector<int> m_list;
  auto* sweep_m = app.add_subcommand("sweep-m", "Run the configuration for each truncation degree m");
  add_common(sweep_m, common);
  sweep_m->add_option("--m-list", m_list, "Ascending m values")->delimiter(',')->required();

  slv::MmsOptions mms_opt;
  auto* mms = app.add_subcommand("mms", "Manufactured-solution convergence study");
  add_common(mms, common);
  mms->add_option("--dt-list", mms_opt.dt_list, "Temporal ladder (default: dt, dt/2, dt/4, dt/8)")->delimiter(',');
  mms->add_option("--temporal-m", mms_opt.temporal_m, "Truncation degree of the temporal ladder")
      ->capture_default_str();
  mms->add_option("--m-list", mms_opt.spatial_m, "Spatial ladder (default: m, 2m)")->delimiter(',');
  mms->add_option("--spatial-dt", mms_opt.spatial_dt, "Time step of the spatial ladder")->capture_default_str();

  slv::PropsOptions props;
  long samples = props.samples;
  auto* check = app.add_subcommand("check-props", "Constitutive and Korn property suite");
  add_common(check, common, false);
  check->add_option("--samples", samples, "Sample count")->check(CLI::PositiveNumber)->capture_default_str();
  check->add_option("--a-list", props.a_list, "Values of a")->delimiter(',')->capture_default_str();
  check->add_option("--n-list", props.n_list, "Values of n")->delimiter(',')->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  const slv::Log log{common.quiet, &std::cerr};
  try {
    if (*check) {
      props.samples = samples;
      props.seed = common.seed.value_or(0);
      return slv::cmd_check_props(props, std::cout);
    }
    const auto cfg = load(common);
    if (*run) return slv::cmd_run(cfg, log, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
    if (*sweep_n) return slv::cmd_sweep_n(cfg, n_list, log);
    if (*sweep_m) return slv::cmd_sweep_m(cfg, m_list, log);
    if (*mms) return slv::cmd_mms(cfg, mms_opt, log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
