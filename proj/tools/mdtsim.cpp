// Command-line front end: grid simulation, calibration, generator dumps and
// the HAL fit/synth utilities.

#include <CLI11.hpp>
#include <cstdio>
#include <numeric>
#include <string>

#include "mdt/config.hpp"
#include "mdt/dgp.hpp"
#include "mdt/hal.hpp"
#include "mdt/harness.hpp"

using namespace mdt;

namespace {

int cmd_simulate(const std::string& config_path, const std::string& cells,
                 int n_sim_override, int threads_override,
                 const std::string& out_override) {
  harness::RunConfig cfg = config_path.empty()
                               ? harness::RunConfig{}
                               : harness::config_from_json_file(config_path);
  if (n_sim_override > 0) cfg.n_sim = n_sim_override;
  if (threads_override > 0) cfg.threads = threads_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!cells.empty()) {
    // "1-2-A,1-2-B" style cell filters: dgp-level-mdag
    cfg.dgps.clear();
    cfg.levels.clear();
    cfg.mdags.clear();
    std::stringstream ss(cells);
    std::string tok;
    std::set<int> dgps, levels;
    std::set<std::string> mdags;
    while (std::getline(ss, tok, ',')) {
      int dgp = 0, level = 0;
      char mdag = 0;
      if (std::sscanf(tok.c_str(), "%d-%d-%c", &dgp, &level, &mdag) != 3)
        throw std::runtime_error("bad cell token '" + tok + "', expected d-l-M");
      dgps.insert(dgp);
      levels.insert(level);
      mdags.insert(std::string(1, mdag));
    }
    cfg.dgps.assign(dgps.begin(), dgps.end());
    cfg.levels.assign(levels.begin(), levels.end());
    cfg.mdags.assign(mdags.begin(), mdags.end());
  }

  harness::RunResult result;
  if (cfg.mode == "design-based") {
    result = harness::run_design_based(cfg);
  } else {
    const Bundle bundle = load_bundle(cfg.bundle_path);
    result = harness::run(cfg, bundle);
  }
  harness::write_outputs(result, cfg);
  std::printf("wrote %s/results.csv (%zu cells, identity %s)\n", cfg.out_dir.c_str(),
              result.summaries.size(), result.manifest_identity.c_str());
  if (result.structural_errors > 0) {
    std::fprintf(stderr, "%d replication-level errors\n", result.structural_errors);
    return 1;
  }
  return 0;
}

int cmd_calibrate(std::uint64_t seed, std::size_t panel, const std::string& out) {
  const Bundle b = calibrate_bundle(seed, panel, true);
  save_bundle(b, out);
  std::printf("bundle written to %s (fingerprint %s)\n", out.c_str(),
              b.fingerprint().c_str());
  return 0;
}

int cmd_dump_dgp(int dgp_id, int level, std::size_t n, std::uint64_t seed,
                 const std::string& bundle_path, const std::string& out) {
  const Bundle bundle = load_bundle(bundle_path);
  dgp::Spec spec{dgp_id, level, bundle.dgp_params(dgp_id)};
  RngStream rng(seed, 0, "dump-dgp");
  const dgp::CompleteData cd = dgp::generate(spec, n, rng);
  write_csv(cd.data, out + ".csv", out + ".schema.json");
  std::printf("wrote %s.csv (n=%zu, true effect %.6f)\n", out.c_str(), n, cd.true_ate);
  return 0;
}

hal::HalModel fit_hal_model(const Dataset& d, const std::string& response,
                            const std::vector<std::string>& covariates, int bins,
                            int degree, int folds, std::uint64_t seed,
                            bool undersmooth_fit) {
  hal::HalProblem prob;
  prob.data = &d;
  prob.covariates = covariates;
  prob.rows.resize(d.n_rows());
  std::iota(prob.rows.begin(), prob.rows.end(), 0);
  prob.config.bins = bins;
  prob.config.max_degree = degree;
  const Column& yc = d.col(response);
  prob.family = yc.kind.type == VarType::binary ? Family::binomial : Family::gaussian;
  prob.y.assign(yc.values.begin(), yc.values.end());
  RngStream rng(seed, 0, "hal-cli");
  hal::HalModel model = hal::fit_cv(prob, folds, rng);
  if (undersmooth_fit) hal::undersmooth(model, prob);
  return model;
}

int cmd_hal_fit(const std::string& csv, const std::string& schema,
                const std::string& response, int bins, int degree, int folds,
                std::uint64_t seed, bool undersmooth_fit) {
  const Dataset d = read_csv(csv, schema);
  std::vector<std::string> covariates;
  for (std::size_t c = 0; c < d.n_cols(); ++c)
    if (d.col(c).name != response) covariates.push_back(d.col(c).name);
  const hal::HalModel model =
      fit_hal_model(d, response, covariates, bins, degree, folds, seed, undersmooth_fit);
  std::size_t nonzero = 0;
  for (double b : model.fit.beta)
    if (b != 0.0) ++nonzero;
  std::printf("basis=%zu selected=%zu lambda=%.6g C_cv=%.6g C_u=%.6g sigma2=%.6g "
              "undersmooth_converged=%d\n",
              model.basis.funcs.size(), nonzero, model.fit.lambda, model.c_cv,
              model.c_u, model.fit.sigma2, model.undersmooth_converged ? 1 : 0);
  return 0;
}

int cmd_hal_synth(const std::string& csv, const std::string& schema,
                  const std::string& a_col, const std::string& y_col, std::size_t n,
                  int bins, int folds, std::uint64_t seed, const std::string& out) {
  const Dataset pool = read_csv(csv, schema);
  std::vector<std::string> w_cols;
  for (std::size_t c = 0; c < pool.n_cols(); ++c) {
    const std::string& name = pool.col(c).name;
    if (name != a_col && name != y_col) w_cols.push_back(name);
  }
  hal::HalModel model_a =
      fit_hal_model(pool, a_col, w_cols, bins, 2, folds, seed, true);
  std::vector<std::string> y_covs = w_cols;
  y_covs.insert(y_covs.begin(), a_col);
  hal::HalModel model_y =
      fit_hal_model(pool, y_col, y_covs, bins, 2, folds, seed + 1, true);
  RngStream rng(seed, 0, "hal-synth");
  const Dataset synth =
      hal::synth_generate(model_a, model_y, pool, w_cols, a_col, y_col, n, rng);
  write_csv(synth, out + ".csv", out + ".schema.json");
  const double quasi = hal::quasi_true_ate_exact(model_y, pool, w_cols, a_col);
  std::printf("wrote %s.csv (n=%zu, quasi-true effect %.6f)\n", out.c_str(), n, quasi);
  return 0;
}

int cmd_standin(std::size_t n, std::uint64_t seed, const std::string& out) {
  const Dataset d = harness::make_standin(n, seed);
  write_csv(d, out + ".csv", out + ".schema.json");
  std::printf("wrote %s.csv (n=%zu)\n", out.c_str(), n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"missing-data causal-effect simulation toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_cells, sim_out;
  int sim_nsim = 0, sim_threads = 0;
  auto* sim = app.add_subcommand("simulate", "run a simulation grid");
  sim->add_option("--config", sim_config, "JSON run configuration");
  sim->add_option("--cells", sim_cells, "cell filter, e.g. 1-1-A,1-1-B");
  sim->add_option("--n-sim", sim_nsim, "override replication count");
  sim->add_option("--threads", sim_threads, "worker threads (or MDT_THREADS)");
  sim->add_option("--out", sim_out, "output directory");

  // calibrate
  std::uint64_t cal_seed = 20240815;
  std::size_t cal_panel = 200000;
  std::string cal_out = "data/bundles/model_based.json";
  auto* cal = app.add_subcommand("calibrate", "calibrate and freeze the bundle");
  cal->add_option("--seed", cal_seed);
  cal->add_option("--panel", cal_panel, "Monte Carlo panel size");
  cal->add_option("--out", cal_out);

  // dump-dgp
  int dd_dgp = 1, dd_level = 1;
  std::size_t dd_n = 2000;
  std::uint64_t dd_seed = 1;
  std::string dd_bundle = "data/bundles/model_based.json", dd_out = "dgp_dump";
  auto* dd = app.add_subcommand("dump-dgp", "write one generated dataset to CSV");
  dd->add_option("--dgp", dd_dgp)->check(CLI::Range(1, 5));
  dd->add_option("--level", dd_level)->check(CLI::Range(1, 3));
  dd->add_option("--n", dd_n);
  dd->add_option("--seed", dd_seed);
  dd->add_option("--bundle", dd_bundle);
  dd->add_option("--out", dd_out);

  // hal fit / synth
  auto* halcmd = app.add_subcommand("hal", "highly adaptive lasso utilities");
  halcmd->require_subcommand(1);
  std::string hf_csv, hf_schema, hf_response = "haz";
  int hf_bins = 12, hf_degree = 2, hf_folds = 5;
  std::uint64_t hf_seed = 1;
  bool hf_under = true;
  auto* hf = halcmd->add_subcommand("fit", "cross-validated undersmoothed fit");
  hf->add_option("--csv", hf_csv)->required();
  hf->add_option("--schema", hf_schema)->required();
  hf->add_option("--response", hf_response);
  hf->add_option("--bins", hf_bins);
  hf->add_option("--degree", hf_degree)->check(CLI::Range(1, 2));
  hf->add_option("--folds", hf_folds);
  hf->add_option("--seed", hf_seed);
  hf->add_flag("--undersmooth,!--no-undersmooth", hf_under);

  std::string hs_csv, hs_schema, hs_a = "tr", hs_y = "haz", hs_out = "synth";
  std::size_t hs_n = 2000;
  int hs_bins = 12, hs_folds = 5;
  std::uint64_t hs_seed = 1;
  auto* hs = halcmd->add_subcommand("synth", "generate synthetic data from HAL fits");
  hs->add_option("--csv", hs_csv)->required();
  hs->add_option("--schema", hs_schema)->required();
  hs->add_option("--a-col", hs_a);
  hs->add_option("--y-col", hs_y);
  hs->add_option("--n", hs_n);
  hs->add_option("--bins", hs_bins);
  hs->add_option("--folds", hs_folds);
  hs->add_option("--seed", hs_seed);
  hs->add_option("--out", hs_out);

  // standin
  std::size_t st_n = 2500;
  std::uint64_t st_seed = 73119;
  std::string st_out = "data/fixtures/washlike";
  auto* st = app.add_subcommand("standin", "write the bundled synthetic pool");
  st->add_option("--n", st_n);
  st->add_option("--seed", st_seed);
  st->add_option("--out", st_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_config, sim_cells, sim_nsim, sim_threads, sim_out);
    if (cal->parsed()) return cmd_calibrate(cal_seed, cal_panel, cal_out);
    if (dd->parsed())
      return cmd_dump_dgp(dd_dgp, dd_level, dd_n, dd_seed, dd_bundle, dd_out);
    if (halcmd->parsed()) {
      if (hf->parsed())
        return cmd_hal_fit(hf_csv, hf_schema, hf_response, hf_bins, hf_degree,
                           hf_folds, hf_seed, hf_under);
      if (hs->parsed())
        return cmd_hal_synth(hs_csv, hs_schema, hs_a, hs_y, hs_n, hs_bins, hs_folds,
                             hs_seed, hs_out);
    }
    if (st->parsed()) return cmd_standin(st_n, st_seed, st_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
