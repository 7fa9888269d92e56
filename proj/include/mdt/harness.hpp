#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdt/config.hpp"
#include "mdt/dataset.hpp"
#include "mdt/metrics.hpp"

namespace mdt::harness {

enum class Method { cc, ext, ext_mcmi, mi_pmm, mi_int, mi_cart, mi_rf, mi_amelia };

std::string method_name(Method m);
Method method_from_name(const std::string& s);
const std::vector<Method>& all_methods();

struct RunConfig {
  std::string mode = "model-based";  // or "design-based"
  std::vector<int> dgps = {1, 2, 3, 4, 5};
  std::vector<int> levels = {1, 2, 3};
  std::vector<std::string> mdags = {"A", "B", "C", "D", "E"};
  std::vector<std::string> methods = {"CC",      "Ext",    "ExtMCMI", "MI-PMM",
                                      "MI-Int",  "MI-CART", "MI-RF",  "MI-Amelia"};
  std::size_t n = 2000;
  int n_sim = 1000;
  int m_imputations = 100;
  int fcs_iterations = 10;
  int pmm_donors = 5;
  int sl_folds = 10;
  double g_truncation = 0.01;
  double my_truncation = 0.01;
  // target missingness margins; defaults are the reported rates
  std::map<std::string, double> margins = {{"W2", 0.25}, {"W3", 0.30}, {"W4", 0.25},
                                           {"W6", 0.30}, {"A", 0.30},  {"Y", 0.20}};
  double margin_ay = 0.40;
  double margin_any = 0.50;
  int threads = 0;  // 0 = MDT_THREADS env or 1
  std::uint64_t seed = 20240815;
  std::string bundle_path = "data/bundles/model_based.json";
  std::string out_dir = "out";
  bool per_rep_csv = false;

  // design-based inputs
  std::string standin_csv = "data/fixtures/washlike.csv";
  std::string standin_schema = "data/fixtures/washlike.schema.json";
  int hal_bins = 12;
  int hal_folds = 5;
  std::size_t quasi_ate_draws = 250000;
};

RunConfig config_from_json_file(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

struct CellResult {
  CellKey key;
  CellSummary summary;
};

struct RunResult {
  std::vector<CellResult> summaries;
  std::vector<RepEstimate> reps;
  double theta_true = 0.0;       // design-based quasi-true effect (model-based
                                 // cells carry their own truth per process)
  std::string manifest_identity;  // hash of config + bundle + seed table
  int structural_errors = 0;      // replication-level panics (not method failures)
};

// model-based grid: generate, impose, apply each method, estimate, summarize
RunResult run(const RunConfig& cfg, const Bundle& bundle);

// design-based pipeline: two undersmoothed fits on the pool, then the
// synthetic-replication loop
RunResult run_design_based(const RunConfig& cfg);

// results/manifest writers (write-temp-then-rename)
void write_outputs(const RunResult& result, const RunConfig& cfg);
void write_text_atomic(const std::string& path, const std::string& content);

// synthetic observational dataset with the WASH-style 15-covariate schema
Dataset make_standin(std::size_t n, std::uint64_t seed);

// schema helpers shared with tests
std::vector<std::string> standin_fully_observed();
std::vector<std::string> standin_partial();

}  // namespace mdt::harness
