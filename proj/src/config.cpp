#include "mdt/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mdt/dataset.hpp"

namespace mdt {

using nlohmann::json;

namespace {

json params_to_json(const dgp::Params& p) {
  json j;
  j["id"] = p.id;
  j["alpha0"] = p.alpha0;
  j["beta0"] = p.beta0;
  j["beta1"] = p.beta1;
  j["gamma0"] = p.gamma0;
  j["gamma1"] = p.gamma1;
  j["gamma0k"] = p.gamma0k;
  j["gamma1k"] = p.gamma1k;
  j["delta0"] = p.delta0;
  j["delta1"] = p.delta1;
  j["zeta0"] = p.zeta0;
  j["xi0"] = p.xi0;
  j["xi1"] = p.xi1;
  j["tau0"] = p.tau0;
  j["tau1"] = p.tau1;
  j["rho_flat"] = p.rho_flat;
  j["eta_main_coefs"] = p.eta_main_coefs;
  j["eta_inter_coefs"] = p.eta_inter_coefs;
  j["eta0"] = p.eta0;
  j["multiplier"] = p.multiplier;
  j["ate"] = p.ate;
  j["ups_main_coefs"] = p.ups_main_coefs;
  j["ups_inter_coefs"] = p.ups_inter_coefs;
  j["ups0"] = p.ups0;
  j["outcome_scale"] = p.outcome_scale;
  j["y_sd_target"] = p.y_sd_target;
  j["center"] = p.center;
  j["spread"] = p.spread;
  return j;
}

dgp::Params params_from_json(const json& j) {
  dgp::Params p;
  p.id = j.at("id");
  p.alpha0 = j.at("alpha0");
  p.beta0 = j.at("beta0");
  p.beta1 = j.at("beta1");
  p.gamma0 = j.at("gamma0");
  p.gamma1 = j.at("gamma1");
  p.gamma0k = j.at("gamma0k");
  p.gamma1k = j.at("gamma1k");
  p.delta0 = j.at("delta0");
  p.delta1 = j.at("delta1");
  p.zeta0 = j.at("zeta0");
  p.xi0 = j.at("xi0");
  p.xi1 = j.at("xi1");
  p.tau0 = j.at("tau0");
  p.tau1 = j.at("tau1");
  p.rho_flat = j.at("rho_flat").get<std::vector<double>>();
  p.eta_main_coefs = j.at("eta_main_coefs").get<std::vector<double>>();
  p.eta_inter_coefs = j.at("eta_inter_coefs").get<std::vector<double>>();
  p.eta0 = j.at("eta0");
  p.multiplier = j.at("multiplier");
  p.ate = j.at("ate");
  p.ups_main_coefs = j.at("ups_main_coefs").get<std::vector<double>>();
  p.ups_inter_coefs = j.at("ups_inter_coefs").get<std::vector<double>>();
  p.ups0 = j.at("ups0");
  p.outcome_scale = j.at("outcome_scale");
  p.y_sd_target = j.at("y_sd_target");
  p.center = j.at("center").get<std::map<int, double>>();
  p.spread = j.at("spread").get<std::map<int, double>>();
  return p;
}

json mdag_to_json(const missgen::MdagSpec& s) {
  json j;
  j["mdag"] = s.mdag;
  j["dgp_id"] = s.dgp_id;
  j["margins"] = s.margins;
  j["target_ay"] = s.target_ay;
  j["target_any"] = s.target_any;
  j["any_group"] = s.any_group;
  j["calibrated"] = s.calibrated;
  j["models"] = json::array();
  for (const auto& m : s.models) {
    json jm;
    jm["target"] = m.target;
    jm["intercept"] = m.intercept;
    jm["parents"] = json::array();
    for (const auto& par : m.parents)
      jm["parents"].push_back({{"col", par.col},
                               {"coef", par.coef},
                               {"standardize", par.standardize},
                               {"center", par.center},
                               {"scale", par.scale}});
    jm["m_parents"] = m.m_parents;
    j["models"].push_back(jm);
  }
  return j;
}

missgen::MdagSpec mdag_from_json(const json& j) {
  missgen::MdagSpec s;
  s.mdag = j.at("mdag");
  s.dgp_id = j.at("dgp_id");
  s.margins = j.at("margins").get<std::map<std::string, double>>();
  s.target_ay = j.at("target_ay");
  s.target_any = j.at("target_any");
  s.any_group = j.at("any_group").get<std::vector<std::string>>();
  s.calibrated = j.at("calibrated");
  for (const auto& jm : j.at("models")) {
    missgen::IndicatorModel m;
    m.target = jm.at("target");
    m.intercept = jm.at("intercept");
    for (const auto& jp : jm.at("parents"))
      m.parents.push_back({jp.at("col"), jp.at("coef"), jp.at("standardize"),
                           jp.at("center"), jp.at("scale")});
    m.m_parents = jm.at("m_parents").get<std::vector<std::pair<int, double>>>();
    s.models.push_back(std::move(m));
  }
  return s;
}

json bundle_to_json(const Bundle& b) {
  json j;
  j["version"] = b.version;
  j["seed"] = b.seed;
  j["dgps"] = json::object();
  for (const auto& [id, p] : b.dgps) j["dgps"][std::to_string(id)] = params_to_json(p);
  j["mdags"] = json::object();
  for (const auto& [key, s] : b.mdags) j["mdags"][key] = mdag_to_json(s);
  return j;
}

}  // namespace

std::string Bundle::mdag_key(int dgp_id, int level, char mdag) {
  return "dgp" + std::to_string(dgp_id) + "/L" + std::to_string(level) + "/" +
         std::string(1, mdag);
}

const dgp::Params& Bundle::dgp_params(int id) const {
  auto it = dgps.find(id);
  if (it == dgps.end())
    throw std::invalid_argument("bundle has no dgp " + std::to_string(id));
  return it->second;
}

const missgen::MdagSpec& Bundle::mdag_spec(int dgp_id, int level, char mdag) const {
  auto it = mdags.find(mdag_key(dgp_id, level, mdag));
  if (it == mdags.end())
    throw std::invalid_argument("bundle has no cell " + mdag_key(dgp_id, level, mdag));
  return it->second;
}

std::string Bundle::fingerprint() const {
  const std::string dump = bundle_to_json(*this).dump();
  // FNV-1a over the canonical dump
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void save_bundle(const Bundle& b, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << bundle_to_json(b).dump(1) << "\n";
}

Bundle load_bundle(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open bundle " + path);
  const json j = json::parse(f);
  Bundle b;
  b.version = j.at("version");
  b.seed = j.at("seed");
  for (const auto& [key, jp] : j.at("dgps").items())
    b.dgps[std::stoi(key)] = params_from_json(jp);
  for (const auto& [key, js] : j.at("mdags").items())
    b.mdags[key] = mdag_from_json(js);
  return b;
}

Bundle calibrate_bundle(std::uint64_t seed, std::size_t n_panel, bool verbose) {
  Bundle b;
  b.seed = seed;
  for (int id = 1; id <= 5; ++id) {
    if (verbose) std::fprintf(stderr, "calibrating dgp %d...\n", id);
    b.dgps[id] = dgp::calibrate(id, dgp::default_targets(id), seed, n_panel);
    for (int level = 1; level <= 3; ++level) {
      dgp::Spec spec{id, level, b.dgps[id]};
      RngStream panel_rng(seed, static_cast<std::uint64_t>(id * 10 + level),
                          "mdag-panel");
      const dgp::CompleteData panel = dgp::generate(spec, n_panel, panel_rng);
      for (char mdag : {'A', 'B', 'C', 'D', 'E'}) {
        if (verbose)
          std::fprintf(stderr, "  calibrating dgp %d level %d m-DAG %c...\n", id,
                       level, mdag);
        missgen::MdagSpec ms = missgen::make_mdag(mdag, spec);
        missgen::calibrate_joint(ms, panel.data, seed);
        b.mdags[Bundle::mdag_key(id, level, mdag)] = std::move(ms);
      }
    }
  }
  return b;
}

}  // namespace mdt
