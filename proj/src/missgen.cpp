#include "mdt/missgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdt/simd/kernels.hpp"
#include "mdt/special.hpp"
#include "mdt/stats.hpp"

namespace mdt::missgen {

namespace {

constexpr double kBinCoef = 0.6;
constexpr double kContCoef = 0.2;

struct SchemaInfo {
  bool categorical_w3 = false;
  bool w45_continuous = false;
  bool has_w6 = false;
};

IndicatorModel::Parent make_parent(const std::string& col, double coef,
                                   bool standardize, double center, double scale) {
  return {col, coef, standardize, center, scale};
}

// which substantive arrows exist per m-DAG letter
struct ArrowPolicy {
  bool fully_observed = false;  // W1, W5 style parents
  bool self_and_confounders = false;  // self arrows + incomplete W's + A
  bool y_into_non_self = false;       // Y -> M_W*, M_A
  bool y_into_my = false;             // Y -> M_Y
};

ArrowPolicy policy_for(char mdag) {
  switch (mdag) {
    case 'A': return {false, false, false, false};
    case 'B': return {true, false, false, false};
    case 'C': return {true, true, false, false};
    case 'D': return {true, true, true, false};
    case 'E': return {true, true, true, true};
    default: throw std::invalid_argument("mdag must be A..E");
  }
}

}  // namespace

void MdagSpec::validate_nesting() const {
  // parents may only reference columns or earlier indicators; chain arrows
  // must point backwards
  for (std::size_t k = 0; k < models.size(); ++k)
    for (const auto& [j, coef] : models[k].m_parents) {
      (void)coef;
      if (j < 0 || static_cast<std::size_t>(j) >= k)
        throw std::logic_error("indicator chain must reference earlier nodes");
    }
}

MdagSpec make_mdag(char mdag, const dgp::Spec& dgp_spec) {
  const dgp::Structure st = dgp::structure(dgp_spec.id);
  const dgp::Params& p = dgp_spec.params;
  const ArrowPolicy pol = policy_for(mdag);

  auto center_of = [&](int var) { return p.center.at(var); };
  auto spread_of = [&](int var) { return p.spread.at(var); };

  auto w_parent = [&](int var, double sign) {
    // binary confounders carry 0.6 raw; continuous and coded ones 0.2 on the
    // standardized scale
    const bool binary =
        (var == dgp::kW1 || var == dgp::kW2) ||
        (var == dgp::kW3 && !st.w3_categorical) ||
        ((var == dgp::kW4 || var == dgp::kW5) && !st.w45_continuous);
    if (binary)
      return make_parent(dgp::var_name(var), sign * kBinCoef, false, 0.0, 1.0);
    return make_parent(dgp::var_name(var), sign * kContCoef, true, center_of(var),
                       spread_of(var));
  };
  auto y_parent = [&]() {
    return make_parent("Y", kContCoef, true, 0.0, p.y_sd_target);
  };
  auto a_parent = [&]() { return make_parent("A", -kBinCoef, false, 0.0, 1.0); };

  MdagSpec spec;
  spec.mdag = std::string(1, mdag);
  spec.dgp_id = dgp_spec.id;
  spec.margins = {{"W2", 0.25}, {"W3", 0.30}, {"W4", 0.25}, {"A", 0.30}, {"Y", 0.20}};
  if (st.has_w6) spec.margins["W6"] = 0.30;
  spec.any_group = {"W2", "W3", "W4", "A", "Y"};

  const double th1 = 1.0, th2 = 1.1;  // chain starting values, re-solved later

  std::vector<int> w_selfs = {dgp::kW2, dgp::kW3, dgp::kW4};
  if (st.has_w6) w_selfs.push_back(dgp::kW6);

  int chain_idx = 0;
  for (int var : w_selfs) {
    IndicatorModel m;
    m.target = dgp::var_name(var);
    if (pol.fully_observed) {
      m.parents.push_back(w_parent(dgp::kW1, +1.0));
      m.parents.push_back(w_parent(dgp::kW5, -1.0));
    }
    if (pol.self_and_confounders) {
      m.parents.push_back(w_parent(var, +1.0));
      m.parents.push_back(a_parent());
    }
    if (pol.y_into_non_self) m.parents.push_back(y_parent());
    for (int j = 0; j < chain_idx; ++j) m.m_parents.push_back({j, th1});
    spec.models.push_back(std::move(m));
    ++chain_idx;
  }

  {
    IndicatorModel m;
    m.target = "A";
    if (pol.fully_observed) {
      m.parents.push_back(w_parent(dgp::kW1, +1.0));
      m.parents.push_back(w_parent(dgp::kW5, -1.0));
    }
    if (pol.self_and_confounders) {
      m.parents.push_back(w_parent(dgp::kW2, +1.0));
      m.parents.push_back(w_parent(dgp::kW3, +1.0));
      m.parents.push_back(w_parent(dgp::kW4, +1.0));
      if (st.has_w6) m.parents.push_back(w_parent(dgp::kW6, +1.0));
      m.parents.push_back(a_parent());
    }
    if (pol.y_into_non_self) m.parents.push_back(y_parent());
    for (int j = 0; j < chain_idx; ++j) m.m_parents.push_back({j, th1});
    spec.models.push_back(std::move(m));
    ++chain_idx;
  }

  {
    IndicatorModel m;
    m.target = "Y";
    if (pol.fully_observed) {
      m.parents.push_back(w_parent(dgp::kW1, +1.0));
      m.parents.push_back(w_parent(dgp::kW5, -1.0));
    }
    if (pol.self_and_confounders) {
      m.parents.push_back(w_parent(dgp::kW2, +1.0));
      m.parents.push_back(w_parent(dgp::kW3, +1.0));
      m.parents.push_back(w_parent(dgp::kW4, +1.0));
      if (st.has_w6) m.parents.push_back(w_parent(dgp::kW6, +1.0));
      m.parents.push_back(a_parent());
    }
    if (pol.y_into_my) m.parents.push_back(y_parent());
    for (int j = 0; j < chain_idx - 1; ++j) m.m_parents.push_back({j, th1});
    m.m_parents.push_back({chain_idx - 1, th2});  // M_A arrow, own knob
    spec.models.push_back(std::move(m));
  }

  spec.validate_nesting();
  return spec;
}

MdagSpec make_mdag_generic(char mdag, const Dataset& pool,
                           const std::vector<std::string>& fully_observed,
                           const std::vector<std::string>& partial,
                           const std::string& a_col, const std::string& y_col,
                           const std::map<std::string, double>& margins) {
  const ArrowPolicy pol = policy_for(mdag);
  MdagSpec spec;
  spec.mdag = std::string(1, mdag);
  spec.dgp_id = 0;
  spec.margins = margins;
  spec.any_group = partial;
  spec.any_group.push_back(a_col);
  spec.any_group.push_back(y_col);

  auto parent_for = [&](const std::string& col, double sign) {
    const Column& c = pool.col(col);
    if (c.kind.type == VarType::binary)
      return make_parent(col, sign * kBinCoef, false, 0.0, 1.0);
    const double mu = mean(c.values);
    const double s = sd(c.values);
    return make_parent(col, sign * kContCoef, true, mu, s > 0 ? s : 1.0);
  };

  const double th1 = 1.0, th2 = 1.1;
  int chain_idx = 0;
  for (const auto& w : partial) {
    IndicatorModel m;
    m.target = w;
    if (pol.fully_observed)
      for (const auto& f : fully_observed) m.parents.push_back(parent_for(f, +1.0));
    if (pol.self_and_confounders) {
      m.parents.push_back(parent_for(w, +1.0));
      m.parents.push_back(make_parent(a_col, -kBinCoef, false, 0.0, 1.0));
    }
    if (pol.y_into_non_self) m.parents.push_back(parent_for(y_col, +1.0));
    for (int j = 0; j < chain_idx; ++j) m.m_parents.push_back({j, th1});
    spec.models.push_back(std::move(m));
    ++chain_idx;
  }
  {
    IndicatorModel m;
    m.target = a_col;
    if (pol.fully_observed)
      for (const auto& f : fully_observed) m.parents.push_back(parent_for(f, +1.0));
    if (pol.self_and_confounders) {
      for (const auto& w : partial) m.parents.push_back(parent_for(w, +1.0));
      m.parents.push_back(make_parent(a_col, -kBinCoef, false, 0.0, 1.0));
    }
    if (pol.y_into_non_self) m.parents.push_back(parent_for(y_col, +1.0));
    for (int j = 0; j < chain_idx; ++j) m.m_parents.push_back({j, th1});
    spec.models.push_back(std::move(m));
    ++chain_idx;
  }
  {
    IndicatorModel m;
    m.target = y_col;
    if (pol.fully_observed)
      for (const auto& f : fully_observed) m.parents.push_back(parent_for(f, +1.0));
    if (pol.self_and_confounders) {
      for (const auto& w : partial) m.parents.push_back(parent_for(w, +1.0));
      m.parents.push_back(make_parent(a_col, -kBinCoef, false, 0.0, 1.0));
    }
    if (pol.y_into_my) m.parents.push_back(parent_for(y_col, +1.0));
    for (int j = 0; j < chain_idx - 1; ++j) m.m_parents.push_back({j, th1});
    m.m_parents.push_back({chain_idx - 1, th2});
    spec.models.push_back(std::move(m));
  }
  spec.validate_nesting();
  return spec;
}

namespace {

struct CalibrationState {
  std::size_t n = 0;
  // fixed substantive linear predictor per model (no intercept, no chain)
  std::vector<std::vector<double>> base_lp;
  // fixed uniforms per model for the indicator draws
  std::vector<std::vector<double>> uniforms;
  std::vector<std::vector<std::uint8_t>> draws;
};

CalibrationState prepare_state(const MdagSpec& spec, const Dataset& panel,
                               std::uint64_t seed) {
  CalibrationState st;
  st.n = panel.n_rows();
  st.base_lp.resize(spec.models.size());
  st.uniforms.resize(spec.models.size());
  st.draws.assign(spec.models.size(), std::vector<std::uint8_t>(st.n, 0));
  RngStream rng(seed, 1, "mdag-cal-uniforms");
  for (std::size_t k = 0; k < spec.models.size(); ++k) {
    const IndicatorModel& m = spec.models[k];
    std::vector<double> lp(st.n, 0.0);
    for (const auto& par : m.parents) {
      const auto& vals = panel.col(par.col).values;
      for (std::size_t i = 0; i < st.n; ++i) {
        const double x = par.standardize ? (vals[i] - par.center) / par.scale : vals[i];
        lp[i] += par.coef * x;
      }
    }
    st.base_lp[k] = std::move(lp);
    st.uniforms[k].resize(st.n);
    for (auto& u : st.uniforms[k]) u = rng.uniform();
  }
  return st;
}

// solve one node's intercept given its parents' current draws, then redraw it
void solve_node(MdagSpec& spec, CalibrationState& st, std::size_t k) {
  const std::size_t n = st.n;
  IndicatorModel& m = spec.models[k];
  std::vector<double> fixed = st.base_lp[k];
  for (const auto& [j, coef] : m.m_parents)
    for (std::size_t i = 0; i < n; ++i)
      if (st.draws[static_cast<std::size_t>(j)][i]) fixed[i] += coef;

  std::vector<double> lp(n), prob(n);
  const double target = spec.margins.at(m.target);
  double lo = -14.0, hi = 14.0;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < n; ++i) lp[i] = mid + fixed[i];
    kern::expit(lp.data(), prob.data(), n);
    const double rate = kern::sum(prob.data(), n) / static_cast<double>(n);
    if (rate < target)
      lo = mid;
    else
      hi = mid;
  }
  m.intercept = 0.5 * (lo + hi);
  for (std::size_t i = 0; i < n; ++i)
    st.draws[k][i] = st.uniforms[k][i] < expit(m.intercept + fixed[i]) ? 1 : 0;
}

// sequential solve over all nodes
void solve_intercepts(MdagSpec& spec, CalibrationState& st) {
  for (std::size_t k = 0; k < spec.models.size(); ++k) solve_node(spec, st, k);
}

struct JointRates {
  double ay = 0.0;
  double any = 0.0;
};

JointRates joint_rates(const MdagSpec& spec, const CalibrationState& st) {
  // the exposure and outcome indicators close the chain
  const std::size_t idx_a = spec.models.size() - 2;
  const std::size_t idx_y = spec.models.size() - 1;
  std::vector<std::size_t> any_idx;
  for (std::size_t k = 0; k < spec.models.size(); ++k)
    if (std::find(spec.any_group.begin(), spec.any_group.end(),
                  spec.models[k].target) != spec.any_group.end())
      any_idx.push_back(k);

  std::size_t ay_cnt = 0, any_cnt = 0;
  for (std::size_t i = 0; i < st.n; ++i) {
    if (st.draws[idx_a][i] || st.draws[idx_y][i]) ++ay_cnt;
    for (std::size_t k : any_idx)
      if (st.draws[k][i]) {
        ++any_cnt;
        break;
      }
  }
  return {static_cast<double>(ay_cnt) / static_cast<double>(st.n),
          static_cast<double>(any_cnt) / static_cast<double>(st.n)};
}

void set_chain_coefs(MdagSpec& spec, double theta1, double theta2) {
  const std::size_t last = spec.models.size() - 1;
  for (std::size_t k = 0; k < spec.models.size(); ++k)
    for (auto& [j, coef] : spec.models[k].m_parents) {
      const bool is_ma_to_my =
          (k == last) && (static_cast<std::size_t>(j) == last - 1);
      coef = is_ma_to_my ? theta2 : theta1;
    }
}

}  // namespace

void calibrate_intercepts(MdagSpec& spec, const Dataset& panel,
                          std::uint64_t seed) {
  CalibrationState st = prepare_state(spec, panel, seed);
  solve_intercepts(spec, st);
}

void calibrate_joint(MdagSpec& spec, const Dataset& panel, std::uint64_t seed) {
  CalibrationState st = prepare_state(spec, panel, seed);
  const std::size_t last = spec.models.size() - 1;

  // Nested bisection. theta2 only enters the final node, so the inner solve
  // re-runs that node alone; both joint rates are monotone decreasing in
  // their knob once margins are re-solved.
  double th1 = 1.0, th2 = 1.0;
  auto rates_at = [&](double t1, double t2) {
    set_chain_coefs(spec, t1, t2);
    solve_node(spec, st, last);
    return joint_rates(spec, st);
  };
  auto solve_th2_and_rates = [&](double t1) {
    // prefix depends on theta1 only
    set_chain_coefs(spec, t1, th2);
    for (std::size_t k = 0; k < last; ++k) solve_node(spec, st, k);
    double lo = -10.0, hi = 10.0;
    for (int it = 0; it < 20; ++it) {
      const double mid = 0.5 * (lo + hi);
      const JointRates r = rates_at(t1, mid);
      if (r.ay < spec.target_ay)
        hi = mid;  // increase dependence -> lower union; rate too low means th2 too high
      else
        lo = mid;
    }
    th2 = 0.5 * (lo + hi);
    return rates_at(t1, th2);
  };

  double lo1 = -6.0, hi1 = 10.0;
  for (int it = 0; it < 20; ++it) {
    th1 = 0.5 * (lo1 + hi1);
    const JointRates r = solve_th2_and_rates(th1);
    if (r.any < spec.target_any)
      hi1 = th1;
    else
      lo1 = th1;
  }
  th1 = 0.5 * (lo1 + hi1);
  solve_th2_and_rates(th1);
  spec.calibrated = true;
}

MaskedData impose(const Dataset& complete, const MdagSpec& spec, RngStream& rng) {
  const std::size_t n = complete.n_rows();
  std::vector<std::vector<std::uint8_t>> draws(spec.models.size());

  for (std::size_t k = 0; k < spec.models.size(); ++k) {
    const IndicatorModel& m = spec.models[k];
    std::vector<double> lp(n, m.intercept);
    for (const auto& par : m.parents) {
      const auto& vals = complete.col(par.col).values;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = par.standardize ? (vals[i] - par.center) / par.scale : vals[i];
        lp[i] += par.coef * x;
      }
    }
    for (const auto& [j, coef] : m.m_parents)
      for (std::size_t i = 0; i < n; ++i)
        if (draws[static_cast<std::size_t>(j)][i]) lp[i] += coef;
    draws[k].resize(n);
    for (std::size_t i = 0; i < n; ++i)
      draws[k][i] = rng.bernoulli(expit(lp[i])) ? 1 : 0;
  }

  MaskedData out{Dataset(n), complete};
  for (std::size_t c = 0; c < complete.n_cols(); ++c) {
    Column col = complete.col(c);
    for (std::size_t k = 0; k < spec.models.size(); ++k)
      if (spec.models[k].target == col.name)
        for (std::size_t i = 0; i < n; ++i)
          if (draws[k][i]) col.missing[i] = 1;
    out.data.add_column(std::move(col));
  }
  for (std::size_t k = 0; k < spec.models.size(); ++k) {
    Column ind;
    ind.name = "M_" + spec.models[k].target;
    ind.kind = VarKind::binary();
    ind.values.assign(n, 0.0);
    ind.missing.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) ind.values[i] = draws[k][i] ? 1.0 : 0.0;
    out.data.add_column(std::move(ind));
  }
  return out;
}

}  // namespace mdt::missgen
