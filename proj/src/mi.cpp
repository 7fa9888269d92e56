#include "mdt/mi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mdt/special.hpp"

namespace mdt::mi {

namespace {

// ---------------------------------------------------------------- trees ----

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  std::vector<int> members;  // leaf rows (indices into the training set)
};

struct Tree {
  std::vector<TreeNode> nodes;

  int leaf_for(const std::vector<std::vector<double>>& cols, std::size_t row) const {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(cur)];
      cur = cols[static_cast<std::size_t>(nd.feature)][row] < nd.threshold ? nd.left
                                                                           : nd.right;
    }
    return cur;
  }
};

double node_impurity(const std::vector<int>& members, const std::vector<double>& y,
                     bool discrete) {
  if (discrete) {
    std::map<double, int> counts;
    for (int i : members) counts[y[static_cast<std::size_t>(i)]]++;
    double g = 1.0;
    const double n = static_cast<double>(members.size());
    for (const auto& [v, c] : counts) {
      (void)v;
      const double f = c / n;
      g -= f * f;
    }
    return g * n;  // size-scaled gini
  }
  double s = 0.0, s2 = 0.0;
  for (int i : members) {
    s += y[static_cast<std::size_t>(i)];
    s2 += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
  }
  const double n = static_cast<double>(members.size());
  return s2 - s * s / n;  // within-node sum of squares
}

struct SplitResult {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double child_impurity = 0.0;
};

SplitResult best_split(const std::vector<std::vector<double>>& cols,
                       const std::vector<double>& y, bool discrete,
                       const std::vector<int>& members,
                       const std::vector<int>& features, int min_leaf) {
  SplitResult best;
  double best_imp = std::numeric_limits<double>::infinity();
  std::vector<int> order = members;
  for (int f : features) {
    const std::vector<double>& x = cols[static_cast<std::size_t>(f)];
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return x[static_cast<std::size_t>(a)] < x[static_cast<std::size_t>(b)];
    });
    const std::size_t n = order.size();

    if (discrete) {
      // running class counts on the left side
      std::map<double, int> left_cnt, right_cnt;
      for (int i : order) right_cnt[y[static_cast<std::size_t>(i)]]++;
      double left_ss = 0.0, right_ss = 0.0;
      auto gini_scaled = [](const std::map<double, int>& cnt, double n_side) {
        if (n_side <= 0.0) return 0.0;
        double g = 1.0;
        for (const auto& [v, c] : cnt) {
          (void)v;
          g -= (c / n_side) * (c / n_side);
        }
        return g * n_side;
      };
      (void)left_ss;
      (void)right_ss;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double yv = y[static_cast<std::size_t>(order[i])];
        left_cnt[yv]++;
        if (--right_cnt[yv] == 0) right_cnt.erase(yv);
        const double xv = x[static_cast<std::size_t>(order[i])];
        const double xn = x[static_cast<std::size_t>(order[i + 1])];
        if (xv == xn) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < static_cast<std::size_t>(min_leaf) ||
            nr < static_cast<std::size_t>(min_leaf))
          continue;
        const double imp = gini_scaled(left_cnt, static_cast<double>(nl)) +
                           gini_scaled(right_cnt, static_cast<double>(nr));
        if (imp < best_imp) {
          best_imp = imp;
          best = {true, f, 0.5 * (xv + xn), imp};
        }
      }
    } else {
      double ls = 0.0, ls2 = 0.0, rs = 0.0, rs2 = 0.0;
      for (int i : order) {
        rs += y[static_cast<std::size_t>(i)];
        rs2 += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
      }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double yv = y[static_cast<std::size_t>(order[i])];
        ls += yv;
        ls2 += yv * yv;
        rs -= yv;
        rs2 -= yv * yv;
        const double xv = x[static_cast<std::size_t>(order[i])];
        const double xn = x[static_cast<std::size_t>(order[i + 1])];
        if (xv == xn) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < static_cast<std::size_t>(min_leaf) ||
            nr < static_cast<std::size_t>(min_leaf))
          continue;
        const double imp = (ls2 - ls * ls / static_cast<double>(nl)) +
                           (rs2 - rs * rs / static_cast<double>(nr));
        if (imp < best_imp) {
          best_imp = imp;
          best = {true, f, 0.5 * (xv + xn), imp};
        }
      }
    }
  }
  return best;
}

Tree grow_tree(const std::vector<std::vector<double>>& cols,
               const std::vector<double>& y, bool discrete,
               std::vector<int> root_members, const CartParams& params, int mtry,
               RngStream& rng) {
  Tree tree;
  const int p = static_cast<int>(cols.size());
  const double root_imp = node_impurity(root_members, y, discrete);

  struct Item {
    int node;
    std::vector<int> members;
    int depth;
  };
  tree.nodes.push_back({});
  std::vector<Item> stack;
  stack.push_back({0, std::move(root_members), 0});

  std::vector<int> all_features(static_cast<std::size_t>(p));
  std::iota(all_features.begin(), all_features.end(), 0);

  while (!stack.empty()) {
    Item item = std::move(stack.back());
    stack.pop_back();

    auto make_leaf = [&]() {
      tree.nodes[static_cast<std::size_t>(item.node)].feature = -1;
      tree.nodes[static_cast<std::size_t>(item.node)].members = std::move(item.members);
    };

    if (item.depth >= params.max_depth ||
        item.members.size() < 2 * static_cast<std::size_t>(params.min_leaf)) {
      make_leaf();
      continue;
    }
    const double imp = node_impurity(item.members, y, discrete);
    if (imp <= 1e-12) {
      make_leaf();
      continue;
    }

    std::vector<int> features;
    if (mtry >= p) {
      features = all_features;
    } else {
      // partial Fisher-Yates over a scratch copy
      std::vector<int> scratch = all_features;
      for (int k = 0; k < mtry; ++k) {
        const std::size_t j =
            static_cast<std::size_t>(k) +
            static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(p - k)));
        std::swap(scratch[static_cast<std::size_t>(k)], scratch[j]);
        features.push_back(scratch[static_cast<std::size_t>(k)]);
      }
    }

    const SplitResult split =
        best_split(cols, y, discrete, item.members, features, params.min_leaf);
    if (!split.found || imp - split.child_impurity < params.cp * root_imp) {
      make_leaf();
      continue;
    }

    std::vector<int> left, right;
    for (int i : item.members) {
      if (cols[static_cast<std::size_t>(split.feature)][static_cast<std::size_t>(i)] <
          split.threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    const int li = static_cast<int>(tree.nodes.size());
    const int ri = li + 1;
    tree.nodes.push_back({});
    tree.nodes.push_back({});  // may reallocate; re-take the reference after
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(item.node)];
    nd.feature = split.feature;
    nd.threshold = split.threshold;
    nd.left = li;
    nd.right = ri;
    stack.push_back({ri, std::move(right), item.depth + 1});
    stack.push_back({li, std::move(left), item.depth + 1});
  }
  return tree;
}

}  // namespace

std::vector<double> cart_impute_draw(const std::vector<std::vector<double>>& x_obs,
                                     const std::vector<double>& y_obs, bool y_discrete,
                                     const std::vector<std::vector<double>>& x_mis,
                                     const CartParams& params, RngStream& rng) {
  if (y_obs.empty()) throw std::invalid_argument("cart_impute_draw: no observed rows");
  std::vector<int> members(y_obs.size());
  std::iota(members.begin(), members.end(), 0);
  const int p = static_cast<int>(x_obs.size());
  const Tree tree =
      grow_tree(x_obs, y_obs, y_discrete, std::move(members), params, p, rng);

  const std::size_t n_mis = x_mis.empty() ? 0 : x_mis[0].size();
  std::vector<double> out(n_mis);
  for (std::size_t r = 0; r < n_mis; ++r) {
    const int leaf = tree.leaf_for(x_mis, r);
    const auto& mem = tree.nodes[static_cast<std::size_t>(leaf)].members;
    out[r] = y_obs[static_cast<std::size_t>(
        mem[rng.uniform_int(static_cast<std::uint64_t>(mem.size()))])];
  }
  return out;
}

std::vector<double> rf_impute_draw(const std::vector<std::vector<double>>& x_obs,
                                   const std::vector<double>& y_obs, bool y_discrete,
                                   const std::vector<std::vector<double>>& x_mis,
                                   const CartParams& cart, const RfParams& rf,
                                   RngStream& rng) {
  if (y_obs.empty()) throw std::invalid_argument("rf_impute_draw: no observed rows");
  const int p = static_cast<int>(x_obs.size());
  const int mtry = rf.mtry > 0 ? rf.mtry
                               : std::max(1, static_cast<int>(std::floor(
                                                  std::sqrt(static_cast<double>(p)))));
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(rf.trees));
  for (int t = 0; t < rf.trees; ++t) {
    std::vector<int> members(y_obs.size());
    if (rf.bootstrap) {
      for (auto& mref : members)
        mref = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(y_obs.size())));
    } else {
      std::iota(members.begin(), members.end(), 0);
    }
    trees.push_back(
        grow_tree(x_obs, y_obs, y_discrete, std::move(members), cart, mtry, rng));
  }

  const std::size_t n_mis = x_mis.empty() ? 0 : x_mis[0].size();
  std::vector<double> out(n_mis);
  std::vector<int> pool_rows;
  for (std::size_t r = 0; r < n_mis; ++r) {
    pool_rows.clear();
    for (const Tree& tree : trees) {
      const int leaf = tree.leaf_for(x_mis, r);
      const auto& mem = tree.nodes[static_cast<std::size_t>(leaf)].members;
      pool_rows.insert(pool_rows.end(), mem.begin(), mem.end());
    }
    out[r] = y_obs[static_cast<std::size_t>(
        pool_rows[rng.uniform_int(static_cast<std::uint64_t>(pool_rows.size()))])];
  }
  return out;
}

double pmm_draw(const GlmFit& fit, const Eigen::RowVectorXd& x_new,
                const std::vector<std::pair<double, double>>& donors, int k,
                RngStream& rng) {
  if (donors.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("pmm_draw: fewer donors than k");
  const BayesLinearDraw draw = draw_bayes_coefficients(fit, rng);
  const double pred = x_new.dot(draw.beta.transpose());
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(donors.size());
  for (std::size_t i = 0; i < donors.size(); ++i)
    dist.push_back({std::fabs(donors[i].first - pred), i});
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  const std::size_t pick = rng.uniform_int(static_cast<std::uint64_t>(k));
  return donors[dist[pick].second].second;
}

namespace {

// ------------------------------------------------------------ fcs engine ----

struct WorkState {
  const Dataset* original = nullptr;
  std::vector<std::string> base_cols;
  std::map<std::string, std::vector<double>> values;  // current completed values
  std::map<std::string, const Column*> schema;
  // passive interaction columns
  std::vector<std::pair<std::string, std::vector<std::string>>> inter_cols;
  std::map<std::string, std::vector<double>> inter_values;
};

void recompute_interactions(WorkState& ws, const std::string& touched) {
  const std::size_t n = ws.original->n_rows();
  for (const auto& [name, terms] : ws.inter_cols) {
    if (!touched.empty() &&
        std::find(terms.begin(), terms.end(), touched) == terms.end())
      continue;
    auto& vals = ws.inter_values[name];
    vals.assign(n, 1.0);
    for (const auto& t : terms) {
      const auto& src = ws.values.at(t);
      for (std::size_t i = 0; i < n; ++i) vals[i] *= src[i];
    }
  }
}

// design matrix over current work values: every base column except the
// target (one-hot for categoricals) plus passive interactions not touching it
struct FcsDesign {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
};

FcsDesign build_design(const WorkState& ws, const std::string& target,
                       const std::vector<std::size_t>& rows) {
  FcsDesign out;
  std::vector<std::pair<std::string, int>> slots;  // (column, level or -1)
  for (const auto& c : ws.base_cols) {
    if (c == target) continue;
    const VarKind& kind = ws.schema.at(c)->kind;
    if (kind.type == VarType::categorical) {
      for (std::size_t lvl = 1; lvl < kind.n_levels(); ++lvl)
        slots.push_back({c, static_cast<int>(lvl)});
    } else {
      slots.push_back({c, -1});
    }
  }
  std::vector<std::string> inter_used;
  for (const auto& [name, terms] : ws.inter_cols)
    if (std::find(terms.begin(), terms.end(), target) == terms.end())
      inter_used.push_back(name);

  const Eigen::Index p =
      1 + static_cast<Eigen::Index>(slots.size() + inter_used.size());
  out.X.resize(static_cast<Eigen::Index>(rows.size()), p);
  out.X.col(0).setOnes();
  out.names = {"(Intercept)"};
  Eigen::Index j = 1;
  for (const auto& [c, lvl] : slots) {
    const auto& vals = ws.values.at(c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = vals[rows[i]];
      out.X(static_cast<Eigen::Index>(i), j) =
          lvl < 0 ? v : (v == static_cast<double>(lvl) ? 1.0 : 0.0);
    }
    out.names.push_back(lvl < 0 ? c : c + "=" + std::to_string(lvl));
    ++j;
  }
  for (const auto& name : inter_used) {
    const auto& vals = ws.inter_values.at(name);
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.X(static_cast<Eigen::Index>(i), j) = vals[rows[i]];
    out.names.push_back(name);
    ++j;
  }
  return out;
}

// numeric feature columns for the tree engines (categoricals as codes)
std::vector<std::vector<double>> tree_features(const WorkState& ws,
                                               const std::string& target,
                                               const std::vector<std::size_t>& rows) {
  std::vector<std::vector<double>> cols;
  for (const auto& c : ws.base_cols) {
    if (c == target) continue;
    const auto& vals = ws.values.at(c);
    std::vector<double> col(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = vals[rows[i]];
    cols.push_back(std::move(col));
  }
  return cols;
}

Eigen::VectorXd coef_draw_binomial(const GlmFit& fit, RngStream& rng) {
  const Eigen::Index k = static_cast<Eigen::Index>(fit.kept.size());
  Eigen::VectorXd z(k);
  for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
  Eigen::VectorXd u = fit.xtx_chol_L.topLeftCorner(k, k)
                          .transpose()
                          .triangularView<Eigen::Upper>()
                          .solve(z);
  Eigen::VectorXd beta = fit.beta;
  for (Eigen::Index j = 0; j < k; ++j)
    beta[fit.kept[static_cast<std::size_t>(j)]] += u[j];
  return beta;
}

double marginal_draw(const std::vector<double>& observed, RngStream& rng) {
  return observed[rng.uniform_int(static_cast<std::uint64_t>(observed.size()))];
}

}  // namespace

FcsSpec FcsSpec::parametric_default(const Dataset& d, const std::string& y_col) {
  FcsSpec spec;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    const Column& col = d.col(c);
    if (!col.any_missing()) continue;
    if (col.name == y_col) {
      spec.methods[col.name] = ColumnMethod::pmm;
    } else {
      switch (col.kind.type) {
        case VarType::binary: spec.methods[col.name] = ColumnMethod::logistic; break;
        case VarType::categorical:
          spec.methods[col.name] = ColumnMethod::polytomous;
          break;
        default: spec.methods[col.name] = ColumnMethod::bayes_linear; break;
      }
    }
  }
  return spec;
}

FcsSpec FcsSpec::tree_default(const Dataset& d, ColumnMethod engine) {
  FcsSpec spec;
  for (std::size_t c = 0; c < d.n_cols(); ++c)
    if (d.col(c).any_missing()) spec.methods[d.col(c).name] = engine;
  return spec;
}

ImputationSet fcs_impute(const Dataset& d, const FcsSpec& spec, RngStream& rng) {
  const std::size_t n = d.n_rows();
  ImputationSet out;
  out.engine = "fcs";

  // incomplete columns in increasing-missingness visit order
  std::vector<std::pair<double, std::string>> order;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    const Column& col = d.col(c);
    if (!col.any_missing()) continue;
    if (!spec.methods.count(col.name))
      throw std::invalid_argument("fcs_impute: no method for column " + col.name);
    std::size_t miss = 0;
    for (auto m : col.missing) miss += m;
    if (n - miss < 20)
      throw std::invalid_argument("fcs_impute: column " + col.name +
                                  " has fewer than 20 observed rows");
    order.push_back({static_cast<double>(miss) / static_cast<double>(n), col.name});
  }
  std::sort(order.begin(), order.end());

  for (int chain = 0; chain < spec.m; ++chain) {
    WorkState ws;
    ws.original = &d;
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      const Column& col = d.col(c);
      ws.base_cols.push_back(col.name);
      ws.schema[col.name] = &col;
      ws.values[col.name] = col.values;
    }
    for (const auto& terms : spec.interactions) {
      std::string name;
      for (std::size_t t = 0; t < terms.size(); ++t)
        name += (t ? ":" : "") + terms[t];
      ws.inter_cols.push_back({name, terms});
      ws.inter_values[name] = {};
    }

    // initial fill: draws from the observed marginals
    std::map<std::string, std::vector<double>> observed_pool;
    for (const auto& [frac, cname] : order) {
      (void)frac;
      const Column& col = d.col(cname);
      auto& pool_vals = observed_pool[cname];
      for (std::size_t i = 0; i < n; ++i)
        if (!col.missing[i]) pool_vals.push_back(col.values[i]);
      auto& vals = ws.values[cname];
      for (std::size_t i = 0; i < n; ++i)
        if (col.missing[i]) vals[i] = marginal_draw(pool_vals, rng);
    }
    recompute_interactions(ws, "");

    for (int iter = 0; iter < spec.iterations; ++iter) {
      for (const auto& [frac, cname] : order) {
        (void)frac;
        const Column& col = d.col(cname);
        const ColumnMethod method = spec.methods.at(cname);
        std::vector<std::size_t> obs_rows, mis_rows;
        for (std::size_t i = 0; i < n; ++i)
          (col.missing[i] ? mis_rows : obs_rows).push_back(i);

        const bool log_scale = col.kind.type == VarType::positive;
        auto target_value = [&](std::size_t row) {
          const double v = ws.values.at(cname)[row];
          return log_scale ? std::log(v) : v;
        };

        auto& vals = ws.values[cname];
        try {
          switch (method) {
            case ColumnMethod::bayes_linear: {
              const FcsDesign obs_d = build_design(ws, cname, obs_rows);
              Eigen::VectorXd y(static_cast<Eigen::Index>(obs_rows.size()));
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                y[static_cast<Eigen::Index>(i)] = target_value(obs_rows[i]);
              const GlmFit fit = fit_ols(obs_d.X, obs_d.names, y, Collinear::drop);
              const FcsDesign mis_d = build_design(ws, cname, mis_rows);
              const Eigen::VectorXd draws = draw_bayes_linear(fit, mis_d.X, rng);
              for (std::size_t i = 0; i < mis_rows.size(); ++i) {
                const double v = draws[static_cast<Eigen::Index>(i)];
                vals[mis_rows[i]] = log_scale ? std::exp(v) : v;
              }
              break;
            }
            case ColumnMethod::pmm: {
              const FcsDesign obs_d = build_design(ws, cname, obs_rows);
              Eigen::VectorXd y(static_cast<Eigen::Index>(obs_rows.size()));
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                y[static_cast<Eigen::Index>(i)] = target_value(obs_rows[i]);
              const GlmFit fit = fit_ols(obs_d.X, obs_d.names, y, Collinear::drop);
              const Eigen::VectorXd yhat = fit.predict_linear(obs_d.X);
              std::vector<std::pair<double, double>> donors(obs_rows.size());
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                donors[i] = {yhat[static_cast<Eigen::Index>(i)],
                             d.col(cname).values[obs_rows[i]]};
              const FcsDesign mis_d = build_design(ws, cname, mis_rows);
              const int k = std::min<int>(spec.pmm_donors,
                                          static_cast<int>(donors.size()));
              for (std::size_t i = 0; i < mis_rows.size(); ++i)
                vals[mis_rows[i]] =
                    pmm_draw(fit, mis_d.X.row(static_cast<Eigen::Index>(i)), donors,
                             k, rng);
              break;
            }
            case ColumnMethod::logistic: {
              const FcsDesign obs_d = build_design(ws, cname, obs_rows);
              Eigen::VectorXd y(static_cast<Eigen::Index>(obs_rows.size()));
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                y[static_cast<Eigen::Index>(i)] = ws.values.at(cname)[obs_rows[i]];
              const GlmFit fit =
                  fit_logistic(obs_d.X, obs_d.names, y, 60, 1e-8, Collinear::drop);
              const Eigen::VectorXd bstar = coef_draw_binomial(fit, rng);
              const FcsDesign mis_d = build_design(ws, cname, mis_rows);
              const Eigen::VectorXd lp = mis_d.X * bstar;
              for (std::size_t i = 0; i < mis_rows.size(); ++i)
                vals[mis_rows[i]] =
                    rng.bernoulli(expit(lp[static_cast<Eigen::Index>(i)])) ? 1.0 : 0.0;
              break;
            }
            case ColumnMethod::polytomous: {
              const FcsDesign obs_d = build_design(ws, cname, obs_rows);
              std::vector<int> y(obs_rows.size());
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                y[i] = static_cast<int>(ws.values.at(cname)[obs_rows[i]]);
              const int k = static_cast<int>(col.kind.n_levels());
              const GlmFit fit =
                  fit_multinomial(obs_d.X, obs_d.names, y, k, 60, 1e-8,
                                  Collinear::drop);
              const FcsDesign mis_d = build_design(ws, cname, mis_rows);
              const Eigen::MatrixXd probs = fit.predict_classes(mis_d.X);
              for (std::size_t i = 0; i < mis_rows.size(); ++i) {
                double u = rng.uniform();
                int cls = 0;
                for (; cls < k - 1; ++cls) {
                  u -= probs(static_cast<Eigen::Index>(i), cls);
                  if (u < 0.0) break;
                }
                vals[mis_rows[i]] = static_cast<double>(cls);
              }
              break;
            }
            case ColumnMethod::cart:
            case ColumnMethod::rf: {
              const std::vector<std::vector<double>> xo =
                  tree_features(ws, cname, obs_rows);
              const std::vector<std::vector<double>> xm =
                  tree_features(ws, cname, mis_rows);
              std::vector<double> y(obs_rows.size());
              for (std::size_t i = 0; i < obs_rows.size(); ++i)
                y[i] = ws.values.at(cname)[obs_rows[i]];
              const bool discrete = col.kind.type == VarType::binary ||
                                    col.kind.type == VarType::categorical;
              const std::vector<double> drawn =
                  method == ColumnMethod::cart
                      ? cart_impute_draw(xo, y, discrete, xm, spec.cart, rng)
                      : rf_impute_draw(xo, y, discrete, xm, spec.cart, spec.rf, rng);
              for (std::size_t i = 0; i < mis_rows.size(); ++i)
                vals[mis_rows[i]] = drawn[i];
              break;
            }
          }
        } catch (const std::exception&) {
          // column-model failure: marginal draws for this visit
          ++out.fallback_events;
          for (std::size_t row : mis_rows)
            vals[row] = marginal_draw(observed_pool.at(cname), rng);
        }
        recompute_interactions(ws, cname);

        // trace of imputed-cell means
        double s = 0.0;
        for (std::size_t row : mis_rows) s += vals[row];
        auto& tr = out.traces[cname];
        if (tr.size() <= static_cast<std::size_t>(chain)) tr.resize(chain + 1);
        tr[static_cast<std::size_t>(chain)].push_back(
            mis_rows.empty() ? 0.0 : s / static_cast<double>(mis_rows.size()));
      }
    }

    // assemble the completed dataset
    Dataset completed(n);
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      Column col = d.col(c);
      const auto& vals = ws.values.at(col.name);
      for (std::size_t i = 0; i < n; ++i) {
        if (col.missing[i]) {
          col.values[i] = vals[i];
          col.missing[i] = 0;
        }
      }
      completed.add_column(std::move(col));
    }
    out.completed.push_back(std::move(completed));
  }
  return out;
}

// ----------------------------------------------------------------- emb ----

namespace {

struct Embedding {
  // slot -> (column index, level or -1); level >= 1 marks a dummy slot
  std::vector<std::pair<std::size_t, int>> slots;
  std::vector<bool> log_scale;

  static Embedding build(const Dataset& d) {
    Embedding e;
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      const Column& col = d.col(c);
      if (col.kind.type == VarType::categorical) {
        for (std::size_t lvl = 1; lvl < col.kind.n_levels(); ++lvl) {
          e.slots.push_back({c, static_cast<int>(lvl)});
          e.log_scale.push_back(false);
        }
      } else {
        e.slots.push_back({c, -1});
        e.log_scale.push_back(col.kind.type == VarType::positive);
      }
    }
    return e;
  }
};

}  // namespace

ImputationSet emb_impute(const Dataset& d, int m, RngStream& rng,
                         double loglik_tol, int max_sweeps) {
  const std::size_t n = d.n_rows();
  const Embedding emb = Embedding::build(d);
  const std::size_t p = emb.slots.size();
  ImputationSet out;
  out.engine = "emb";

  // numeric embedding with NaN for missing cells
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::vector<std::uint8_t>> miss(p, std::vector<std::uint8_t>(n, 0));
  for (std::size_t s = 0; s < p; ++s) {
    const auto& [ci, lvl] = emb.slots[s];
    const Column& col = d.col(ci);
    for (std::size_t i = 0; i < n; ++i) {
      if (col.missing[i]) {
        miss[s][i] = 1;
        Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = 0.0;
      } else {
        double v = col.values[i];
        if (lvl >= 1) v = v == lvl ? 1.0 : 0.0;
        if (emb.log_scale[s]) v = std::log(v);
        Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = v;
      }
    }
  }

  // group rows by missingness pattern
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> patterns;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint8_t> key(p);
    for (std::size_t s = 0; s < p; ++s) key[s] = miss[s][i];
    patterns[key].push_back(i);
  }

  auto run_em = [&](const std::vector<std::size_t>& rows, Eigen::VectorXd& mu,
                    Eigen::MatrixXd& sigma) {
    const double nn = static_cast<double>(rows.size());
    // initialize from observed moments
    mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    Eigen::VectorXd var = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p));
    for (std::size_t s = 0; s < p; ++s) {
      double acc = 0.0, acc2 = 0.0, cnt = 0.0;
      for (std::size_t i : rows)
        if (!miss[s][i]) {
          const double v = Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
          acc += v;
          acc2 += v * v;
          cnt += 1.0;
        }
      if (cnt > 1.0) {
        mu[static_cast<Eigen::Index>(s)] = acc / cnt;
        var[static_cast<Eigen::Index>(s)] =
            std::max(acc2 / cnt - (acc / cnt) * (acc / cnt), 1e-4);
      }
    }
    sigma = var.asDiagonal();

    // per-row pattern keys for the bootstrap subset
    std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> pats;
    for (std::size_t i : rows) {
      std::vector<std::uint8_t> key(p);
      for (std::size_t s = 0; s < p; ++s) key[s] = miss[s][i];
      pats[key].push_back(i);
    }

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                                 static_cast<Eigen::Index>(p));
      double ll = 0.0;
      for (const auto& [key, members] : pats) {
        std::vector<Eigen::Index> oi, mi;
        for (std::size_t s = 0; s < p; ++s)
          (key[s] ? mi : oi).push_back(static_cast<Eigen::Index>(s));
        const Eigen::Index no = static_cast<Eigen::Index>(oi.size());
        const Eigen::Index nm = static_cast<Eigen::Index>(mi.size());

        Eigen::MatrixXd soo(no, no), smo(nm, no), smm(nm, nm);
        for (Eigen::Index a = 0; a < no; ++a)
          for (Eigen::Index b = 0; b < no; ++b) soo(a, b) = sigma(oi[a], oi[b]);
        for (Eigen::Index a = 0; a < nm; ++a) {
          for (Eigen::Index b = 0; b < no; ++b) smo(a, b) = sigma(mi[a], oi[b]);
          for (Eigen::Index b = 0; b < nm; ++b) smm(a, b) = sigma(mi[a], mi[b]);
        }
        Eigen::LLT<Eigen::MatrixXd> llt;
        if (no > 0) {
          llt.compute(soo);
          if (llt.info() != Eigen::Success) {
            soo.diagonal().array() += 1e-6;
            llt.compute(soo);
            ++out.ridge_events;
          }
        }
        Eigen::MatrixXd Bm;  // conditional regression of mis on obs
        Eigen::MatrixXd cond_cov;
        if (nm > 0 && no > 0) {
          Bm = llt.solve(smo.transpose()).transpose();  // nm x no
          cond_cov = smm - Bm * smo.transpose();
        } else if (nm > 0) {
          cond_cov = smm;
        }

        const double logdet =
            no > 0 ? 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum()
                   : 0.0;
        for (std::size_t i : members) {
          Eigen::VectorXd xo(no), xm_hat(nm);
          for (Eigen::Index a = 0; a < no; ++a)
            xo[a] = Z(static_cast<Eigen::Index>(i), oi[a]);
          Eigen::VectorXd muo(no), mum(nm);
          for (Eigen::Index a = 0; a < no; ++a) muo[a] = mu[oi[a]];
          for (Eigen::Index a = 0; a < nm; ++a) mum[a] = mu[mi[a]];
          if (nm > 0)
            xm_hat = no > 0 ? Eigen::VectorXd(mum + Bm * (xo - muo)) : mum;

          Eigen::VectorXd full(static_cast<Eigen::Index>(p));
          for (Eigen::Index a = 0; a < no; ++a) full[oi[a]] = xo[a];
          for (Eigen::Index a = 0; a < nm; ++a) full[mi[a]] = xm_hat[a];
          s1 += full;
          s2 += full * full.transpose();
          if (nm > 0)
            for (Eigen::Index a = 0; a < nm; ++a)
              for (Eigen::Index b = 0; b < nm; ++b)
                s2(mi[a], mi[b]) += cond_cov(a, b);
          if (no > 0) {
            const Eigen::VectorXd resid = xo - muo;
            ll += -0.5 * (logdet + resid.dot(llt.solve(resid)) +
                          static_cast<double>(no) * std::log(2.0 * M_PI));
          }
        }
      }
      mu = s1 / nn;
      sigma = s2 / nn - mu * mu.transpose();
      sigma = 0.5 * (sigma + sigma.transpose());
      {
        Eigen::LLT<Eigen::MatrixXd> test(sigma);
        if (test.info() != Eigen::Success) {
          sigma.diagonal().array() += 1e-6;
          ++out.ridge_events;
        }
      }
      if (sweep > 0 &&
          std::fabs(ll - prev_ll) < loglik_tol * (1.0 + std::fabs(prev_ll)))
        break;
      prev_ll = ll;
    }
  };

  for (int b = 0; b < m; ++b) {
    // bootstrap, then EM on the resample
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.uniform_int(n);
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    run_em(rows, mu, sigma);

    // impute the original data's missing cells from the conditional normal
    Eigen::MatrixXd Zi = Z;
    for (const auto& [key, members] : patterns) {
      std::vector<Eigen::Index> oi, mi;
      for (std::size_t s = 0; s < p; ++s)
        (key[s] ? mi : oi).push_back(static_cast<Eigen::Index>(s));
      if (mi.empty()) continue;
      const Eigen::Index no = static_cast<Eigen::Index>(oi.size());
      const Eigen::Index nm = static_cast<Eigen::Index>(mi.size());
      Eigen::MatrixXd soo(no, no), smo(nm, no), smm(nm, nm);
      for (Eigen::Index a = 0; a < no; ++a)
        for (Eigen::Index bx = 0; bx < no; ++bx) soo(a, bx) = sigma(oi[a], oi[bx]);
      for (Eigen::Index a = 0; a < nm; ++a) {
        for (Eigen::Index bx = 0; bx < no; ++bx) smo(a, bx) = sigma(mi[a], oi[bx]);
        for (Eigen::Index bx = 0; bx < nm; ++bx) smm(a, bx) = sigma(mi[a], mi[bx]);
      }
      Eigen::MatrixXd Bm(nm, no);
      Eigen::MatrixXd cond = smm;
      Eigen::LLT<Eigen::MatrixXd> llt;
      if (no > 0) {
        llt.compute(soo);
        if (llt.info() != Eigen::Success) {
          soo.diagonal().array() += 1e-6;
          llt.compute(soo);
          ++out.ridge_events;
        }
        Bm = llt.solve(smo.transpose()).transpose();
        cond = smm - Bm * smo.transpose();
        cond = 0.5 * (cond + cond.transpose());
      }
      Eigen::LLT<Eigen::MatrixXd> cllt(cond);
      if (cllt.info() != Eigen::Success) {
        cond.diagonal().array() += 1e-6;
        cllt.compute(cond);
        ++out.ridge_events;
      }
      const Eigen::MatrixXd L = cllt.matrixL();

      for (std::size_t i : members) {
        Eigen::VectorXd xo(no), mum(nm), muo(no);
        for (Eigen::Index a = 0; a < no; ++a) {
          xo[a] = Z(static_cast<Eigen::Index>(i), oi[a]);
          muo[a] = mu[oi[a]];
        }
        for (Eigen::Index a = 0; a < nm; ++a) mum[a] = mu[mi[a]];
        Eigen::VectorXd center = no > 0 ? Eigen::VectorXd(mum + Bm * (xo - muo)) : mum;
        Eigen::VectorXd z(nm);
        for (Eigen::Index a = 0; a < nm; ++a) z[a] = rng.normal();
        const Eigen::VectorXd draw = center + L * z;
        for (Eigen::Index a = 0; a < nm; ++a)
          Zi(static_cast<Eigen::Index>(i), mi[a]) = draw[a];
      }
    }

    // map the embedded matrix back onto the schema
    Dataset completed(n);
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      Column col = d.col(c);
      if (col.kind.type == VarType::categorical) {
        // argmax over implied level scores (reference = 1 - sum of dummies)
        std::vector<Eigen::Index> slot_of;
        for (std::size_t s = 0; s < p; ++s)
          if (emb.slots[s].first == c) slot_of.push_back(static_cast<Eigen::Index>(s));
        for (std::size_t i = 0; i < n; ++i) {
          if (!col.missing[i]) continue;
          double best_v = 1.0;
          int best_lvl = 0;
          double dummy_sum = 0.0;
          for (std::size_t k = 0; k < slot_of.size(); ++k)
            dummy_sum += Zi(static_cast<Eigen::Index>(i), slot_of[k]);
          best_v = 1.0 - dummy_sum;
          for (std::size_t k = 0; k < slot_of.size(); ++k) {
            const double v = Zi(static_cast<Eigen::Index>(i), slot_of[k]);
            if (v > best_v) {
              best_v = v;
              best_lvl = static_cast<int>(k) + 1;
            }
          }
          col.values[i] = static_cast<double>(best_lvl);
          col.missing[i] = 0;
        }
      } else {
        Eigen::Index slot = -1;
        for (std::size_t s = 0; s < p; ++s)
          if (emb.slots[s].first == c) slot = static_cast<Eigen::Index>(s);
        for (std::size_t i = 0; i < n; ++i) {
          if (!col.missing[i]) continue;
          double v = Zi(static_cast<Eigen::Index>(i), slot);
          switch (col.kind.type) {
            case VarType::binary: v = v >= 0.5 ? 1.0 : 0.0; break;
            case VarType::positive: v = std::exp(v); break;
            default: break;
          }
          col.values[i] = v;
          col.missing[i] = 0;
        }
      }
      completed.add_column(std::move(col));
    }
    out.completed.push_back(std::move(completed));
  }
  return out;
}

PooledEstimate pool(const std::vector<std::pair<double, double>>& estimates,
                    std::size_t n_complete) {
  const std::size_t m = estimates.size();
  if (m < 2) throw std::invalid_argument("pool: need m >= 2 imputations");
  PooledEstimate out;
  const double md = static_cast<double>(m);
  for (const auto& [q, se] : estimates) {
    out.q_bar += q;
    out.within += se * se;
  }
  out.q_bar /= md;
  out.within /= md;
  for (const auto& [q, se] : estimates) {
    (void)se;
    out.between += (q - out.q_bar) * (q - out.q_bar);
  }
  out.between /= (md - 1.0);
  out.total = out.within + (1.0 + 1.0 / md) * out.between;

  const double nu_com = static_cast<double>(n_complete) - 1.0;
  if (out.between <= 0.0 || out.total <= 0.0) {
    out.df = nu_com;
  } else {
    const double gamma = (1.0 + 1.0 / md) * out.between / out.total;
    const double df_old =
        (md - 1.0) * (1.0 / (gamma * gamma));
    const double nu_obs =
        (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - gamma);
    out.df = 1.0 / (1.0 / df_old + 1.0 / nu_obs);
  }
  const double tq = t_quantile(std::max(out.df, 1.0), 0.975);
  const double half = tq * std::sqrt(out.total);
  out.ci_low = out.q_bar - half;
  out.ci_high = out.q_bar + half;
  return out;
}

}  // namespace mdt::mi
