#include "mdt/design.hpp"

#include <cmath>
#include <stdexcept>

namespace mdt {

DesignBuilder& DesignBuilder::add(const std::string& col) {
  terms_.push_back({Term::Kind::main, {col}, 0.0});
  return *this;
}

DesignBuilder& DesignBuilder::add_interaction(std::vector<std::string> cols) {
  if (cols.size() < 2)
    throw std::invalid_argument("interaction needs >= 2 columns");
  terms_.push_back({Term::Kind::interaction, std::move(cols), 0.0});
  return *this;
}

DesignBuilder& DesignBuilder::add_hinge(const std::string& col, double knot) {
  terms_.push_back({Term::Kind::hinge, {col}, knot});
  return *this;
}

namespace {

struct Expansion {
  std::vector<std::string> names;
  // level: -1 for the raw value, otherwise indicator of that level code
  std::vector<int> levels;
};

Expansion expand(const Column& c) {
  if (c.kind.type == VarType::categorical) {
    Expansion e;
    for (std::size_t lvl = 1; lvl < c.kind.n_levels(); ++lvl) {
      e.names.push_back(c.name + "=" + c.kind.levels[lvl]);
      e.levels.push_back(static_cast<int>(lvl));
    }
    return e;
  }
  return {{c.name}, {-1}};
}

double cell(const Column& c, std::size_t row, int level) {
  const double v = c.values[row];
  if (level < 0) return v;
  return v == static_cast<double>(level) ? 1.0 : 0.0;
}

}  // namespace

DesignMatrix DesignBuilder::build(const Dataset& d) const {
  std::vector<std::size_t> rows(d.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return build(d, rows);
}

DesignMatrix DesignBuilder::build(const Dataset& d,
                                  std::span<const std::size_t> rows) const {
  // resolve every term into (column pointers, level selectors, name)
  struct Col {
    std::vector<const Column*> src;
    std::vector<int> levels;
    std::string name;
    bool hinge = false;
    double knot = 0.0;
  };
  std::vector<Col> cols;
  for (const auto& t : terms_) {
    switch (t.kind) {
      case Term::Kind::main: {
        const Column& c = d.col(t.cols[0]);
        const Expansion e = expand(c);
        for (std::size_t j = 0; j < e.names.size(); ++j)
          cols.push_back({{&c}, {e.levels[j]}, e.names[j], false, 0.0});
        break;
      }
      case Term::Kind::hinge: {
        const Column& c = d.col(t.cols[0]);
        if (c.kind.type == VarType::categorical)
          throw std::invalid_argument("hinge on categorical column " + c.name);
        cols.push_back({{&c},
                        {-1},
                        "hinge(" + c.name + "," + format_double(t.knot) + ")",
                        true,
                        t.knot});
        break;
      }
      case Term::Kind::interaction: {
        std::vector<Col> partial = {{{}, {}, "", false, 0.0}};
        for (const auto& cname : t.cols) {
          const Column& c = d.col(cname);
          const Expansion e = expand(c);
          std::vector<Col> next;
          for (const auto& p : partial)
            for (std::size_t j = 0; j < e.names.size(); ++j) {
              Col nc = p;
              nc.src.push_back(&c);
              nc.levels.push_back(e.levels[j]);
              nc.name = p.name.empty() ? e.names[j] : p.name + ":" + e.names[j];
              next.push_back(std::move(nc));
            }
          partial = std::move(next);
        }
        for (auto& p : partial) cols.push_back(std::move(p));
        break;
      }
    }
  }

  DesignMatrix out;
  out.has_intercept = intercept_;
  const std::size_t p = cols.size() + (intercept_ ? 1 : 0);
  out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  std::size_t jc = 0;
  if (intercept_) {
    out.names.emplace_back("(Intercept)");
    out.X.col(0).setOnes();
    jc = 1;
  }
  for (const auto& c : cols) {
    out.names.push_back(c.name);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      double v = 1.0;
      for (std::size_t s = 0; s < c.src.size(); ++s) {
        if (c.src[s]->missing[r])
          throw std::invalid_argument("design uses missing cell in column " +
                                      c.src[s]->name);
        v *= cell(*c.src[s], r, c.levels[s]);
      }
      if (c.hinge) v = std::max(v - c.knot, 0.0);
      out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jc)) = v;
    }
    ++jc;
  }
  return out;
}

}  // namespace mdt
