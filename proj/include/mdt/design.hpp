#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"

namespace mdt {

// Design matrix with named columns. Invariant: no missing cells (callers
// filter rows first); one-hot blocks of a categorical sum to <= 1 per row
// with the reference level dropped.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  bool has_intercept = false;
};

// Declarative builder. Categorical columns expand to reference-dropped
// dummies; interactions expand to the cartesian product of their terms'
// expansions with ':'-joined names (recipe (Wa,Wb) always yields "Wa:Wb"
// as the elementwise product).
class DesignBuilder {
 public:
  DesignBuilder& intercept(bool on = true) {
    intercept_ = on;
    return *this;
  }
  DesignBuilder& add(const std::string& col);
  DesignBuilder& add_interaction(std::vector<std::string> cols);
  // max(x - knot, 0)
  DesignBuilder& add_hinge(const std::string& col, double knot);

  DesignMatrix build(const Dataset& d) const;
  DesignMatrix build(const Dataset& d, std::span<const std::size_t> rows) const;

 private:
  struct Term {
    enum class Kind { main, interaction, hinge } kind;
    std::vector<std::string> cols;
    double knot = 0.0;
  };
  bool intercept_ = false;
  std::vector<Term> terms_;
};

}  // namespace mdt
