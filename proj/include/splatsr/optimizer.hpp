#pragma once

#include "splatsr/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace splatsr {

// Adam with per-group learning rates and optional exponential decay on
// position-like groups. Parameters live in the model; each group walks its
// scalars through a visitor in a fixed canonical order.
class AdamOptimizer {
 public:
  struct GroupConfig {
    std::string name;
    double lr = 1e-3;
    double lr_final = 0.0;   // > 0 enables log-linear decay toward this value
    int64_t decay_steps = 0;
    size_t row_size = 1;     // scalars per anchor for per-anchor groups
  };

  struct Group {
    GroupConfig cfg;
    std::vector<double> m, v;
  };

  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-15)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add_group(const GroupConfig& cfg, size_t size);
  Group* find(const std::string& name);

  // One Adam update over a group. `visit` must yield exactly group-size
  // scalars in canonical order; `grad` is indexed identically.
  using ParamVisitor = std::function<void(const std::function<void(float&)>&)>;
  void step_group(const std::string& name,
                  const std::vector<double>& grad,
                  const ParamVisitor& visit);

  // Only step_group calls that happened since the last advance see the new
  // bias-correction step count.
  void advance() { ++step_count_; }
  uint64_t step_count() const { return step_count_; }

  // Dynamic anchor sets: drop rows (ascending indices) or append zeroed rows.
  void remove_rows(const std::string& name, const std::vector<int>& rows);
  void append_rows(const std::string& name, size_t n_rows);

  OptimizerStateBlob to_blob() const;
  void load_blob(const OptimizerStateBlob& blob);

 private:
  double current_lr(const Group& g) const;

  double beta1_, beta2_, eps_;
  uint64_t step_count_ = 0;
  std::vector<Group> groups_;
};

}  // namespace splatsr
