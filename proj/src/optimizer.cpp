#include "splatsr/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace splatsr {

void AdamOptimizer::add_group(const GroupConfig& cfg, size_t size) {
  Group g;
  g.cfg = cfg;
  g.m.assign(size, 0.0);
  g.v.assign(size, 0.0);
  groups_.push_back(std::move(g));
}

AdamOptimizer::Group* AdamOptimizer::find(const std::string& name) {
  for (Group& g : groups_) {
    if (g.cfg.name == name) return &g;
  }
  return nullptr;
}

double AdamOptimizer::current_lr(const Group& g) const {
  if (g.cfg.lr_final <= 0.0 || g.cfg.decay_steps <= 0) return g.cfg.lr;
  const double t = std::min(1.0, static_cast<double>(step_count_) /
                                     static_cast<double>(g.cfg.decay_steps));
  return g.cfg.lr * std::pow(g.cfg.lr_final / g.cfg.lr, t);
}

void AdamOptimizer::step_group(const std::string& name,
                               const std::vector<double>& grad,
                               const ParamVisitor& visit) {
  Group* g = find(name);
  if (!g) throw DataError("unknown optimizer group: " + name);
  if (grad.size() != g->m.size()) {
    throw DataError("gradient size mismatch for group " + name);
  }
  const double lr = current_lr(*g);
  const uint64_t t = step_count_ + 1;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  size_t i = 0;
  visit([&](float& p) {
    const double gr = grad[i];
    double& m = g->m[i];
    double& v = g->v[i];
    m = beta1_ * m + (1.0 - beta1_) * gr;
    v = beta2_ * v + (1.0 - beta2_) * gr * gr;
    const double mhat = m / bias1;
    const double vhat = v / bias2;
    p = static_cast<float>(static_cast<double>(p) -
                           lr * mhat / (std::sqrt(vhat) + eps_));
    ++i;
  });
  if (i != g->m.size()) {
    throw DataError("parameter visitor count mismatch for group " + name);
  }
}

void AdamOptimizer::remove_rows(const std::string& name,
                                const std::vector<int>& rows) {
  Group* g = find(name);
  if (!g) throw DataError("unknown optimizer group: " + name);
  if (rows.empty()) return;
  const size_t rs = g->cfg.row_size;
  std::vector<double> m2, v2;
  m2.reserve(g->m.size());
  v2.reserve(g->v.size());
  size_t next_removed = 0;
  const size_t n_rows = g->m.size() / rs;
  for (size_t r = 0; r < n_rows; ++r) {
    if (next_removed < rows.size() && static_cast<size_t>(rows[next_removed]) == r) {
      ++next_removed;
      continue;
    }
    for (size_t j = 0; j < rs; ++j) {
      m2.push_back(g->m[r * rs + j]);
      v2.push_back(g->v[r * rs + j]);
    }
  }
  g->m = std::move(m2);
  g->v = std::move(v2);
}

void AdamOptimizer::append_rows(const std::string& name, size_t n_rows) {
  Group* g = find(name);
  if (!g) throw DataError("unknown optimizer group: " + name);
  g->m.resize(g->m.size() + n_rows * g->cfg.row_size, 0.0);
  g->v.resize(g->v.size() + n_rows * g->cfg.row_size, 0.0);
}

OptimizerStateBlob AdamOptimizer::to_blob() const {
  OptimizerStateBlob blob;
  blob.step_count = step_count_;
  for (const Group& g : groups_) {
    blob.groups[g.cfg.name] = {g.m, g.v};
  }
  return blob;
}

void AdamOptimizer::load_blob(const OptimizerStateBlob& blob) {
  step_count_ = blob.step_count;
  for (Group& g : groups_) {
    auto it = blob.groups.find(g.cfg.name);
    if (it == blob.groups.end()) continue;
    if (it->second.first.size() == g.m.size()) {
      g.m = it->second.first;
      g.v = it->second.second;
    }
  }
}

}  // namespace splatsr
