#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gyro/graph.hpp"

namespace gyro {

// Owns named parameters for one model. Lookups by name or prefix return
// pointers in name-sorted order so downstream iteration is deterministic.
class ParameterStore {
 public:
  Parameter& create(std::string name, Array value);
  Parameter* find(const std::string& name) const;
  std::vector<Parameter*> with_prefix(const std::string& prefix) const;
  std::vector<Parameter*> all() const;
  std::size_t size() const { return owned_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter>> owned_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

double global_grad_norm(std::span<Parameter* const> params);

// Rescales gradients in place so the global norm is at most max_norm.
// max_norm <= 0 disables clipping.
void clip_global_grad_norm(std::span<Parameter* const> params, double max_norm);

// target <- (1 - coefficient) * target + coefficient * online, pairwise.
// Names must match after stripping each parameter's leading path component
// (e.g. "target_actor/torso/0/w" pairs with "actor/torso/0/w").
void soft_update(std::span<Parameter* const> target, std::span<Parameter* const> online,
                 double coefficient);
void hard_update(std::span<Parameter* const> target, std::span<Parameter* const> online);

struct AdamConfig {
  double learning_rate = 3e-4;
  double epsilon = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gradient_clip = 0.0;  // global-norm clip, 0 disables
};

// Adam with bias correction. Moment accumulators are keyed by parameter name
// and created lazily; identical inputs produce bit-identical updates.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}
  Adam(double learning_rate, double epsilon = 1e-8, double gradient_clip = 0.0);

  void step(std::span<Parameter* const> params);
  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    Array first;
    Array second;
  };
  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// Flattened views over a parameter set, used by the trust-region updater.
std::vector<double> flatten_values(std::span<Parameter* const> params);
std::vector<double> flatten_grads(std::span<Parameter* const> params);
void unflatten_values(std::span<Parameter* const> params, std::span<const double> flat);

}  // namespace gyro
