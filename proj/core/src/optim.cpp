#include "gyro/optim.hpp"

#include <algorithm>
#include <cmath>

#include "gyro/error.hpp"

namespace gyro {

Parameter& ParameterStore::create(std::string name, Array value) {
  GYRO_CHECK(!by_name_.contains(name), "duplicate parameter name '{}'", name);
  auto param = std::make_unique<Parameter>();
  param->name = std::move(name);
  param->grad = Array(value.shape());
  param->value = std::move(value);
  Parameter* raw = param.get();
  by_name_.emplace(raw->name, raw);
  owned_.push_back(std::move(param));
  return *raw;
}

Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) const {
  std::vector<Parameter*> out;
  for (const auto& param : owned_) {
    if (param->name.starts_with(prefix)) out.push_back(param.get());
  }
  std::sort(out.begin(), out.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  return out;
}

std::vector<Parameter*> ParameterStore::all() const { return with_prefix(""); }

double global_grad_norm(std::span<Parameter* const> params) {
  double total = 0.0;
  for (const Parameter* p : params) {
    for (std::int64_t i = 0; i < p->grad.size(); ++i) total += p->grad[i] * p->grad[i];
  }
  return std::sqrt(total);
}

void clip_global_grad_norm(std::span<Parameter* const> params, double max_norm) {
  if (max_norm <= 0.0) return;
  double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  double scale = max_norm / norm;
  for (Parameter* p : params) {
    for (std::int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= scale;
  }
}

namespace {

std::string_view strip_head(std::string_view name) {
  auto pos = name.find('/');
  return pos == std::string_view::npos ? name : name.substr(pos + 1);
}

void check_pair(const Parameter& target, const Parameter& online) {
  GYRO_CHECK(target.name == online.name || strip_head(target.name) == strip_head(online.name),
             "soft_update name mismatch: '{}' vs '{}'", target.name, online.name);
  GYRO_CHECK(target.value.same_shape(online.value), "soft_update shape mismatch for '{}': {} vs {}",
             target.name, shape_str(target.value.shape()), shape_str(online.value.shape()));
}

}  // namespace

void soft_update(std::span<Parameter* const> target, std::span<Parameter* const> online,
                 double coefficient) {
  GYRO_CHECK(target.size() == online.size(), "soft_update parameter count mismatch: {} vs {}",
             target.size(), online.size());
  GYRO_CHECK(coefficient > 0.0 && coefficient <= 1.0, "soft_update coefficient {} outside (0, 1]",
             coefficient);
  for (std::size_t k = 0; k < target.size(); ++k) {
    check_pair(*target[k], *online[k]);
    Array& tv = target[k]->value;
    const Array& ov = online[k]->value;
    for (std::int64_t i = 0; i < tv.size(); ++i)
      tv[i] = (1.0 - coefficient) * tv[i] + coefficient * ov[i];
  }
}

void hard_update(std::span<Parameter* const> target, std::span<Parameter* const> online) {
  soft_update(target, online, 1.0);
}

Adam::Adam(double learning_rate, double epsilon, double gradient_clip) {
  config_.learning_rate = learning_rate;
  config_.epsilon = epsilon;
  config_.gradient_clip = gradient_clip;
}

void Adam::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params)
    GYRO_CHECK(p->grad.all_finite(), "non-finite gradient for parameter '{}'", p->name);
  clip_global_grad_norm(params, config_.gradient_clip);
  ++step_count_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    if (inserted) {
      it->second.first = Array(p->value.shape());
      it->second.second = Array(p->value.shape());
    }
    Array& m = it->second.first;
    Array& v = it->second.second;
    GYRO_CHECK(m.same_shape(p->value), "Adam moment shape mismatch for '{}'", p->name);
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      double m_hat = m[i] / bias1;
      double v_hat = v[i] / bias2;
      p->value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

std::vector<double> flatten_values(std::span<Parameter* const> params) {
  std::vector<double> flat;
  for (const Parameter* p : params)
    flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
  return flat;
}

std::vector<double> flatten_grads(std::span<Parameter* const> params) {
  std::vector<double> flat;
  for (const Parameter* p : params)
    flat.insert(flat.end(), p->grad.values().begin(), p->grad.values().end());
  return flat;
}

void unflatten_values(std::span<Parameter* const> params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (Parameter* p : params) {
    GYRO_CHECK(offset + static_cast<std::size_t>(p->value.size()) <= flat.size(),
               "unflatten_values: flat vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                static_cast<std::size_t>(p->value.size()), p->value.values().begin());
    offset += static_cast<std::size_t>(p->value.size());
  }
  GYRO_CHECK(offset == flat.size(), "unflatten_values: flat vector too long");
}

}  // namespace gyro
