#pragma once

#include "gyro/array.hpp"
#include "gyro/graph.hpp"

namespace gyro {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEpsilon = 1e-6;

// Diagonal Gaussian helpers on plain arrays (used at acting time and in
// oracle computations). mean/std/action are [batch, dim]; results are [batch].
Array gaussian_log_prob(const Array& mean, const Array& stddev, const Array& action);
double gaussian_entropy(const Array& stddev_row);  // per-sample entropy from one [dim] row

// log pi(a) for a = tanh(u) with u ~ N(mean, std); inputs [batch, dim].
Array squashed_gaussian_log_prob(const Array& mean, const Array& stddev, const Array& pre_tanh);

// Graph builders with the same conventions; all inputs are [batch, dim]
// Values and the results are per-sample [batch] Values.
Value gaussian_log_prob(Graph& g, Value mean, Value log_std, Value action);
Value gaussian_entropy(Graph& g, Value log_std);  // [batch]
// KL(N(mean_a, std_a) || N(mean_b, std_b)) per sample.
Value gaussian_kl(Graph& g, Value mean_a, Value log_std_a, Value mean_b, Value log_std_b);
Value squashed_gaussian_log_prob(Graph& g, Value mean, Value log_std, Value pre_tanh);

// Evenly spaced support of a categorical value distribution plus the
// projection of arbitrary target values back onto the support.
class CategoricalSupport {
 public:
  CategoricalSupport(double vmin, double vmax, int num_atoms);

  double vmin() const { return vmin_; }
  double vmax() const { return vmax_; }
  int num_atoms() const { return num_atoms_; }
  double delta() const { return delta_; }
  double atom(int i) const { return vmin_ + delta_ * i; }
  const Array& atoms() const { return atoms_; }

  // Distributes each target value's probability mass linearly between its two
  // neighboring atoms, clipping targets to [vmin, vmax]. probabilities and
  // targets are [batch, num_atoms]; the result rows sum to one.
  Array project(const Array& probabilities, const Array& targets) const;

  // Fraction of target values falling outside [vmin, vmax].
  double clipped_fraction(const Array& targets) const;

  // Mean of softmax(logits) under the support, as a graph value: [batch].
  Value distribution_mean(Graph& g, Value logits) const;
  Array distribution_mean(const Array& probabilities) const;

 private:
  double vmin_;
  double vmax_;
  int num_atoms_;
  double delta_;
  Array atoms_;
};

}  // namespace gyro
