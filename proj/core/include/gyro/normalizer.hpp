#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gyro/array.hpp"

namespace gyro {

// Running mean/std normalizer over all observations recorded so far.
// Statistics are the exact population statistics of the recorded stream;
// before any data has been recorded, normalize is the identity.
class MeanStdNormalizer {
 public:
  explicit MeanStdNormalizer(double epsilon = 1e-6) : epsilon_(epsilon) {}

  void record(const Array& observations);  // [batch, dim] or [dim]
  Array normalize(const Array& observations) const;
  Array denormalize(const Array& normalized) const;

  std::int64_t count() const { return count_; }
  int dim() const { return dim_; }
  Array mean() const;
  Array variance() const;

  std::map<std::string, Array> state(const std::string& prefix) const;
  void load_state(const std::map<std::string, Array>& records, const std::string& prefix);

 private:
  void ensure_dim(int dim);

  double epsilon_;
  std::int64_t count_ = 0;
  int dim_ = -1;
  Array mean_;  // [dim]
  Array m2_;    // sum of squared deviations, [dim]
};

}  // namespace gyro
