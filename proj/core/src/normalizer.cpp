#include "gyro/normalizer.hpp"

#include <cmath>

#include "gyro/error.hpp"

namespace gyro {

void MeanStdNormalizer::ensure_dim(int dim) {
  if (dim_ < 0) {
    dim_ = dim;
    mean_ = Array({dim});
    m2_ = Array({dim});
    return;
  }
  GYRO_CHECK(dim == dim_, "normalizer dimension mismatch: expected {}, got {}", dim_, dim);
}

void MeanStdNormalizer::record(const Array& observations) {
  GYRO_CHECK(observations.rank() == 1 || observations.rank() == 2,
             "normalizer record expects rank 1 or 2, got {}", shape_str(observations.shape()));
  GYRO_CHECK(observations.all_finite(), "non-finite observations passed to normalizer");
  int batch = observations.rank() == 2 ? observations.dim(0) : 1;
  int dim = observations.rank() == 2 ? observations.dim(1) : observations.dim(0);
  ensure_dim(dim);
  if (batch == 0) return;

  // Batch statistics, then Chan's parallel merge so the running values stay
  // the exact population statistics of everything recorded.
  Array batch_mean({dim});
  Array batch_m2({dim});
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < dim; ++j) batch_mean[j] += observations[static_cast<std::int64_t>(i) * dim + j];
  for (int j = 0; j < dim; ++j) batch_mean[j] /= batch;
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < dim; ++j) {
      double d = observations[static_cast<std::int64_t>(i) * dim + j] - batch_mean[j];
      batch_m2[j] += d * d;
    }

  double n = static_cast<double>(count_);
  double b = static_cast<double>(batch);
  for (int j = 0; j < dim; ++j) {
    double delta = batch_mean[j] - mean_[j];
    mean_[j] += delta * b / (n + b);
    m2_[j] += batch_m2[j] + delta * delta * n * b / (n + b);
  }
  count_ += batch;
}

Array MeanStdNormalizer::normalize(const Array& observations) const {
  if (count_ == 0) return observations;
  int dim = observations.rank() == 2 ? observations.dim(1) : observations.dim(0);
  GYRO_CHECK(dim == dim_, "normalizer dimension mismatch: expected {}, got {}", dim_, dim);
  Array out = observations;
  double n = static_cast<double>(count_);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    int j = static_cast<int>(i % dim);
    double stddev = std::max(std::sqrt(m2_[j] / n), epsilon_);
    out[i] = (out[i] - mean_[j]) / stddev;
  }
  return out;
}

Array MeanStdNormalizer::denormalize(const Array& normalized) const {
  if (count_ == 0) return normalized;
  int dim = normalized.rank() == 2 ? normalized.dim(1) : normalized.dim(0);
  GYRO_CHECK(dim == dim_, "normalizer dimension mismatch: expected {}, got {}", dim_, dim);
  Array out = normalized;
  double n = static_cast<double>(count_);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    int j = static_cast<int>(i % dim);
    double stddev = std::max(std::sqrt(m2_[j] / n), epsilon_);
    out[i] = out[i] * stddev + mean_[j];
  }
  return out;
}

Array MeanStdNormalizer::mean() const { return count_ == 0 ? Array({std::max(dim_, 0)}) : mean_; }

Array MeanStdNormalizer::variance() const {
  Array out({std::max(dim_, 0)});
  if (count_ == 0) return out;
  for (int j = 0; j < dim_; ++j) out[j] = m2_[j] / static_cast<double>(count_);
  return out;
}

std::map<std::string, Array> MeanStdNormalizer::state(const std::string& prefix) const {
  std::map<std::string, Array> records;
  records.emplace(prefix + "/count", Array::scalar(static_cast<double>(count_)));
  records.emplace(prefix + "/mean", count_ > 0 ? mean_ : Array({std::max(dim_, 0)}));
  records.emplace(prefix + "/m2", count_ > 0 ? m2_ : Array({std::max(dim_, 0)}));
  return records;
}

void MeanStdNormalizer::load_state(const std::map<std::string, Array>& records,
                                   const std::string& prefix) {
  auto get = [&](const std::string& key) -> const Array& {
    auto it = records.find(prefix + key);
    GYRO_CHECK(it != records.end(), "checkpoint is missing normalizer record '{}{}'", prefix, key);
    return it->second;
  };
  count_ = static_cast<std::int64_t>(get("/count").scalar_value());
  mean_ = get("/mean");
  m2_ = get("/m2");
  dim_ = mean_.size() > 0 ? static_cast<int>(mean_.size()) : -1;
}

}  // namespace gyro
