#pragma once

/**
 * @file scale.hpp
 * @brief Metric scale recovery from a category anchor plus a relative offset.
 *
 * The estimate is s_hat = s_r + s_r * delta, where s_r is the category mean
 * scale and delta is produced by a ScalePredictor. Supervision targets are
 * delta_gt = (s_gt - s_r) / s_r with an L1 penalty.
 */

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "catpose/error.hpp"
#include "catpose/random.hpp"

namespace catpose {

struct CategoryStats {
  std::string category;
  double mean_scale = 1.0;  ///< s_r, meters
  double std_dev = 0.0;     ///< population deviation about s_r, meters
  std::size_t count = 1;

  void validate() const {
    if (!(mean_scale > 0.0) || !std::isfinite(mean_scale)) {
      throw Error(Errc::NonPositiveScale, "mean scale must be positive");
    }
    if (!(std_dev >= 0.0)) throw Error(Errc::InvalidArgument, "std_dev must be >= 0");
    if (count < 1) throw Error(Errc::InvalidArgument, "count must be >= 1");
  }
};

struct ScalePrediction {
  double delta = 0.0;  ///< relative offset from the category mean
  double scale = 1.0;  ///< recovered metric scale, meters
};

/// Mean and population standard deviation (divides by k) of metric scales.
inline CategoryStats compute_stats(std::string category, std::span<const double> scales) {
  if (scales.empty()) throw Error(Errc::EmptyList, "no scales for category " + category);
  // Welford accumulation
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(Errc::NonPositiveScale, "scale " + std::to_string(s) + " is not positive");
    }
    ++k;
    const double d = s - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (s - mean);
  }
  return {std::move(category), mean, std::sqrt(std::max(m2, 0.0) / static_cast<double>(k)), k};
}

inline ScalePrediction recover_scale(const CategoryStats& stats, double delta) {
  stats.validate();
  if (!std::isfinite(delta)) throw Error(Errc::InvalidArgument, "non-finite scale offset");
  if (delta <= -1.0) {
    throw Error(Errc::NonPositiveResult, "offset <= -1 gives a non-positive scale");
  }
  return {delta, stats.mean_scale + stats.mean_scale * delta};
}

inline double gt_offset(double s_gt, const CategoryStats& stats) {
  stats.validate();
  if (!(s_gt > 0.0) || !std::isfinite(s_gt)) {
    throw Error(Errc::NonPositiveScale, "ground-truth scale must be positive");
  }
  return (s_gt - stats.mean_scale) / stats.mean_scale;
}

inline double scale_loss(double delta_gt, double delta) { return std::abs(delta_gt - delta); }

inline constexpr double kDefaultCorrWeight = 1.0;
inline constexpr double kDefaultScaleWeight = 0.1;

inline double combine_loss(double l_corr, double l_scale, double w_corr = kDefaultCorrWeight,
                           double w_scale = kDefaultScaleWeight) {
  if (!(l_corr >= 0.0) || !(l_scale >= 0.0)) {
    throw Error(Errc::InvalidArgument, "loss terms must be nonnegative");
  }
  return w_corr * l_corr + w_scale * l_scale;
}

/// Opaque input handed to a predictor. `key` identifies the instance (used
/// to derive per-instance randomness); `gt_scale` is only consulted by the
/// simulation oracles; `features` is room for learned regressors.
struct ScaleObservation {
  std::string category;
  std::uint64_t key = 0;
  std::optional<double> gt_scale;
  std::vector<double> features;
};

class ScalePredictor {
 public:
  virtual ~ScalePredictor() = default;
  virtual double predict_offset(const ScaleObservation& obs, const CategoryStats& stats) const = 0;
  virtual std::string name() const = 0;

  ScalePrediction predict(const ScaleObservation& obs, const CategoryStats& stats) const {
    return recover_scale(stats, predict_offset(obs, stats));
  }
};

/// Always predicts the category mean (delta = 0).
class MeanScalePredictor final : public ScalePredictor {
 public:
  double predict_offset(const ScaleObservation&, const CategoryStats&) const override { return 0.0; }
  std::string name() const override { return "mean"; }
};

namespace detail {
inline double require_gt(const ScaleObservation& obs) {
  if (!obs.gt_scale) {
    throw Error(Errc::InvalidArgument, "oracle predictor needs a ground-truth scale");
  }
  return *obs.gt_scale;
}
}  // namespace detail

/// delta = delta_gt + eps, eps ~ Normal(0, sigma) drawn from (seed, obs.key).
class NoisyOraclePredictor final : public ScalePredictor {
 public:
  NoisyOraclePredictor(std::uint64_t seed, double sigma) : seed_(seed), sigma_(sigma) {
    if (!(sigma >= 0.0)) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
  }

  double noise(std::uint64_t key) const {
    if (sigma_ == 0.0) return 0.0;
    auto rng = make_engine(seed_, {key});
    return std::normal_distribution<double>(0.0, sigma_)(rng);
  }

  double predict_offset(const ScaleObservation& obs, const CategoryStats& stats) const override {
    return gt_offset(detail::require_gt(obs), stats) + noise(obs.key);
  }
  std::string name() const override { return "noisy_oracle"; }

 private:
  std::uint64_t seed_;
  double sigma_;
};

/// Predicts s_hat = s_gt * (1 + rel_error) exactly.
class SystematicScalePredictor final : public ScalePredictor {
 public:
  explicit SystematicScalePredictor(double rel_error) : rel_error_(rel_error) {
    if (!(rel_error > -1.0)) throw Error(Errc::InvalidArgument, "relative error must be > -1");
  }
  double predict_offset(const ScaleObservation& obs, const CategoryStats& stats) const override {
    return gt_offset(detail::require_gt(obs) * (1.0 + rel_error_), stats);
  }
  std::string name() const override { return "systematic"; }

 private:
  double rel_error_;
};

inline std::shared_ptr<const ScalePredictor> mean_scale_predictor() {
  return std::make_shared<MeanScalePredictor>();
}

inline std::shared_ptr<const ScalePredictor> noisy_oracle_predictor(std::uint64_t seed, double sigma) {
  return std::make_shared<NoisyOraclePredictor>(seed, sigma);
}

inline std::shared_ptr<const ScalePredictor> systematic_scale_predictor(double rel_error) {
  return std::make_shared<SystematicScalePredictor>(rel_error);
}

}  // namespace catpose
