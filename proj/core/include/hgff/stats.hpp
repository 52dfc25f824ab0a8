#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>

#include "hgff/error.hpp"

namespace hgff {

// Per-probe summary of a Monte Carlo ensemble.  Standard errors assume
// Gaussian probes (the variance estimator then has sd = Var * sqrt(2/n)).
struct MomentReport {
  std::int64_t count = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;         // unbiased
  Eigen::VectorXd skewness;
  Eigen::VectorXd excess_kurtosis;
  Eigen::VectorXd se_mean;
  Eigen::VectorXd se_variance;
  Eigen::MatrixXd covariance;       // unbiased
  Eigen::MatrixXd correlation;
};

// One-pass accumulator of first to fourth moments per probe plus pairwise
// co-moments, with an associative merge so sample blocks can be accumulated
// independently and combined in a fixed order.
class CovAccumulator {
 public:
  explicit CovAccumulator(int probe_count);

  void accumulate(std::span<const double> sample);
  void accumulate(const Eigen::VectorXd& sample);
  void merge(const CovAccumulator& other);

  int probe_count() const { return static_cast<int>(mean_.size()); }
  std::int64_t count() const { return count_; }

  MomentReport report() const;  // throws empty-accumulator when count < 2

  // z-statistic r*sqrt(count) for the empirical correlation of probes (i, j).
  // Throws degenerate-probe when either probe has zero variance.
  double independence_z(int i, int j) const;

 private:
  std::int64_t count_ = 0;
  Eigen::VectorXd mean_, m2_, m3_, m4_;
  Eigen::MatrixXd comoment_;  // upper triangle used
};

// Monte Carlo ensemble driver: calls fill(sample_index, probes) for indices
// 0..samples-1, split over `threads` workers with one accumulator each,
// merged in worker order.  The partition is a fixed function of (samples,
// threads), so results depend on the thread count only through float
// reassociation in the merge.
CovAccumulator accumulate_ensemble(int samples, int threads, int probe_count,
                                   const std::function<void(int, Eigen::VectorXd&)>& fill);

}  // namespace hgff
