#include "hgff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hgff/parallel.hpp"

namespace hgff {

CovAccumulator::CovAccumulator(int probe_count) {
  require(probe_count >= 1, errc::invalid_parameter, "accumulator needs at least one probe");
  mean_ = Eigen::VectorXd::Zero(probe_count);
  m2_ = Eigen::VectorXd::Zero(probe_count);
  m3_ = Eigen::VectorXd::Zero(probe_count);
  m4_ = Eigen::VectorXd::Zero(probe_count);
  comoment_ = Eigen::MatrixXd::Zero(probe_count, probe_count);
}

void CovAccumulator::accumulate(std::span<const double> sample) {
  accumulate(Eigen::Map<const Eigen::VectorXd>(sample.data(), static_cast<Eigen::Index>(sample.size())));
}

void CovAccumulator::accumulate(const Eigen::VectorXd& sample) {
  const int p = probe_count();
  require(sample.size() == p, errc::invalid_parameter, "sample size does not match probe count");
  const double n1 = static_cast<double>(count_);
  count_ += 1;
  const double n = static_cast<double>(count_);

  const Eigen::VectorXd delta = sample - mean_;
  const Eigen::VectorXd delta_n = delta / n;
  mean_ += delta_n;
  const Eigen::VectorXd delta2 = sample - mean_;  // uses updated mean

  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) comoment_(i, j) += delta(i) * delta2(j);

  const Eigen::VectorXd term1 = delta.cwiseProduct(delta_n) * n1;
  m4_ += term1.cwiseProduct(delta_n.cwiseAbs2()) * (n * n - 3.0 * n + 3.0) +
         6.0 * delta_n.cwiseAbs2().cwiseProduct(m2_) - 4.0 * delta_n.cwiseProduct(m3_);
  m3_ += term1.cwiseProduct(delta_n) * (n - 2.0) - 3.0 * delta_n.cwiseProduct(m2_);
  m2_ += term1;
}

void CovAccumulator::merge(const CovAccumulator& other) {
  require(other.probe_count() == probe_count(), errc::invalid_parameter,
          "cannot merge accumulators with different probe counts");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_), nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;

  const int p = probe_count();
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j)
      comoment_(i, j) += other.comoment_(i, j) + delta(i) * delta(j) * na * nb / n;

  const Eigen::VectorXd d2 = delta.cwiseAbs2();
  m4_ += other.m4_ + d2.cwiseAbs2() * (na * nb * (na * na - na * nb + nb * nb) / (n * n * n)) +
         6.0 * d2.cwiseProduct(na * na * other.m2_ + nb * nb * m2_) / (n * n) +
         4.0 * delta.cwiseProduct(na * other.m3_ - nb * m3_) / n;
  m3_ += other.m3_ + delta.cwiseProduct(d2) * (na * nb * (na - nb) / (n * n)) +
         3.0 * delta.cwiseProduct(na * other.m2_ - nb * m2_) / n;
  m2_ += other.m2_ + d2 * (na * nb / n);
  mean_ += delta * (nb / n);
  count_ += other.count_;
}

MomentReport CovAccumulator::report() const {
  require(count_ >= 2, errc::empty_accumulator,
          "moment report needs at least 2 samples, have " + std::to_string(count_));
  const double n = static_cast<double>(count_);
  const int p = probe_count();

  MomentReport r;
  r.count = count_;
  r.mean = mean_;
  r.variance = m2_ / (n - 1.0);
  r.se_mean = (r.variance / n).cwiseSqrt();
  r.se_variance = r.variance * std::sqrt(2.0 / n);
  r.skewness.resize(p);
  r.excess_kurtosis.resize(p);
  for (int i = 0; i < p; ++i) {
    const double m2 = m2_(i);
    r.skewness(i) = m2 > 0.0 ? std::sqrt(n) * m3_(i) / std::pow(m2, 1.5) : 0.0;
    r.excess_kurtosis(i) = m2 > 0.0 ? n * m4_(i) / (m2 * m2) - 3.0 : 0.0;
  }
  r.covariance.resize(p, p);
  r.correlation.resize(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) {
      const double c = comoment_(i, j) / (n - 1.0);
      r.covariance(i, j) = r.covariance(j, i) = c;
    }
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double denom = std::sqrt(r.covariance(i, i) * r.covariance(j, j));
      r.correlation(i, j) = denom > 0.0 ? r.covariance(i, j) / denom : (i == j ? 1.0 : 0.0);
    }
  return r;
}

double CovAccumulator::independence_z(int i, int j) const {
  require(i >= 0 && i < probe_count() && j >= 0 && j < probe_count() && i != j,
          errc::invalid_parameter, "independence test needs two distinct probes");
  require(count_ >= 2, errc::empty_accumulator, "independence test needs at least 2 samples");
  const double vi = comoment_(std::min(i, j), std::min(i, j));
  const double vj = comoment_(std::max(i, j), std::max(i, j));
  require(vi > 0.0 && vj > 0.0 && std::isfinite(vi) && std::isfinite(vj), errc::degenerate_probe,
          "probe with zero variance in independence test");
  const double r = comoment_(std::min(i, j), std::max(i, j)) / std::sqrt(vi * vj);
  return r * std::sqrt(static_cast<double>(count_));
}

CovAccumulator accumulate_ensemble(int samples, int threads, int probe_count,
                                   const std::function<void(int, Eigen::VectorXd&)>& fill) {
  require(samples >= 1, errc::invalid_parameter, "ensemble needs at least one sample");
  threads = std::clamp(threads, 1, samples);
  std::vector<CovAccumulator> parts(static_cast<size_t>(threads), CovAccumulator(probe_count));
  std::vector<int> starts(static_cast<size_t>(threads));
  {
    const int chunk = samples / threads, extra = samples % threads;
    int lo = 0;
    for (int w = 0; w < threads; ++w) {
      starts[static_cast<size_t>(w)] = lo;
      lo += chunk + (w < extra ? 1 : 0);
    }
  }
  parallel_for_chunks(0, samples, threads, [&](int lo, int hi) {
    const int w =
        static_cast<int>(std::upper_bound(starts.begin(), starts.end(), lo) - starts.begin()) - 1;
    CovAccumulator& acc = parts[static_cast<size_t>(w)];
    Eigen::VectorXd probes(probe_count);
    for (int s = lo; s < hi; ++s) {
      fill(s, probes);
      acc.accumulate(probes);
    }
  });
  CovAccumulator acc = std::move(parts.front());
  for (int w = 1; w < threads; ++w) acc.merge(parts[static_cast<size_t>(w)]);
  return acc;
}

}  // namespace hgff
