#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sardiff/common.hpp"
#include "sardiff/extractor.hpp"
#include "sardiff/rng.hpp"

namespace sardiff {

// Extractor outputs for one image set: features [n, d] and class
// probabilities [n, K].
struct FeatureSet {
  Eigen::MatrixXd features;
  Eigen::MatrixXd probs;

  int64_t count() const { return features.rows(); }
};

inline void check_probability_rows(const Eigen::MatrixXd& probs) {
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double sum = 0;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      require(probs(i, k) >= 0.0 && std::isfinite(probs(i, k)),
              "inception_score: invalid probability row");
      sum += probs(i, k);
    }
    require(std::abs(sum - 1.0) <= 1e-5, "inception_score: row does not sum to 1");
  }
}

// exp of the mean KL divergence between per-sample class posteriors and
// their marginal; 0*log(0) taken as 0. With `splits` > 1 the set is cut into
// contiguous chunks and the per-chunk scores averaged.
inline double inception_score(const Eigen::MatrixXd& probs, int splits = 1) {
  require(probs.rows() >= 1, "inception_score: need at least one row");
  require(splits >= 1 && splits <= probs.rows(), "inception_score: bad split count");
  check_probability_rows(probs);
  auto score_block = [](const Eigen::MatrixXd& p) {
    Eigen::VectorXd marginal = p.colwise().mean();
    double mean_kl = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double kl = 0;
      for (Eigen::Index k = 0; k < p.cols(); ++k) {
        const double pik = p(i, k);
        if (pik > 0) kl += pik * (std::log(pik) - std::log(marginal(k)));
      }
      mean_kl += kl;
    }
    return std::exp(mean_kl / static_cast<double>(p.rows()));
  };
  if (splits == 1) return score_block(probs);
  const Eigen::Index n = probs.rows();
  double total = 0;
  for (int s = 0; s < splits; ++s) {
    const Eigen::Index lo = n * s / splits, hi = n * (s + 1) / splits;
    total += score_block(probs.middleRows(lo, hi - lo));
  }
  return total / splits;
}

namespace detail {

// Symmetric PSD square root; negative eigenvalues are clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  ensure(es.info() == Eigen::Success, "psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline void mean_and_covariance(const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                                Eigen::MatrixXd& cov) {
  const auto n = x.rows();
  mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

}  // namespace detail

// Frechet distance between Gaussian fits of the two feature sets:
// |mu_r - mu_f|^2 + Tr(C_r + C_f - 2 (C_r^1/2 C_f C_r^1/2)^1/2).
inline double frechet_distance(const FeatureSet& real, const FeatureSet& fake) {
  require(real.count() >= 2 && fake.count() >= 2,
          "frechet_distance: need at least two samples per set");
  require(real.features.cols() == fake.features.cols(),
          "frechet_distance: feature dimension mismatch");
  require(real.features.allFinite() && fake.features.allFinite(),
          "frechet_distance: non-finite features");
  Eigen::VectorXd mu_r, mu_f;
  Eigen::MatrixXd cov_r, cov_f;
  detail::mean_and_covariance(real.features, mu_r, cov_r);
  detail::mean_and_covariance(fake.features, mu_f, cov_f);

  Eigen::MatrixXd sqrt_r = detail::psd_sqrt(cov_r);
  Eigen::MatrixXd inner = sqrt_r * cov_f * sqrt_r;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  ensure(es.info() == Eigen::Success, "frechet_distance: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  return (mu_r - mu_f).squaredNorm() + cov_r.trace() + cov_f.trace() - 2.0 * tr_sqrt;
}

// Unbiased squared MMD with the cubic polynomial kernel
// k(x,y) = (x.y/d + 1)^3; within-set sums exclude the diagonal.
inline double mmd2_polynomial(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double d = static_cast<double>(x.cols());
  const auto m = x.rows(), n = y.rows();
  require(m >= 2 && n >= 2, "mmd2: need at least two samples per set");
  auto kernel = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd k = (a * b.transpose() / d).array() + 1.0;
    return Eigen::MatrixXd((k.array() * k.array() * k.array()).matrix());
  };
  Eigen::MatrixXd kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
  // fixed-order sums keep results bit-stable across allocations
  auto off_diagonal_sum = [](const Eigen::MatrixXd& k) {
    double s = 0;
    for (Eigen::Index i = 0; i < k.rows(); ++i)
      for (Eigen::Index j = 0; j < k.cols(); ++j)
        if (i != j) s += k(i, j);
    return s;
  };
  double sum_xy = 0;
  for (Eigen::Index i = 0; i < kxy.rows(); ++i)
    for (Eigen::Index j = 0; j < kxy.cols(); ++j) sum_xy += kxy(i, j);
  return off_diagonal_sum(kxx) / (static_cast<double>(m) * (m - 1)) +
         off_diagonal_sum(kyy) / (static_cast<double>(n) * (n - 1)) -
         2.0 * sum_xy / (static_cast<double>(m) * n);
}

// Mean of the unbiased MMD^2 estimator over `num_subsets` random equal-size
// subsets of each feature set.
inline double kernel_distance(const FeatureSet& real, const FeatureSet& fake,
                              int subset_size, int num_subsets, uint64_t seed) {
  require(subset_size >= 2, "kernel_distance: subset_size must be >= 2");
  require(num_subsets >= 1, "kernel_distance: num_subsets must be >= 1");
  require(real.count() >= subset_size && fake.count() >= subset_size,
          "kernel_distance: subset_size exceeds set size");
  require(real.features.cols() == fake.features.cols(),
          "kernel_distance: feature dimension mismatch");
  Rng rng(seed);
  auto pick = [&rng](const Eigen::MatrixXd& src, int k) {
    std::vector<int64_t> idx(static_cast<size_t>(src.rows()));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    // partial Fisher-Yates: the first k entries become the subset
    for (int i = 0; i < k; ++i) {
      const int64_t j = rng.uniform_int(i, static_cast<int64_t>(idx.size()) - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    Eigen::MatrixXd out(k, src.cols());
    for (int i = 0; i < k; ++i) out.row(i) = src.row(idx[static_cast<size_t>(i)]);
    return out;
  };
  double total = 0;
  for (int s = 0; s < num_subsets; ++s) {
    Eigen::MatrixXd xs = pick(real.features, subset_size);
    Eigen::MatrixXd ys = pick(fake.features, subset_size);
    total += mmd2_polynomial(xs, ys);
  }
  return total / num_subsets;
}

struct MetricOptions {
  int kid_subset_size = 1000;   // capped at the smaller set size
  int kid_num_subsets = 10;
  int is_splits = 1;
  uint64_t seed = 0;
};

struct MetricReport {
  double is_mean = 0;
  double fid = 0;
  double kid = 0;
  int64_t n_generated = 0;
  int64_t n_real = 0;
  int kid_subset_size = 0;
  int kid_num_subsets = 0;
  int is_splits = 1;
  uint64_t seed = 0;
};

inline FeatureSet extract_features(const FeatureExtractor& extractor,
                                   const Tensor<float>& images) {
  FeatureSet fs;
  extractor.extract(images, fs.features, fs.probs);
  return fs;
}

// Runs all three metrics for a generated set against a real reference set.
inline MetricReport evaluate(const Tensor<float>& generated, const Dataset& real,
                             const FeatureExtractor& extractor,
                             const MetricOptions& options = {}) {
  require(generated.rank() == 4, "evaluate: generated must be [N,1,H,W]");
  require(generated.dim(2) == extractor.image_size() &&
              generated.dim(3) == extractor.image_size(),
          "evaluate: generated resolution does not match extractor");
  require(real.image_size() == extractor.image_size(),
          "evaluate: real-set resolution does not match extractor");
  FeatureSet fake = extract_features(extractor, generated);
  FeatureSet real_fs = extract_features(extractor, real.images);

  MetricReport r;
  r.n_generated = generated.dim(0);
  r.n_real = real.count();
  r.is_splits = options.is_splits;
  r.seed = options.seed;
  r.is_mean = inception_score(fake.probs, options.is_splits);
  r.fid = frechet_distance(real_fs, fake);
  r.kid_subset_size = std::min<int>(
      options.kid_subset_size, static_cast<int>(std::min(r.n_generated, r.n_real)));
  r.kid_num_subsets = options.kid_num_subsets;
  r.kid = kernel_distance(real_fs, fake, r.kid_subset_size, r.kid_num_subsets,
                          options.seed);
  return r;
}

inline void write_report_text(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream f(path);
  ensure(f.is_open(), "write_report_text: cannot open " + path.string());
  f.precision(10);
  f << "is " << r.is_mean << "\n"
    << "fid " << r.fid << "\n"
    << "kid " << r.kid << "\n"
    << "n_generated " << r.n_generated << "\n"
    << "n_real " << r.n_real << "\n"
    << "kid_subset_size " << r.kid_subset_size << "\n"
    << "kid_num_subsets " << r.kid_num_subsets << "\n"
    << "is_splits " << r.is_splits << "\n"
    << "seed " << r.seed << "\n";
}

inline void write_report_json(const std::filesystem::path& path, const MetricReport& r) {
  nlohmann::json j{{"is", r.is_mean},
                   {"fid", r.fid},
                   {"kid", r.kid},
                   {"n_generated", r.n_generated},
                   {"n_real", r.n_real},
                   {"kid_subset_size", r.kid_subset_size},
                   {"kid_num_subsets", r.kid_num_subsets},
                   {"is_splits", r.is_splits},
                   {"seed", r.seed}};
  std::ofstream f(path);
  ensure(f.is_open(), "write_report_json: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace sardiff
