#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sardiff/common.hpp"

namespace sardiff {

enum class ScheduleKind { Linear, Cosine, Sigmoid };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "cosine") return ScheduleKind::Cosine;
  if (s == "sigmoid") return ScheduleKind::Sigmoid;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

// Precomputed per-timestep noise tables. Timesteps are 1-based (t = 1..T);
// alpha_bar(0) == 1 is the sentinel entry. Tables are built in double
// precision once and are immutable afterwards.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int num_steps, double beta_1, double beta_T) {
    validate_range(num_steps, beta_1, beta_T);
    std::vector<double> beta(static_cast<size_t>(num_steps));
    for (int t = 1; t <= num_steps; ++t) {
      // Endpoints are pinned so beta(1) == beta_1 and beta(T) == beta_T
      // bit-exactly; a + (b-a)*1 need not round back to b.
      if (t == num_steps && num_steps > 1)
        beta[t - 1] = beta_T;
      else if (num_steps == 1)
        beta[t - 1] = beta_1;
      else
        beta[t - 1] = beta_1 + (beta_T - beta_1) * double(t - 1) / double(num_steps - 1);
    }
    return NoiseSchedule(ScheduleKind::Linear, std::move(beta));
  }

  // Squared-cosine alpha_bar with offset s = 0.008 and beta clamped to
  // <= 0.999. alpha_bar is rebuilt from the clamped betas so the product
  // identity alpha_bar(t) = alpha_bar(t-1) * alpha(t) holds exactly.
  static NoiseSchedule cosine(int num_steps) {
    require(num_steps >= 1, "cosine schedule: T must be >= 1");
    auto f = [](double u) {
      double c = std::cos((u + 0.008) / 1.008 * M_PI / 2.0);
      return c * c;
    };
    double f0 = f(0.0);
    std::vector<double> beta(static_cast<size_t>(num_steps));
    double prev = 1.0;
    for (int t = 1; t <= num_steps; ++t) {
      double cur = f(double(t) / double(num_steps)) / f0;
      double b = 1.0 - cur / prev;
      beta[t - 1] = std::min(b, 0.999);
      prev = cur;
    }
    return NoiseSchedule(ScheduleKind::Cosine, std::move(beta));
  }

  // Logistic ramp of beta over [-6, 6].
  static NoiseSchedule sigmoid(int num_steps, double beta_1, double beta_T) {
    validate_range(num_steps, beta_1, beta_T);
    auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    std::vector<double> beta(static_cast<size_t>(num_steps));
    for (int t = 1; t <= num_steps; ++t) {
      double x = num_steps > 1 ? 12.0 * double(t - 1) / double(num_steps - 1) - 6.0 : -6.0;
      beta[t - 1] = num_steps > 1 ? beta_1 + (beta_T - beta_1) * logistic(x) : beta_1;
    }
    return NoiseSchedule(ScheduleKind::Sigmoid, std::move(beta));
  }

  static NoiseSchedule make(ScheduleKind kind, int num_steps,
                            double beta_1 = 1e-4, double beta_T = 0.02) {
    switch (kind) {
      case ScheduleKind::Linear: return linear(num_steps, beta_1, beta_T);
      case ScheduleKind::Cosine: return cosine(num_steps);
      case ScheduleKind::Sigmoid: return sigmoid(num_steps, beta_1, beta_T);
    }
    throw std::invalid_argument("bad ScheduleKind");
  }

  ScheduleKind kind() const { return kind_; }
  int num_steps() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_[index(t)]; }
  double alpha(int t) const { return alpha_[index(t)]; }
  double posterior_variance(int t) const { return posterior_var_[index(t)]; }

  // t in 0..T; alpha_bar(0) == 1.
  double alpha_bar(int t) const {
    require(t >= 0 && t <= num_steps(), "alpha_bar: t out of range");
    return alpha_bar_[static_cast<size_t>(t)];
  }

  // (t, alpha_bar(t)) pairs for t = 0..T, in ascending t.
  std::vector<std::pair<int, double>> curve() const {
    std::vector<std::pair<int, double>> out;
    out.reserve(alpha_bar_.size());
    for (int t = 0; t <= num_steps(); ++t) out.emplace_back(t, alpha_bar_[static_cast<size_t>(t)]);
    return out;
  }

 private:
  NoiseSchedule(ScheduleKind kind, std::vector<double> beta)
      : kind_(kind), beta_(std::move(beta)) {
    const size_t n = beta_.size();
    alpha_.resize(n);
    alpha_bar_.resize(n + 1);
    posterior_var_.resize(n);
    alpha_bar_[0] = 1.0;
    for (size_t i = 0; i < n; ++i) {
      ensure(beta_[i] > 0.0 && beta_[i] < 1.0, "schedule: beta out of (0,1)");
      alpha_[i] = 1.0 - beta_[i];
      alpha_bar_[i + 1] = alpha_bar_[i] * alpha_[i];
      posterior_var_[i] = (1.0 - alpha_bar_[i]) / (1.0 - alpha_bar_[i + 1]) * beta_[i];
    }
  }

  static void validate_range(int num_steps, double beta_1, double beta_T) {
    require(num_steps >= 1, "schedule: T must be >= 1");
    require(beta_1 > 0.0, "schedule: beta_1 must be > 0");
    require(beta_T < 1.0, "schedule: beta_T must be < 1");
    require(beta_1 <= beta_T, "schedule: beta_1 must be <= beta_T");
  }

  size_t index(int t) const {
    require(t >= 1 && t <= num_steps(), "schedule: timestep out of range [1,T]");
    return static_cast<size_t>(t - 1);
  }

  ScheduleKind kind_;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;   // length T+1, alpha_bar_[0] = 1
  std::vector<double> posterior_var_;
};

// CSV dump of the alpha_bar curve: header row, one row per timestep,
// 12 significant digits.
inline void write_curve_csv(const NoiseSchedule& schedule, std::ostream& os) {
  os << "t,alpha_bar\n";
  os << std::setprecision(12);
  for (const auto& [t, ab] : schedule.curve()) os << t << "," << ab << "\n";
}

}  // namespace sardiff
