#include "natadiff/schedule.hpp"

#include <cmath>
#include <sstream>

namespace natadiff {

ScheduleTable::ScheduleTable(std::vector<double> alpha_bar, std::vector<int> sampling_times)
    : alpha_bar_(std::move(alpha_bar)), sampling_times_(std::move(sampling_times)) {
  if (alpha_bar_.size() < 2) {
    throw ValidationError("schedule.alpha_bar", "needs at least two entries (T >= 1)");
  }
  if (alpha_bar_.front() != 1.0) {
    throw ValidationError("schedule.alpha_bar", "alpha_bar[0] must equal 1");
  }
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    const double a = alpha_bar_[t];
    if (!(a > 0.0 && a <= 1.0)) {
      std::ostringstream os;
      os << "alpha_bar[" << t << "] = " << a << " outside (0, 1]";
      throw ValidationError("schedule.alpha_bar", os.str());
    }
    if (!(a < alpha_bar_[t - 1])) {
      std::ostringstream os;
      os << "not strictly decreasing at t = " << t;
      throw ValidationError("schedule.alpha_bar", os.str());
    }
  }
  const int T = num_timesteps();
  if (sampling_times_.size() < 2) {
    throw ValidationError("schedule.sampling_times", "needs at least two times");
  }
  if (sampling_times_.front() != 0 || sampling_times_.back() != T) {
    throw ValidationError("schedule.sampling_times", "must start at 0 and end at T");
  }
  for (std::size_t i = 1; i < sampling_times_.size(); ++i) {
    if (sampling_times_[i] <= sampling_times_[i - 1]) {
      throw ValidationError("schedule.sampling_times", "must be strictly increasing");
    }
  }
  // VP identity, checked once here so every consumer can rely on it.
  for (int t = 0; t <= T; ++t) {
    const auto [alpha, beta] = alpha_beta(*this, t);
    if (std::abs(alpha * alpha + beta * beta - 1.0) > 1e-12) {
      throw ValidationError("schedule.alpha_bar", "variance-preserving identity violated");
    }
  }
}

ScheduleTable ScheduleTable::linear(int num_timesteps, double start, double end, int num_steps) {
  if (num_timesteps < 1) throw ValidationError("schedule.num_timesteps", "must be positive");
  std::vector<double> ab(static_cast<std::size_t>(num_timesteps) + 1);
  for (int t = 0; t <= num_timesteps; ++t) {
    ab[static_cast<std::size_t>(t)] = start + (end - start) * t / num_timesteps;
  }
  ab[0] = 1.0;
  return ScheduleTable(std::move(ab), uniform_times(num_timesteps, num_steps));
}

std::vector<int> ScheduleTable::uniform_times(int num_timesteps, int count) {
  if (count < 2 || count > num_timesteps + 1) {
    throw ValidationError("schedule.sampling_times", "uniform(N) needs 2 <= N <= T + 1");
  }
  std::vector<int> times(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    times[static_cast<std::size_t>(i)] =
        static_cast<int>(std::lround(static_cast<double>(i) * num_timesteps / (count - 1)));
  }
  return times;
}

double ScheduleTable::alpha_bar(int t) const {
  if (t < 0 || t > num_timesteps()) {
    std::ostringstream os;
    os << "time index " << t << " outside [0, " << num_timesteps() << "]";
    throw RangeError(os.str());
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

AlphaBeta alpha_beta(const ScheduleTable& table, int t) {
  const double ab = table.alpha_bar(t);
  return {std::sqrt(ab), std::sqrt(1.0 - ab)};
}

ForwardBridgeParams bridge_params(const ScheduleTable& table, int tau, int t) {
  if (tau > t) {
    std::ostringstream os;
    os << "bridge requires tau <= t (got tau = " << tau << ", t = " << t << ")";
    throw OrderingError(os.str());
  }
  const auto from = alpha_beta(table, tau);
  const auto to = alpha_beta(table, t);
  const double a = to.alpha / from.alpha;
  const double ab = a * from.beta;
  return {a, std::max(0.0, to.beta * to.beta - ab * ab)};
}

Vec sample_forward(const ScheduleTable& table, const Vec& x0, int t, Rng& rng) {
  const auto [alpha, beta] = alpha_beta(table, t);
  if (beta == 0.0) return x0;
  return alpha * x0 + beta * rng.normal_vector(x0.size());
}

Vec resample_bridge(const ScheduleTable& table, const Vec& x_prev, int tau, int t, Rng& rng) {
  const auto [a, b_sq] = bridge_params(table, tau, t);
  if (b_sq == 0.0) return a * x_prev;
  return a * x_prev + std::sqrt(b_sq) * rng.normal_vector(x_prev.size());
}

Vec ddim_reverse_step(const ScheduleTable& table, const Vec& x_t, const Vec& eps_hat, int t,
                      int t_prev) {
  if (t_prev >= t) {
    std::ostringstream os;
    os << "reverse step needs t_prev < t (got " << t_prev << " >= " << t << ")";
    throw OrderingError(os.str());
  }
  if (eps_hat.size() != x_t.size()) throw RangeError("eps_hat dimension mismatch");
  const auto now = alpha_beta(table, t);
  if (now.alpha == 0.0) throw SingularScheduleError("alpha(t) = 0");
  const auto prev = alpha_beta(table, t_prev);
  const Vec x0_hat = (x_t - now.beta * eps_hat) / now.alpha;
  return prev.alpha * x0_hat + prev.beta * eps_hat;
}

}  // namespace natadiff
