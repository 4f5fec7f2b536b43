#pragma once

// Central-difference gradient check shared by the unit tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmsense/transdope.hpp"

namespace gradcheck {

using namespace mmsense::transdope;

inline constexpr double kEpsilon = 1e-4;
/// Gradients smaller than this in both estimates count as agreeing zeros.
inline constexpr double kFloor = 1e-7;

/// T=2, N=8, P=4, d=16.
inline TransDopeConfig tiny_config() {
  TransDopeConfig c;
  c.seq_len = 2;
  c.range_bins = 8;
  c.doppler_bins = 4;
  c.channels = 3;
  c.conv_filters = 4;
  c.embed_dim = 16;
  c.heads = 2;
  c.encoder_layers = 2;
  c.ffn_kernel = 3;
  return c;
}

struct Result {
  std::vector<std::pair<std::string, double>> per_group;  // max relative error per tensor
  std::vector<double> analytic;                           // every gradient entry, in order
  double max_error = 0.0;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor});
}

inline std::vector<float> input(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> d(0.0f, 40.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <typename Model, typename LossFn, typename GradFn>
Result check(Model& model, LossFn loss, GradFn grad_fn) {
  Result r;
  Model grad = zeros_like(model);
  grad_fn(model, grad);
  auto params = parameters(model);
  auto grads = parameters(grad);
  for (std::size_t g = 0; g < params.size(); ++g) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params[g].size; ++i) {
      double& w = params[g].data[i];
      const double saved = w;
      w = saved + kEpsilon;
      const double up = loss(model);
      w = saved - kEpsilon;
      const double down = loss(model);
      w = saved;
      const double numeric = (up - down) / (2.0 * kEpsilon);
      const double analytic = grads[g].data[i];
      r.analytic.push_back(analytic);
      worst = std::max(worst, relative_error(analytic, numeric));
    }
    r.per_group.emplace_back(params[g].name, worst);
    r.max_error = std::max(r.max_error, worst);
  }
  return r;
}

inline Result check_transdope(const TransDopeConfig& cfg, std::uint64_t seed) {
  auto model = make_model(cfg, seed);
  const auto seq = input(cfg.sequence_size(), seed + 1);
  const bool label = true;
  return check(
      model, [&](const TransDopeModel& m) { return bce_with_logit(forward_logit(seq, m), label); },
      [&](const TransDopeModel& m, TransDopeModel& g) { accumulate_gradient(seq, label, m, g); });
}

inline Result check_frame_classifier(const TransDopeConfig& cfg, std::uint64_t seed) {
  auto net = make_frame_classifier(cfg, seed);
  const auto frame = input(cfg.frame_size(), seed + 1);
  const bool label = false;
  return check(
      net,
      [&](const FrameClassifier& n) {
        const double p = forward(frame, n);
        return label ? -std::log(p) : -std::log1p(-p);
      },
      [&](const FrameClassifier& n, FrameClassifier& g) { accumulate_gradient(frame, label, n, g); });
}

}  // namespace gradcheck
