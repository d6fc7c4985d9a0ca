#pragma once

// Central finite-difference checks for the loss gradient and for the whole
// network's parameter gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tversky/loss.hpp"
#include "tversky/unet.hpp"

namespace tversky::gradcheck {

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero
/// analytically from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

struct Worst {
  double rel_error = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::string where;
};

struct Report {
  std::size_t checked = 0;
  std::size_t failures = 0;
  Worst worst;
  double tolerance = 0.0;

  bool passed() const { return failures == 0; }

  void record(double analytic, double numeric, double floor, const std::string& where) {
    const double e = relative_error(analytic, numeric, floor);
    ++checked;
    if (!(e < tolerance)) ++failures;
    if (!(e <= worst.rel_error)) worst = {e, analytic, numeric, where};
  }
};

struct LossCheckOptions {
  std::size_t instances = 100;
  std::size_t min_voxels = 2;
  std::size_t max_voxels = 64;
  std::vector<loss::TverskyParams> params{{0.5, 0.5}, {0.4, 0.6}, {0.3, 0.7}, {0.2, 0.8}, {0.1, 0.9}};
  double step = 1e-6;
  double tolerance = 1e-5;
  std::uint64_t seed = 7;
};

/// Random planes (p0 in (0,1), p1 = 1 - p0 as independent inputs, labels
/// with at least one lesion voxel) checked coordinate by coordinate.
inline Report check_loss(const LossCheckOptions& opt = {}) {
  if (opt.params.empty() || opt.min_voxels < 1 || opt.min_voxels > opt.max_voxels) {
    throw ConfigError("check_loss: need a parameter list and 1 <= min_voxels <= max_voxels");
  }
  Report rep;
  rep.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> size_dist(opt.min_voxels, opt.max_voxels);
  std::uniform_real_distribution<double> unit(0.02, 0.98);
  std::bernoulli_distribution coin(0.3);
  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    const auto& params = opt.params[inst % opt.params.size()];
    const std::size_t n = size_dist(rng);
    Tensor labels({n});
    for (std::size_t i = 0; i < n; ++i) labels[i] = coin(rng) ? 1.0 : 0.0;
    labels[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
    Tensor p0({n});
    for (std::size_t i = 0; i < n; ++i) p0[i] = unit(rng);
    auto pred = loss::PredictionPlanes::from_lesion(p0);
    const auto lab = loss::LabelPlanes::from_binary(labels);
    const auto grad = loss::tversky_loss_backward(pred, lab, params);
    auto probe = [&](Tensor& plane, const Tensor& analytic, const char* which) {
      for (std::size_t j = 0; j < n; ++j) {
        const double keep = plane[j];
        plane[j] = keep + opt.step;
        const double up = loss::tversky_loss_forward(pred, lab, params).loss;
        plane[j] = keep - opt.step;
        const double down = loss::tversky_loss_forward(pred, lab, params).loss;
        plane[j] = keep;
        rep.record(analytic[j], (up - down) / (2.0 * opt.step), 1e-8,
                   "instance " + std::to_string(inst) + " " + which + "[" + std::to_string(j) + "]");
      }
    };
    probe(pred.p0, grad.d_p0, "p0");
    probe(pred.p1, grad.d_p1, "p1");
  }
  return rep;
}

struct NetCheckOptions {
  unet::NetConfig net = [] {
    unet::NetConfig c;
    c.input_shape = {8, 8, 8};
    c.in_channels = 3;
    c.levels = 1;
    c.base_features = 2;
    c.seed = 3;
    return c;
  }();
  loss::TverskyParams tversky{0.3, 0.7};
  double step = 1e-5;
  double tolerance = 1e-4;
  // Gradients below this magnitude are compared in absolute terms.
  double floor = 1e-6;
  std::uint64_t seed = 11;
};

/// Random input and a blob-shaped label volume; every parameter (weights and
/// biases) is perturbed in turn.
inline Report check_network(const NetCheckOptions& opt = {}) {
  const auto& cfg = opt.net;
  cfg.validate();
  Report rep;
  rep.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto [d, h, w] = cfg.input_shape;
  Tensor input({d, h, w, cfg.in_channels});
  for (double& x : input.data()) x = normal(rng);
  Tensor labels({d, h, w});
  for (std::size_t z = 0; z < d; ++z) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dz = z - d / 3.0, dy = y - h / 2.0, dx = x - w / 2.0;
        labels(z, y, x) = dz * dz + dy * dy + dx * dx <= 4.0 ? 1.0 : 0.0;
      }
    }
  }
  const auto lab = loss::LabelPlanes::from_binary(labels);
  unet::NetParams params = unet::init_params(cfg);
  // nonzero biases so their gradients are exercised away from the init point
  for (auto& nk : params.layers) {
    for (double& b : nk.kernel.bias) b = 0.05 * normal(rng);
  }
  auto loss_at = [&](const unet::NetParams& p) {
    return loss::tversky_loss_forward(unet::forward(cfg, p, input, false).planes, lab, opt.tversky).loss;
  };
  auto fwd = unet::forward(cfg, params, input);
  const auto grad_planes = loss::tversky_loss_backward(fwd.planes, lab, opt.tversky);
  const auto grads = unet::backward(cfg, params, fwd.cache, grad_planes);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto probe = [&](std::span<double> block, std::span<const double> analytic, const std::string& what) {
      for (std::size_t i = 0; i < block.size(); ++i) {
        const double keep = block[i];
        block[i] = keep + opt.step;
        const double up = loss_at(params);
        block[i] = keep - opt.step;
        const double down = loss_at(params);
        block[i] = keep;
        rep.record(analytic[i], (up - down) / (2.0 * opt.step), opt.floor,
                   params.layers[l].name + " " + what + "[" + std::to_string(i) + "]");
      }
    };
    probe(params.layers[l].kernel.weights.data(), grads.layers[l].kernel.weights.data(), "weight");
    probe(params.layers[l].kernel.bias, grads.layers[l].kernel.bias, "bias");
  }
  return rep;
}

}  // namespace tversky::gradcheck
