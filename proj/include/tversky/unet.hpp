#pragma once

// Volumetric U-net: two padded 3x3x3 conv + ReLU layers per resolution level,
// 2x2x2 max pooling between levels with the feature count doubling after each
// pooling, and on the way back up a 2x2x2 transposed convolution whose output
// is concatenated (upsampled first, skip second) with the matching contracting
// features. The top level ends in one 3x3x3 conv that keeps the concatenated
// width and a 1x1x1 conv to the class logits, followed by softmax.
//
// Layer names follow the contracting/expanding numbering C1.., E1.. where the
// pooling and transposed-conv layers take a name of their own.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tversky/binary_io.hpp"
#include "tversky/loss.hpp"
#include "tversky/nn.hpp"
#include "tversky/tensor.hpp"

namespace tversky::unet {

struct NetConfig {
  std::array<std::size_t, 3> input_shape{32, 32, 32};
  std::size_t in_channels = 3;
  std::size_t levels = 2;
  std::size_t base_features = 4;
  std::size_t out_classes = 2;
  std::uint64_t seed = 1;
  bool use_bias = true;

  /// Full-size network: 128x224x256 three-channel input, 16 base features,
  /// four poolings.
  static NetConfig full_size() {
    NetConfig c;
    c.input_shape = {128, 224, 256};
    c.in_channels = 3;
    c.levels = 4;
    c.base_features = 16;
    return c;
  }

  std::size_t features(std::size_t level) const { return base_features << level; }

  void validate() const {
    if (levels < 1) throw ConfigError("net: levels must be >= 1");
    if (base_features < 1) throw ConfigError("net: base_features must be >= 1");
    if (in_channels < 1) throw ConfigError("net: in_channels must be >= 1");
    if (out_classes != 2) {
      throw ConfigError("net: out_classes is fixed at 2, got " + std::to_string(out_classes));
    }
    static constexpr const char* axis[] = {"depth", "height", "width"};
    for (std::size_t a = 0; a < 3; ++a) {
      std::size_t extent = input_shape[a];
      if (extent == 0) throw ConfigError(std::string("net: ") + axis[a] + " extent is zero");
      for (std::size_t l = 1; l <= levels; ++l) {
        if (extent % 2 != 0) {
          throw ConfigError(std::string("net: ") + axis[a] + " extent " + std::to_string(input_shape[a]) +
                            " is not divisible by 2 at pooling level " + std::to_string(l));
        }
        extent /= 2;
      }
    }
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"input_shape", c.input_shape}, {"in_channels", c.in_channels},
                     {"levels", c.levels},           {"base_features", c.base_features},
                     {"out_classes", c.out_classes}, {"seed", c.seed},
                     {"use_bias", c.use_bias}};
}

inline void from_json(const nlohmann::json& j, NetConfig& c) {
  NetConfig d;
  c.input_shape = j.value("input_shape", d.input_shape);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.levels = j.value("levels", d.levels);
  c.base_features = j.value("base_features", d.base_features);
  c.out_classes = j.value("out_classes", d.out_classes);
  c.seed = j.value("seed", d.seed);
  c.use_bias = j.value("use_bias", d.use_bias);
}

enum class LayerKind { conv3, pool, upconv, conv1 };

using Dims = std::array<std::size_t, 4>;  // depth, height, width, channels

inline std::string dims_str(const Dims& d) {
  return std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + "," +
         std::to_string(d[3]);
}

struct LayerShape {
  std::string name;
  LayerKind kind;
  Dims input;
  Dims output;
  std::size_t level;  // resolution level the layer writes to (0 = full size)

  /// Row label as printed in the layer table, e.g. "C3-Pooling".
  std::string label() const { return kind == LayerKind::pool ? name + "-Pooling" : name; }
  bool has_params() const { return kind != LayerKind::pool; }

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Layers in execution order.
struct ShapePlan {
  std::vector<LayerShape> layers;

  const LayerShape& at(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.name == name) return l;
    }
    throw ConfigError("no layer named " + name);
  }
};

/// Symbolic shape propagation; allocates nothing.
inline ShapePlan plan_shapes(const NetConfig& config) {
  config.validate();
  ShapePlan plan;
  Dims cur{config.input_shape[0], config.input_shape[1], config.input_shape[2], config.in_channels};
  std::vector<Dims> skips;
  std::size_t c_index = 1;
  auto contracting = [&](LayerKind kind, Dims out, std::size_t level) {
    plan.layers.push_back({"C" + std::to_string(c_index++), kind, cur, out, level});
    cur = out;
  };
  for (std::size_t l = 0; l < config.levels; ++l) {
    const std::size_t f = config.features(l);
    contracting(LayerKind::conv3, {cur[0], cur[1], cur[2], f}, l);
    contracting(LayerKind::conv3, {cur[0], cur[1], cur[2], f}, l);
    skips.push_back(cur);
    contracting(LayerKind::pool, {cur[0] / 2, cur[1] / 2, cur[2] / 2, cur[3]}, l + 1);
  }
  const std::size_t fb = config.features(config.levels);
  contracting(LayerKind::conv3, {cur[0], cur[1], cur[2], fb}, config.levels);
  contracting(LayerKind::conv3, {cur[0], cur[1], cur[2], fb}, config.levels);

  std::size_t e_index = 1;
  auto expanding = [&](LayerKind kind, Dims out, std::size_t level) {
    plan.layers.push_back({"E" + std::to_string(e_index++), kind, cur, out, level});
    cur = out;
  };
  for (std::size_t l = config.levels; l-- > 0;) {
    const Dims& skip = skips[l];
    const std::size_t joined = cur[3] + skip[3];
    expanding(LayerKind::upconv, {skip[0], skip[1], skip[2], joined}, l);
    if (l > 0) {
      expanding(LayerKind::conv3, {skip[0], skip[1], skip[2], config.features(l)}, l);
      expanding(LayerKind::conv3, {skip[0], skip[1], skip[2], config.features(l)}, l);
    } else {
      expanding(LayerKind::conv3, {skip[0], skip[1], skip[2], joined}, l);
      expanding(LayerKind::conv1, {skip[0], skip[1], skip[2], config.out_classes}, l);
    }
  }
  return plan;
}

struct NamedKernel {
  std::string name;
  nn::ConvKernel kernel;

  friend bool operator==(const NamedKernel& a, const NamedKernel& b) {
    return a.name == b.name && a.kernel.weights == b.kernel.weights && a.kernel.bias == b.kernel.bias;
  }
};

/// Learnable kernels in execution order, one per conv/transposed-conv layer.
/// Gradients use the same type.
struct NetParams {
  std::vector<NamedKernel> layers;

  nn::ConvKernel& at(const std::string& name) {
    for (auto& l : layers) {
      if (l.name == name) return l.kernel;
    }
    throw ConfigError("no parameters for layer " + name);
  }
  const nn::ConvKernel& at(const std::string& name) const {
    return const_cast<NetParams*>(this)->at(name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kernel.parameter_count();
    return n;
  }

  /// Visits every scalar parameter block (weights then bias, per layer).
  template <typename F>
  void for_each_block(F&& f) {
    for (auto& l : layers) {
      f(l.kernel.weights.data());
      f(std::span<double>(l.kernel.bias));
    }
  }
  template <typename F>
  void for_each_block(F&& f) const {
    for (const auto& l : layers) {
      f(std::span<const double>(l.kernel.weights.data()));
      f(std::span<const double>(l.kernel.bias));
    }
  }

  /// FNV-1a over the raw parameter bytes; detects stale activation caches.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for_each_block([&](std::span<const double> block) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(block.data());
      for (std::size_t i = 0; i < block.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
      }
    });
    return h;
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

inline std::size_t kernel_size(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3: return 3;
    case LayerKind::upconv: return 2;
    case LayerKind::conv1: return 1;
    case LayerKind::pool: break;
  }
  return 0;
}

/// Zero-initialized kernels with the right shapes for `config`.
inline NetParams zero_params(const NetConfig& config) {
  NetParams p;
  for (const auto& layer : plan_shapes(config).layers) {
    if (!layer.has_params()) continue;
    const std::size_t c_in = layer.input[3];
    // the transposed conv keeps its width; concatenation adds the skip channels
    const std::size_t c_out = layer.kind == LayerKind::upconv ? layer.input[3] : layer.output[3];
    p.layers.push_back({layer.name, nn::ConvKernel::zeros(kernel_size(layer.kind), c_in, c_out)});
  }
  return p;
}

/// He-normal weights (std sqrt(2 / fan_in)), zero biases, deterministic in
/// config.seed. fan_in is k^3 C_in for convolutions and C_in for the stride-2
/// transposed convolution, where each output voxel sees exactly one input
/// voxel.
inline NetParams init_params(const NetConfig& config) {
  NetParams p = zero_params(config);
  std::mt19937_64 rng(config.seed);
  const auto plan = plan_shapes(config);
  for (auto& nk : p.layers) {
    const auto& layer = plan.at(nk.name);
    const std::size_t k = nk.kernel.size();
    const std::size_t fan_in =
        layer.kind == LayerKind::upconv ? nk.kernel.in_channels() : k * k * k * nk.kernel.in_channels();
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& w : nk.kernel.weights.data()) w = dist(rng);
  }
  return p;
}

/// Activations recorded by forward() for backward().
struct ForwardCache {
  struct Record {
    Tensor output;                    // post-ReLU for conv3, concat result for upconv, logits for conv1
    std::vector<std::size_t> argmax;  // pool layers only
    std::size_t upsampled_channels = 0;
  };
  Tensor input;
  std::vector<Record> records;  // layer i reads records[i - 1].output, layer 0 reads input
  Tensor probs;
  std::uint64_t params_fingerprint = 0;
  Shape input_shape;
};

struct ForwardResult {
  loss::PredictionPlanes planes;
  ForwardCache cache;
};

namespace detail {

inline void check_input(const NetConfig& config, const Tensor& input) {
  const Shape expected{config.input_shape[0], config.input_shape[1], config.input_shape[2],
                       config.in_channels};
  if (input.shape() != expected) {
    throw ConfigError("unet: input " + shape_str(input.shape()) + " does not match config " +
                      shape_str(expected));
  }
}

inline void check_params(const ShapePlan& plan, const NetParams& params) {
  std::size_t i = 0;
  for (const auto& layer : plan.layers) {
    if (!layer.has_params()) continue;
    if (i >= params.layers.size() || params.layers[i].name != layer.name) {
      throw ConfigError("unet: parameter set does not match layer " + layer.name);
    }
    const auto& k = params.layers[i].kernel;
    const std::size_t c_out = layer.kind == LayerKind::upconv ? layer.input[3] : layer.output[3];
    if (k.size() != kernel_size(layer.kind) || k.in_channels() != layer.input[3] || k.out_channels() != c_out) {
      throw ConfigError("unet: kernel " + shape_str(k.weights.shape()) + " inconsistent with layer " +
                        layer.name + " (" + dims_str(layer.input) + " -> " + dims_str(layer.output) + ")");
    }
    ++i;
  }
  if (i != params.layers.size()) throw ConfigError("unet: parameter set has extra layers");
}

}  // namespace detail

/// Runs the network; `keep_cache` false drops activations (inference only).
inline ForwardResult forward(const NetConfig& config, const NetParams& params, const Tensor& input,
                             bool keep_cache = true) {
  detail::check_input(config, input);
  const ShapePlan plan = plan_shapes(config);
  detail::check_params(plan, params);

  ForwardResult result;
  auto& cache = result.cache;
  cache.records.reserve(plan.layers.size());
  std::vector<Tensor> skips(config.levels);
  if (keep_cache) cache.input = input;
  const Tensor* cur = &input;
  Tensor scratch;  // holds the running activation when not caching
  std::size_t p = 0;
  for (const auto& layer : plan.layers) {
    ForwardCache::Record rec;
    Tensor out;
    switch (layer.kind) {
      case LayerKind::conv3:
        out = nn::relu_forward(nn::conv3d_forward(*cur, params.layers[p++].kernel, nn::Padding::same));
        break;
      case LayerKind::conv1:
        out = nn::conv3d_forward(*cur, params.layers[p++].kernel, nn::Padding::same);
        break;
      case LayerKind::pool: {
        skips[layer.level - 1] = *cur;
        auto pooled = nn::maxpool3d_forward(*cur);
        out = std::move(pooled.output);
        rec.argmax = std::move(pooled.argmax);
        break;
      }
      case LayerKind::upconv: {
        Tensor up = nn::transposed_conv3d_forward(*cur, params.layers[p++].kernel);
        rec.upsampled_channels = up.extent(3);
        out = nn::concat_channels(up, skips[layer.level]);
        break;
      }
    }
    if (keep_cache) {
      rec.output = std::move(out);
      cache.records.push_back(std::move(rec));
      cur = &cache.records.back().output;
    } else {
      scratch = std::move(out);
      cur = &scratch;
    }
  }
  cache.probs = nn::softmax_channels(*cur);
  result.planes = loss::PredictionPlanes::from_channels(cache.probs);
  if (keep_cache) {
    cache.params_fingerprint = params.fingerprint();
    cache.input_shape = input.shape();
  } else {
    cache.probs = Tensor();
  }
  return result;
}

/// Parameter gradients given dloss/dp for both probability planes.
inline NetParams backward(const NetConfig& config, const NetParams& params, const ForwardCache& cache,
                          const loss::GradPlanes& grad_planes) {
  const ShapePlan plan = plan_shapes(config);
  detail::check_params(plan, params);
  if (cache.records.size() != plan.layers.size() || cache.probs.empty()) {
    throw ConfigError("unet::backward: cache was not recorded by forward() for this config");
  }
  if (cache.params_fingerprint != params.fingerprint()) {
    throw ConfigError("unet::backward: stale cache, parameters changed since forward()");
  }
  NetParams grads = zero_params(config);
  Tensor grad = nn::softmax_channels_backward(cache.probs, grad_planes.to_channels());
  std::vector<Tensor> skip_grads(config.levels);
  std::size_t p = params.layers.size();
  for (std::size_t i = plan.layers.size(); i-- > 0;) {
    const auto& layer = plan.layers[i];
    const auto& rec = cache.records[i];
    const bool first = i == 0;
    const Tensor& layer_input = first ? cache.input : cache.records[i - 1].output;
    switch (layer.kind) {
      case LayerKind::conv3:
      case LayerKind::conv1: {
        --p;
        if (layer.kind == LayerKind::conv3) grad = nn::relu_backward(rec.output, grad);
        auto g = nn::conv3d_backward(layer_input, params.layers[p].kernel, grad, nn::Padding::same, 1, !first);
        grads.layers[p].kernel = std::move(g.kernel);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::pool: {
        grad = nn::maxpool3d_backward(layer_input.shape(), rec.argmax, grad);
        const Tensor& sg = skip_grads[layer.level - 1];
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += sg[k];
        break;
      }
      case LayerKind::upconv: {
        --p;
        auto [g_up, g_skip] = nn::concat_channels_backward(grad, rec.upsampled_channels);
        skip_grads[layer.level] = std::move(g_skip);
        auto g = nn::transposed_conv3d_backward(layer_input, params.layers[p].kernel, g_up);
        grads.layers[p].kernel = std::move(g.kernel);
        grad = std::move(g.input);
        break;
      }
    }
  }
  if (!config.use_bias) {
    for (auto& nk : grads.layers) std::fill(nk.kernel.bias.begin(), nk.kernel.bias.end(), 0.0);
  }
  return grads;
}

inline constexpr const char* checkpoint_magic = "TVNET1";

/// TVNET1: magic, canonical JSON config, then each layer's weights and bias
/// as little-endian float64 in layer order.
inline void save_checkpoint(const std::string& path, const NetConfig& config, const NetParams& params) {
  detail::check_params(plan_shapes(config), params);
  nlohmann::json header;
  header["config"] = config;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& l : params.layers) names.push_back(l.name);
  header["layers"] = names;
  std::string bytes = binary_io::header_block(checkpoint_magic, header);
  params.for_each_block([&](std::span<const double> block) {
    for (double v : block) binary_io::put_le(bytes, v);
  });
  binary_io::write_file(path, bytes);
}

struct Checkpoint {
  NetConfig config;
  NetParams params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = binary_io::read_file(path);
  binary_io::Reader reader(bytes, path);
  const auto header = reader.header(checkpoint_magic);
  Checkpoint ck;
  try {
    ck.config = header.at("config").get<NetConfig>();
    ck.params = zero_params(ck.config);
    const auto names = header.at("layers").get<std::vector<std::string>>();
    if (names.size() != ck.params.layers.size()) {
      throw FormatError(FormatError::Kind::shape_mismatch,
                        path + ": header lists " + std::to_string(names.size()) + " layers, config implies " +
                            std::to_string(ck.params.layers.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != ck.params.layers[i].name) {
        throw FormatError(FormatError::Kind::shape_mismatch,
                          path + ": layer " + names[i] + " where config implies " + ck.params.layers[i].name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_header, path + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::bad_header, path + ": bad checkpoint config: " + e.what());
  }
  ck.params.for_each_block([&](std::span<double> block) {
    const auto values = reader.array<double>(block.size(), "parameter");
    std::copy(values.begin(), values.end(), block.begin());
  });
  reader.expect_end();
  return ck;
}

}  // namespace tversky::unet
