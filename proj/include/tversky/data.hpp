#pragma once

// Synthetic multi-channel volumes with sparse ellipsoidal lesions, the TVOL1
// file format, and two-fold cross-validation splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tversky/binary_io.hpp"
#include "tversky/tensor.hpp"

namespace tversky::data {

struct ChannelContrast {
  double background_mean = 0.0;
  double lesion_mean = 1.0;

  friend bool operator==(const ChannelContrast&, const ChannelContrast&) = default;
};

struct SynthConfig {
  std::array<std::size_t, 3> volume_shape{32, 32, 32};
  std::size_t channels = 3;
  double foreground_fraction_target = 0.002;
  std::array<std::size_t, 2> lesion_count_range{1, 3};
  std::array<double, 2> lesion_radius_range{1.0, 6.0};
  double noise_sigma = 0.5;
  // Loosely T1 (hypointense lesions), T2 and FLAIR (hyperintense).
  std::vector<ChannelContrast> channel_contrasts{{0.0, -0.5}, {0.0, 0.6}, {0.0, 0.8}};
  std::uint64_t seed = 1;

  void validate() const {
    if (!(foreground_fraction_target > 0.0 && foreground_fraction_target < 0.5)) {
      throw ConfigError("synth: foreground_fraction_target must be in (0, 0.5), got " +
                        std::to_string(foreground_fraction_target));
    }
    if (channels < 1) throw ConfigError("synth: channels must be >= 1");
    if (channel_contrasts.size() != channels) {
      throw ConfigError("synth: " + std::to_string(channel_contrasts.size()) +
                        " channel contrasts for " + std::to_string(channels) + " channels");
    }
    if (lesion_count_range[0] < 1 || lesion_count_range[0] > lesion_count_range[1]) {
      throw ConfigError("synth: lesion_count_range must satisfy 1 <= min <= max");
    }
    if (!(lesion_radius_range[0] > 0.0) || lesion_radius_range[0] > lesion_radius_range[1]) {
      throw ConfigError("synth: lesion_radius_range must satisfy 0 < min <= max");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
    for (std::size_t a = 0; a < 3; ++a) {
      if (volume_shape[a] == 0) throw ConfigError("synth: zero volume extent");
      // a lesion of the minimum radius must fit strictly inside the volume
      if (2.0 * lesion_radius_range[0] + 1.0 > static_cast<double>(volume_shape[a])) {
        throw ConfigError("synth: lesions cannot fit, minimum radius " +
                          std::to_string(lesion_radius_range[0]) + " too large for extent " +
                          std::to_string(volume_shape[a]));
      }
    }
  }

  std::size_t voxels() const { return volume_shape[0] * volume_shape[1] * volume_shape[2]; }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ChannelContrast& c) {
  j = nlohmann::json{{"background_mean", c.background_mean}, {"lesion_mean", c.lesion_mean}};
}
inline void from_json(const nlohmann::json& j, ChannelContrast& c) {
  c.background_mean = j.value("background_mean", 0.0);
  c.lesion_mean = j.value("lesion_mean", 1.0);
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"volume_shape", c.volume_shape},
                     {"channels", c.channels},
                     {"foreground_fraction_target", c.foreground_fraction_target},
                     {"lesion_count_range", c.lesion_count_range},
                     {"lesion_radius_range", c.lesion_radius_range},
                     {"noise_sigma", c.noise_sigma},
                     {"channel_contrasts", c.channel_contrasts},
                     {"seed", c.seed}};
}

/// Missing keys keep their defaults; a `channels` change without explicit
/// contrasts repeats the last default contrast.
inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.volume_shape = j.value("volume_shape", d.volume_shape);
  c.channels = j.value("channels", d.channels);
  c.foreground_fraction_target = j.value("foreground_fraction_target", d.foreground_fraction_target);
  c.lesion_count_range = j.value("lesion_count_range", d.lesion_count_range);
  c.lesion_radius_range = j.value("lesion_radius_range", d.lesion_radius_range);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  if (j.contains("channel_contrasts")) {
    c.channel_contrasts = j.at("channel_contrasts").get<std::vector<ChannelContrast>>();
  } else {
    c.channel_contrasts = d.channel_contrasts;
    c.channel_contrasts.resize(c.channels, d.channel_contrasts.back());
  }
  c.seed = j.value("seed", d.seed);
}

struct LabeledVolume {
  Tensor image;   // D x H x W x channels
  Tensor labels;  // D x H x W, 1 = lesion
  std::string subject_id;

  double foreground_fraction() const { return labels.sum() / static_cast<double>(labels.size()); }

  friend bool operator==(const LabeledVolume&, const LabeledVolume&) = default;
};

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radii;
};

namespace detail {

// Independent stream per (seed, subject, purpose).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t subject, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(subject >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

inline bool inside(const Ellipsoid& e, double d, double h, double w) {
  const double x = (d - e.center[0]) / e.radii[0];
  const double y = (h - e.center[1]) / e.radii[1];
  const double z = (w - e.center[2]) / e.radii[2];
  return x * x + y * y + z * z <= 1.0;
}

}  // namespace detail

/// Rasterizes lesion ellipsoids into a {0,1} label volume.
inline Tensor rasterize(const std::array<std::size_t, 3>& shape, const std::vector<Ellipsoid>& lesions) {
  Tensor labels({shape[0], shape[1], shape[2]});
  for (const auto& e : lesions) {
    std::array<std::size_t, 3> lo{}, hi{};
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = static_cast<std::size_t>(std::max(0.0, std::floor(e.center[a] - e.radii[a])));
      hi[a] = std::min(shape[a] - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(e.center[a] + e.radii[a]))));
    }
    for (std::size_t d = lo[0]; d <= hi[0]; ++d) {
      for (std::size_t h = lo[1]; h <= hi[1]; ++h) {
        for (std::size_t w = lo[2]; w <= hi[2]; ++w) {
          if (detail::inside(e, static_cast<double>(d), static_cast<double>(h), static_cast<double>(w))) {
            labels(d, h, w) = 1.0;
          }
        }
      }
    }
  }
  return labels;
}

/// Draws lesion geometry: the lesion count is uniform in the configured
/// range and each lesion's volume is an equal share of the target foreground,
/// with per-axis jitter in [0.75, 1.33] and radii clamped to the configured
/// range. Centers keep each ellipsoid inside the volume.
inline std::vector<Ellipsoid> draw_lesions(const SynthConfig& config, std::uint64_t subject_index) {
  auto rng = detail::stream(config.seed, subject_index, 1);
  std::uniform_int_distribution<std::size_t> count_dist(config.lesion_count_range[0], config.lesion_count_range[1]);
  std::uniform_real_distribution<double> jitter(0.75, 4.0 / 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = count_dist(rng);
  const double per_lesion = config.foreground_fraction_target * static_cast<double>(config.voxels()) /
                            static_cast<double>(n);
  const double r0 = std::cbrt(3.0 * per_lesion / (4.0 * std::numbers::pi));
  std::vector<Ellipsoid> lesions;
  for (std::size_t i = 0; i < n; ++i) {
    Ellipsoid e{};
    for (std::size_t a = 0; a < 3; ++a) {
      const double max_fit = (static_cast<double>(config.volume_shape[a]) - 1.0) / 2.0;
      e.radii[a] = std::clamp(r0 * jitter(rng), config.lesion_radius_range[0],
                              std::min(config.lesion_radius_range[1], max_fit));
      const double lo = e.radii[a];
      const double hi = static_cast<double>(config.volume_shape[a]) - 1.0 - e.radii[a];
      e.center[a] = lo + unit(rng) * (hi - lo);
    }
    lesions.push_back(e);
  }
  return lesions;
}

/// Deterministic in (config.seed, subject_index). Image channel c holds
/// background_mean outside lesions and lesion_mean inside, plus Gaussian
/// noise of standard deviation noise_sigma.
inline LabeledVolume generate_subject(const SynthConfig& config, std::uint64_t subject_index) {
  config.validate();
  const auto lesions = draw_lesions(config, subject_index);
  LabeledVolume vol;
  vol.labels = rasterize(config.volume_shape, lesions);
  if (vol.labels.sum() == 0.0) {
    // sub-voxel lesion: mark the voxel nearest the first center
    const auto& c = lesions.front().center;
    vol.labels(static_cast<std::size_t>(std::lround(c[0])), static_cast<std::size_t>(std::lround(c[1])),
               static_cast<std::size_t>(std::lround(c[2]))) = 1.0;
  }
  const auto [D, H, W] = config.volume_shape;
  const std::size_t C = config.channels;
  vol.image = Tensor({D, H, W, C});
  auto noise_rng = detail::stream(config.seed, subject_index, 2);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t v = 0; v < D * H * W; ++v) {
    const bool lesion = vol.labels[v] != 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const auto& contrast = config.channel_contrasts[c];
      const double base = lesion ? contrast.lesion_mean : contrast.background_mean;
      const double value = base + (config.noise_sigma > 0.0 ? config.noise_sigma * noise(noise_rng) : 0.0);
      // stored at float32 precision so the TVOL1 round trip is exact
      vol.image[v * C + c] = static_cast<double>(static_cast<float>(value));
    }
  }
  vol.subject_id = "subject_" + std::to_string(config.seed) + "_" + std::to_string(subject_index);
  return vol;
}

inline std::vector<LabeledVolume> generate_subjects(const SynthConfig& config, std::size_t count) {
  std::vector<LabeledVolume> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_subject(config, i));
  return out;
}

/// Index partition for two-fold cross-validation: a seeded shuffle, first
/// ceil(n/2) indices to fold a, the rest to fold b. Both folds are sorted.
struct FoldSplit {
  std::vector<std::size_t> fold_a;
  std::vector<std::size_t> fold_b;
};

inline FoldSplit two_fold_split(std::size_t subject_count, std::uint64_t seed) {
  if (subject_count < 2) {
    throw ConfigError("two_fold_split: need at least 2 subjects, got " + std::to_string(subject_count));
  }
  std::vector<std::size_t> idx(subject_count);
  for (std::size_t i = 0; i < subject_count; ++i) idx[i] = i;
  auto rng = detail::stream(seed, 0, 3);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t half = (subject_count + 1) / 2;
  FoldSplit split{{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half)},
                  {idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end()}};
  std::sort(split.fold_a.begin(), split.fold_a.end());
  std::sort(split.fold_b.begin(), split.fold_b.end());
  return split;
}

inline std::pair<std::vector<LabeledVolume>, std::vector<LabeledVolume>> two_fold_split(
    const std::vector<LabeledVolume>& subjects, std::uint64_t seed) {
  const auto split = two_fold_split(subjects.size(), seed);
  std::pair<std::vector<LabeledVolume>, std::vector<LabeledVolume>> out;
  for (auto i : split.fold_a) out.first.push_back(subjects[i]);
  for (auto i : split.fold_b) out.second.push_back(subjects[i]);
  return out;
}

inline constexpr const char* volume_magic = "TVOL1";

/// TVOL1: magic, canonical JSON header {shape, channels, dtype, label_dtype,
/// subject_id}, float32 LE image payload, uint8 label payload.
inline void write_volume(const std::string& path, const LabeledVolume& vol) {
  require_rank(vol.image, 4, "write_volume image");
  require_rank(vol.labels, 3, "write_volume labels");
  const Shape& s = vol.image.shape();
  if (!std::equal(s.begin(), s.begin() + 3, vol.labels.shape().begin())) {
    throw ConfigError("write_volume: image " + shape_str(s) + " and labels " +
                      shape_str(vol.labels.shape()) + " disagree");
  }
  nlohmann::json header{{"shape", {s[0], s[1], s[2]}},
                        {"channels", s[3]},
                        {"dtype", "float32"},
                        {"label_dtype", "uint8"},
                        {"subject_id", vol.subject_id}};
  std::string bytes = binary_io::header_block(volume_magic, header);
  bytes.reserve(bytes.size() + vol.image.size() * 4 + vol.labels.size());
  for (double v : vol.image.data()) binary_io::put_le(bytes, static_cast<float>(v));
  for (double v : vol.labels.data()) {
    if (v != 0.0 && v != 1.0) throw ConfigError("write_volume: labels must be {0,1}-valued");
    binary_io::put_le(bytes, static_cast<std::uint8_t>(v));
  }
  binary_io::write_file(path, bytes);
}

inline LabeledVolume read_volume(const std::string& path) {
  const std::string bytes = binary_io::read_file(path);
  binary_io::Reader reader(bytes, path);
  const auto header = reader.header(volume_magic);
  std::array<std::size_t, 3> shape{};
  std::size_t channels = 0;
  LabeledVolume vol;
  try {
    shape = header.at("shape").get<std::array<std::size_t, 3>>();
    channels = header.at("channels").get<std::size_t>();
    vol.subject_id = header.value("subject_id", std::string());
    if (header.at("dtype").get<std::string>() != "float32") {
      throw FormatError(FormatError::Kind::dtype_mismatch,
                        path + ": image dtype " + header.at("dtype").dump() + ", expected float32");
    }
    if (header.value("label_dtype", std::string("uint8")) != "uint8") {
      throw FormatError(FormatError::Kind::dtype_mismatch, path + ": label dtype must be uint8");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_header, path + ": bad TVOL1 header: " + e.what());
  }
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0 || channels == 0) {
    throw FormatError(FormatError::Kind::shape_mismatch, path + ": zero extent in header shape");
  }
  const std::size_t voxels = shape[0] * shape[1] * shape[2];
  const auto image = reader.array<float>(voxels * channels, "image");
  const auto labels = reader.array<std::uint8_t>(voxels, "label");
  reader.expect_end();
  vol.image = Tensor({shape[0], shape[1], shape[2], channels}, std::vector<double>(image.begin(), image.end()));
  vol.labels = Tensor({shape[0], shape[1], shape[2]});
  for (std::size_t i = 0; i < voxels; ++i) {
    if (labels[i] > 1) {
      throw FormatError(FormatError::Kind::dtype_mismatch,
                        path + ": label value " + std::to_string(labels[i]) + " outside {0,1}");
    }
    vol.labels[i] = labels[i];
  }
  return vol;
}

}  // namespace tversky::data
