#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "tversky/binary_io.hpp"
#include "tversky/data.hpp"

using namespace tversky;
using namespace tversky::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Synth, DeterministicInSeedAndIndex) {
  SynthConfig c;
  c.volume_shape = {16, 16, 16};
  c.seed = 9;
  EXPECT_EQ(generate_subject(c, 3), generate_subject(c, 3));
  EXPECT_NE(generate_subject(c, 3).image, generate_subject(c, 4).image);
  EXPECT_EQ(generate_subject(c, 3).subject_id, "subject_9_3");
}

TEST(Synth, NoiselessImageFollowsLabels) {
  SynthConfig c;
  c.volume_shape = {24, 24, 24};
  c.noise_sigma = 0.0;
  c.lesion_count_range = {1, 1};
  c.foreground_fraction_target = 0.01;
  const auto v = generate_subject(c, 0);
  ASSERT_GT(v.labels.sum(), 0.0);
  for (std::size_t i = 0; i < v.labels.size(); ++i) {
    const bool lesion = v.labels[i] != 0.0;
    for (std::size_t ch = 0; ch < c.channels; ++ch) {
      const auto& con = c.channel_contrasts[ch];
      EXPECT_EQ(v.image[i * c.channels + ch],
                static_cast<double>(static_cast<float>(lesion ? con.lesion_mean : con.background_mean)));
    }
  }
}

TEST(Synth, DefaultForegroundFractionAt64) {
  SynthConfig c;
  c.volume_shape = {64, 64, 64};
  c.noise_sigma = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    c.seed = seed;
    const double f = generate_subject(c, 0).foreground_fraction();
    EXPECT_GE(f, 0.0004) << seed;
    EXPECT_LE(f, 0.01) << seed;
  }
}

TEST(Synth, LowDensityTargetStaysLow) {
  SynthConfig c;
  c.foreground_fraction_target = 0.0003;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const double f = generate_subject(c, i).foreground_fraction();
    EXPECT_GT(f, 0.0);
    EXPECT_LE(f, 0.0005) << i;
  }
}

TEST(Synth, ConfigValidation) {
  SynthConfig c;
  c.channel_contrasts.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  SynthConfig d;
  d.foreground_fraction_target = 0.6;
  EXPECT_THROW(d.validate(), ConfigError);
  SynthConfig e;
  e.lesion_count_range = {3, 1};
  EXPECT_THROW(e.validate(), ConfigError);
  SynthConfig j;
  j.noise_sigma = 0.25;
  EXPECT_EQ(nlohmann::json(j).get<SynthConfig>().noise_sigma, 0.25);
}

TEST(Split, SizesAndPartition) {
  const auto s15 = two_fold_split(15, 4);
  EXPECT_EQ(s15.fold_a.size(), 8u);
  EXPECT_EQ(s15.fold_b.size(), 7u);
  std::set<std::size_t> all(s15.fold_a.begin(), s15.fold_a.end());
  for (auto i : s15.fold_b) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 15u);
  EXPECT_EQ(*all.rbegin(), 14u);
  const auto s2 = two_fold_split(2, 4);
  EXPECT_EQ(s2.fold_a.size(), 1u);
  EXPECT_EQ(s2.fold_b.size(), 1u);
  EXPECT_THROW(two_fold_split(1, 4), ConfigError);
  EXPECT_EQ(two_fold_split(10, 3).fold_a, two_fold_split(10, 3).fold_a);
}

TEST(Tvol, RoundTripIsExact) {
  SynthConfig c;
  c.volume_shape = {8, 6, 4};
  const auto v = generate_subject(c, 2);
  const auto path = temp_path("tversky_roundtrip.tvol");
  write_volume(path, v);
  EXPECT_EQ(read_volume(path), v);
  std::filesystem::remove(path);
}

TEST(Tvol, FormatErrors) {
  SynthConfig c;
  c.volume_shape = {4, 4, 4};
  const auto path = temp_path("tversky_errors.tvol");
  write_volume(path, generate_subject(c, 0));
  const std::string good = binary_io::read_file(path);
  auto failure = [&](const std::string& bytes) -> std::pair<int, std::string> {
    binary_io::write_file(path, bytes);
    try {
      read_volume(path);
    } catch (const FormatError& e) {
      return {static_cast<int>(e.kind()), e.what()};
    }
    return {-1, ""};
  };
  EXPECT_EQ(failure(good.substr(0, good.size() - 10)).first, static_cast<int>(FormatError::Kind::truncated));
  const auto magic = failure("TVOLX" + good.substr(5));
  EXPECT_EQ(magic.first, static_cast<int>(FormatError::Kind::bad_magic));
  EXPECT_NE(magic.second.find("TVOL1"), std::string::npos);
  std::string f64 = good;
  f64.replace(f64.find("float32"), 7, "float64");
  EXPECT_EQ(failure(f64).first, static_cast<int>(FormatError::Kind::dtype_mismatch));
  std::string bad_label = good;
  bad_label.back() = 7;
  EXPECT_EQ(failure(bad_label).first, static_cast<int>(FormatError::Kind::dtype_mismatch));
  EXPECT_EQ(failure("TVOL1\nnot json\n").first, static_cast<int>(FormatError::Kind::bad_header));
  std::filesystem::remove(path);
  EXPECT_THROW(read_volume(temp_path("no_such_volume.tvol")), IoError);
}
