#pragma once

// Labeled image sets, the CIFAR-10 binary reader, stratified splits and the
// synthetic tasks used for desk-scale experiments.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/graph_space.hpp"
#include "fade/random.hpp"

namespace fade::data {

// Images are stored channel-planar, [N, C, H, W], values in [0, 1] for real
// data; synthetic tasks may use signed values.
struct LabeledSet {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<double> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }

  ad::Value batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  LabeledSet subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

struct DatasetSplits {
  LabeledSet test;
  LabeledSet arch_train;
  LabeledSet weight_train;

  std::size_t class_count() const { return test.classes; }
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarClasses = 10;

// Parses back-to-back 3073-byte records: label byte then 3x1024 planar pixels.
LabeledSet parse_cifar10(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_cifar10(const LabeledSet& set);
LabeledSet load_cifar10_file(const std::filesystem::path& file);
// Reads data_batch_1..5.bin (train) or test_batch.bin from `dir` and
// concatenates them.
LabeledSet load_cifar10(const std::filesystem::path& dir, bool include_test_batch = true);

// Average-pools each image by an integer factor.
LabeledSet downsample(const LabeledSet& set, std::size_t factor);
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

/// Stratified random partition: test, arch_train, weight_train in the given
/// proportions (default 1:1:4), exact within one sample per class.
DatasetSplits split(const LabeledSet& set, std::array<int, 3> ratios, Rng& rng);

// --- synthetic tasks ------------------------------------------------------

struct XorTaskParams {
  std::size_t samples = 600;
  std::size_t side = 8;
  double noise = 0.3;
};

// Two 2x2 patches in opposite corners each carry a random sign; the label is
// whether the signs agree. Solvable only once features span both corners.
LabeledSet make_xor_patterns(const XorTaskParams& params, Rng& rng);

struct PlantedTaskParams {
  std::size_t samples = 1200;
  std::size_t height = 8;
  std::size_t width_px = 24;
  double noise = 0.3;
  std::size_t depth = 2;
  std::size_t width = 3;
};

// Two full-height bars, two pixels wide, with random signs; the horizontal
// span covered by both is uniform in [4, width]. The label is whether the
// signs agree, so a feature can only decide a sample once its receptive
// field covers the span.
LabeledSet make_spaced_pairs(std::size_t samples, std::size_t height, std::size_t width, double noise, Rng& rng);

/// A chained-architecture task with known variant quality. Row variants are
/// chains of growing length, each vertex adding one convolution and so more
/// receptive field; on the spaced-pairs data the fraction of decidable
/// samples grows with every added convolution in any row. The planted score
/// of a path is the number of convolutions it uses.
struct PlantedTask {
  LabeledSet data;
  std::vector<std::vector<graph::Dag>> variants;  // per row, ordered by planted quality
  std::size_t dominant = 0;                       // index of the best variant in every row

  double planted_score(std::span<const std::size_t> path) const;
};

PlantedTask make_planted_cell_quality(const PlantedTaskParams& params, Rng& rng);

// Chain on n vertices: 0 -> 1 -> ... -> n-1.
graph::Dag chain_dag(int n);

/// f(x) = 1 - ||x - x*||^2 clamped into [0, 1].
struct ConcaveOracle {
  graph::FeaturePoint optimum{{0.5, 0.5, 0.5}};

  double operator()(const graph::FeaturePoint& x) const;
};

}  // namespace fade::data
