#ifndef SCN_DATA_HPP
#define SCN_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "scn/common.hpp"
#include "scn/layers.hpp"

namespace scn::data {

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<layers::FeatureMap> images; // raw, un-augmented, scaled to [0,1]
  std::vector<int> labels;
  Split split = Split::kTrain;
  int class_count = 0;
  layers::FeatureMap per_pixel_mean; // always computed from the train split
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Reads the four standard IDX files (train/t10k images + labels) from
/// `dir`: big-endian headers, magic 0x803 for images and 0x801 for labels,
/// pixels scaled to [0,1]. Throws FormatError naming the offender on bad
/// magic or truncation.
DatasetPair load_mnist(const std::string& dir);

/// Reads the native binary batches (label byte(s), then 3072 channel-major
/// pixel bytes per record). `classes` is 10 (data_batch_*.bin/test_batch.bin)
/// or 100 (train.bin/test.bin, fine labels).
DatasetPair load_cifar(const std::string& dir, int classes);

/// Elementwise mean over a set of equally shaped images.
layers::FeatureMap compute_per_pixel_mean(const std::vector<layers::FeatureMap>& images);

/// Keeps the first `n` training images and recomputes the per-pixel mean
/// over the kept subset (both splits see the new mean).
void truncate_train(DatasetPair& ds, std::size_t n);

struct SynthDigitsOptions {
  int train_count = 10000;
  int test_count = 2000;
  std::uint64_t seed = 1234;
};

/// Deterministic stand-in digit corpus for environments without MNIST on
/// disk: 1x28x28 glyph renders under random affine jitter, stroke-intensity
/// variation, smoothing and pixel noise; balanced labels.
DatasetPair make_synth_digits(const SynthDigitsOptions& opts);

} // namespace scn::data

#endif
