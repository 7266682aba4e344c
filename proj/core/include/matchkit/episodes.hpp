// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "matchkit/tensor.hpp"

namespace matchkit {

using Rng = std::mt19937_64;

struct ClassEntry {
  std::string name;
  /// Each example is a flattened tensor of the dataset's example_shape.
  std::vector<std::vector<double>> examples;
};

/// Examples grouped by class. The class id is the index into `classes`.
struct ClassDataset {
  std::vector<ClassEntry> classes;
  Shape example_shape;
  std::string source;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t example_size() const { return shape_numel(example_shape); }
  bool is_image() const { return example_shape.size() == 3; }
  /// Throws DataError when an example has the wrong size or a class is empty.
  void validate() const;
  bool identical(const ClassDataset& other) const;
};

struct SplitSpec {
  std::vector<int> train_class_ids;
  std::vector<int> test_class_ids;
  std::uint64_t seed = 0;

  void validate(const ClassDataset& dataset) const;
};

enum class SplitPart { train, test };

std::span<const int> class_pool(const SplitSpec& split, SplitPart part);

/// Seeded shuffle of all class ids; the first n_train go to training. Each
/// part is returned in ascending id order.
SplitSpec split_classes(const ClassDataset& dataset, std::size_t n_train, std::uint64_t seed);

/// Rotates an S x S single-channel image by 90 degrees counter-clockwise
/// `quarter_turns` times.
std::vector<double> rotate_quarter_turns(std::span<const double> image, std::size_t side,
                                         int quarter_turns);

/// Every class c becomes classes 4c..4c+3 holding its 0/90/180/270 degree
/// rotations. Requires square single-channel images.
ClassDataset augment_rotations(const ClassDataset& dataset);

/// Maps a split of the original classes onto the rotation-augmented ids, so
/// all rotations of a character stay on the same side of the split.
SplitSpec expand_split_for_rotations(const SplitSpec& split);

struct ExampleRef {
  int class_id = 0;
  int index = 0;

  friend bool operator==(const ExampleRef&, const ExampleRef&) = default;
  friend auto operator<=>(const ExampleRef&, const ExampleRef&) = default;
};

/// One sampled (label set, support set, batch) triple. Labels are
/// class-local, 0..ways-1, in sampled class order.
struct Episode {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::vector<int> class_ids;  // global ids; local label l <-> class_ids[l]
  std::vector<ExampleRef> support;
  std::vector<int> support_labels;
  std::vector<ExampleRef> batch;
  std::vector<int> batch_labels;
  std::uint64_t seed = 0;
};

/// Uniformly samples `ways` classes from `pool` without replacement, then per
/// class `shots` support and `batch_per_class` batch examples without
/// replacement. Support and batch are class-grouped in sampled order.
Episode sample_episode(const ClassDataset& dataset, std::span<const int> pool, std::size_t ways,
                       std::size_t shots, std::size_t batch_per_class, Rng& rng);

/// Episode sampled from a fresh generator seeded with `seed`.
Episode sample_episode_seeded(const ClassDataset& dataset, std::span<const int> pool,
                              std::size_t ways, std::size_t shots, std::size_t batch_per_class,
                              std::uint64_t seed);

/// Stacks the referenced examples into [n, example_shape...].
Tensor gather_examples(const ClassDataset& dataset, std::span<const ExampleRef> refs);

/// Prototypes uniform on the unit sphere, examples = prototype + N(0, sigma^2 I).
ClassDataset gen_synthetic(std::size_t n_classes, std::size_t dim, double sigma,
                           std::uint64_t seed, std::size_t examples_per_class = 40);

/// Flat binary: "MNSYN1\0\0", u32 n_classes, u32 dim, then class-major
/// little-endian f64 examples. The per-class count follows from the file size.
void save_synthetic(const ClassDataset& dataset, const std::filesystem::path& path);
ClassDataset load_synthetic(const std::filesystem::path& path);
bool is_synthetic_file(const std::filesystem::path& path);

/// Walks `root`; every directory that directly holds PNG files is a class
/// keyed by its path relative to root. Images are converted to 8-bit
/// grayscale, scaled to [0,1] and area-resized to `size` x `size`. Classes are
/// ordered lexicographically, files within a class likewise.
ClassDataset load_image_class_tree(const std::filesystem::path& root, std::size_t size = 28);

/// Dispatches on the path: synthetic file or image tree.
ClassDataset load_dataset(const std::filesystem::path& path, std::size_t image_size = 28);

}  // namespace matchkit
