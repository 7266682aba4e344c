// SPDX-License-Identifier: Apache-2.0
#include "matchkit/episodes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "matchkit/error.hpp"
#include "matchkit/image_io.hpp"

namespace matchkit {

namespace fs = std::filesystem;

void ClassDataset::validate() const {
  if (classes.empty()) throw DataError("dataset '" + source + "' has no classes");
  const std::size_t n = example_size();
  for (const ClassEntry& c : classes) {
    if (c.examples.empty()) throw DataError("class '" + c.name + "' has no examples");
    for (const auto& e : c.examples) {
      if (e.size() != n) {
        throw DataError("class '" + c.name + "' holds an example of size " +
                        std::to_string(e.size()) + ", expected " + std::to_string(n));
      }
    }
  }
}

bool ClassDataset::identical(const ClassDataset& other) const {
  if (example_shape != other.example_shape || classes.size() != other.classes.size()) return false;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].name != other.classes[c].name ||
        classes[c].examples != other.classes[c].examples) {
      return false;
    }
  }
  return true;
}

void SplitSpec::validate(const ClassDataset& dataset) const {
  std::vector<int> seen(dataset.num_classes(), 0);
  auto mark = [&](const std::vector<int>& ids, int tag) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= dataset.num_classes()) {
        throw ConfigError("split: class id " + std::to_string(id) + " not in dataset");
      }
      if (seen[static_cast<std::size_t>(id)] != 0) {
        throw ConfigError("split: class id " + std::to_string(id) +
                          (seen[static_cast<std::size_t>(id)] == tag ? " listed twice"
                                                                     : " in both train and test"));
      }
      seen[static_cast<std::size_t>(id)] = tag;
    }
  };
  mark(train_class_ids, 1);
  mark(test_class_ids, 2);
}

std::span<const int> class_pool(const SplitSpec& split, SplitPart part) {
  return part == SplitPart::train ? std::span<const int>(split.train_class_ids)
                                  : std::span<const int>(split.test_class_ids);
}

SplitSpec split_classes(const ClassDataset& dataset, std::size_t n_train, std::uint64_t seed) {
  const std::size_t total = dataset.num_classes();
  if (n_train >= total) {
    throw ConfigError("split: n_train=" + std::to_string(n_train) + " must be below the " +
                      std::to_string(total) + " available classes");
  }
  std::vector<int> ids(total);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  SplitSpec split;
  split.seed = seed;
  split.train_class_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_class_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(split.train_class_ids.begin(), split.train_class_ids.end());
  std::sort(split.test_class_ids.begin(), split.test_class_ids.end());
  return split;
}

std::vector<double> rotate_quarter_turns(std::span<const double> image, std::size_t side,
                                         int quarter_turns) {
  if (image.size() != side * side) throw DataError("rotate: image is not square");
  std::vector<double> current(image.begin(), image.end());
  std::vector<double> next(current.size());
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) next[y * side + x] = current[x * side + (side - 1 - y)];
    }
    current.swap(next);
  }
  return current;
}

ClassDataset augment_rotations(const ClassDataset& dataset) {
  const Shape& s = dataset.example_shape;
  if (s.size() != 3 || s[0] != 1) {
    throw DataError("augment_rotations: needs single-channel images, got shape " + shape_str(s));
  }
  if (s[1] != s[2]) throw DataError("augment_rotations: images are not square " + shape_str(s));
  ClassDataset out;
  out.example_shape = s;
  out.source = dataset.source + "+rot90";
  out.classes.reserve(dataset.num_classes() * 4);
  for (const ClassEntry& c : dataset.classes) {
    for (int r = 0; r < 4; ++r) {
      ClassEntry rotated;
      rotated.name = c.name + "@rot" + std::to_string(90 * r);
      rotated.examples.reserve(c.examples.size());
      for (const auto& e : c.examples) rotated.examples.push_back(rotate_quarter_turns(e, s[1], r));
      out.classes.push_back(std::move(rotated));
    }
  }
  return out;
}

SplitSpec expand_split_for_rotations(const SplitSpec& split) {
  auto expand = [](const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size() * 4);
    for (int id : ids) {
      for (int r = 0; r < 4; ++r) out.push_back(4 * id + r);
    }
    return out;
  };
  return SplitSpec{expand(split.train_class_ids), expand(split.test_class_ids), split.seed};
}

Episode sample_episode(const ClassDataset& dataset, std::span<const int> pool, std::size_t ways,
                       std::size_t shots, std::size_t batch_per_class, Rng& rng) {
  if (ways == 0 || shots == 0) throw ConfigError("episode: ways and shots must be positive");
  if (pool.size() < ways) {
    throw DataError("episode: pool has " + std::to_string(pool.size()) + " classes, need " +
                    std::to_string(ways));
  }
  std::vector<bool> seen(dataset.num_classes(), false);
  for (int id : pool) {
    if (id < 0 || static_cast<std::size_t>(id) >= dataset.num_classes()) {
      throw ConfigError("episode: class id " + std::to_string(id) + " not in dataset");
    }
    if (seen[static_cast<std::size_t>(id)]) {
      throw ConfigError("episode: class id " + std::to_string(id) + " repeated in pool");
    }
    seen[static_cast<std::size_t>(id)] = true;
  }

  std::vector<int> classes(pool.begin(), pool.end());
  for (std::size_t i = 0; i < ways; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
    std::swap(classes[i], classes[pick(rng)]);
  }
  classes.resize(ways);

  Episode e;
  e.ways = ways;
  e.shots = shots;
  e.class_ids = classes;
  const std::size_t needed = shots + batch_per_class;
  for (std::size_t local = 0; local < ways; ++local) {
    const int id = classes[local];
    const ClassEntry& entry = dataset.classes[static_cast<std::size_t>(id)];
    if (entry.examples.size() < needed) {
      throw DataError("episode: class '" + entry.name + "' (id " + std::to_string(id) + ") has " +
                      std::to_string(entry.examples.size()) + " examples, need " +
                      std::to_string(needed));
    }
    std::vector<int> idx(entry.examples.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < needed; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    for (std::size_t i = 0; i < shots; ++i) {
      e.support.push_back(ExampleRef{id, idx[i]});
      e.support_labels.push_back(static_cast<int>(local));
    }
    for (std::size_t i = shots; i < needed; ++i) {
      e.batch.push_back(ExampleRef{id, idx[i]});
      e.batch_labels.push_back(static_cast<int>(local));
    }
  }
  return e;
}

Episode sample_episode_seeded(const ClassDataset& dataset, std::span<const int> pool,
                              std::size_t ways, std::size_t shots, std::size_t batch_per_class,
                              std::uint64_t seed) {
  Rng rng(seed);
  Episode e = sample_episode(dataset, pool, ways, shots, batch_per_class, rng);
  e.seed = seed;
  return e;
}

Tensor gather_examples(const ClassDataset& dataset, std::span<const ExampleRef> refs) {
  if (refs.empty()) throw DataError("gather_examples: no examples requested");
  const std::size_t n = dataset.example_size();
  std::vector<double> values;
  values.reserve(refs.size() * n);
  for (const ExampleRef& r : refs) {
    const auto& e = dataset.classes.at(static_cast<std::size_t>(r.class_id))
                        .examples.at(static_cast<std::size_t>(r.index));
    values.insert(values.end(), e.begin(), e.end());
  }
  Shape shape{refs.size()};
  shape.insert(shape.end(), dataset.example_shape.begin(), dataset.example_shape.end());
  return Tensor(std::move(shape), std::move(values));
}

ClassDataset gen_synthetic(std::size_t n_classes, std::size_t dim, double sigma,
                           std::uint64_t seed, std::size_t examples_per_class) {
  if (n_classes < 2) throw ConfigError("gen_synthetic: need at least 2 classes");
  if (dim == 0) throw ConfigError("gen_synthetic: dim must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("gen_synthetic: sigma must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ClassDataset ds;
  ds.example_shape = {dim};
  ds.source = "synthetic";
  ds.classes.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> proto(dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : proto) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : proto) v /= norm;
    ClassEntry& entry = ds.classes[c];
    entry.name = "class_" + std::to_string(c);
    entry.examples.resize(examples_per_class, proto);
    for (auto& e : entry.examples) {
      for (double& v : e) v += sigma * normal(rng);
    }
  }
  return ds;
}

namespace {

constexpr std::array<char, 8> kSynMagic{'M', 'N', 'S', 'Y', 'N', '1', '\0', '\0'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(const unsigned char* b) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_synthetic(const ClassDataset& dataset, const fs::path& path) {
  dataset.validate();
  if (dataset.example_shape.size() != 1) throw DataError("save_synthetic: dataset is not vector-valued");
  const std::size_t per_class = dataset.classes.front().examples.size();
  for (const auto& c : dataset.classes) {
    if (c.examples.size() != per_class) throw DataError("save_synthetic: unequal class sizes");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create " + path.string());
  out.write(kSynMagic.data(), kSynMagic.size());
  put_u32(out, static_cast<std::uint32_t>(dataset.num_classes()));
  put_u32(out, static_cast<std::uint32_t>(dataset.example_size()));
  for (const auto& c : dataset.classes) {
    for (const auto& e : c.examples) {
      for (double v : e) put_f64(out, v);
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

bool is_synthetic_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 8> magic{};
  return in && in.read(magic.data(), magic.size()) && magic == kSynMagic;
}

ClassDataset load_synthetic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || !std::equal(kSynMagic.begin(), kSynMagic.end(), bytes.begin(),
                                       [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; })) {
    throw DataError("not a synthetic dataset file: " + path.string());
  }
  const std::size_t n_classes = get_u32(bytes.data() + 8);
  const std::size_t dim = get_u32(bytes.data() + 12);
  const std::size_t payload = bytes.size() - 16;
  if (n_classes == 0 || dim == 0 || payload % (8 * n_classes * dim) != 0 || payload == 0) {
    throw DataError("synthetic dataset " + path.string() + " has an inconsistent size");
  }
  const std::size_t per_class = payload / (8 * n_classes * dim);
  ClassDataset ds;
  ds.example_shape = {dim};
  ds.source = path.string();
  ds.classes.resize(n_classes);
  const unsigned char* p = bytes.data() + 16;
  for (std::size_t c = 0; c < n_classes; ++c) {
    ds.classes[c].name = "class_" + std::to_string(c);
    ds.classes[c].examples.assign(per_class, std::vector<double>(dim));
    for (auto& e : ds.classes[c].examples) {
      for (double& v : e) {
        v = get_f64(p);
        p += 8;
      }
    }
  }
  return ds;
}

namespace {

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

ClassDataset load_image_class_tree(const fs::path& root, std::size_t size) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("dataset directory not found: " + root.string());

  std::vector<fs::path> dirs{root};
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_directory()) dirs.push_back(it->path());
  }
  if (ec) throw DataError("cannot walk " + root.string() + ": " + ec.message());

  struct PendingClass {
    std::string name;
    std::vector<fs::path> files;
  };
  std::vector<PendingClass> pending;
  for (const fs::path& dir : dirs) {
    std::vector<fs::path> files;
    bool has_subdir = false;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory()) has_subdir = true;
      if (entry.is_regular_file() && is_png(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) {
      if (!has_subdir && dir != root) throw DataError("empty class directory: " + dir.string());
      continue;
    }
    if (dir == root) throw DataError("images must live in class subdirectories of " + root.string());
    std::sort(files.begin(), files.end());
    pending.push_back(PendingClass{fs::relative(dir, root).generic_string(), std::move(files)});
  }
  if (pending.empty()) throw DataError("no PNG classes found under " + root.string());
  std::sort(pending.begin(), pending.end(),
            [](const PendingClass& a, const PendingClass& b) { return a.name < b.name; });

  ClassDataset ds;
  ds.example_shape = {1, size, size};
  ds.source = root.string();
  ds.classes.reserve(pending.size());
  for (const PendingClass& pc : pending) {
    ClassEntry entry;
    entry.name = pc.name;
    entry.examples.reserve(pc.files.size());
    for (const fs::path& file : pc.files) {
      const GrayImage img = read_png_gray(file);
      std::vector<double> pixels(img.pixels.size());
      for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = img.pixels[i] / 255.0;
      entry.examples.push_back(resize_area(pixels, img.width, img.height, size, size));
    }
    ds.classes.push_back(std::move(entry));
  }
  return ds;
}

ClassDataset load_dataset(const fs::path& path, std::size_t image_size) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return load_image_class_tree(path, image_size);
  if (!fs::exists(path, ec)) throw DataError("dataset path not found: " + path.string());
  return load_synthetic(path);
}

}  // namespace matchkit
