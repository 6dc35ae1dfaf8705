// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/errors.hpp"
#include "uq/rng.hpp"
#include "uq/tensor.hpp"

namespace uq {

// ---------------------------------------------------------------------------
// Binary tensor files.
//
// Layout: 4 magic bytes, u32 LE ndim, ndim x u32 LE dims, payload.
//   UQTB  -> little-endian f32 payload, row-major
//   UQLB  -> u8 class-id payload
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::size_t kMaxTensorDims = 8;
inline constexpr std::uint64_t kMaxTensorElems = 1ull << 31;

inline void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

// Shared header check; returns (dims, payload offset).
inline std::pair<std::vector<std::size_t>, std::size_t> parse_header(
    const std::string& bytes, const char* magic, const std::string& path) {
  if (bytes.size() < 8 ||
      std::memcmp(bytes.data(), magic, 4) != 0)
    throw MagicMismatchError(path + ": bad magic, expected " + std::string(magic, 4));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t ndim = get_u32(p + 4);
  if (ndim == 0 || ndim > kMaxTensorDims)
    throw DimOverflowError(path + ": ndim " + std::to_string(ndim) + " out of range");
  if (bytes.size() < 8 + 4ull * ndim)
    throw TruncatedFileError(path + ": header truncated, expected " +
                             std::to_string(8 + 4ull * ndim) + " bytes, got " +
                             std::to_string(bytes.size()));
  std::vector<std::size_t> dims(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(p + 8 + 4 * i);
    if (dims[i] == 0) throw DimOverflowError(path + ": zero dimension");
    count *= dims[i];
    if (count > kMaxTensorElems)
      throw DimOverflowError(path + ": element count overflows sane limits");
  }
  return {dims, 8 + 4ull * ndim};
}

}  // namespace detail

/// Serializes a tensor to the UQTB byte layout (f32 payload).
inline std::string tensor_to_bytes(const Tensor& t) {
  std::string buf("UQTB", 4);
  detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) detail::put_u32(buf, static_cast<std::uint32_t>(d));
  for (double v : t.data) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(buf, bits);
  }
  return buf;
}

inline void save_tensor(const Tensor& t, const std::string& path) {
  detail::write_file_bytes(path, tensor_to_bytes(t));
}

inline Tensor load_tensor(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  auto [dims, offset] = detail::parse_header(bytes, "UQTB", path);
  const std::size_t count = shape_product(dims);
  const std::size_t expected = offset + 4 * count;
  if (bytes.size() != expected)
    throw TruncatedFileError(path + ": expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(bytes.size()));
  Tensor t(dims);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32(p + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    t.data[i] = static_cast<double>(f);
  }
  return t;
}

inline void save_labels(const LabelField& labels, const std::string& path) {
  std::string buf("UQLB", 4);
  detail::put_u32(buf, 2);
  detail::put_u32(buf, static_cast<std::uint32_t>(labels.h));
  detail::put_u32(buf, static_cast<std::uint32_t>(labels.w));
  buf.append(reinterpret_cast<const char*>(labels.ids.data()), labels.ids.size());
  detail::write_file_bytes(path, buf);
}

inline LabelField load_labels(const std::string& path, std::size_t num_classes = 0) {
  const std::string bytes = detail::read_file_bytes(path);
  auto [dims, offset] = detail::parse_header(bytes, "UQLB", path);
  if (dims.size() != 2) throw DimOverflowError(path + ": label fields must be 2-D");
  const std::size_t count = dims[0] * dims[1];
  if (bytes.size() != offset + count)
    throw TruncatedFileError(path + ": expected " + std::to_string(offset + count) +
                             " bytes, got " + std::to_string(bytes.size()));
  LabelField labels(dims[0], dims[1]);
  std::memcpy(labels.ids.data(), bytes.data() + offset, count);
  if (num_classes > 0) check_labels_in_range(labels, num_classes);
  return labels;
}

// ---------------------------------------------------------------------------
// Synthetic three-class segmentation data: smooth background plus two
// adjacent elliptical blobs with distinct mean intensities.
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t image_size = 32;
  std::size_t num_images = 96;
  std::size_t num_classes = 3;
  double shape_scale_min = 0.16;  // fraction of image size
  double shape_scale_max = 0.26;
  double noise_level = 0.03;
  std::uint64_t seed = 0;

  void validate() const {
    if (image_size < 16) throw ValidationError("image_size must be >= 16");
    if (num_classes != 3) throw ValidationError("generator produces exactly 3 classes");
    if (num_images == 0) throw ValidationError("num_images must be >= 1");
    if (shape_scale_min <= 0 || shape_scale_max < shape_scale_min)
      throw ValidationError("bad shape scale range");
    if (noise_level < 0) throw ValidationError("noise_level must be >= 0");
  }

  std::string canonical_string() const {
    return "size=" + std::to_string(image_size) + ";n=" + std::to_string(num_images) +
           ";c=" + std::to_string(num_classes) + ";smin=" + std::to_string(shape_scale_min) +
           ";smax=" + std::to_string(shape_scale_max) + ";noise=" + std::to_string(noise_level) +
           ";seed=" + std::to_string(seed);
  }
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

struct Dataset {
  std::vector<Tensor> images;      // [1 x H x W] each
  std::vector<LabelField> labels;  // exact blob masks
};

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry, phi;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(phi), s = std::sin(phi);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace detail

/// One image: returns false if a foreground class came out empty and the
/// caller should redraw.
inline bool generate_one(const SynthConfig& cfg, std::mt19937_64& rng, Tensor& image,
                         LabelField& labels) {
  const std::size_t n = cfg.image_size;
  const double nd = static_cast<double>(n);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const double base = 0.15 + 0.15 * uni(rng);
  const double gx = -0.1 + 0.2 * uni(rng);
  const double gy = -0.1 + 0.2 * uni(rng);

  const double scale = (cfg.shape_scale_min +
                        (cfg.shape_scale_max - cfg.shape_scale_min) * uni(rng)) * nd;
  detail::Ellipse a;
  a.rx = scale * (0.8 + 0.4 * uni(rng));
  a.ry = scale * (0.8 + 0.4 * uni(rng));
  a.phi = 3.14159265358979323846 * uni(rng);
  a.cx = nd * (0.38 + 0.24 * uni(rng));
  a.cy = nd * (0.38 + 0.24 * uni(rng));

  detail::Ellipse b;
  b.rx = 0.6 * scale * (0.8 + 0.4 * uni(rng));
  b.ry = 0.6 * scale * (0.8 + 0.4 * uni(rng));
  b.phi = 3.14159265358979323846 * uni(rng);
  const double psi = 2.0 * 3.14159265358979323846 * uni(rng);
  const double gap = 0.85 * (std::max(a.rx, a.ry) + std::max(b.rx, b.ry));
  b.cx = std::clamp(a.cx + gap * std::cos(psi), 2.0, nd - 3.0);
  b.cy = std::clamp(a.cy + gap * std::sin(psi), 2.0, nd - 3.0);

  const double mu1 = 0.5 + 0.1 * uni(rng);
  const double mu2 = 0.75 + 0.1 * uni(rng);

  image = Tensor({1, n, n});
  labels = LabelField(n, n);
  std::size_t count1 = 0, count2 = 0;
  std::normal_distribution<double> noise(0.0, cfg.noise_level);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double xf = static_cast<double>(x), yf = static_cast<double>(y);
      double v = base + gx * (xf / nd - 0.5) + gy * (yf / nd - 0.5);
      std::uint8_t cls = 0;
      if (b.contains(xf, yf)) {
        cls = 2;
        v = mu2;
        ++count2;
      } else if (a.contains(xf, yf)) {
        cls = 1;
        v = mu1;
        ++count1;
      }
      if (cfg.noise_level > 0) v += noise(rng);
      image(0, y, x) = std::clamp(v, 0.0, 1.0);
      labels.at(y, x) = cls;
    }
  return count1 > 0 && count2 > 0;
}

inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.images.reserve(cfg.num_images);
  ds.labels.reserve(cfg.num_images);
  for (std::size_t i = 0; i < cfg.num_images; ++i) {
    auto rng = make_rng(derive_seed(cfg.seed, RngStream::data_gen, i));
    Tensor image;
    LabelField labels;
    int attempts = 0;
    while (!generate_one(cfg, rng, image, labels)) {
      if (++attempts > 100)
        throw NumericalError("synthetic generator failed to place blobs");
    }
    ds.images.push_back(std::move(image));
    ds.labels.push_back(std::move(labels));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits and manifests.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string image_path;  // relative to the manifest's directory
  std::string label_path;
};

struct DatasetManifest {
  std::string split_name;
  std::vector<ManifestEntry> items;
  std::string config_hash;
};

/// Seeded shuffle, then contiguous split. Disjoint and exhaustive.
inline std::array<std::vector<std::size_t>, 3> split_indices(
    std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("split fractions must sum to 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(derive_seed(seed, RngStream::data_split));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n0 = static_cast<std::size_t>(fractions[0] * static_cast<double>(n));
  const std::size_t n1 = static_cast<std::size_t>(fractions[1] * static_cast<double>(n));
  if (n0 == 0 || n1 == 0 || n0 + n1 >= n)
    throw ValidationError("split produces an empty subset");
  std::array<std::vector<std::size_t>, 3> out;
  out[0].assign(order.begin(), order.begin() + n0);
  out[1].assign(order.begin() + n0, order.begin() + n0 + n1);
  out[2].assign(order.begin() + n0 + n1, order.end());
  return out;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["split"] = m.split_name;
  j["config_hash"] = m.config_hash;
  auto items = nlohmann::json::array();
  for (const auto& e : m.items) items.push_back({{"image", e.image_path}, {"label", e.label_path}});
  j["items"] = items;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest parse failure in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.split_name = j.at("split").get<std::string>();
  m.config_hash = j.value("config_hash", "");
  for (const auto& item : j.at("items")) {
    m.items.push_back({item.at("image").get<std::string>(), item.at("label").get<std::string>()});
  }
  return m;
}

/// Writes images, labels and the three split manifests under `dir`.
inline std::array<DatasetManifest, 3> save_dataset(
    const Dataset& ds, const std::string& dir, const std::array<double, 3>& fractions,
    std::uint64_t seed, const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto splits = split_indices(ds.images.size(), fractions, seed);
  static const char* names[3] = {"train", "val", "test"};
  std::array<DatasetManifest, 3> manifests;
  for (int s = 0; s < 3; ++s) {
    manifests[s].split_name = names[s];
    manifests[s].config_hash = config_hash;
    for (std::size_t idx : splits[s]) {
      char img_name[64], lab_name[64];
      std::snprintf(img_name, sizeof img_name, "img_%04zu.uqt", idx);
      std::snprintf(lab_name, sizeof lab_name, "lab_%04zu.uql", idx);
      save_tensor(ds.images[idx], dir + "/" + img_name);
      save_labels(ds.labels[idx], dir + "/" + lab_name);
      manifests[s].items.push_back({img_name, lab_name});
    }
    save_manifest(manifests[s], dir + "/manifest_" + names[s] + ".json");
  }
  return manifests;
}

/// Loads every (image, label) pair listed in a manifest. Paths resolve
/// relative to the manifest location.
inline Dataset load_split(const std::string& manifest_path, std::size_t num_classes = 3) {
  const auto m = load_manifest(manifest_path);
  const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
  Dataset ds;
  for (const auto& e : m.items) {
    ds.images.push_back(load_tensor(dir.empty() ? e.image_path : dir + "/" + e.image_path));
    ds.labels.push_back(load_labels(dir.empty() ? e.label_path : dir + "/" + e.label_path, num_classes));
  }
  return ds;
}

}  // namespace uq
