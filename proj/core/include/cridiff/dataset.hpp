#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cridiff/image.hpp"
#include "cridiff/phantom.hpp"

namespace cridiff::data {

enum class Split { Train, Val, Test };

const char* to_string(Split split) noexcept;
Split split_from_string(const std::string& name);

struct CaseEntry {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path mask;
  Split split = Split::Train;
};

/// Fractions for (train, val, test).
using SplitFractions = std::array<double, 3>;

struct DatasetManifest {
  std::vector<CaseEntry> cases;
  std::uint64_t seed = 0;
  SplitFractions fractions{1.0, 0.0, 0.0};

  std::vector<CaseEntry> select(Split split) const;
};

/// Pairs `root/images/<stem>.png` with `root/masks/<stem>.png`, sorted by stem.
/// Every case starts in the train split.
DatasetManifest load_dataset(const std::filesystem::path& root);

/// Per-split counts: floor(f_k * n) each, then the remainder goes one at a
/// time to the largest fractional parts (ties to the earlier split).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& fractions);

/// Deterministic shuffled assignment of splits.
DatasetManifest split_manifest(DatasetManifest manifest, const SplitFractions& fractions,
                               std::uint64_t seed);

/// Plain-text listing: a `#` header with seed and fractions, then one
/// tab-separated line per case: split, stem, image path, mask path.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct LoadedCase {
  std::string stem;
  GrayImage image;
  Mask mask;
};

/// Reads image and mask, checking that their sizes agree.
LoadedCase load_case(const CaseEntry& entry);

/// Writes `count` phantoms under root/images and root/masks (stems
/// `phantom_0000`, ...), item i drawn from substream_seed(seed, i).
DatasetManifest generate_dataset(const std::filesystem::path& root, const PhantomSpec& spec,
                                 int count, std::uint64_t seed);

}  // namespace cridiff::data
