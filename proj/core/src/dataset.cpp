#include "cridiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cridiff/png_io.hpp"

namespace cridiff::data {

namespace fs = std::filesystem;

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<CaseEntry> DatasetManifest::select(Split split) const {
  std::vector<CaseEntry> out;
  std::copy_if(cases.begin(), cases.end(), std::back_inserter(out),
               [split](const CaseEntry& c) { return c.split == split; });
  return out;
}

namespace {

std::map<std::string, fs::path> pngs_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& root) {
  const auto images = pngs_by_stem(root / "images");
  const auto masks = pngs_by_stem(root / "masks");
  if (images.empty() && masks.empty()) {
    throw std::runtime_error("no pairs found under " + root.string());
  }
  DatasetManifest manifest;
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) throw std::runtime_error("unpaired image: " + path.string());
    manifest.cases.push_back({stem, path, it->second, Split::Train});
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) throw std::runtime_error("unpaired mask: " + path.string());
  }
  return manifest;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    // The tolerance keeps products like 0.7 * 10 from flooring to 6.
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = std::max(0.0, exact - static_cast<double>(counts[k]));
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-9; });  // near-ties keep index order
  for (std::size_t i = 0; assigned < n; i = (i + 1) % 3) {
    if (fractions[order[i]] == 0.0) continue;
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

DatasetManifest split_manifest(DatasetManifest manifest, const SplitFractions& fractions,
                               std::uint64_t seed) {
  const std::size_t nonzero =
      static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0.0; }));
  if (manifest.cases.size() < nonzero) {
    throw std::invalid_argument("fewer items than splits");
  }
  const auto counts = split_counts(manifest.cases.size(), fractions);

  std::vector<std::size_t> order(manifest.cases.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t pos = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      manifest.cases[order[pos++]].split = static_cast<Split>(k);
    }
  }
  manifest.seed = seed;
  manifest.fractions = fractions;
  return manifest;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  out << "# cridiff dataset manifest\n";
  out << "# seed=" << manifest.seed << "\n";
  out << "# fractions=" << manifest.fractions[0] << "," << manifest.fractions[1] << ","
      << manifest.fractions[2] << "\n";
  for (const auto& c : manifest.cases) {
    out << to_string(c.split) << '\t' << c.stem << '\t' << c.image.string() << '\t'
        << c.mask.string() << '\n';
  }
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  DatasetManifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# seed=", 0) == 0) {
        manifest.seed = std::stoull(line.substr(7));
      } else if (line.rfind("# fractions=", 0) == 0) {
        std::istringstream fr(line.substr(12));
        std::string tok;
        for (std::size_t k = 0; k < 3 && std::getline(fr, tok, ','); ++k) {
          manifest.fractions[k] = std::stod(tok);
        }
      }
      continue;
    }
    std::istringstream row(line);
    std::string split, stem, image, mask;
    if (!std::getline(row, split, '\t') || !std::getline(row, stem, '\t') ||
        !std::getline(row, image, '\t') || !std::getline(row, mask, '\t')) {
      throw std::runtime_error("malformed manifest line: " + line);
    }
    manifest.cases.push_back({stem, image, mask, split_from_string(split)});
  }
  return manifest;
}

LoadedCase load_case(const CaseEntry& entry) {
  LoadedCase out{entry.stem, png::read_gray(entry.image), png::read_mask(entry.mask)};
  if (!out.image.same_shape(out.mask)) {
    throw std::runtime_error("size mismatch between image and mask for '" + entry.stem + "'");
  }
  return out;
}

DatasetManifest generate_dataset(const fs::path& root, const PhantomSpec& spec, int count,
                                 std::uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("generate_dataset: count must be positive");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  DatasetManifest manifest;
  manifest.seed = seed;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
    const Phantom ph = generate_phantom(spec, rng);
    std::ostringstream stem;
    stem << "phantom_" << std::setw(4) << std::setfill('0') << i;
    CaseEntry entry{stem.str(), root / "images" / (stem.str() + ".png"),
                    root / "masks" / (stem.str() + ".png"), Split::Train};
    png::write_gray8(entry.image, ph.image);
    png::write_mask(entry.mask, ph.mask);
    manifest.cases.push_back(std::move(entry));
  }
  return manifest;
}

}  // namespace cridiff::data
