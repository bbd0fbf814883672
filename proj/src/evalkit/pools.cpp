// Copyright 2026 The nsart Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdio>
#include <fstream>

#include "common/fs.hpp"
#include "common/rng.hpp"
#include "evalkit/evalkit.hpp"
#include "progan/progan.hpp"
#include "symgen/symgen.hpp"

namespace nsart::evalkit {

namespace fs = std::filesystem;

namespace {

std::vector<std::pair<int, std::uint64_t>> pixel_counts(const ImageBuffer& image) {
  require(!image.empty(), ErrorKind::Parameter, "colour histogram of an empty image");
  std::array<std::uint64_t, kBinCount> raw{};
  const auto px = image.bytes();
  for (std::size_t i = 0; i + 2 < px.size(); i += 3) ++raw[ColorHistogram::bin_of({px[i], px[i + 1], px[i + 2]})];
  std::vector<std::pair<int, std::uint64_t>> out;
  for (int b = 0; b < kBinCount; ++b)
    if (raw[static_cast<std::size_t>(b)]) out.emplace_back(b, raw[static_cast<std::size_t>(b)]);
  return out;
}

ColorHistogram normalize(const std::vector<std::pair<int, std::uint64_t>>& counts) {
  std::uint64_t total = 0;
  for (const auto& [b, c] : counts) total += c;
  require(total > 0, ErrorKind::Parameter, "histogram has no pixels");
  ColorHistogram h;
  for (const auto& [b, c] : counts) {
    require(b >= 0 && b < kBinCount, ErrorKind::Format, "histogram bin out of range");
    h.bins[static_cast<std::size_t>(b)] = static_cast<double>(c) / static_cast<double>(total);
  }
  return h;
}

}  // namespace

ColorHistogram color_histogram(const ImageBuffer& image) { return normalize(pixel_counts(image)); }

double histogram_distance(const ColorHistogram& a, const ColorHistogram& b) noexcept {
  double d = 0;
  for (std::size_t i = 0; i < a.bins.size(); ++i) d += std::abs(a.bins[i] - b.bins[i]);
  return d;
}

std::string_view kind_name(PoolKind kind) noexcept {
  switch (kind) {
    case PoolKind::Symbolic: return "Symbolic";
    case PoolKind::NSG: return "NSG";
    case PoolKind::NSI: return "NSI";
  }
  return "?";
}

PoolKind parse_kind(std::string_view name) {
  if (name == "Symbolic" || name == "symbolic") return PoolKind::Symbolic;
  if (name == "NSG" || name == "nsg") return PoolKind::NSG;
  if (name == "NSI" || name == "nsi") return PoolKind::NSI;
  fail(ErrorKind::Parameter, "unknown pool kind '" + std::string(name) + "' (expected Symbolic, NSG or NSI)");
}

void Pool::add(PoolItem item, const ImageBuffer& image) {
  item.counts = pixel_counts(image);
  add(std::move(item));
}

void Pool::add(PoolItem item) {
  require(items_.empty() || item.id > items_.back().id, ErrorKind::Data,
          "pool item ids must be strictly increasing (got " + std::to_string(item.id) + ")");
  hists_.push_back(normalize(item.counts));
  items_.push_back(std::move(item));
}

std::size_t Pool::find(std::uint64_t id) const {
  const auto it = std::lower_bound(items_.begin(), items_.end(), id,
                                   [](const PoolItem& item, std::uint64_t v) { return item.id < v; });
  require(it != items_.end() && it->id == id, ErrorKind::Data,
          std::string(kind_name(kind_)) + " pool has no item " + std::to_string(id));
  return static_cast<std::size_t>(it - items_.begin());
}

fs::path Pool::image_path(std::size_t index) const {
  const fs::path p = items_.at(index).file;
  return p.is_absolute() ? p : root / p;
}

void Pool::save(const fs::path& pool_file) const {
  const fs::path dir = pool_file.parent_path();
  const bool same_root = fs::weakly_canonical(dir.empty() ? "." : dir) == fs::weakly_canonical(root.empty() ? "." : root);
  std::string out = nlohmann::json{{"format", "nsart-pool/1"}, {"kind", kind_name(kind_)}, {"count", items_.size()}}
                        .dump() +
                    "\n";
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& [b, c] : it.counts) counts.push_back({b, c});
    const std::string file = same_root ? it.file : fs::absolute(image_path(i)).lexically_normal().string();
    out += nlohmann::json{{"id", it.id}, {"file", file}, {"params", it.params}, {"colors", it.colors}, {"counts", counts}}
               .dump() +
           "\n";
  }
  if (!dir.empty()) fs::create_directories(dir);
  write_text_atomic(pool_file, out);
}

Pool Pool::load(const fs::path& pool_file) {
  const auto lines = read_lines(pool_file);
  require(!lines.empty(), ErrorKind::Format, "pool file " + pool_file.string() + " is empty");
  try {
    const auto header = nlohmann::json::parse(lines[0]);
    require(header.value("format", "") == "nsart-pool/1", ErrorKind::Format,
            "pool file " + pool_file.string() + " has no nsart-pool/1 header");
    Pool pool(parse_kind(header.at("kind").get<std::string>()));
    pool.root = pool_file.parent_path();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto j = nlohmann::json::parse(lines[i]);
      PoolItem item;
      item.id = j.at("id").get<std::uint64_t>();
      item.file = j.at("file").get<std::string>();
      item.params = j.value("params", nlohmann::json::object());
      item.colors = j.value("colors", 0);
      for (const auto& bc : j.at("counts")) item.counts.emplace_back(bc.at(0).get<int>(), bc.at(1).get<std::uint64_t>());
      pool.add(std::move(item));
    }
    require(pool.size() == header.at("count").get<std::size_t>(), ErrorKind::Format,
            "pool file " + pool_file.string() + " is truncated");
    return pool;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "pool file " + pool_file.string() + ": " + e.what());
  }
}

std::uint64_t nearest_neighbor(const ColorHistogram& query, const Pool& pool) {
  require(!pool.empty(), ErrorKind::Parameter, "nearest neighbour in an empty pool");
  const auto& hists = pool.histograms();
  std::size_t best = 0;
  double best_d = histogram_distance(query, hists[0]);
  // Ids increase with position, so keeping the first minimum breaks ties
  // towards the lowest id.
  for (std::size_t i = 1; i < hists.size(); ++i) {
    const double d = histogram_distance(query, hists[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return pool.items()[best].id;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t s = seed ^ (0xd1b54a32d192ed03ULL * (index + 1));
  return splitmix64(s);
}

Pool symbolic_pool(const fs::path& manifest, std::size_t limit) {
  const auto m = symgen::DatasetManifest::load(manifest);
  Pool pool(PoolKind::Symbolic);
  pool.root = manifest.parent_path();
  const std::size_t total = m.entries.size();
  const std::size_t n = limit == 0 ? total : std::min(limit, total);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i * total / n;
    const auto& e = m.entries[k];
    PoolItem item;
    item.id = k;
    item.file = e.file;
    item.params = {{"palette_id", e.palette_id}, {"num_colors", e.num_colors}, {"seed", e.seed}};
    item.colors = e.colors_used;
    pool.add(std::move(item), read_png(pool.root / e.file));
  }
  return pool;
}

namespace {

Pool build_generated(PoolKind kind, const progan::GanState& model, std::size_t n, std::uint64_t seed,
                     const fs::path& out_dir) {
  Pool pool(kind);
  pool.root = out_dir;
  fs::create_directories(out_dir / "images");
  const std::string prefix = kind == PoolKind::NSG ? "nsg" : "nsi";
  for (std::size_t i = 0; i < n; ++i) {
    PoolItem item;
    item.id = i;
    ImageBuffer img;
    if (kind == PoolKind::NSG) {
      const std::uint64_t s = derive_seed(seed, i);
      img = progan::sample(model, s);
      item.params = {{"seed", s}};
    } else {
      const std::uint64_t s1 = derive_seed(seed, 2 * i), s2 = derive_seed(seed, 2 * i + 1);
      img = progan::interpolate(model, s1, s2, 0.5f);
      item.params = {{"seed1", s1}, {"seed2", s2}, {"alpha", 0.5}};
    }
    char name[64];
    std::snprintf(name, sizeof name, "images/%s-%06llu.png", prefix.c_str(), static_cast<unsigned long long>(i));
    write_png(out_dir / name, img);
    item.file = name;
    pool.add(std::move(item), img);
  }
  pool.save(out_dir / kPoolFile);
  return pool;
}

}  // namespace

Pool build_nsg_pool(const progan::GanState& model, std::size_t n, std::uint64_t seed, const fs::path& out_dir) {
  return build_generated(PoolKind::NSG, model, n, seed, out_dir);
}

Pool build_nsi_pool(const progan::GanState& model, std::size_t n, std::uint64_t seed, const fs::path& out_dir) {
  return build_generated(PoolKind::NSI, model, n, seed, out_dir);
}

}  // namespace nsart::evalkit
