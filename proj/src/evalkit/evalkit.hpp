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

// Evaluation harness: colour histograms, cross-pool nearest neighbours, study
// pair construction and export, response quality control and win ratios.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common/error.hpp"
#include "common/image.hpp"
#include "json.hpp"

namespace nsart::progan {
struct GanState;
}

namespace nsart::evalkit {

inline constexpr int kBinsPerChannel = 8;
inline constexpr int kBinCount = kBinsPerChannel * kBinsPerChannel * kBinsPerChannel;
inline constexpr int kQuestionCount = 5;
inline constexpr char kPoolFile[] = "pool.jsonl";

/// Normalized 8x8x8 RGB histogram; bin index is (r/32)*64 + (g/32)*8 + b/32.
struct ColorHistogram {
  std::array<double, kBinCount> bins{};
  static int bin_of(Rgb px) noexcept { return (px[0] >> 5) * 64 + (px[1] >> 5) * 8 + (px[2] >> 5); }
};

ColorHistogram color_histogram(const ImageBuffer& image);
/// L1 distance, in [0, 2].
double histogram_distance(const ColorHistogram& a, const ColorHistogram& b) noexcept;

enum class PoolKind { Symbolic, NSG, NSI };
std::string_view kind_name(PoolKind kind) noexcept;
PoolKind parse_kind(std::string_view name);

struct PoolItem {
  std::uint64_t id = 0;
  /// Image path, relative to the pool file's directory unless absolute.
  std::string file;
  nlohmann::json params = nlohmann::json::object();
  /// Distinct colours for Symbolic items, 0 otherwise.
  int colors = 0;
  /// Raw pixel counts per bin (the histogram before normalization).
  std::vector<std::pair<int, std::uint64_t>> counts;
};

class Pool {
 public:
  explicit Pool(PoolKind kind = PoolKind::Symbolic) : kind_(kind) {}

  /// Appends an item; the histogram is computed from `image`. Ids must be
  /// strictly increasing.
  void add(PoolItem item, const ImageBuffer& image);
  /// Appends an item whose `counts` are already filled in.
  void add(PoolItem item);

  PoolKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<PoolItem>& items() const noexcept { return items_; }
  const std::vector<ColorHistogram>& histograms() const noexcept { return hists_; }
  /// Index of the item with this id.
  std::size_t find(std::uint64_t id) const;

  /// Where relative item paths are resolved from.
  std::filesystem::path root;
  std::filesystem::path image_path(std::size_t index) const;

  void save(const std::filesystem::path& pool_file) const;
  static Pool load(const std::filesystem::path& pool_file);

 private:
  PoolKind kind_;
  std::vector<PoolItem> items_;
  std::vector<ColorHistogram> hists_;
};

/// Id of the closest item by histogram_distance; ties go to the lowest id.
std::uint64_t nearest_neighbor(const ColorHistogram& query, const Pool& pool);

/// Seeds for the i-th item of a derived stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Symbolic pool over a dataset manifest (every entry, or an evenly spaced
/// subset of `limit`). Item ids are manifest positions.
Pool symbolic_pool(const std::filesystem::path& manifest, std::size_t limit = 0);
/// n generator samples with seeds derive_seed(seed, i); images are written
/// under out_dir/images and the pool to out_dir/pool.jsonl.
Pool build_nsg_pool(const progan::GanState& model, std::size_t n, std::uint64_t seed,
                    const std::filesystem::path& out_dir);
/// n midpoint interpolations between seeds derive_seed(seed, 2i) and
/// derive_seed(seed, 2i + 1).
Pool build_nsi_pool(const progan::GanState& model, std::size_t n, std::uint64_t seed,
                    const std::filesystem::path& out_dir);

struct PairMember {
  PoolKind kind = PoolKind::Symbolic;
  std::uint64_t item = 0;
  std::string file;  // absolute or relative to the pool root it came from
};

struct Pair {
  std::string id;
  PairMember left;
  PairMember right;
  std::uint64_t shuffle_seed = 0;
  /// Colour count of the Symbolic member, when there is one.
  std::optional<int> gt_colors;
  /// "left" or "right": where the Symbolic member sits.
  std::optional<std::string> qc_side;
};

struct PairSet {
  std::vector<Pair> pairs;
  const Pair* find(std::string_view id) const noexcept;
  nlohmann::json to_json() const;
  static PairSet from_json(const nlohmann::json& j);
};

/// For each pair: a fair coin picks the source pool, a uniform item is drawn
/// from it, its nearest neighbour in the other pool becomes the partner and a
/// second coin decides which one is shown on the left. Pair i draws from
/// Rng(derive_seed(seed, i)); ids are id_prefix followed by a 4-digit index.
PairSet build_pairs(const Pool& a, const Pool& b, std::size_t n_pairs, std::uint64_t seed,
                    const std::string& id_prefix = "pair-", std::size_t first_index = 0);

/// The three kind pairings of the study, in report order.
inline constexpr std::array<std::pair<PoolKind, PoolKind>, 3> kKindPairs = {{
    {PoolKind::NSG, PoolKind::Symbolic},
    {PoolKind::NSI, PoolKind::Symbolic},
    {PoolKind::NSI, PoolKind::NSG},
}};

/// per_kind_pair pairs for each entry of kKindPairs, numbered consecutively.
PairSet build_study(const Pool& symbolic, const Pool& nsg, const Pool& nsi, std::size_t per_kind_pair,
                    std::uint64_t seed);

/// Writes images/<pair>-left.png and -right.png, pairs.json (no kinds) and
/// answer_key.json (the full PairSet). Member images are read through the pool
/// of their kind.
void export_study(const PairSet& pairs, const std::filesystem::path& out_dir, const Pool& symbolic, const Pool& nsg,
                  const Pool& nsi);

enum class Side { Left, Right };

struct ColorAnswer {
  bool shaded = false;
  int count = 0;
};

struct ResponseRecord {
  std::string pair;
  std::array<Side, kQuestionCount> answers{};
  ColorAnswer colors;
  std::string comment;
  std::string worker;

  static ResponseRecord from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::vector<ResponseRecord> load_responses(const std::filesystem::path& jsonl);

enum class QcResult { Pass, Fail };

/// Colour-count check against the Symbolic member's ground truth. Pairs without
/// a Symbolic member pass (the answer carries no information). Throws
/// ErrorKind::Data for unknown pairs.
QcResult qc_check(const ResponseRecord& response, const PairSet& pairs);

struct Band {
  double lo = 0;
  double hi = 1;
};

/// 0.5 +- z * sqrt(0.25 / n), clamped to [0, 1], z the two-sided normal
/// quantile for `confidence`.
Band significance_band(std::uint64_t n, double confidence = 0.95);

struct WinCell {
  int question = 0;
  PoolKind first = PoolKind::NSG;
  PoolKind second = PoolKind::Symbolic;
  std::uint64_t wins = 0;
  std::uint64_t total = 0;
  double ratio = 0;
  std::optional<Band> band;
  bool significant() const noexcept { return band && total > 0 && (ratio > band->hi || ratio < band->lo); }
};

struct WinRatioReport {
  std::vector<WinCell> cells;  // question-major, kind pairs in kKindPairs order
  const WinCell& cell(int question, std::size_t kind_pair) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Fraction of answers preferring the first-named kind of each kind pair.
WinRatioReport win_ratio_report(std::span<const ResponseRecord> responses, const PairSet& pairs);

}  // namespace nsart::evalkit
