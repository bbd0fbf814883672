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

#include <boost/math/distributions/normal.hpp>

#include "common/fs.hpp"
#include "common/rng.hpp"
#include "evalkit/evalkit.hpp"

namespace nsart::evalkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json member_json(const PairMember& m) { return {{"kind", kind_name(m.kind)}, {"item", m.item}, {"file", m.file}}; }

PairMember member_from(const json& j) {
  return {parse_kind(j.at("kind").get<std::string>()), j.at("item").get<std::uint64_t>(), j.value("file", "")};
}

const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

Side parse_side(const json& j) {
  const auto s = j.get<std::string>();
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  fail(ErrorKind::Format, "answer must be \"left\" or \"right\", got \"" + s + "\"");
}

const Pool& pool_for(PoolKind kind, const Pool& symbolic, const Pool& nsg, const Pool& nsi) {
  switch (kind) {
    case PoolKind::Symbolic: return symbolic;
    case PoolKind::NSG: return nsg;
    case PoolKind::NSI: return nsi;
  }
  return symbolic;
}

}  // namespace

const Pair* PairSet::find(std::string_view id) const noexcept {
  for (const auto& p : pairs)
    if (p.id == id) return &p;
  return nullptr;
}

json PairSet::to_json() const {
  json arr = json::array();
  for (const auto& p : pairs) {
    json j = {{"id", p.id}, {"left", member_json(p.left)}, {"right", member_json(p.right)}, {"shuffle_seed", p.shuffle_seed}};
    if (p.gt_colors) j["gt_colors"] = *p.gt_colors;
    if (p.qc_side) j["qc_side"] = *p.qc_side;
    arr.push_back(std::move(j));
  }
  return {{"pairs", std::move(arr)}};
}

PairSet PairSet::from_json(const json& j) {
  PairSet set;
  try {
    for (const auto& pj : j.at("pairs")) {
      Pair p;
      p.id = pj.at("id").get<std::string>();
      p.left = member_from(pj.at("left"));
      p.right = member_from(pj.at("right"));
      p.shuffle_seed = pj.value("shuffle_seed", std::uint64_t{0});
      if (pj.contains("gt_colors")) p.gt_colors = pj.at("gt_colors").get<int>();
      if (pj.contains("qc_side")) p.qc_side = pj.at("qc_side").get<std::string>();
      set.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("pair set: ") + e.what());
  }
  return set;
}

PairSet build_pairs(const Pool& a, const Pool& b, std::size_t n_pairs, std::uint64_t seed, const std::string& id_prefix,
                    std::size_t first_index) {
  require(!a.empty(), ErrorKind::Parameter, std::string(kind_name(a.kind())) + " pool is empty");
  require(!b.empty(), ErrorKind::Parameter, std::string(kind_name(b.kind())) + " pool is empty");
  require(a.kind() != b.kind(), ErrorKind::Parameter, "pairs need two pools of different kinds");
  PairSet set;
  set.pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Pair p;
    p.shuffle_seed = derive_seed(seed, i);
    Rng rng(p.shuffle_seed);
    const bool from_a = rng.coin();
    const Pool& src = from_a ? a : b;
    const Pool& other = from_a ? b : a;
    const std::size_t idx = static_cast<std::size_t>(rng.below(src.size()));
    const std::size_t partner = other.find(nearest_neighbor(src.histograms()[idx], other));
    const PairMember ms{src.kind(), src.items()[idx].id, src.items()[idx].file};
    const PairMember mo{other.kind(), other.items()[partner].id, other.items()[partner].file};
    const PairMember& ma = from_a ? ms : mo;
    const PairMember& mb = from_a ? mo : ms;
    const bool swap = rng.coin();
    p.left = swap ? mb : ma;
    p.right = swap ? ma : mb;
    const Pool* sym = a.kind() == PoolKind::Symbolic ? &a : b.kind() == PoolKind::Symbolic ? &b : nullptr;
    if (sym) {
      const PairMember& sm = a.kind() == PoolKind::Symbolic ? ma : mb;
      p.gt_colors = sym->items()[sym->find(sm.item)].colors;
      p.qc_side = p.left.kind == PoolKind::Symbolic ? "left" : "right";
    }
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", first_index + i);
    p.id = id_prefix + id;
    set.pairs.push_back(std::move(p));
  }
  return set;
}

PairSet build_study(const Pool& symbolic, const Pool& nsg, const Pool& nsi, std::size_t per_kind_pair,
                    std::uint64_t seed) {
  require(symbolic.kind() == PoolKind::Symbolic && nsg.kind() == PoolKind::NSG && nsi.kind() == PoolKind::NSI,
          ErrorKind::Parameter, "study pools must be Symbolic, NSG and NSI");
  PairSet all;
  for (std::size_t k = 0; k < kKindPairs.size(); ++k) {
    const auto [first, second] = kKindPairs[k];
    const auto part = build_pairs(pool_for(first, symbolic, nsg, nsi), pool_for(second, symbolic, nsg, nsi),
                                  per_kind_pair, derive_seed(seed, k), "pair-", k * per_kind_pair);
    all.pairs.insert(all.pairs.end(), part.pairs.begin(), part.pairs.end());
  }
  return all;
}

void export_study(const PairSet& pairs, const fs::path& out_dir, const Pool& symbolic, const Pool& nsg,
                  const Pool& nsi) {
  fs::create_directories(out_dir / "images");
  json listing = json::array();
  for (const auto& p : pairs.pairs) {
    json entry = {{"pair", p.id}};
    for (const auto& [side, m] : {std::pair{"left", &p.left}, std::pair{"right", &p.right}}) {
      const Pool& pool = pool_for(m->kind, symbolic, nsg, nsi);
      const std::string name = "images/" + p.id + "-" + side + ".png";
      write_file_atomic(out_dir / name, read_file(pool.image_path(pool.find(m->item))));
      entry[side] = name;
    }
    listing.push_back(std::move(entry));
  }
  write_text_atomic(out_dir / "pairs.json", json{{"questions", kQuestionCount}, {"pairs", listing}}.dump(2) + "\n");
  write_text_atomic(out_dir / "answer_key.json", pairs.to_json().dump(2) + "\n");
}

ResponseRecord ResponseRecord::from_json(const json& j) {
  ResponseRecord r;
  try {
    r.pair = j.at("pair").get<std::string>();
    const auto& answers = j.at("answers");
    require(answers.is_array() && answers.size() == kQuestionCount, ErrorKind::Format,
            "response for " + r.pair + " must have " + std::to_string(kQuestionCount) + " answers");
    for (std::size_t q = 0; q < kQuestionCount; ++q) r.answers[q] = parse_side(answers[q]);
    const auto& c = j.at("colors");
    if (c.is_string()) {
      require(c.get<std::string>() == "shaded", ErrorKind::Format, "colour answer must be 1..5 or \"shaded\"");
      r.colors.shaded = true;
    } else {
      r.colors.count = c.get<int>();
      require(r.colors.count >= 1 && r.colors.count <= 5, ErrorKind::Format, "colour answer must be 1..5 or \"shaded\"");
    }
    r.comment = j.value("comment", "");
    r.worker = j.value("worker", "");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("response record: ") + e.what());
  }
  return r;
}

json ResponseRecord::to_json() const {
  json answers = json::array();
  for (Side s : this->answers) answers.push_back(side_name(s));
  json j = {{"pair", pair}, {"answers", answers}};
  if (colors.shaded)
    j["colors"] = "shaded";
  else
    j["colors"] = colors.count;
  if (!comment.empty()) j["comment"] = comment;
  if (!worker.empty()) j["worker"] = worker;
  return j;
}

std::vector<ResponseRecord> load_responses(const fs::path& jsonl) {
  std::vector<ResponseRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(jsonl)) {
    ++line_no;
    try {
      out.push_back(ResponseRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::Format, jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

QcResult qc_check(const ResponseRecord& response, const PairSet& pairs) {
  const Pair* p = pairs.find(response.pair);
  require(p != nullptr, ErrorKind::Data, "response refers to unknown pair " + response.pair);
  if (!p->gt_colors) return QcResult::Pass;
  if (response.colors.shaded) return QcResult::Fail;
  return response.colors.count == *p->gt_colors ? QcResult::Pass : QcResult::Fail;
}

Band significance_band(std::uint64_t n, double confidence) {
  require(n >= 1, ErrorKind::Parameter, "significance band needs n >= 1");
  require(confidence > 0 && confidence < 1, ErrorKind::Parameter, "confidence must lie in (0, 1)");
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 1.0 - (1.0 - confidence) / 2.0);
  const double half = z * std::sqrt(0.25 / static_cast<double>(n));
  return {std::max(0.0, 0.5 - half), std::min(1.0, 0.5 + half)};
}

const WinCell& WinRatioReport::cell(int question, std::size_t kind_pair) const {
  return cells.at(static_cast<std::size_t>(question) * kKindPairs.size() + kind_pair);
}

WinRatioReport win_ratio_report(std::span<const ResponseRecord> responses, const PairSet& pairs) {
  WinRatioReport report;
  for (int q = 0; q < kQuestionCount; ++q)
    for (const auto& [first, second] : kKindPairs) {
      WinCell c;
      c.question = q;
      c.first = first;
      c.second = second;
      report.cells.push_back(c);
    }
  for (const auto& r : responses) {
    const Pair* p = pairs.find(r.pair);
    require(p != nullptr, ErrorKind::Data, "response refers to unknown pair " + r.pair);
    std::size_t k = 0;
    for (; k < kKindPairs.size(); ++k) {
      const auto [f, s] = kKindPairs[k];
      if ((p->left.kind == f && p->right.kind == s) || (p->left.kind == s && p->right.kind == f)) break;
    }
    require(k < kKindPairs.size(), ErrorKind::Data, "pair " + p->id + " does not join two different kinds");
    for (int q = 0; q < kQuestionCount; ++q) {
      WinCell& c = report.cells[static_cast<std::size_t>(q) * kKindPairs.size() + k];
      const PoolKind preferred = r.answers[static_cast<std::size_t>(q)] == Side::Left ? p->left.kind : p->right.kind;
      c.wins += preferred == c.first ? 1 : 0;
      ++c.total;
    }
  }
  for (auto& c : report.cells) {
    if (c.total == 0) continue;
    c.ratio = static_cast<double>(c.wins) / static_cast<double>(c.total);
    c.band = significance_band(c.total);
  }
  return report;
}

json WinRatioReport::to_json() const {
  json arr = json::array();
  for (const auto& c : cells) {
    json j = {{"question", c.question + 1}, {"first", kind_name(c.first)}, {"second", kind_name(c.second)},
              {"wins", c.wins},             {"total", c.total},            {"ratio", c.ratio}};
    if (c.band) {
      j["band"] = {c.band->lo, c.band->hi};
      j["significant"] = c.significant();
    }
    arr.push_back(std::move(j));
  }
  return {{"cells", arr}};
}

std::string WinRatioReport::to_table() const {
  std::string out = "question  pairing               wins  total  ratio  band           significant\n";
  char line[160];
  for (const auto& c : cells) {
    const std::string pairing = std::string(kind_name(c.first)) + " vs " + std::string(kind_name(c.second));
    if (c.band)
      std::snprintf(line, sizeof line, "q%-8d %-20s %5llu %6llu  %.3f  [%.3f, %.3f]  %s\n", c.question + 1,
                    pairing.c_str(), static_cast<unsigned long long>(c.wins),
                    static_cast<unsigned long long>(c.total), c.ratio, c.band->lo, c.band->hi,
                    c.significant() ? "yes" : "no");
    else
      std::snprintf(line, sizeof line, "q%-8d %-20s %5llu %6llu  -      -              -\n", c.question + 1,
                    pairing.c_str(), 0ULL, 0ULL);
    out += line;
  }
  return out;
}

}  // namespace nsart::evalkit
