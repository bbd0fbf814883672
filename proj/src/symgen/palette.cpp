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

#include <set>

#include "common/error.hpp"
#include "common/fs.hpp"
#include "symgen/symgen.hpp"

namespace nsart::symgen {

using nlohmann::json;

PaletteTable::PaletteTable(std::vector<Palette> palettes) : palettes_(std::move(palettes)) {
  require(static_cast<int>(palettes_.size()) == kPaletteCount, ErrorKind::Parameter,
          "palette table must hold exactly " + std::to_string(kPaletteCount) + " palettes");
  std::set<int> ids;
  for (std::size_t i = 0; i < palettes_.size(); ++i) {
    const auto& p = palettes_[i];
    require(static_cast<int>(p.colors.size()) == kPaletteSize, ErrorKind::Parameter,
            "palette " + std::to_string(p.id) + " must hold exactly " + std::to_string(kPaletteSize) + " colors");
    require(p.id == static_cast<int>(i), ErrorKind::Parameter, "palette ids must be 0..4 in table order");
    require(ids.insert(p.id).second, ErrorKind::Parameter, "duplicate palette id " + std::to_string(p.id));
  }
}

PaletteTable PaletteTable::defaults() {
  return PaletteTable({
      {0, "reef", {{{255, 111, 89}}, {{38, 70, 83}}, {{42, 157, 143}}, {{233, 196, 106}}, {{244, 162, 97}}}},
      {1, "fjord", {{{46, 52, 64}}, {{94, 129, 172}}, {{136, 192, 208}}, {{191, 97, 106}}, {{235, 203, 139}}}},
      {2, "bauhaus", {{{221, 44, 37}}, {{29, 59, 142}}, {{247, 197, 45}}, {{24, 24, 24}}, {{0, 133, 119}}}},
      {3, "sorbet", {{{255, 154, 162}}, {{255, 218, 193}}, {{181, 234, 215}}, {{199, 206, 234}}, {{226, 240, 203}}}},
      {4, "terrain", {{{111, 78, 55}}, {{166, 123, 91}}, {{76, 100, 64}}, {{183, 65, 14}}, {{214, 173, 96}}}},
  });
}

namespace {

Rgb rgb_from_json(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 3, ErrorKind::Parameter, what + " must be an [r, g, b] triple");
  Rgb c{};
  for (std::size_t k = 0; k < 3; ++k) {
    require(j[k].is_number_integer(), ErrorKind::Parameter, what + " components must be integers");
    const int v = j[k].get<int>();
    require(v >= 0 && v <= 255, ErrorKind::Parameter, what + " components must be in 0..255");
    c[k] = static_cast<std::uint8_t>(v);
  }
  return c;
}

json rgb_to_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

}  // namespace

PaletteTable PaletteTable::from_json(const json& j) {
  try {
    std::vector<Palette> out;
    for (const auto& pj : j.at("palettes")) {
      Palette p;
      p.id = pj.at("id").get<int>();
      p.name = pj.value("name", "");
      for (const auto& cj : pj.at("colors")) p.colors.push_back(rgb_from_json(cj, "palette color"));
      out.push_back(std::move(p));
    }
    return PaletteTable(std::move(out));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("palette table: ") + e.what());
  }
}

PaletteTable PaletteTable::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

json PaletteTable::to_json() const {
  json arr = json::array();
  for (const auto& p : palettes_) {
    json colors = json::array();
    for (const auto& c : p.colors) colors.push_back(rgb_to_json(c));
    arr.push_back({{"id", p.id}, {"name", p.name}, {"colors", colors}});
  }
  return {{"palettes", arr}};
}

const Palette& PaletteTable::at(int id) const {
  require(id >= 0 && id < size(), ErrorKind::Parameter, "palette_id out of range: " + std::to_string(id));
  return palettes_[static_cast<std::size_t>(id)];
}

LayoutParams LayoutParams::defaults() {
  LayoutParams l;
  l.radius_tiers = {{0.12, 3}, {0.08, 6}, {0.055, 12}, {0.035, 25}, {0.022, 60}, {0.012, 150}};
  l.gap_fraction = 0.004;
  l.max_attempts_per_circle = 200;
  l.background = {242, 240, 234};
  return l;
}

void LayoutParams::validate() const {
  for (std::size_t i = 0; i < radius_tiers.size(); ++i) {
    const auto& t = radius_tiers[i];
    require(t.radius_fraction > 0.0 && t.radius_fraction < 0.5, ErrorKind::Parameter,
            "radius_tiers[" + std::to_string(i) + "].radius_fraction must lie in (0, 0.5)");
    require(t.max_count > 0, ErrorKind::Parameter,
            "radius_tiers[" + std::to_string(i) + "].max_count must be positive");
    if (i > 0)
      require(t.radius_fraction < radius_tiers[i - 1].radius_fraction, ErrorKind::Parameter,
              "radius_tiers must be sorted by strictly decreasing radius");
  }
  require(gap_fraction >= 0.0 && gap_fraction < 0.5, ErrorKind::Parameter, "gap_fraction must lie in [0, 0.5)");
  require(max_attempts_per_circle > 0, ErrorKind::Parameter, "max_attempts_per_circle must be positive");
}

LayoutParams LayoutParams::from_json(const json& j) {
  LayoutParams l = defaults();
  try {
    if (j.contains("radius_tiers")) {
      l.radius_tiers.clear();
      for (const auto& t : j.at("radius_tiers")) {
        require(t.is_array() && t.size() == 2, ErrorKind::Parameter,
                "radius_tiers entries must be [radius_fraction, max_count]");
        l.radius_tiers.push_back({t[0].get<double>(), t[1].get<int>()});
      }
    }
    if (j.contains("gap_fraction")) l.gap_fraction = j.at("gap_fraction").get<double>();
    if (j.contains("max_attempts_per_circle")) l.max_attempts_per_circle = j.at("max_attempts_per_circle").get<int>();
    if (j.contains("background")) l.background = rgb_from_json(j.at("background"), "background");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("layout: ") + e.what());
  }
  l.validate();
  return l;
}

json LayoutParams::to_json() const {
  json tiers = json::array();
  for (const auto& t : radius_tiers) tiers.push_back(json::array({t.radius_fraction, t.max_count}));
  return {{"radius_tiers", tiers},
          {"gap_fraction", gap_fraction},
          {"max_attempts_per_circle", max_attempts_per_circle},
          {"background", rgb_to_json(background)}};
}

}  // namespace nsart::symgen
