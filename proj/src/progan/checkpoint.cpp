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

#include <bit>
#include <cstring>

#include "common/fs.hpp"
#include "progan/progan.hpp"

namespace nsart::progan {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'G', 'A'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) u32(std::bit_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}
  const std::uint8_t* take(std::size_t n) {
    require(n <= buf.size() - pos, ErrorKind::Format, "checkpoint truncated at byte " + std::to_string(pos));
    const auto* p = buf.data() + pos;
    pos += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  Tensor tensor(std::string& name) {
    name = str();
    const std::uint32_t rank = u32();
    require(rank >= 1 && rank <= 8, ErrorKind::Format, "checkpoint tensor " + name + " has bad rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      const std::uint32_t v = u32();
      require(v > 0 && v < (1u << 30), ErrorKind::Format, "checkpoint tensor " + name + " has bad shape");
      d = static_cast<int>(v);
      n *= v;
    }
    require(n * 4 <= buf.size() - pos, ErrorKind::Format, "checkpoint truncated inside tensor " + name);
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(u32());
    return Tensor(std::move(shape), std::move(data));
  }
  bool done() const { return pos == buf.size(); }

 private:
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;
};

struct Slot {
  Tensor* target;
  bool seen = false;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const GanState& state) {
  const auto& gp = state.generator.params();
  const auto& dp = state.discriminator.params();
  const auto& rs = state.rng.state();
  const nlohmann::json header = {
      {"config", state.config.to_json()},
      {"iteration", state.iteration},
      {"rng", {{"state", {rs[0], rs[1], rs[2], rs[3]}},
               {"has_spare", state.rng.has_spare()},
               {"spare_bits", std::bit_cast<std::uint64_t>(state.rng.spare())}}},
      {"adam_g_step", state.adam_g.step},
      {"adam_d_step", state.adam_d.step},
  };
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string js = header.dump();
  w.u64(js.size());
  w.bytes(js.data(), js.size());
  const std::size_t count = 3 * (gp.size() + dp.size());
  w.u32(static_cast<std::uint32_t>(count));
  auto emit = [&](const ParameterSet& ps, const tensor::AdamState& adam) {
    for (std::size_t i = 0; i < ps.size(); ++i) w.tensor(ps.name(i), ps.values()[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) w.tensor("adam_m/" + ps.name(i), adam.first_moment[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) w.tensor("adam_v/" + ps.name(i), adam.second_moment[i]);
  };
  emit(gp, state.adam_g);
  emit(dp, state.adam_d);
  return std::move(w.out);
}

GanState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  require(bytes.size() >= 4 && std::memcmp(r.take(4), kMagic, 4) == 0, ErrorKind::Format,
          "not a checkpoint (missing NSGA magic)");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Format,
          "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t js_len = r.u64();
  require(js_len <= bytes.size(), ErrorKind::Format, "checkpoint header length is corrupt");
  const auto* js = r.take(static_cast<std::size_t>(js_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(js, js + js_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  GanState state = GanState::initialize(GanConfig::from_json(header.at("config")));
  try {
    state.iteration = header.at("iteration").get<std::int64_t>();
    const auto s = header.at("rng").at("state").get<std::vector<std::uint64_t>>();
    require(s.size() == 4, ErrorKind::Format, "checkpoint rng state must have 4 words");
    state.rng = Rng::from_state({s[0], s[1], s[2], s[3]});
    state.rng.restore_spare(header.at("rng").at("has_spare").get<bool>(),
                            std::bit_cast<double>(header.at("rng").at("spare_bits").get<std::uint64_t>()));
    state.adam_g.step = header.at("adam_g_step").get<std::int64_t>();
    state.adam_d.step = header.at("adam_d_step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  require(state.iteration >= 0, ErrorKind::Format, "checkpoint iteration is negative");

  std::map<std::string, Slot> slots;
  auto expose = [&](ParameterSet& ps, tensor::AdamState& adam) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      slots[ps.name(i)] = {&ps.values()[i]};
      slots["adam_m/" + ps.name(i)] = {&adam.first_moment[i]};
      slots["adam_v/" + ps.name(i)] = {&adam.second_moment[i]};
    }
  };
  expose(state.generator.params(), state.adam_g);
  expose(state.discriminator.params(), state.adam_d);
  const std::uint32_t count = r.u32();
  require(count == slots.size(), ErrorKind::Format,
          "checkpoint holds " + std::to_string(count) + " tensors, config expects " + std::to_string(slots.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = r.tensor(name);
    const auto it = slots.find(name);
    require(it != slots.end(), ErrorKind::Format, "checkpoint has unexpected tensor " + name);
    require(!it->second.seen, ErrorKind::Format, "checkpoint repeats tensor " + name);
    require(t.shape() == it->second.target->shape(), ErrorKind::Format,
            "checkpoint tensor " + name + " has shape " + tensor::shape_str(t.shape()) + ", config expects " +
                tensor::shape_str(it->second.target->shape()));
    *it->second.target = std::move(t);
    it->second.seen = true;
  }
  require(r.done(), ErrorKind::Format, "checkpoint has trailing bytes");
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const GanState& state) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, serialize_checkpoint(state));
}

GanState load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace nsart::progan
