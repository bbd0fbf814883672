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

// HTTP studio: symbolic and neural renders, share URLs and a per-session
// favourites gallery.

#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "progan/progan.hpp"
#include "symgen/symgen.hpp"

namespace httplib {
class Server;
}

namespace nsart::server {

inline constexpr std::size_t kGalleryCapacity = 5;
inline constexpr char kSessionHeader[] = "X-Session-Token";

struct PieceDescriptor {
  enum class Kind { Symbolic, NSG, NSI };
  Kind kind = Kind::Symbolic;
  int palette_id = 0;  // Symbolic
  int num_colors = 1;  // Symbolic
  std::uint64_t seed = 0;   // Symbolic, NSG
  std::uint64_t seed1 = 0;  // NSI
  std::uint64_t seed2 = 0;  // NSI
  float alpha = 0.0f;       // NSI

  /// Only the fields of this kind, keys sorted.
  nlohmann::json to_json() const;
  /// Strict: exactly the fields of the stated kind, each in range. Palette
  /// bounds are checked by the caller, which knows the table.
  static PieceDescriptor from_json(const nlohmann::json& j);
  std::string canonical() const { return to_json().dump(); }

  /// URL-safe base64 (no padding) of the canonical JSON.
  std::string encode() const;
  /// Inverse of encode; anything that does not re-encode to `text` is rejected.
  static std::optional<PieceDescriptor> decode(std::string_view text);
  std::string share_path() const { return "/piece/" + encode(); }

  friend bool operator==(const PieceDescriptor& a, const PieceDescriptor& b) { return a.canonical() == b.canonical(); }
};

std::string base64url_encode(std::string_view bytes);
std::optional<std::string> base64url_decode(std::string_view text);
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path checkpoint;   // empty: neural endpoints answer 503
  std::filesystem::path palettes;     // empty: built-in table
  std::filesystem::path data_dir = "nsart-data";
  std::filesystem::path static_dir;   // served under / when set
  std::size_t cache_size = 256;       // rendered images kept; 0 disables
  int canvas_px = 512;
  std::ostream* log = nullptr;        // one JSON line per request
};

/// Least-recently-used map from canonical descriptor to PNG bytes.
class RenderCache {
 public:
  using Png = std::shared_ptr<const std::vector<std::uint8_t>>;
  explicit RenderCache(std::size_t capacity) : capacity_(capacity) {}
  Png get(const std::string& key);
  void put(const std::string& key, Png value);
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<std::pair<std::string, Png>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, Png>>::iterator> index_;
};

/// Transport-free core: rendering and gallery state.
class Studio {
 public:
  explicit Studio(const ServerConfig& config);

  bool has_model() const noexcept { return model_ != nullptr; }
  const symgen::PaletteTable& palettes() const noexcept { return palettes_; }
  /// Throws nsart::Error (Parameter) for out-of-range palettes and State when a
  /// neural piece is requested without a model.
  RenderCache::Png render(const PieceDescriptor& d);
  /// Strong validator for a render of `d`.
  std::string etag(const PieceDescriptor& d) const;

  enum class AddResult { Added, Full };
  AddResult gallery_add(const std::string& token, const PieceDescriptor& d);
  /// False when index is out of range.
  bool gallery_remove(const std::string& token, std::size_t index);
  std::vector<PieceDescriptor> gallery_list(const std::string& token);
  static bool valid_token(std::string_view token) noexcept;

  RenderCache& cache() noexcept { return cache_; }

 private:
  std::shared_ptr<std::mutex> session_lock(const std::string& token);
  std::filesystem::path gallery_file(const std::string& token) const;
  std::vector<PieceDescriptor> read_gallery(const std::string& token) const;
  void write_gallery(const std::string& token, const std::vector<PieceDescriptor>& pieces) const;

  ServerConfig config_;
  symgen::PaletteTable palettes_;
  std::unique_ptr<progan::GanState> model_;
  std::uint64_t identity_ = 0;  // hash of palettes and model, folded into etags
  RenderCache cache_;
  std::mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> sessions_;
};

class StudioServer {
 public:
  explicit StudioServer(const ServerConfig& config);
  ~StudioServer();
  StudioServer(const StudioServer&) = delete;
  StudioServer& operator=(const StudioServer&) = delete;

  /// Binds config.port (0 picks a free port) and returns the bound port.
  int bind();
  /// Serves until stop(); call after bind().
  void serve();
  void stop();
  Studio& studio() noexcept { return studio_; }

 private:
  void routes();
  ServerConfig config_;
  Studio studio_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace nsart::server
