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

#include "server/server.hpp"

#include <charconv>
#include <cstdio>

#include "common/fs.hpp"
#include "httplib.h"

namespace nsart::server {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- descriptors -------------------------------------------------------------

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

const char* kind_tag(PieceDescriptor::Kind k) {
  switch (k) {
    case PieceDescriptor::Kind::Symbolic: return "symbolic";
    case PieceDescriptor::Kind::NSG: return "nsg";
    case PieceDescriptor::Kind::NSI: return "nsi";
  }
  return "?";
}

std::uint64_t get_u64(const json& j, const char* key) {
  const auto& v = j.at(key);
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), ErrorKind::Parameter,
          std::string("descriptor field '") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace

std::string base64url_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) | (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                            static_cast<std::uint8_t>(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    if (rest == 2) out.push_back(kAlphabet[(v >> 6) & 63]);
  }
  return out;
}

std::optional<std::string> base64url_decode(std::string_view text) {
  if (text.size() % 4 == 1) return std::nullopt;
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    const char* p = std::char_traits<char>::find(kAlphabet, 64, c);
    if (!p) return std::nullopt;
    acc = (acc << 6) | static_cast<std::uint32_t>(p - kAlphabet);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  // Leftover bits must be zero, otherwise two texts would share one payload.
  if (bits > 0 && (acc & ((1u << bits) - 1)) != 0) return std::nullopt;
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

json PieceDescriptor::to_json() const {
  switch (kind) {
    case Kind::Symbolic:
      return {{"kind", kind_tag(kind)}, {"palette", palette_id}, {"colors", num_colors}, {"seed", seed}};
    case Kind::NSG:
      return {{"kind", kind_tag(kind)}, {"seed", seed}};
    case Kind::NSI:
      return {{"kind", kind_tag(kind)}, {"seed1", seed1}, {"seed2", seed2}, {"alpha", static_cast<double>(alpha)}};
  }
  return {};
}

PieceDescriptor PieceDescriptor::from_json(const json& j) {
  require(j.is_object(), ErrorKind::Parameter, "descriptor must be a JSON object");
  require(j.contains("kind") && j.at("kind").is_string(), ErrorKind::Parameter, "descriptor field 'kind' is missing");
  const std::string kind = j.at("kind").get<std::string>();
  PieceDescriptor d;
  std::vector<std::string> fields;
  if (kind == "symbolic") {
    d.kind = Kind::Symbolic;
    fields = {"kind", "palette", "colors", "seed"};
  } else if (kind == "nsg") {
    d.kind = Kind::NSG;
    fields = {"kind", "seed"};
  } else if (kind == "nsi") {
    d.kind = Kind::NSI;
    fields = {"kind", "seed1", "seed2", "alpha"};
  } else {
    fail(ErrorKind::Parameter, "descriptor field 'kind' must be symbolic, nsg or nsi");
  }
  for (const auto& [key, value] : j.items())
    require(std::find(fields.begin(), fields.end(), key) != fields.end(), ErrorKind::Parameter,
            "descriptor field '" + key + "' does not belong to kind " + kind);
  for (const auto& f : fields)
    require(j.contains(f), ErrorKind::Parameter, "descriptor field '" + f + "' is missing");
  switch (d.kind) {
    case Kind::Symbolic: {
      const auto& p = j.at("palette");
      const auto& c = j.at("colors");
      require(p.is_number_integer() && p.get<std::int64_t>() >= 0 && p.get<std::int64_t>() < 1 << 20,
              ErrorKind::Parameter, "descriptor field 'palette' must be a palette index");
      require(c.is_number_integer() && c.get<std::int64_t>() >= 1 && c.get<std::int64_t>() <= symgen::kPaletteSize,
              ErrorKind::Parameter, "descriptor field 'colors' must be 1..5");
      d.palette_id = p.get<int>();
      d.num_colors = c.get<int>();
      d.seed = get_u64(j, "seed");
      break;
    }
    case Kind::NSG:
      d.seed = get_u64(j, "seed");
      break;
    case Kind::NSI: {
      d.seed1 = get_u64(j, "seed1");
      d.seed2 = get_u64(j, "seed2");
      const auto& a = j.at("alpha");
      require(a.is_number(), ErrorKind::Parameter, "descriptor field 'alpha' must be a number");
      const double alpha = a.get<double>();
      require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Parameter, "descriptor field 'alpha' must lie in [0, 1]");
      d.alpha = static_cast<float>(alpha);
      break;
    }
  }
  return d;
}

std::string PieceDescriptor::encode() const { return base64url_encode(canonical()); }

std::optional<PieceDescriptor> PieceDescriptor::decode(std::string_view text) {
  const auto raw = base64url_decode(text);
  if (!raw) return std::nullopt;
  try {
    const auto d = from_json(json::parse(*raw));
    if (d.encode() != text) return std::nullopt;
    return d;
  } catch (const json::exception&) {
    return std::nullopt;
  } catch (const Error&) {
    return std::nullopt;
  }
}

// ---- cache -------------------------------------------------------------------

RenderCache::Png RenderCache::get(const std::string& key) {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(key);
  if (it == index_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void RenderCache::put(const std::string& key, Png value) {
  if (capacity_ == 0) return;
  std::lock_guard lock(mutex_);
  const auto it = index_.find(key);
  if (it != index_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(value));
  index_[key] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t RenderCache::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

// ---- studio ------------------------------------------------------------------

Studio::Studio(const ServerConfig& config)
    : config_(config),
      palettes_(config.palettes.empty() ? symgen::PaletteTable::defaults() : symgen::PaletteTable::load(config.palettes)),
      cache_(config.cache_size) {
  require(config_.canvas_px >= 32, ErrorKind::Parameter, "canvas must be at least 32 pixels");
  std::string identity = palettes_.to_json().dump() + "|" + std::to_string(config_.canvas_px);
  if (!config_.checkpoint.empty()) {
    const auto bytes = read_file(config_.checkpoint);
    model_ = std::make_unique<progan::GanState>(progan::deserialize_checkpoint(bytes));
    identity += "|" + std::to_string(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
  }
  identity_ = fnv1a64(identity);
  fs::create_directories(config_.data_dir / "galleries");
}

RenderCache::Png Studio::render(const PieceDescriptor& d) {
  const std::string key = d.canonical();
  if (auto hit = cache_.get(key)) return hit;
  ImageBuffer img;
  switch (d.kind) {
    case PieceDescriptor::Kind::Symbolic: {
      require(d.palette_id >= 0 && d.palette_id < palettes_.size(), ErrorKind::Parameter,
              "palette must be 0.." + std::to_string(palettes_.size() - 1));
      symgen::SymbolicSpec spec;
      spec.palette_id = d.palette_id;
      spec.num_colors = d.num_colors;
      spec.seed = d.seed;
      spec.canvas_px = config_.canvas_px;
      img = symgen::generate_piece(spec, palettes_);
      break;
    }
    case PieceDescriptor::Kind::NSG:
      require(model_ != nullptr, ErrorKind::State, "no checkpoint loaded");
      img = progan::sample(*model_, d.seed);
      break;
    case PieceDescriptor::Kind::NSI:
      require(model_ != nullptr, ErrorKind::State, "no checkpoint loaded");
      img = progan::interpolate(*model_, d.seed1, d.seed2, d.alpha);
      break;
  }
  auto png = std::make_shared<const std::vector<std::uint8_t>>(encode_png(img));
  cache_.put(key, png);
  return png;
}

std::string Studio::etag(const PieceDescriptor& d) const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "\"%016llx\"",
                static_cast<unsigned long long>(fnv1a64(d.canonical() + "|" + std::to_string(identity_))));
  return buf;
}

bool Studio::valid_token(std::string_view token) noexcept {
  if (token.empty() || token.size() > 128) return false;
  for (char c : token)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  return true;
}

std::shared_ptr<std::mutex> Studio::session_lock(const std::string& token) {
  std::lock_guard lock(sessions_mutex_);
  auto& m = sessions_[token];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

fs::path Studio::gallery_file(const std::string& token) const {
  return config_.data_dir / "galleries" / (token + ".json");
}

std::vector<PieceDescriptor> Studio::read_gallery(const std::string& token) const {
  const auto path = gallery_file(token);
  std::vector<PieceDescriptor> out;
  if (!fs::exists(path)) return out;
  try {
    const json doc = json::parse(read_text(path));
    for (const auto& j : doc.at("pieces")) out.push_back(PieceDescriptor::from_json(j));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "gallery file " + path.string() + ": " + e.what());
  }
  return out;
}

void Studio::write_gallery(const std::string& token, const std::vector<PieceDescriptor>& pieces) const {
  json arr = json::array();
  for (const auto& p : pieces) arr.push_back(p.to_json());
  write_text_atomic(gallery_file(token), json{{"pieces", arr}}.dump() + "\n");
}

Studio::AddResult Studio::gallery_add(const std::string& token, const PieceDescriptor& d) {
  require(valid_token(token), ErrorKind::Parameter, "invalid session token");
  const auto m = session_lock(token);
  std::lock_guard lock(*m);
  auto pieces = read_gallery(token);
  if (pieces.size() >= kGalleryCapacity) return AddResult::Full;
  pieces.push_back(d);
  write_gallery(token, pieces);
  return AddResult::Added;
}

bool Studio::gallery_remove(const std::string& token, std::size_t index) {
  require(valid_token(token), ErrorKind::Parameter, "invalid session token");
  const auto m = session_lock(token);
  std::lock_guard lock(*m);
  auto pieces = read_gallery(token);
  if (index >= pieces.size()) return false;
  pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(index));
  write_gallery(token, pieces);
  return true;
}

std::vector<PieceDescriptor> Studio::gallery_list(const std::string& token) {
  require(valid_token(token), ErrorKind::Parameter, "invalid session token");
  const auto m = session_lock(token);
  std::lock_guard lock(*m);
  return read_gallery(token);
}

// ---- HTTP --------------------------------------------------------------------

namespace {

struct HttpError {
  int status;
  std::string message;
  std::string field;
};

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw HttpError{400, std::string("missing parameter '") + name + "'", name};
  return req.get_param_value(name);
}

template <typename T>
T parse_int(const httplib::Request& req, const char* name, T lo, T hi) {
  const std::string s = param(req, name);
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || v < lo || v > hi)
    throw HttpError{400, std::string("parameter '") + name + "' must be an integer in " + std::to_string(lo) + ".." +
                             std::to_string(hi),
                    name};
  return v;
}

float parse_alpha(const httplib::Request& req) {
  const std::string s = param(req, "alpha");
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !(v >= 0.0 && v <= 1.0))
    throw HttpError{400, "parameter 'alpha' must be a number in [0, 1]", "alpha"};
  return static_cast<float>(v);
}

std::string session_token(const httplib::Request& req) {
  const std::string token = req.get_header_value(kSessionHeader);
  if (token.empty()) throw HttpError{400, std::string("missing ") + kSessionHeader + " header", kSessionHeader};
  if (!Studio::valid_token(token))
    throw HttpError{400, "session token must be 1-128 characters of [A-Za-z0-9_-]", kSessionHeader};
  return token;
}

json gallery_json(const std::vector<PieceDescriptor>& pieces) {
  json arr = json::array();
  for (std::size_t i = 0; i < pieces.size(); ++i)
    arr.push_back({{"index", i}, {"descriptor", pieces[i].to_json()}, {"url", pieces[i].share_path()}});
  return {{"capacity", kGalleryCapacity}, {"pieces", arr}};
}

}  // namespace

StudioServer::StudioServer(const ServerConfig& config)
    : config_(config), studio_(config), http_(std::make_unique<httplib::Server>()) {
  routes();
}

StudioServer::~StudioServer() { stop(); }

void StudioServer::routes() {
  auto& s = *http_;
  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, e.message, e.field);
      } catch (const Error& e) {
        const int status = e.kind() == ErrorKind::State ? 503 : e.kind() == ErrorKind::Parameter ? 400 : 500;
        send_error(res, status, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };
  auto send_png = [this](const httplib::Request& req, httplib::Response& res, const PieceDescriptor& d) {
    const std::string tag = studio_.etag(d);
    res.set_header("ETag", tag);
    res.set_header("Cache-Control", "public, max-age=31536000, immutable");
    if (req.get_header_value("If-None-Match") == tag) {
      res.status = 304;
      return;
    }
    const auto png = studio_.render(d);
    res.set_content(reinterpret_cast<const char*>(png->data()), png->size(), "image/png");
  };
  auto need_model = [this] {
    if (!studio_.has_model()) throw HttpError{503, "no checkpoint loaded; start the server with --checkpoint", ""};
  };

  s.Get("/api/symbolic", guarded([this, send_png](const httplib::Request& req, httplib::Response& res) {
          PieceDescriptor d;
          d.kind = PieceDescriptor::Kind::Symbolic;
          d.palette_id = parse_int<int>(req, "palette", 0, static_cast<int>(studio_.palettes().size()) - 1);
          d.num_colors = parse_int<int>(req, "colors", 1, symgen::kPaletteSize);
          d.seed = parse_int<std::uint64_t>(req, "seed", 0, UINT64_MAX);
          send_png(req, res, d);
        }));
  s.Get("/api/neural/sample", guarded([send_png, need_model](const httplib::Request& req, httplib::Response& res) {
          need_model();
          PieceDescriptor d;
          d.kind = PieceDescriptor::Kind::NSG;
          d.seed = parse_int<std::uint64_t>(req, "seed", 0, UINT64_MAX);
          send_png(req, res, d);
        }));
  s.Get("/api/neural/interpolate",
        guarded([send_png, need_model](const httplib::Request& req, httplib::Response& res) {
          need_model();
          PieceDescriptor d;
          d.kind = PieceDescriptor::Kind::NSI;
          d.seed1 = parse_int<std::uint64_t>(req, "seed1", 0, UINT64_MAX);
          d.seed2 = parse_int<std::uint64_t>(req, "seed2", 0, UINT64_MAX);
          d.alpha = parse_alpha(req);
          send_png(req, res, d);
        }));
  s.Get(R"(/piece/([A-Za-z0-9_-]+))", guarded([this, send_png](const httplib::Request& req, httplib::Response& res) {
          const auto d = PieceDescriptor::decode(req.matches[1].str());
          if (!d) throw HttpError{404, "unknown piece", ""};
          if (d->kind == PieceDescriptor::Kind::Symbolic &&
              d->palette_id >= studio_.palettes().size())
            throw HttpError{404, "unknown piece", ""};
          if (d->kind != PieceDescriptor::Kind::Symbolic && !studio_.has_model())
            throw HttpError{503, "no checkpoint loaded", ""};
          send_png(req, res, *d);
        }));
  s.Get("/api/palettes", guarded([this](const httplib::Request&, httplib::Response& res) {
          res.set_content(studio_.palettes().to_json().dump(), "application/json");
        }));
  s.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          res.set_content(json{{"status", "ok"}, {"model", studio_.has_model()}}.dump(), "application/json");
        }));
  s.Get("/api/gallery", guarded([this](const httplib::Request& req, httplib::Response& res) {
          res.set_content(gallery_json(studio_.gallery_list(session_token(req))).dump(), "application/json");
        }));
  s.Post("/api/gallery", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string token = session_token(req);
           json body;
           try {
             body = json::parse(req.body);
           } catch (const json::exception&) {
             throw HttpError{400, "request body is not JSON", ""};
           }
           // Accept either a bare descriptor or {"descriptor": {...}}.
           const json& dj = body.is_object() && body.contains("descriptor") ? body.at("descriptor") : body;
           PieceDescriptor d;
           try {
             d = PieceDescriptor::from_json(dj);
           } catch (const Error& e) {
             throw HttpError{400, e.what(), ""};
           }
           if (d.kind == PieceDescriptor::Kind::Symbolic &&
               d.palette_id >= studio_.palettes().size())
             throw HttpError{400, "descriptor field 'palette' is out of range", "palette"};
           if (studio_.gallery_add(token, d) == Studio::AddResult::Full)
             throw HttpError{409, "gallery already holds " + std::to_string(kGalleryCapacity) + " pieces", ""};
           res.status = 201;
           res.set_content(gallery_json(studio_.gallery_list(token)).dump(), "application/json");
         }));
  s.Delete(R"(/api/gallery/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string token = session_token(req);
             std::size_t index = 0;
             const std::string s = req.matches[1].str();
             const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), index);
             if (ec != std::errc() || !studio_.gallery_remove(token, index))
               throw HttpError{404, "no gallery entry " + s, ""};
             res.set_content(gallery_json(studio_.gallery_list(token)).dump(), "application/json");
           }));
  if (!config_.static_dir.empty()) {
    require(s.set_mount_point("/", config_.static_dir.string()), ErrorKind::Io,
            "static directory " + config_.static_dir.string() + " does not exist");
  }
  if (config_.log) {
    s.set_logger([log = config_.log](const httplib::Request& req, const httplib::Response& res) {
      static std::mutex m;
      std::lock_guard lock(m);
      *log << json{{"event", "request"}, {"method", req.method}, {"path", req.path}, {"status", res.status}}.dump()
           << '\n';
    });
  }
}

int StudioServer::bind() {
  int port = config_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(config_.host);
    require(port > 0, ErrorKind::Io, "could not bind " + config_.host);
  } else {
    require(http_->bind_to_port(config_.host, port), ErrorKind::Io,
            "could not bind " + config_.host + ":" + std::to_string(port));
  }
  return port;
}

void StudioServer::serve() { http_->listen_after_bind(); }

void StudioServer::stop() {
  if (http_) http_->stop();
}

}  // namespace nsart::server
