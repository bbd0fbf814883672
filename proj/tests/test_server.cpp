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

#include <atomic>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "progan/progan.hpp"
#include "common/fs.hpp"
#include "server/server.hpp"
#include "symgen/symgen.hpp"
#include "test_util.hpp"

using namespace nsart;
using namespace nsart::server;
using nlohmann::json;

namespace {

std::filesystem::path write_tiny_model(const std::filesystem::path& dir) {
  progan::GanConfig c;
  c.latent_dim = 8;
  c.final_resolution = 8;
  c.channels = {8, 6};
  c.batch_schedule = {{4, 4}, {8, 4}};
  c.iters_per_stage = 4;
  c.total_iters = 8;
  c.seed = 5;
  const auto path = dir / "tiny.nsga";
  progan::save_checkpoint(path, progan::GanState::initialize(c));
  return path;
}

struct Running {
  explicit Running(ServerConfig cfg) : server([&] {
    cfg.port = 0;
    return cfg;
  }()) {
    port = server.bind();
    thread = std::thread([this] { server.serve(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
  StudioServer server;
  int port = 0;
  std::thread thread;
};

ServerConfig base_config(const testing::TempDir& dir) {
  ServerConfig cfg;
  cfg.data_dir = dir.path() / "data";
  cfg.canvas_px = 64;
  return cfg;
}

httplib::Headers session(const std::string& token) { return {{kSessionHeader, token}}; }

std::string field_of(const httplib::Result& r) { return json::parse(r->body).value("field", ""); }

PieceDescriptor symbolic(int palette, int colors, std::uint64_t seed) {
  PieceDescriptor d;
  d.kind = PieceDescriptor::Kind::Symbolic;
  d.palette_id = palette;
  d.num_colors = colors;
  d.seed = seed;
  return d;
}

}  // namespace

TEST_CASE("base64url matches RFC 4648 vectors without padding") {
  CHECK(base64url_encode("") == "");
  CHECK(base64url_encode("f") == "Zg");
  CHECK(base64url_encode("fo") == "Zm8");
  CHECK(base64url_encode("foo") == "Zm9v");
  CHECK(base64url_encode("foobar") == "Zm9vYmFy");
  CHECK(base64url_encode("\xfb\xff") == "-_8");
  CHECK(base64url_decode("Zm9vYg").value() == "foob");
  CHECK(base64url_decode("-_8").value() == "\xfb\xff");
  CHECK_FALSE(base64url_decode("Zm9v=").has_value());
  CHECK_FALSE(base64url_decode("Z").has_value());
  CHECK_FALSE(base64url_decode("Zh").has_value());  // non-zero trailing bits
  CHECK_FALSE(base64url_decode("Zm+v").has_value());
}

TEST_CASE("descriptors round trip through the share encoding") {
  PieceDescriptor nsi;
  nsi.kind = PieceDescriptor::Kind::NSI;
  nsi.seed1 = 3;
  nsi.seed2 = UINT64_MAX;
  nsi.alpha = 0.3f;
  PieceDescriptor nsg;
  nsg.kind = PieceDescriptor::Kind::NSG;
  nsg.seed = 1ULL << 63;
  for (const auto& d : {symbolic(2, 4, 77), nsi, nsg}) {
    const auto back = PieceDescriptor::decode(d.encode());
    REQUIRE(back.has_value());
    CHECK(*back == d);
    CHECK(back->share_path() == d.share_path());
    CHECK(PieceDescriptor::from_json(d.to_json()) == d);
  }
  CHECK(PieceDescriptor::decode(nsi.encode())->alpha == 0.3f);
  // Non-canonical spellings of the same piece are not valid share links.
  CHECK_FALSE(PieceDescriptor::decode(base64url_encode(R"({"seed":77,"kind":"symbolic","colors":4,"palette":2})")));
  CHECK_FALSE(PieceDescriptor::decode("not-a-piece"));
}

TEST_CASE("descriptor parsing is strict") {
  auto bad = [](const char* text, const char* needle) {
    try {
      PieceDescriptor::from_json(json::parse(text));
      FAIL("accepted " << text);
    } catch (const Error& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  bad(R"([1])", "object");
  bad(R"({"seed":1})", "kind");
  bad(R"({"kind":"vector","seed":1})", "kind");
  bad(R"({"kind":"nsg"})", "seed");
  bad(R"({"kind":"nsg","seed":-1})", "seed");
  bad(R"({"kind":"nsg","seed":1,"alpha":0.5})", "alpha");
  bad(R"({"kind":"symbolic","palette":0,"colors":6,"seed":1})", "colors");
  bad(R"({"kind":"symbolic","palette":"a","colors":2,"seed":1})", "palette");
  bad(R"({"kind":"nsi","seed1":1,"seed2":2,"alpha":1.5})", "alpha");
}

TEST_CASE("symbolic endpoint renders, validates and caches") {
  testing::TempDir dir("server");
  Running srv(base_config(dir));
  auto cli = srv.client();

  auto r = cli.Get("/api/symbolic?palette=3&colors=2&seed=99");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  const ImageBuffer img = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()), r->body.size()));
  symgen::SymbolicSpec spec;
  spec.palette_id = 3;
  spec.num_colors = 2;
  spec.seed = 99;
  spec.canvas_px = 64;
  CHECK(img == symgen::generate_piece(spec, symgen::PaletteTable::defaults()));

  const std::string tag = r->get_header_value("ETag");
  CHECK_FALSE(tag.empty());
  auto again = cli.Get("/api/symbolic?palette=3&colors=2&seed=99", {{"If-None-Match", tag}});
  REQUIRE(again);
  CHECK(again->status == 304);
  CHECK(again->body.empty());
  auto other = cli.Get("/api/symbolic?palette=3&colors=2&seed=100");
  CHECK(other->get_header_value("ETag") != tag);

  auto missing = cli.Get("/api/symbolic?palette=3&seed=99");
  CHECK(missing->status == 400);
  CHECK(field_of(missing) == "colors");
  auto colors = cli.Get("/api/symbolic?palette=3&colors=6&seed=99");
  CHECK(colors->status == 400);
  CHECK(field_of(colors) == "colors");
  auto palette = cli.Get("/api/symbolic?palette=9999&colors=2&seed=99");
  CHECK(palette->status == 400);
  CHECK(field_of(palette) == "palette");
  auto seed = cli.Get("/api/symbolic?palette=1&colors=2&seed=12x");
  CHECK(seed->status == 400);
  CHECK(field_of(seed) == "seed");
  CHECK(srv.server.studio().cache().size() == 2);
}

TEST_CASE("neural endpoints need a checkpoint") {
  testing::TempDir dir("server");
  Running srv(base_config(dir));
  auto cli = srv.client();
  CHECK(cli.Get("/api/neural/sample?seed=1")->status == 503);
  CHECK(cli.Get("/api/neural/interpolate?seed1=1&seed2=2&alpha=0.5")->status == 503);
  PieceDescriptor nsg;
  nsg.kind = PieceDescriptor::Kind::NSG;
  nsg.seed = 1;
  CHECK(cli.Get(nsg.share_path())->status == 503);
  CHECK(json::parse(cli.Get("/api/health")->body)["model"] == false);
}

TEST_CASE("neural endpoints serve the loaded model") {
  testing::TempDir dir("server");
  ServerConfig cfg = base_config(dir);
  cfg.checkpoint = write_tiny_model(dir.path());
  const auto state = progan::load_checkpoint(cfg.checkpoint);
  Running srv(cfg);
  auto cli = srv.client();

  auto s = cli.Get("/api/neural/sample?seed=42");
  REQUIRE(s->status == 200);
  CHECK(s->body == std::string(reinterpret_cast<const char*>(encode_png(progan::sample(state, 42)).data()),
                               encode_png(progan::sample(state, 42)).size()));
  auto a0 = cli.Get("/api/neural/interpolate?seed1=42&seed2=7&alpha=0");
  REQUIRE(a0->status == 200);
  CHECK(a0->body == s->body);
  auto a1 = cli.Get("/api/neural/interpolate?seed1=7&seed2=42&alpha=1");
  CHECK(a1->body == s->body);
  auto bad = cli.Get("/api/neural/interpolate?seed1=7&seed2=42&alpha=1.5");
  CHECK(bad->status == 400);
  CHECK(field_of(bad) == "alpha");
  CHECK(field_of(cli.Get("/api/neural/interpolate?seed1=7&alpha=0.5")) == "seed2");
  CHECK(cli.Get("/api/neural/sample?seed=-3")->status == 400);
}

TEST_CASE("share links resolve to the same image") {
  testing::TempDir dir("server");
  ServerConfig cfg = base_config(dir);
  cfg.checkpoint = write_tiny_model(dir.path());
  Running srv(cfg);
  auto cli = srv.client();

  auto direct = cli.Get("/api/symbolic?palette=4&colors=5&seed=1234");
  auto shared = cli.Get(symbolic(4, 5, 1234).share_path());
  REQUIRE(shared->status == 200);
  CHECK(shared->body == direct->body);
  CHECK(shared->get_header_value("ETag") == direct->get_header_value("ETag"));

  PieceDescriptor nsi;
  nsi.kind = PieceDescriptor::Kind::NSI;
  nsi.seed1 = 10;
  nsi.seed2 = 20;
  nsi.alpha = 0.25f;
  CHECK(cli.Get(nsi.share_path())->body == cli.Get("/api/neural/interpolate?seed1=10&seed2=20&alpha=0.25")->body);

  CHECK(cli.Get("/piece/garbage")->status == 404);
  CHECK(cli.Get(symbolic(9999, 2, 1).share_path())->status == 404);
}

TEST_CASE("gallery contract") {
  testing::TempDir dir("server");
  ServerConfig cfg = base_config(dir);
  {
    Running srv(cfg);
    auto cli = srv.client();
    CHECK(cli.Get("/api/gallery")->status == 400);
    CHECK(cli.Post("/api/gallery", symbolic(0, 1, 1).canonical(), "application/json")->status == 400);
    CHECK(cli.Get("/api/gallery", session("bad token!"))->status == 400);

    const auto empty = json::parse(cli.Get("/api/gallery", session("alice"))->body);
    CHECK(empty["pieces"].empty());
    CHECK(empty["capacity"] == 5);

    for (int i = 0; i < 5; ++i) {
      auto r = cli.Post("/api/gallery", session("alice"), symbolic(i % 5, 2, 100 + i).canonical(), "application/json");
      CHECK(r->status == 201);
    }
    auto full = cli.Post("/api/gallery", session("alice"), symbolic(0, 2, 1).canonical(), "application/json");
    CHECK_MESSAGE(full->status == 409, full->body);
    // Other sessions are independent.
    CHECK(cli.Post("/api/gallery", session("bob"), json{{"descriptor", symbolic(1, 1, 1).to_json()}}.dump(),
                   "application/json")
              ->status == 201);

    CHECK(cli.Post("/api/gallery", session("bob"), "{", "application/json")->status == 400);
    CHECK(cli.Post("/api/gallery", session("bob"), R"({"kind":"nsg"})", "application/json")->status == 400);

    CHECK(cli.Delete("/api/gallery/5", session("alice"))->status == 404);
    CHECK(cli.Delete("/api/gallery/abc", session("alice"))->status == 404);
    CHECK(cli.Delete("/api/gallery/0")->status == 400);
    auto del = cli.Delete("/api/gallery/1", session("alice"));
    REQUIRE(del->status == 200);
    const auto after = json::parse(del->body)["pieces"];
    REQUIRE(after.size() == 4);
    CHECK(after[0]["descriptor"]["seed"] == 100);
    CHECK(after[1]["descriptor"]["seed"] == 102);
    CHECK(after[1]["url"] == symbolic(2, 2, 102).share_path());
    CHECK(cli.Get(after[1]["url"].get<std::string>())->status == 200);
  }
  // Galleries survive a restart.
  Running srv(cfg);
  auto cli = srv.client();
  CHECK(json::parse(cli.Get("/api/gallery", session("alice"))->body)["pieces"].size() == 4);
  CHECK(json::parse(cli.Get("/api/gallery", session("bob"))->body)["pieces"].size() == 1);
}

TEST_CASE("concurrent gallery adds never exceed capacity") {
  testing::TempDir dir("server");
  Running srv(base_config(dir));
  std::atomic<int> created{0}, conflicts{0}, other{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 32; ++i) {
    threads.emplace_back([&, i] {
      auto cli = srv.client();
      auto r = cli.Post("/api/gallery", session("race"), symbolic(0, 3, i).canonical(), "application/json");
      if (r && r->status == 201) ++created;
      else if (r && r->status == 409) ++conflicts;
      else ++other;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(created == 5);
  CHECK(conflicts == 27);
  CHECK(other == 0);
  auto cli = srv.client();
  CHECK(json::parse(cli.Get("/api/gallery", session("race"))->body)["pieces"].size() == 5);
}

TEST_CASE("palettes endpoint lists the table") {
  testing::TempDir dir("server");
  Running srv(base_config(dir));
  auto cli = srv.client();
  auto r = cli.Get("/api/palettes");
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body) == symgen::PaletteTable::defaults().to_json());
}

TEST_CASE("static files are served when configured") {
  testing::TempDir dir("server");
  ServerConfig cfg = base_config(dir);
  cfg.static_dir = dir.path() / "www";
  std::filesystem::create_directories(cfg.static_dir);
  write_text_atomic(cfg.static_dir / "index.html", "<p>studio</p>");
  Running srv(cfg);
  auto cli = srv.client();
  auto r = cli.Get("/index.html");
  REQUIRE(r);
  CHECK(r->body == "<p>studio</p>");
}
