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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Usage:
//   acceptance --work DIR --cli PATH [--only name,name]

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "common/fs.hpp"
#include "common/rng.hpp"
#include "evalkit/evalkit.hpp"
#include "httplib.h"
#include "progan/progan.hpp"
#include "server/server.hpp"
#include "symgen/symgen.hpp"
#include "tensor/grad_check.hpp"
#include "tensor/layers.hpp"

namespace fs = std::filesystem;
using namespace nsart;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// ---- pinned thresholds -------------------------------------------------------

constexpr int kGridImages = 10000;
constexpr double kDatasetSeconds = 600.0;
constexpr int kPackingSpecs = 1000;
constexpr int kShapesPerLayer = 20;
constexpr double kGradTolerance = 1e-4;
// Central-difference step. At 1e-3 the O(h^2) truncation term alone exceeds
// the tolerance wherever pixel_norm sees a small-norm pixel.
constexpr double kGradStep = 1e-5;
constexpr double kAutogradSeconds = 300.0;
constexpr std::size_t kTrainImages = 2000;
constexpr std::int64_t kTrainIters = 8000;
constexpr double kMetricDrop = 0.30;
constexpr int kMetricSamples = 64;
constexpr std::uint64_t kMetricFirstSeed = 1000;
constexpr double kTrainSeconds = 3600.0;
constexpr std::int64_t kResumeAt = 4600;  // inside the 32x32 fade
constexpr int kResumeSteps = 10;
constexpr int kNnQueries = 50;
constexpr int kNnPool = 200;
constexpr double kBandHi = 0.549;
constexpr double kBandTol = 0.001;
constexpr int kNullTrials = 1000;
constexpr int kNullResponses = 400;
constexpr double kNullCoverage = 0.93;
constexpr std::size_t kPerKindPair = 20;
constexpr int kSideDraws = 10000;
constexpr double kSideSigmas = 3.0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path cli;
  fs::path dataset;  // directory holding the 10k grid
  std::optional<progan::GanState> model;
  fs::path checkpoint;

  fs::path manifest() const { return dataset / "manifest.jsonl"; }
};

int run_cli(const Context& ctx, const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = "'" + ctx.cli.string() + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_png(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir / "images")) n += e.path().extension() == ".png";
  return n;
}

void ensure_dataset(Context& ctx) {
  if (fs::exists(ctx.manifest())) return;
  symgen::build_dataset(symgen::PaletteTable::defaults(), symgen::LayoutParams::defaults(), kGridImages / 25, 512,
                        ctx.dataset);
}

void ensure_model(Context& ctx) {
  if (ctx.model) return;
  if (fs::exists(ctx.checkpoint)) {
    ctx.model = progan::load_checkpoint(ctx.checkpoint);
  } else {
    // Training was not part of this run; criteria below still hold for
    // untrained weights.
    ctx.model = progan::GanState::initialize(progan::GanConfig::desk());
  }
}

// ---- dataset grid ------------------------------------------------------------

Outcome dataset_grid(Context& ctx) {
  const fs::path small = ctx.work / "ds-25";
  const fs::path rebuild = ctx.work / "ds-rebuild";
  fs::remove_all(ctx.dataset);
  fs::remove_all(small);
  fs::remove_all(rebuild);

  auto t0 = Clock::now();
  const int rc = run_cli(ctx, {"dataset", "build", "--per-cell", "400", "--out", ctx.dataset.string()},
                         ctx.work / "dataset-build.log");
  const double build_s = seconds_since(t0);
  const int rc_small =
      run_cli(ctx, {"dataset", "build", "--per-cell", "1", "--out", small.string()}, ctx.work / "dataset-25.log");
  if (rc != 0 || rc_small != 0) return {false, fmt("dataset build exited %d / %d", rc, rc_small)};
  const std::size_t n = count_png(ctx.dataset);
  const std::size_t n_small = count_png(small);
  const auto entries = symgen::DatasetManifest::load(ctx.manifest()).entries.size();

  const int rc_re = run_cli(ctx, {"dataset", "build", "--per-cell", "400", "--out", rebuild.string()},
                            ctx.work / "dataset-rebuild.log");
  bool identical = rc_re == 0;
  std::size_t compared = 0;
  if (identical) {
    const auto a = sorted_files(ctx.dataset);
    const auto b = sorted_files(rebuild);
    identical = a == b;
    for (std::size_t i = 0; identical && i < a.size(); ++i, ++compared)
      identical = read_file(ctx.dataset / a[i]) == read_file(rebuild / b[i]);
  }
  fs::remove_all(rebuild);
  const bool pass = n == kGridImages && entries == kGridImages && n_small == 25 && identical &&
                    build_s < kDatasetSeconds;
  return {pass, fmt("%zu PNGs (manifest %zu) in %.1f s (limit %.0f s); per-cell 1 -> %zu; rebuild %s over %zu files",
                    n, entries, build_s, kDatasetSeconds, n_small, identical ? "byte-identical" : "DIFFERS",
                    compared)};
}

// ---- packing -----------------------------------------------------------------

Outcome packing(Context&) {
  const auto table = symgen::PaletteTable::defaults();
  const int canvas = 512;
  Rng rng(20240601);
  std::size_t circles = 0, overlap = 0, containment = 0, outside = 0, order = 0;
  for (int s = 0; s < kPackingSpecs; ++s) {
    symgen::SymbolicSpec spec;
    spec.palette_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(table.size())));
    spec.num_colors = 1 + static_cast<int>(rng.below(5));
    spec.seed = rng.next();
    spec.canvas_px = canvas;
    const auto piece = symgen::compose_piece(spec, table);
    const double gap = spec.layout.gap_fraction * canvas;
    const auto& c = piece.circles;
    circles += c.size();
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].cx - c[i].r < 0 || c[i].cy - c[i].r < 0 || c[i].cx + c[i].r > canvas || c[i].cy + c[i].r > canvas)
        ++outside;
      if (i > 0 && c[i].r > c[i - 1].r) ++order;
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        const double dx = c[i].cx - c[j].cx;
        const double dy = c[i].cy - c[j].cy;
        const double dist = std::sqrt(dx * dx + dy * dy);
        if (dist < c[i].r + c[j].r + gap) ++overlap;
        if (dist + std::min(c[i].r, c[j].r) <= std::max(c[i].r, c[j].r)) ++containment;
      }
    }
  }
  const bool pass = overlap == 0 && containment == 0 && outside == 0 && order == 0 && circles > 0;
  return {pass, fmt("%d specs, %zu circles: %zu overlap, %zu containment, %zu off-canvas, %zu radius-order violations",
                    kPackingSpecs, circles, overlap, containment, outside, order)};
}

// ---- autograd ----------------------------------------------------------------

using DVar = tensor::Var<double>;
using DGraph = tensor::Graph<double>;
using DTensor = tensor::Tensor<double>;

DTensor random_tensor(Rng& rng, tensor::Shape shape, double margin = 0.0) {
  DTensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = margin > 0 ? (rng.coin() ? mag : -mag) : rng.uniform(-1.0, 1.0);
  }
  return t;
}

DVar probe_loss(DGraph& g, const DVar& y, std::uint64_t seed) {
  Rng rng(seed);
  return tensor::sum(tensor::mul(y, g.constant(random_tensor(rng, y.shape()))));
}

int dim(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Outcome autograd(Context&) {
  using namespace tensor;
  const auto t0 = Clock::now();
  Rng rng(77);
  std::map<std::string, double> worst;
  std::map<std::string, int> shapes;
  auto record = [&](const std::string& layer, const GradCheckReport& r) {
    worst[layer] = std::max(worst[layer], r.max_rel_error);
    ++shapes[layer];
  };
  for (int k = 0; k < kShapesPerLayer; ++k) {
    const std::uint64_t ps = 1000 + static_cast<std::uint64_t>(k);
    const int n = dim(rng, 1, 3), c = dim(rng, 1, 4), h = 2 * dim(rng, 1, 3), w = 2 * dim(rng, 1, 3);
    {
      const int kh = dim(rng, 1, 3), oc = dim(rng, 1, 4);
      const Conv2dGeometry geo{dim(rng, 1, 2), dim(rng, 0, kh / 2 + 1)};
      const int ih = std::max(h, kh), iw = std::max(w, kh);
      record("conv2d", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, conv2d(in[0], in[1], geo), ps); },
                                  {random_tensor(rng, {n, c, ih, iw}), random_tensor(rng, {oc, c, kh, kh})}, kGradStep));
    }
    record("upsample", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, upsample_nearest2x(in[0]), ps); },
                                  {random_tensor(rng, {n, c, h / 2, w / 2})}, kGradStep));
    record("downsample", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, downsample_avg2x(in[0]), ps); },
                                    {random_tensor(rng, {n, c, h, w})}, kGradStep));
    // Inputs kept away from the kink by more than the difference step.
    record("leaky_relu", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, leaky_relu(in[0], 0.2), ps); },
                                    {random_tensor(rng, {n, c, h, w}, 0.05)}, kGradStep));
    // Over a single channel pixel_norm is sign(x): its derivative sits below
    // the roundoff of the difference quotient, so at least two channels.
    record("pixel_norm", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, pixel_norm(in[0]), ps); },
                                    {random_tensor(rng, {n, std::max(c, 2), h, w})}, kGradStep));
    record("minibatch_stddev",
           grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, minibatch_stddev(in[0]), ps); },
                      {random_tensor(rng, {std::max(n, 2), c, h, w})}, kGradStep));
    {
      const int fin = dim(rng, 1, 8), fout = dim(rng, 1, 6);
      record("linear", grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, linear(in[0], in[1], in[2]), ps); },
                                  {random_tensor(rng, {n, fin}), random_tensor(rng, {fout, fin}), random_tensor(rng, {fout})}, kGradStep));
      const double gain = rng.coin() ? std::sqrt(2.0) : 1.0;
      record("equalized_linear",
             grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, equalized_linear(in[0], in[1], in[2], gain), ps); },
                        {random_tensor(rng, {n, fin}), random_tensor(rng, {fout, fin}), random_tensor(rng, {fout})}, kGradStep));
      const int kh = rng.coin() ? 3 : 1, oc = dim(rng, 1, 4);
      record("equalized_conv2d",
             grad_check([&](DGraph& g, const std::vector<DVar>& in) { return probe_loss(g, equalized_conv2d(in[0], in[1], in[2], gain), ps); },
                        {random_tensor(rng, {n, c, h, w}), random_tensor(rng, {oc, c, kh, kh}), random_tensor(rng, {oc})}, kGradStep));
    }
  }
  const double secs = seconds_since(t0);
  bool pass = secs < kAutogradSeconds;
  std::string detail;
  double overall = 0;
  for (const auto& [layer, err] : worst) {
    pass = pass && err < kGradTolerance && shapes[layer] >= kShapesPerLayer;
    overall = std::max(overall, err);
    if (err >= kGradTolerance) detail += fmt(" %s=%.2e", layer.c_str(), err);
  }
  return {pass, fmt("%zu layers x %d shapes, worst relative error %.2e (limit %.0e) in %.1f s (limit %.0f s)%s",
                    worst.size(), kShapesPerLayer, overall, kGradTolerance, secs, kAutogradSeconds,
                    detail.c_str())};
}

// ---- schedule ----------------------------------------------------------------

Outcome schedule(Context&) {
  const auto c = progan::GanConfig::paper_scale();
  auto res = [&](std::int64_t it) { return c.resolution(progan::resolution_schedule(it, c).stage); };
  std::vector<int> batches;
  for (int s = 0; s <= c.max_stage(); ++s) batches.push_back(c.batch_size(s));
  const bool map_ok = res(0) == 4 && res(36999) == 4 && res(37000) == 8 && res(258999) == 256 && res(259000) == 512 &&
                      res(600000) == 512;
  std::int64_t first512 = -1;
  for (std::int64_t it = 0; it <= 300000 && first512 < 0; it += 1)
    if (res(it) == 512) first512 = it;
  const bool batch_ok = batches == std::vector<int>{128, 128, 128, 64, 32, 16, 8, 4};
  std::string bs;
  for (int b : batches) bs += (bs.empty() ? "" : "/") + std::to_string(b);
  return {map_ok && batch_ok && first512 == 259000,
          fmt("8x8 at %d, 512x512 first at %lld; batches %s", res(37000) == 8 ? 37000 : -1,
              static_cast<long long>(first512), bs.c_str())};
}

// ---- desk training -----------------------------------------------------------

double nn_metric(const progan::GanState& st, const evalkit::Pool& pool) {
  double total = 0;
  for (int i = 0; i < kMetricSamples; ++i) {
    const auto h = evalkit::color_histogram(progan::sample(st, kMetricFirstSeed + static_cast<std::uint64_t>(i)));
    const auto id = evalkit::nearest_neighbor(h, pool);
    total += evalkit::histogram_distance(h, pool.histograms()[pool.find(id)]);
  }
  return total / kMetricSamples;
}

Outcome desk_training(Context& ctx) {
  ensure_dataset(ctx);
  const auto config = progan::GanConfig::desk();
  const auto t_load = Clock::now();
  const auto data = progan::TrainingSet::from_manifest(ctx.manifest(), kTrainImages, config);
  evalkit::Pool reference(evalkit::PoolKind::Symbolic);
  for (std::size_t i = 0; i < data.size(); ++i) {
    evalkit::PoolItem item;
    item.id = i;
    reference.add(item, data.final_images()[i]);
  }
  const double load_s = seconds_since(t_load);

  auto state = progan::GanState::initialize(config);
  const double init_metric = nn_metric(state, reference);

  std::vector<std::uint8_t> at_resume, after_resume;
  std::size_t steps = 0, non_finite = 0;
  std::ofstream log(ctx.work / "train.jsonl");
  progan::TrainOptions opts;
  opts.checkpoint_every = 1000;
  opts.sample_every = 1000;
  opts.checkpoint_path = ctx.checkpoint;
  opts.sample_dir = ctx.work / "train-samples";
  opts.log = &log;
  opts.on_step = [&](const progan::GanState& s, const progan::StepResult& r) {
    ++steps;
    for (double v : {r.d_loss, r.g_loss, r.gp, r.drift, r.wasserstein}) non_finite += !std::isfinite(v);
    if (s.iteration == kResumeAt) at_resume = progan::serialize_checkpoint(s);
    if (s.iteration == kResumeAt + kResumeSteps) after_resume = progan::serialize_checkpoint(s);
  };
  const auto t0 = Clock::now();
  progan::train(state, data, opts);
  const double train_s = seconds_since(t0);
  const double final_metric = nn_metric(state, reference);
  const double drop = (init_metric - final_metric) / init_metric;

  // Resume through a checkpoint file and replay the same steps.
  bool resume_ok = false;
  if (!at_resume.empty() && !after_resume.empty()) {
    const fs::path mid = ctx.work / "resume.nsga";
    write_file_atomic(mid, at_resume);
    auto resumed = progan::load_checkpoint(mid);
    for (int i = 0; i < kResumeSteps; ++i) progan::train_iteration(resumed, data);
    resume_ok = progan::serialize_checkpoint(resumed) == after_resume;
  }
  ctx.model = std::move(state);

  const bool pass = steps == static_cast<std::size_t>(kTrainIters) && non_finite == 0 && drop >= kMetricDrop &&
                    resume_ok && train_s <= kTrainSeconds;
  return {pass, fmt("%zu steps on %zu images, %zu non-finite losses; NN distance %.4f -> %.4f (drop %.1f%%, need "
                    ">= %.0f%%); resume at %lld for %d steps %s; %.0f s training (limit %.0f s) + %.0f s loading",
                    steps, data.size(), non_finite, init_metric, final_metric, 100 * drop, 100 * kMetricDrop,
                    static_cast<long long>(kResumeAt), kResumeSteps, resume_ok ? "bitwise equal" : "DIFFERS", train_s,
                    kTrainSeconds, load_s)};
}

// ---- interpolation -----------------------------------------------------------

Outcome interpolation(Context& ctx) {
  ensure_model(ctx);
  const auto& m = *ctx.model;
  const int dim_z = m.config.latent_dim;
  Rng rng(4242);
  int endpoint_bad = 0, symmetry_bad = 0, midpoint_bad = 0, checks = 0;
  for (int t = 0; t < 20; ++t) {
    const std::uint64_t s1 = rng.next(), s2 = rng.next();
    if (!(progan::interpolate(m, s1, s2, 0.0f) == progan::sample(m, s1))) ++endpoint_bad;
    if (!(progan::interpolate(m, s1, s2, 1.0f) == progan::sample(m, s2))) ++endpoint_bad;
    const auto z1 = progan::latent_from_seed(s1, dim_z);
    const auto z2 = progan::latent_from_seed(s2, dim_z);
    const auto mid = progan::interpolate_latent(z1, z2, 0.5f);
    for (int i = 0; i < dim_z; ++i) {
      const float expect = static_cast<float>((static_cast<double>(z1[i]) + static_cast<double>(z2[i])) / 2.0);
      if (mid[i] != expect) ++midpoint_bad;
    }
    // Alphas whose complement is a float, so the swapped call sees exactly 1 - alpha.
    for (int k = 0; k < 50; ++k) {
      const float alpha = k % 2 ? static_cast<float>(rng.below(1025)) / 1024.0f
                                : static_cast<float>(rng.uniform(0.5, 1.0));
      const float beta = 1.0f - alpha;
      if (static_cast<double>(beta) != 1.0 - static_cast<double>(alpha)) continue;
      ++checks;
      const auto a = progan::interpolate_latent(z1, z2, alpha);
      const auto b = progan::interpolate_latent(z2, z1, beta);
      if (a != b) ++symmetry_bad;
      if (k < 4 && !(progan::interpolate(m, s1, s2, alpha) == progan::interpolate(m, s2, s1, beta))) ++symmetry_bad;
    }
  }
  return {endpoint_bad == 0 && symmetry_bad == 0 && midpoint_bad == 0 && checks > 0,
          fmt("40 endpoint renders, %d mismatches; %d symmetric alpha pairs, %d mismatches; midpoint %d mismatched "
              "entries",
              endpoint_bad, checks, symmetry_bad, midpoint_bad)};
}

// ---- evaluation harness ------------------------------------------------------

// Independent histogram oracle: integer counts and exhaustive L1 scan.
std::array<long, 512> counts_of(const ImageBuffer& img) {
  std::array<long, 512> c{};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb p = img.at(x, y);
      ++c[(p[0] / 32) * 64 + (p[1] / 32) * 8 + p[2] / 32];
    }
  return c;
}

Outcome evaluation(Context& ctx) {
  ensure_dataset(ctx);
  ensure_model(ctx);
  const auto manifest = symgen::DatasetManifest::load(ctx.manifest());
  const fs::path root = ctx.manifest().parent_path();

  // NN against the oracle: 200 dataset images, 50 queries from elsewhere in the grid.
  Rng rng(99);
  evalkit::Pool pool(evalkit::PoolKind::Symbolic);
  std::vector<std::array<long, 512>> oracle;
  std::set<std::size_t> used;
  auto pick = [&] {
    std::size_t i;
    do i = static_cast<std::size_t>(rng.below(manifest.entries.size()));
    while (!used.insert(i).second);
    return read_png(root / manifest.entries[i].file);
  };
  for (int i = 0; i < kNnPool; ++i) {
    const auto img = pick();
    evalkit::PoolItem item;
    item.id = static_cast<std::uint64_t>(i) * 3 + 1;
    pool.add(item, img);
    oracle.push_back(counts_of(img));
  }
  int nn_bad = 0;
  for (int q = 0; q < kNnQueries; ++q) {
    const auto img = q % 2 ? pick() : progan::sample(*ctx.model, 500 + static_cast<std::uint64_t>(q));
    // Generated samples are smaller than the pool images; compare on a common
    // pixel-count scale with exact integer arithmetic.
    const auto qc = counts_of(img);
    const long qn = static_cast<long>(img.width()) * img.height();
    const long pn = 512L * 512L;
    std::size_t best = 0;
    long best_d = -1;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      long d = 0;
      for (int b = 0; b < 512; ++b) d += std::labs(qc[b] * pn - oracle[i][b] * qn);
      if (best_d < 0 || d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (evalkit::nearest_neighbor(evalkit::color_histogram(img), pool) != best * 3 + 1) ++nn_bad;
  }

  const auto band = evalkit::significance_band(400);
  const bool band_ok = std::abs(band.hi - kBandHi) <= kBandTol;

  // Null simulation: fair-coin preferences through the report.
  evalkit::PairSet null_pairs;
  for (int i = 0; i < kNullResponses; ++i) {
    evalkit::Pair p;
    p.id = fmt("n%04d", i);
    p.left = {evalkit::PoolKind::NSG, static_cast<std::uint64_t>(i), ""};
    p.right = {evalkit::PoolKind::Symbolic, static_cast<std::uint64_t>(i), ""};
    null_pairs.pairs.push_back(p);
  }
  int inside = 0;
  Rng coin(2024);
  for (int t = 0; t < kNullTrials; ++t) {
    std::vector<evalkit::ResponseRecord> responses(kNullResponses);
    for (int i = 0; i < kNullResponses; ++i) {
      responses[i].pair = null_pairs.pairs[i].id;
      for (auto& a : responses[i].answers) a = coin.coin() ? evalkit::Side::Left : evalkit::Side::Right;
      responses[i].colors = {false, 3};
    }
    const auto report = evalkit::win_ratio_report(responses, null_pairs);
    const auto& cell = report.cell(0, 0);
    inside += cell.total == kNullResponses && cell.band && !cell.significant();
  }
  const double coverage = static_cast<double>(inside) / kNullTrials;

  // Study bundle.
  const fs::path pools = ctx.work / "pools";
  const auto sym = evalkit::symbolic_pool(ctx.manifest(), kTrainImages);
  const auto nsg = evalkit::build_nsg_pool(*ctx.model, 200, 11, pools / "nsg");
  const auto nsi = evalkit::build_nsi_pool(*ctx.model, 200, 12, pools / "nsi");
  const auto study = evalkit::build_study(sym, nsg, nsi, kPerKindPair, 13);
  const fs::path bundle = ctx.work / "study";
  fs::remove_all(bundle);
  evalkit::export_study(study, bundle, sym, nsg, nsi);
  std::map<std::pair<evalkit::PoolKind, evalkit::PoolKind>, int> per_kind;
  bool files_ok = true;
  for (const auto& p : study.pairs) {
    auto key = std::minmax(p.left.kind, p.right.kind);
    ++per_kind[{key.first, key.second}];
    files_ok = files_ok && p.left.kind != p.right.kind && fs::exists(bundle / "images" / (p.id + "-left.png")) &&
               fs::exists(bundle / "images" / (p.id + "-right.png"));
  }
  const std::string public_pairs = read_text(bundle / "pairs.json");
  const bool kinds_hidden = public_pairs.find("Symbolic") == std::string::npos &&
                            public_pairs.find("NSG") == std::string::npos && fs::exists(bundle / "answer_key.json");
  bool per_kind_ok = per_kind.size() == 3;
  for (const auto& [k, v] : per_kind) per_kind_ok = per_kind_ok && v == static_cast<int>(kPerKindPair);

  const auto draws = evalkit::build_pairs(nsg, sym, kSideDraws, 14);
  int sym_left = 0;
  for (const auto& p : draws.pairs) sym_left += p.left.kind == evalkit::PoolKind::Symbolic;
  const double sigma = std::sqrt(kSideDraws * 0.25);
  const bool sides_ok = std::abs(sym_left - kSideDraws / 2.0) <= kSideSigmas * sigma;

  const bool pass = nn_bad == 0 && band_ok && coverage >= kNullCoverage && study.pairs.size() == 3 * kPerKindPair &&
                    per_kind_ok && files_ok && kinds_hidden && sides_ok;
  return {pass, fmt("NN %d/%d match oracle; band(400) hi %.4f (want %.3f +- %.3f); null inside band %.1f%% (need "
                    ">= %.0f%%); study %zu pairs, %s per pairing, files %s, kinds %s; Symbolic left %d/%d (3 sigma %.0f)",
                    kNnQueries - nn_bad, kNnQueries, band.hi, kBandHi, kBandTol, 100 * coverage,
                    100 * kNullCoverage, study.pairs.size(), per_kind_ok ? "20" : "UNEVEN", files_ok ? "ok" : "MISSING",
                    kinds_hidden ? "hidden" : "EXPOSED", sym_left, kSideDraws, kSideSigmas * sigma)};
}

// ---- QC ----------------------------------------------------------------------

Outcome qc(Context& ctx) {
  ensure_dataset(ctx);
  ensure_model(ctx);
  const auto manifest = symgen::DatasetManifest::load(ctx.manifest());
  const fs::path pools = ctx.work / "pools";
  const auto sym = evalkit::symbolic_pool(ctx.manifest(), kTrainImages);
  const auto nsg = evalkit::build_nsg_pool(*ctx.model, 200, 11, pools / "nsg");
  const auto nsi = evalkit::build_nsi_pool(*ctx.model, 200, 12, pools / "nsi");
  const auto study = evalkit::build_study(sym, nsg, nsi, kPerKindPair, 13);

  std::size_t symbolic_members = 0, truth_ok = 0;
  for (const auto& p : study.pairs) {
    const evalkit::PairMember* s = p.left.kind == evalkit::PoolKind::Symbolic    ? &p.left
                                   : p.right.kind == evalkit::PoolKind::Symbolic ? &p.right
                                                                                 : nullptr;
    if (!s) continue;
    ++symbolic_members;
    // Pool ids of a symbolic pool are manifest positions.
    if (p.gt_colors && *p.gt_colors == manifest.entries.at(s->item).colors_used &&
        p.qc_side == std::string(s == &p.left ? "left" : "right"))
      ++truth_ok;
  }

  Rng rng(31337);
  std::size_t flagged = 0, true_flags = 0, injected = 0;
  for (int worker = 0; worker < 20; ++worker) {
    for (const auto& p : study.pairs) {
      evalkit::ResponseRecord r;
      r.pair = p.id;
      r.worker = fmt("w%02d", worker);
      bool wrong = false;
      if (p.gt_colors) {
        wrong = rng.uniform() < 0.3;
        if (!wrong) {
          r.colors = {false, *p.gt_colors};
        } else if (rng.coin()) {
          r.colors = {true, 0};
        } else {
          r.colors = {false, 1 + static_cast<int>((*p.gt_colors + rng.below(4)) % 5)};
        }
      } else {
        // Nothing countable: any answer is acceptable.
        r.colors = rng.coin() ? evalkit::ColorAnswer{true, 0}
                              : evalkit::ColorAnswer{false, 1 + static_cast<int>(rng.below(5))};
      }
      injected += wrong;
      if (evalkit::qc_check(r, study) == evalkit::QcResult::Fail) {
        ++flagged;
        true_flags += wrong;
      }
    }
  }
  const double precision = flagged ? static_cast<double>(true_flags) / flagged : 0.0;
  const double recall = injected ? static_cast<double>(true_flags) / injected : 0.0;
  const bool pass = symbolic_members == 2 * kPerKindPair && truth_ok == symbolic_members && injected > 0 &&
                    precision == 1.0;
  return {pass, fmt("ground truth on %zu/%zu Symbolic members; %zu injected errors, %zu flagged, precision %.3f, "
                    "recall %.3f",
                    truth_ok, symbolic_members, injected, flagged, precision, recall)};
}

// ---- server contract ---------------------------------------------------------

struct LiveServer {
  explicit LiveServer(server::ServerConfig cfg) : srv(cfg) {
    port = srv.bind();
    thread = std::thread([this] { srv.serve(); });
  }
  ~LiveServer() {
    srv.stop();
    thread.join();
  }
  std::string get(const std::string& path, int* status = nullptr) const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    auto r = c.Get(path);
    if (status) *status = r ? r->status : -1;
    return r ? r->body : std::string();
  }
  server::StudioServer srv;
  int port = 0;
  std::thread thread;
};

Outcome server_contract(Context& ctx) {
  ensure_model(ctx);
  const fs::path ckpt = ctx.work / "server-model.nsga";
  progan::save_checkpoint(ckpt, *ctx.model);
  server::ServerConfig cfg;
  cfg.port = 0;
  cfg.checkpoint = ckpt;
  cfg.data_dir = ctx.work / "server-data";
  fs::remove_all(cfg.data_dir);
  // No static directory: nothing from the UI is built or needed.
  auto a = std::make_unique<LiveServer>(cfg);
  auto b = std::make_unique<LiveServer>(cfg);

  Rng rng(555);
  std::vector<std::pair<std::string, server::PieceDescriptor>> requests;
  for (int i = 0; i < 8; ++i) {
    server::PieceDescriptor d;
    d.kind = server::PieceDescriptor::Kind::Symbolic;
    d.palette_id = static_cast<int>(rng.below(5));
    d.num_colors = 1 + static_cast<int>(rng.below(5));
    d.seed = rng.next();
    requests.emplace_back(fmt("/api/symbolic?palette=%d&colors=%d&seed=%llu", d.palette_id, d.num_colors,
                              static_cast<unsigned long long>(d.seed)),
                          d);
    server::PieceDescriptor g;
    g.kind = server::PieceDescriptor::Kind::NSG;
    g.seed = rng.next();
    requests.emplace_back(fmt("/api/neural/sample?seed=%llu", static_cast<unsigned long long>(g.seed)), g);
    server::PieceDescriptor n;
    n.kind = server::PieceDescriptor::Kind::NSI;
    n.seed1 = rng.next();
    n.seed2 = rng.next();
    n.alpha = static_cast<float>(rng.below(101)) / 100.0f;
    requests.emplace_back(fmt("/api/neural/interpolate?seed1=%llu&seed2=%llu&alpha=%.2f",
                              static_cast<unsigned long long>(n.seed1), static_cast<unsigned long long>(n.seed2),
                              static_cast<double>(n.alpha)),
                          n);
  }
  int det_bad = 0, share_bad = 0, direct_bad = 0;
  for (const auto& [path, d] : requests) {
    int s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    const std::string first = a->get(path, &s1);
    const std::string again = a->get(path, &s2);
    const std::string other = b->get(path, &s3);
    const std::string shared = b->get(d.share_path(), &s4);
    if (s1 != 200 || s2 != 200 || s3 != 200 || first != again || first != other) ++det_bad;
    if (s4 != 200 || shared != first) ++share_bad;
    ImageBuffer expect;
    if (d.kind == server::PieceDescriptor::Kind::Symbolic) {
      symgen::SymbolicSpec spec;
      spec.palette_id = d.palette_id;
      spec.num_colors = d.num_colors;
      spec.seed = d.seed;
      expect = symgen::generate_piece(spec, symgen::PaletteTable::defaults());
    } else if (d.kind == server::PieceDescriptor::Kind::NSG) {
      expect = progan::sample(*ctx.model, d.seed);
    } else {
      expect = progan::interpolate(*ctx.model, d.seed1, d.seed2, d.alpha);
    }
    const auto png = encode_png(expect);
    if (first != std::string(png.begin(), png.end())) ++direct_bad;
  }
  int st = 0;
  const bool palettes_ok = a->get("/api/palettes", &st) == b->get("/api/palettes") && st == 200;

  std::atomic<int> created{0}, conflict{0}, other{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 32; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", a->port);
      c.set_read_timeout(60, 0);
      server::PieceDescriptor d;
      d.kind = server::PieceDescriptor::Kind::NSG;
      d.seed = static_cast<std::uint64_t>(i);
      auto r = c.Post("/api/gallery", {{server::kSessionHeader, "acceptance"}}, d.canonical(), "application/json");
      if (r && r->status == 201) ++created;
      else if (r && r->status == 409) ++conflict;
      else ++other;
    });
  }
  for (auto& t : threads) t.join();
  httplib::Client c("127.0.0.1", a->port);
  auto listed = c.Get("/api/gallery", {{server::kSessionHeader, "acceptance"}});
  const std::size_t stored = listed ? json::parse(listed->body)["pieces"].size() : 0;

  const bool pass = det_bad == 0 && share_bad == 0 && direct_bad == 0 && palettes_ok && created == 5 &&
                    conflict == 27 && other == 0 && stored == 5;
  return {pass, fmt("%zu image requests: %d nondeterministic, %d differ from direct render, %d share-URL mismatches; "
                    "32 concurrent adds -> %d created, %d conflict, %d other, %zu stored; no UI assets served",
                    requests.size(), det_bad, direct_bad, share_bad, created.load(), conflict.load(), other.load(),
                    stored)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  Context ctx;
  std::string only;
  app.add_option("--work", ctx.work, "Scratch directory")->required();
  app.add_option("--cli", ctx.cli, "nsart executable")->required()->check(CLI::ExistingFile);
  app.add_option("--only", only, "Comma-separated criteria to run");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.work);
  ctx.dataset = ctx.work / "ds";
  ctx.checkpoint = ctx.work / "desk-model.nsga";

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"dataset-grid", dataset_grid},   {"packing", packing},
      {"autograd", autograd},           {"schedule", schedule},
      {"desk-training", desk_training}, {"interpolation", interpolation},
      {"evaluation", evaluation},       {"qc", qc},
      {"server", server_contract},
  };
  std::set<std::string> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) selected.insert(item);

  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-14s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
