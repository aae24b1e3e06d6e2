// Acceptance run: one PASS/FAIL line per criterion. Exits 0 when the failed
// criteria are exactly the ones listed with --known-failures (default none).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "facesync/audio.hpp"
#include "facesync/decimate.hpp"
#include "facesync/diffusion.hpp"
#include "facesync/fitting.hpp"
#include "facesync/maps.hpp"
#include "facesync/model_io.hpp"
#include "facesync/pipeline.hpp"
#include "facesync/raster.hpp"
#include "facesync/synthetic.hpp"
#include "facesync/warp.hpp"

using namespace facesync;
namespace fs = std::filesystem;

namespace {

int failures = 0;
std::vector<int> failed;

struct Check {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (cond ? "" : " [x]");
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void criterion(int id, const char* title, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(dt < limit_s, "runtime " + fmt("%.2f", dt) + " s < " + fmt("%g", limit_s) + " s");
  if (!c.ok) ++failures, failed.push_back(id);
  std::printf("%s %2d %s: %s\n", c.ok ? "PASS" : "FAIL", id, title, c.detail.c_str());
  std::fflush(stdout);
}

// --- 1 ---------------------------------------------------------------------------

void warping(Check& c) {
  const int H = 32, W = 32;
  Rng rng(1);
  Image tex(3, H, W);
  for (float& v : tex.data) v = static_cast<float>(rng.uniform());
  Image flow(2, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      flow.at(0, y, x) = static_cast<float>(2.5 * std::sin(0.3 * y) + 0.7);
      flow.at(1, y, x) = static_cast<float>(-1.5 * std::cos(0.2 * x));
    }
  const Image zeros(1, H, W, 0.0f), ones(1, H, W, 1.0f), half(1, H, W, 0.5f);
  c.require(warp_stable(tex, flow, zeros) == tex, "stable K=0 == input");
  c.require(warp_stable(tex, flow, ones) == bilinear_warp(tex, flow), "stable K=1 == warp");
  c.require(warp_unstable(tex, flow, zeros) == tex, "unstable K=0 == input");

  // Unit ramp: 0 left of column 16, 1 from column 16 on. F_raw = (2, 0).
  Image ramp(1, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) ramp.at(0, y, x) = x >= W / 2 ? 1.0f : 0.0f;
  Image shift(2, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) shift.at(0, y, x) = 2.0f;
  const Image u = warp_unstable(ramp, shift, half), s = warp_stable(ramp, shift, half);
  double diff = 0.0;
  for (std::size_t i = 0; i < u.data.size(); ++i) diff += std::abs(u.data[i] - s.data[i]);
  diff /= u.data.size();
  c.require(diff > 0.01, "K=0.5 ramp |unstable - stable| = " + fmt("%.4f", diff) + " > 0.01");
}

// --- 2 ---------------------------------------------------------------------------

struct OraclePixel {
  int face = -1;
  double bary[3] = {0, 0, 0};
};

std::int64_t snap(double v) { return std::llround(v * 256.0); }

// Brute force: every triangle against every pixel center, exact integer
// edge tests, top-left rule, nearest perspective-correct depth.
std::vector<OraclePixel> brute_force(const Vertices& s, const std::vector<Triangle>& tris, int H, int W) {
  std::vector<OraclePixel> out(static_cast<std::size_t>(H) * W);
  std::vector<double> depth(out.size(), std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < tris.size(); ++t) {
    std::int64_t X[3], Y[3];
    for (int k = 0; k < 3; ++k) X[k] = snap(s(tris[t][k], 0)), Y[k] = snap(s(tris[t][k], 1));
    const std::int64_t area = (X[1] - X[0]) * (Y[2] - Y[0]) - (Y[1] - Y[0]) * (X[2] - X[0]);
    if (area == 0) continue;
    const int sign = area > 0 ? 1 : -1;
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        const std::int64_t px = col * 256 + 128, py = row * 256 + 128;
        bool inside = true;
        std::int64_t lam[3];
        for (int k = 0; k < 3; ++k) {
          // Edge opposite vertex k, walked in positive orientation.
          int a = (k + 1) % 3, b = (k + 2) % 3;
          if (sign < 0) std::swap(a, b);
          lam[k] = (X[b] - X[a]) * (py - Y[a]) - (Y[b] - Y[a]) * (px - X[a]);
          const std::int64_t dx = X[b] - X[a], dy = Y[b] - Y[a];
          const bool top_left = dy < 0 || (dy == 0 && dx > 0);
          if (lam[k] < 0 || (lam[k] == 0 && !top_left)) inside = false;
        }
        if (!inside) continue;
        double w[3], sum = 0.0;
        for (int k = 0; k < 3; ++k) {
          w[k] = static_cast<double>(lam[k]) / static_cast<double>(std::abs(area)) / s(tris[t][k], 2);
          sum += w[k];
        }
        const double z = 1.0 / sum;
        const std::size_t p = static_cast<std::size_t>(row) * W + col;
        if (!(z < depth[p])) continue;
        depth[p] = z;
        out[p].face = static_cast<int>(t);
        for (int k = 0; k < 3; ++k) out[p].bary[k] = w[k] / sum;
      }
  }
  return out;
}

void rasterizer(Check& c) {
  const int H = 128, W = 128;
  Rng rng(2);
  int coverage_mismatch = 0;
  double bary_err = 0.0;
  long covered = 0;
  for (int m = 0; m < 100; ++m) {
    const int n = 1 + static_cast<int>(rng.index(200));
    Vertices s(3 * n, 3);
    std::vector<Triangle> tris;
    for (int t = 0; t < n; ++t) {
      const double cx = rng.uniform(-10, 138), cy = rng.uniform(-10, 138), r = rng.uniform(2, 40);
      for (int k = 0; k < 3; ++k) {
        // Every fourth mesh has vertices on pixel centers to exercise ties.
        double x = cx + rng.uniform(-r, r), y = cy + rng.uniform(-r, r);
        if (m % 4 == 0) x = std::floor(x) + 0.5, y = std::floor(y) + 0.5;
        s.row(3 * t + k) << x, y, rng.uniform(2.0, 20.0);
      }
      tris.push_back({3 * t, 3 * t + 1, 3 * t + 2});
    }
    const Fragments frag = rasterize_screen(s, tris, H, W);
    const std::vector<OraclePixel> ref = brute_force(s, tris, H, W);
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        const OraclePixel& o = ref[static_cast<std::size_t>(row) * W + col];
        if (frag.face(row, col) != o.face) {
          ++coverage_mismatch;
          continue;
        }
        if (o.face < 0) continue;
        ++covered;
        for (int k = 0; k < 3; ++k) bary_err = std::max(bary_err, std::abs(frag.bary_at(row, col)[k] - o.bary[k]));
      }
  }
  c.require(coverage_mismatch == 0, "coverage mismatches " + std::to_string(coverage_mismatch) + " over " +
                                        std::to_string(covered) + " covered px");
  c.require(bary_err < 1e-12, "max barycentric diff " + fmt("%.2e", bary_err));

  // P map: grid mesh with vertices on pixel centers, random depth and
  // random facial coordinates.
  const int step = 6, nx = 19;
  Vertices s(nx * nx, 3), facial(nx * nx, 3);
  for (int j = 0; j < nx; ++j)
    for (int i = 0; i < nx; ++i) {
      s.row(j * nx + i) << 10 + step * i + 0.5, 10 + step * j + 0.5, rng.uniform(3.0, 8.0);
      facial.row(j * nx + i) << rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10);
    }
  std::vector<Triangle> tris;
  for (int j = 0; j + 1 < nx; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i;
      tris.push_back({a, a + 1, a + nx + 1});
      tris.push_back({a, a + nx + 1, a + nx});
    }
  const Fragments frag = rasterize_screen(s, tris, H, W);
  const Image P = render_P(frag, tris, facial);
  double perr = 0.0;
  int checked = 0;
  for (int j = 1; j + 1 < nx; ++j)
    for (int i = 1; i + 1 < nx; ++i) {
      const int v = j * nx + i, col = 10 + step * i, row = 10 + step * j;
      if (!frag.foreground(row, col)) {
        perr = 1e9;
        continue;
      }
      for (int k = 0; k < 3; ++k) perr = std::max(perr, std::abs(P.at(k, row, col) - facial(v, k)));
      ++checked;
    }
  c.require(perr < 1e-5, "P at " + std::to_string(checked) + " vertex pixels, max err " + fmt("%.2e", perr));
}

// --- 3 ---------------------------------------------------------------------------

void flow(Check& c, const FaceModel& rig) {
  const ProjectiveCamera cam = ProjectiveCamera::fitting_default(224);
  Rng rng(3);
  const FaceParams p = random_params(rig, rng, 0.5);
  const FlowResult same = flow_3dmm(rig, p, p, cam);
  bool zero = true;
  int fg = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      if (same.foreground.at(0, y, x) > 0.5f) {
        ++fg;
        zero = zero && same.flow.at(0, y, x) == 0.0f && same.flow.at(1, y, x) == 0.0f;
      }
  c.require(zero && fg > 1000, "identical params: zero flow on " + std::to_string(fg) + " px");

  const double dx = 3.25, dy = -1.75;
  const FlowResult moved = flow_3dmm(rig, p, p, cam, cam.shifted(dx, dy));
  double terr = 0.0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      if (moved.foreground.at(0, y, x) > 0.5f)
        terr = std::max({terr, std::abs(moved.flow.at(0, y, x) - dx), std::abs(moved.flow.at(1, y, x) - dy)});
  c.require(terr < 1e-4, "translation flow err " + fmt("%.2e", terr));

  // One triangle on the snapping grid at constant depth: barycentrics are
  // affine, so a 2x2 solve per pixel is the oracle.
  Vertices dri(3, 3), ref(3, 3);
  dri << 10.25, 12.5, 5.0, 50.75, 20.0, 5.0, 22.0, 55.125, 5.0;
  ref << 13.0, 9.5, 4.0, 48.0, 25.25, 6.0, 30.5, 50.0, 5.0;
  const std::vector<Triangle> tri{{0, 1, 2}};
  const Fragments frag = rasterize_screen(dri, tri, 64, 64);
  const Image f = flow_from_projections(frag, tri, ref, dri);
  Eigen::Matrix2d T;
  T << dri(1, 0) - dri(0, 0), dri(2, 0) - dri(0, 0), dri(1, 1) - dri(0, 1), dri(2, 1) - dri(0, 1);
  const Eigen::Matrix2d Ti = T.inverse();
  double berr = 0.0;
  int px = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!frag.foreground(y, x)) continue;
      ++px;
      const Eigen::Vector2d l = Ti * Eigen::Vector2d(x + 0.5 - dri(0, 0), y + 0.5 - dri(0, 1));
      const double b[3] = {1.0 - l[0] - l[1], l[0], l[1]};
      for (int ch = 0; ch < 2; ++ch) {
        double expect = 0.0;
        for (int k = 0; k < 3; ++k) expect += b[k] * (ref(k, ch) - dri(k, ch));
        berr = std::max(berr, std::abs(f.at(ch, y, x) - expect));
      }
    }
  c.require(berr < 1e-6 && px > 100, "single triangle (" + std::to_string(px) + " px) err " + fmt("%.2e", berr));
}

// --- 4 ---------------------------------------------------------------------------

void fitting(Check& c, const FaceModel& rig) {
  const ProjectiveCamera cam = ProjectiveCamera::fitting_default(224);
  const FitConfig cfg;
  c.require(cfg.lambda_lm == 80.0 && cfg.lambda_reg == 0.025 && cfg.lambda_constraint == 0.2 &&
                cfg.lambda_smooth == 0.025,
            "weights 80/0.025/0.2/0.025");
  double worst_rmse = 0.0, worst_cv = 0.0, worst_grad = 0.0;
  int cv_fail = 0;
  for (int s = 0; s < 20; ++s) {
    Rng rng(100 + s);
    const std::vector<FaceParams> truth = random_sequence(rig, rng, 30);
    LandmarkTrack track;
    for (int f = 0; f < 30; ++f) track.push_back(render_landmarks(rig, truth[f], cam, f));
    if (s < 2) {
      const SequenceObjective obj(rig, track, cam, cfg);
      Eigen::VectorXd x = obj.pack(truth[0].alpha, truth);
      for (int i = 0; i < x.size(); ++i) x[i] += 0.01 * rng.normal();
      for (LossTerm t : {LossTerm::kLandmark, LossTerm::kRegularizer, LossTerm::kConstraint, LossTerm::kSmoothness,
                         LossTerm::kTotal})
        worst_grad = std::max(worst_grad, gradient_check(obj, x, t, 1e-6));
      Eigen::VectorXd a1(rig.num_identity()), a2(rig.num_identity());
      for (int i = 0; i < a1.size(); ++i) a1[i] = rng.normal(), a2[i] = rng.normal();
      worst_grad = std::max(worst_grad, gradient_check_identity(a1, a2, 1e-6));
    }
    const FitResult r = fit_sequence(track, rig, cam, cfg);
    double cv = 0.0;
    for (const FaceParams& p : r.params) cv = std::max(cv, constraint_violation(p.beta));
    worst_rmse = std::max(worst_rmse, r.diagnostics.rmse);
    worst_cv = std::max(worst_cv, cv);
    if (!(cv < 1e-6)) ++cv_fail;
  }
  c.require(worst_rmse < 0.5, "max RMSE " + fmt("%.4f", worst_rmse) + " px < 0.5");
  c.require(worst_cv < 1e-6, "max constraint_violation " + fmt("%.2e", worst_cv) + " < 1e-6 (" +
                                 std::to_string(cv_fail) + "/20 sequences above)");
  c.require(worst_grad < 1e-4, "max gradient rel err " + fmt("%.2e", worst_grad) + " < 1e-4");
}

// --- 5 ---------------------------------------------------------------------------

double mirror_error(const FaceModel& m) {
  const Vertices v = m.mean_vertices();
  double e = 0.0;
  for (int i = 0; i < m.num_vertices(); ++i) {
    const int j = m.symmetry[i];
    if (j < 0 || j >= m.num_vertices() || m.symmetry[j] != i) return 1e9;
    e = std::max({e, std::abs(v(i, 0) + v(j, 0)), std::abs(v(i, 1) - v(j, 1)), std::abs(v(i, 2) - v(j, 2))});
  }
  return e;
}

void decimation(Check& c, const FaceModel& rig) {
  const char* ict = std::getenv("FACESYNC_ICT_FKT");
  if (ict && fs::exists(ict)) {
    const FaceModel m = load_model(ict);
    c.require(m.num_vertices() == 12549 && m.num_triangles() == 24852,
              "ICT asset " + std::to_string(m.num_vertices()) + " v / " + std::to_string(m.num_triangles()) + " t");
    const DecimationResult r = decimate_symmetric(m, expression_quadrics(m, 50, 1), 5099);
    c.require(r.model.num_vertices() == 5099, "ICT -> " + std::to_string(r.model.num_vertices()) + " vertices");
    c.require(r.model.num_triangles() == 9857, "ICT -> " + std::to_string(r.model.num_triangles()) + " triangles");
    c.require(mirror_error(r.model) < 1e-6, "ICT mirror err " + fmt("%.1e", mirror_error(r.model)));
    return;
  }
  c.require(true, "ICT asset not provided (FACESYNC_ICT_FKT), synthetic fallback");
  const int target = static_cast<int>(std::lround(rig.num_vertices() * 5099.0 / 12549.0));
  const DecimationResult mean_only = decimate_symmetric(rig, mean_shape_quadrics(rig), target);
  std::vector<double> e_expr, e_mean;
  bool counts = mean_only.model.num_vertices() == target;
  double sym = mirror_error(mean_only.model);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const DecimationResult r = decimate_symmetric(rig, expression_quadrics(rig, 50, seed), target);
    counts = counts && r.model.num_vertices() == target;
    sym = std::max(sym, mirror_error(r.model));
    const ExpressionQuadrics fresh = expression_quadrics(rig, 50, 1000 + seed);
    e_expr.push_back(reevaluated_error(r.plan, fresh));
    e_mean.push_back(reevaluated_error(mean_only.plan, fresh));
  }
  c.require(counts, std::to_string(rig.num_vertices()) + " -> " + std::to_string(target) + " vertices exact");
  c.require(sym < 1e-6, "mirror err " + fmt("%.1e", sym));
  std::sort(e_expr.begin(), e_expr.end());
  std::sort(e_mean.begin(), e_mean.end());
  c.require(e_expr[1] <= e_mean[1],
            "median re-evaluated error expr " + fmt("%.4g", e_expr[1]) + " <= mean-only " + fmt("%.4g", e_mean[1]));
}

// --- 6 ---------------------------------------------------------------------------

void sampler(Check& c) {
  const NoiseSchedule sched = build_schedule();
  c.require(sched.T == 1000, "T = 1000");
  const double mu = 0.3, sigma = 0.1;
  const GaussianDenoiser g(sched, mu, sigma);
  Rng rng(6);
  Clip context(kContextFrames, kNumMouthBlendshapes);
  for (int i = 0; i < context.size(); ++i) context.data()[i] = rng.normal();
  bool context_ok = true;
  for (int steps : {50, 1000}) {
    SamplerOptions o;
    o.steps = steps;
    o.guidance = 1.0;
    o.clip_lo = -1e9;
    o.clip_hi = 1e9;
    std::vector<double> v;
    for (int clip = 0; v.size() < 10000; ++clip) {
      const Clip x = sample(g, context, nullptr, nullptr, sched, o, 600 + clip);
      context_ok = context_ok && x.topRows(kContextFrames) == context;
      for (int i = kContextFrames; i < x.rows(); ++i)
        for (int d = 0; d < x.cols() && v.size() < 10000; ++d) v.push_back(x(i, d));
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    var /= v.size() - 1;
    c.require(std::abs(m - mu) < 0.05 * sigma, std::to_string(steps) + " steps: mean err " +
                                                   fmt("%.4f", std::abs(m - mu) / sigma) + " sigma");
    c.require(std::abs(var / (sigma * sigma) - 1.0) < 0.1,
              std::to_string(steps) + " steps: var ratio " + fmt("%.4f", var / (sigma * sigma)));
  }
  c.require(context_ok, "context bit-preserved");
  Clip cond(50, 35), uncond(50, 35);
  for (int i = 0; i < cond.size(); ++i) cond.data()[i] = rng.normal(), uncond.data()[i] = rng.normal();
  c.require(cfg_combine(cond, uncond, 1.0) == cond, "cfg(scale=1) == cond");
}

// --- 7 ---------------------------------------------------------------------------

void mel(Check& c) {
  Audio a;
  a.samples.resize(kClipSamples);
  for (int i = 0; i < kClipSamples; ++i) a.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * M_PI * 1000.0 * i / 16000.0));
  const MelChunks ch = mel_chunk(a);
  bool shapes = ch.chunks.size() == 50;
  for (const auto& m : ch.chunks) shapes = shapes && m.rows() == 16 && m.cols() == 80;
  c.require(shapes, std::to_string(ch.chunks.size()) + " chunks of 16x80");
  // Oracle: HTK mel centers of 80 filters over 0-8 kHz; the bin whose
  // center is closest to 1 kHz.
  const auto mel_of = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  int expect = 0;
  double best = 1e9;
  for (int b = 0; b < 80; ++b) {
    const double m = mel_of(8000.0) * (b + 1) / 81.0;
    const double hz = 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) best = std::abs(hz - 1000.0), expect = b;
  }
  int agree = 0;
  for (const auto& m : ch.chunks) {
    Eigen::Index arg;
    m.colwise().mean().maxCoeff(&arg);
    agree += arg == expect;
  }
  c.require(agree == 50, "1 kHz peak at bin " + std::to_string(expect) + " in " + std::to_string(agree) + "/50 chunks");
}

// --- 8 ---------------------------------------------------------------------------

void sync_loss_check(Check& c) {
  Rng rng(8);
  const Similarity phi = cosine_similarity(0.07);
  const auto randn = [&](int r, int d) {
    Eigen::MatrixXd m(r, d);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };
  const Eigen::MatrixXd v = randn(50, 16), a = randn(50, 16);
  c.require(sync_loss(v, a, phi) == sync_loss(a, v, phi), "symmetric (exact)");
  int wins = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd vv = randn(50, 32);
    const Eigen::MatrixXd aa = vv + 0.5 * randn(50, 32);
    std::vector<int> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 49; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    Eigen::MatrixXd ap(50, 32);
    for (int i = 0; i < 50; ++i) ap.row(i) = aa.row(perm[i]);
    wins += sync_loss(vv, aa, phi) < sync_loss(vv, ap, phi);
  }
  c.require(wins >= 18, "aligned < permuted in " + std::to_string(wins) + "/20");
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(randn(64, 64)).householderQ();
  const Eigen::MatrixXd rows = q.leftCols(50).transpose();
  const double low = sync_loss(rows, rows, cosine_similarity(0.02));
  c.require(low < 0.01, "orthonormal aligned loss at low temperature " + fmt("%.2e", low));
}

// --- 9 ---------------------------------------------------------------------------

void gaze(Check& c) {
  const double lim = 30.0 * M_PI / 180.0;
  double err = 0.0;
  for (Eye eye : {Eye::kRight, Eye::kLeft})
    for (int i = -6; i <= 6; ++i)
      for (int j = -6; j <= 6; ++j) {
        GazeAngles g;
        g.theta_h = lim * i / 6.0;
        g.theta_v = lim * j / 6.0;
        const EyeGazeWeights w = gaze_to_blendshapes(gaze_rotation(g), lim, lim, eye);
        const GazeAngles back = blendshapes_to_gaze(w, lim, lim, eye);
        err = std::max({err, std::abs(back.theta_h - g.theta_h), std::abs(back.theta_v - g.theta_v)});
      }
  c.require(err < 1e-6, "round trip err " + fmt("%.1e", err));
  const EyeGazeWeights zero = gaze_to_blendshapes(Eigen::Matrix3d::Identity(), lim, lim);
  c.require(zero == EyeGazeWeights{}, "identity -> zeros");
  GazeAngles far;
  far.theta_h = 50.0 * M_PI / 180.0;
  far.theta_v = -45.0 * M_PI / 180.0;
  const EyeGazeWeights cl = gaze_to_blendshapes(gaze_rotation(far), lim, lim, Eye::kRight);
  c.require(cl.look_in == 1.0 && cl.look_out == 0.0 && cl.look_down == 1.0 && cl.look_up == 0.0, "clamped at limits");
}

// --- 10 --------------------------------------------------------------------------

void dcl(Check& c) {
  const std::vector<FaceBox> a{{0, 100, 0, 80}, {10, 90, 5, 70}};
  c.require(delta_cl(a, a).mean == 0.0, "identical -> 0");
  const DeltaCl d = delta_cl({{0, 100, 0, 80}}, {{0, 110, 0, 80}});
  c.require(std::abs(d.mean - 0.10) < 1e-12, "hand case " + fmt("%.4f", d.mean));
  const std::vector<FaceBox> o{{12, 140, 3, 90}, {20, 133, 8, 95}}, l{{14, 151, 3, 90}, {19, 128, 9, 96}};
  const auto tf = [](std::vector<FaceBox> b, double s, double t) {
    for (FaceBox& x : b) x = {s * x.y1 + t, s * x.y2 + t, s * x.x1 + t, s * x.x2 + t};
    return b;
  };
  const DeltaCl base = delta_cl(o, l), moved = delta_cl(tf(o, 2.0, 17.0), tf(l, 2.0, 17.0));
  double inv = 0.0;
  for (std::size_t i = 0; i < base.per_frame.size(); ++i)
    inv = std::max(inv, std::abs(base.per_frame[i] - moved.per_frame[i]));
  c.require(inv < 1e-12, "scale/translation invariance " + fmt("%.1e", inv));
}

// --- 11 --------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void end_to_end(Check& c, const FaceModel& rig) {
  const fs::path root = fs::temp_directory_path() / "facesync_acceptance";
  fs::remove_all(root);
  const SyntheticScene scene = make_synthetic_scene(rig, 11, 50);
  const fs::path in = root / "input";
  fs::create_directories(in);
  save_frames(scene.frames, (in / "frames").string());
  save_boxes(scene.boxes, (in / "boxes.json").string());
  save_landmarks(scene.landmarks, (in / "landmarks.jsonl").string());
  save_wav(scene.audio, (in / "audio.wav").string());
  LipsyncJob job;
  job.frames_dir = (in / "frames").string();
  job.boxes = (in / "boxes.json").string();
  job.landmarks = (in / "landmarks.jsonl").string();
  job.audio = (in / "audio.wav").string();
  job.options.seed = 11;
  std::vector<nlohmann::json> reports;
  for (const char* run : {"run_a", "run_b"}) {
    job.output_dir = (root / run).string();
    nlohmann::json r = lipsync_run_job(job);
    r.erase("config");
    reports.push_back(r);
  }
  c.require(reports[0].at("frames") == 50, "50 frames");
  const double loc = reports[0].at("summary").at("locality_max").get<double>();
  c.require(loc < 2.0 / 255.0, "max per-frame change outside edit region " + fmt("%.5f", loc) + " < 2/255");
  bool same = reports[0] == reports[1] && slurp(root / "run_a" / "mouth.bsc") == slurp(root / "run_b" / "mouth.bsc");
  for (int f = 0; f < 50; ++f)
    same = same && slurp(root / "run_a" / "frames" / frame_name(f)) == slurp(root / "run_b" / "frames" / frame_name(f));
  c.require(same, "re-run bit-identical (frames, clip, report)");
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> known;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--known-failures") {
      std::string list = argv[i + 1];
      for (std::size_t p = 0; p < list.size();) {
        const std::size_t q = std::min(list.find(',', p), list.size());
        known.push_back(std::stoi(list.substr(p, q - p)));
        p = q + 1;
      }
    }
  std::sort(known.begin(), known.end());
  const FaceModel rig = make_synthetic_rig();
  criterion(1, "warping algebra", 1.0, warping);
  criterion(2, "rasterizer oracle", 30.0, rasterizer);
  criterion(3, "F_3DMM", 5.0, [&](Check& c) { flow(c, rig); });
  criterion(4, "fitting inverse problem", 300.0, [&](Check& c) { fitting(c, rig); });
  criterion(5, "decimation", 120.0, [&](Check& c) { decimation(c, rig); });
  criterion(6, "diffusion sampler", 60.0, sampler);
  criterion(7, "mel chunking", 5.0, mel);
  criterion(8, "sync loss", 5.0, sync_loss_check);
  criterion(9, "gaze coupling", 1.0, gaze);
  criterion(10, "delta CL", 1.0, dcl);
  criterion(11, "end-to-end lipsync-sim", 180.0, [&](Check& c) { end_to_end(c, rig); });
  std::printf("%d of 11 criteria failed\n", failures);
  if (!known.empty()) {
    std::printf("known failures:");
    for (int k : known) std::printf(" %d", k);
    std::printf(" -> %s\n", failed == known ? "as expected" : "MISMATCH");
  }
  return failed == known ? 0 : 1;
}
