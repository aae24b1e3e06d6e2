#include <doctest.h>

#include <cmath>

#include "facesync/diffusion.hpp"

using namespace facesync;

namespace {

Clip random_clip(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Clip c(rows, cols);
  for (int i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
  return c;
}

// Counts the denoiser calls and records which conditions were dropped.
class CountingDenoiser : public Denoiser {
 public:
  mutable int calls = 0, audio_only = 0, style_only = 0, uncond = 0, both = 0;
  Clip predict(const DenoiserInput& in) const override {
    ++calls;
    const bool a = in.audio && !in.drop_audio, s = in.style && !in.drop_style;
    if (a && s) ++both;
    else if (a) ++audio_only;
    else if (s) ++style_only;
    else ++uncond;
    return Clip::Constant(in.noisy->rows(), in.noisy->cols(), 0.5);
  }
};

}  // namespace

TEST_CASE("linear schedule") {
  const NoiseSchedule s = build_schedule();
  CHECK(s.T == 1000);
  CHECK(s.beta.front() == doctest::Approx(1e-4));
  CHECK(s.beta.back() == doctest::Approx(0.02));
  double prod = 1.0;
  for (int n = 0; n < s.T; ++n) {
    prod *= 1.0 - s.beta[n];
    CHECK(s.alpha_bar[n] == doctest::Approx(prod));
  }
}

TEST_CASE("forward noising") {
  const NoiseSchedule s = build_schedule();
  const Clip b0 = random_clip(50, 35, 1), eps = random_clip(50, 35, 2);
  const Clip bn = add_noise(b0, s, 10, eps);
  const double a = s.alpha_bar[10];
  CHECK((bn - (std::sqrt(a) * b0 + std::sqrt(1 - a) * eps)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("guidance combination") {
  const Clip c = Clip::Constant(2, 2, 1.0), u = Clip::Constant(2, 2, 0.0);
  CHECK(cfg_combine(c, u, 1.0) == c);
  CHECK(cfg_combine(c, u, 1.2)(0, 0) == doctest::Approx(1.2));
  CHECK(cfg_combine(c, c, u, 1.0)(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("inference timesteps") {
  const NoiseSchedule s = build_schedule();
  const std::vector<int> t = inference_timesteps(s, 50);
  REQUIRE(t.size() == 50);
  CHECK(t.front() == 999);
  CHECK(t[1] == 979);
  CHECK(t.back() == 19);
  CHECK_THROWS(inference_timesteps(s, 7));
}

TEST_CASE("sampler keeps context rows and calls the denoiser per condition") {
  const NoiseSchedule s = build_schedule();
  const Clip ctx = random_clip(kContextFrames, 35, 3);
  const Eigen::MatrixXd audio = random_clip(50, 80, 4);
  const Clip style = random_clip(50, 35, 5);
  SamplerOptions o;
  o.steps = 10;
  o.variance = VarianceMode::kPosterior;  // the variance probe adds calls
  CountingDenoiser d;
  const Clip out = sample(d, ctx, &audio, &style, s, o, 7);
  CHECK(out.rows() == 50);
  CHECK(out.topRows(kContextFrames) == ctx);
  CHECK(d.audio_only == 10);
  CHECK(d.style_only == 10);
  CHECK(d.uncond == 10);
  CountingDenoiser plain;
  o.guidance = 1.0;
  sample(plain, ctx, &audio, &style, s, o, 7);
  CHECK(plain.calls == 10);
  CHECK(plain.both == 10);
  // Same seed, same result.
  CHECK(sample(plain, ctx, &audio, &style, s, o, 7) == sample(plain, ctx, &audio, &style, s, o, 7));
}

TEST_CASE("echo denoiser reproduces its clip") {
  const NoiseSchedule s = build_schedule();
  Clip rec = Clip::Constant(50, 35, 0.4);
  const EchoDenoiser d(rec);
  SamplerOptions o;
  o.steps = 50;
  o.variance = VarianceMode::kPosterior;
  const Clip out = sample(d, rec.topRows(kContextFrames), nullptr, nullptr, s, o, 1);
  // Noise in the final step is tiny; the mean sits on the recorded clip.
  CHECK(std::abs(out.bottomRows(45).mean() - 0.4) < 0.02);
}

TEST_CASE("mock denoiser opens the mouth with loudness") {
  Eigen::MatrixXd audio = Eigen::MatrixXd::Constant(50, 80, -5.0);
  audio.bottomRows(25).setConstant(0.0);
  const Clip style = Clip::Constant(50, 35, 0.2);
  const Clip noisy = Clip::Zero(50, 35);
  const MockDenoiser d(3);
  DenoiserInput in;
  in.noisy = &noisy;
  in.audio = &audio;
  in.style = &style;
  const Clip out = d.predict(in);
  CHECK(out(40, 3) > out(10, 3));
  CHECK(out(40, 0) == doctest::Approx(0.2));
}

TEST_CASE("training losses") {
  const Clip a = random_clip(6, 3, 1), b = random_clip(6, 3, 2);
  CHECK(loss_simple(a, b) == doctest::Approx((a - b).squaredNorm()));
  CHECK(loss_simple(a, a) == 0.0);
  Clip shifted = a;
  shifted.array() += 1.0;
  CHECK(loss_velocity(shifted, a) == doctest::Approx(0.0));
  Clip line(5, 1);
  line << 0, 1, 2, 3, 4;
  CHECK(loss_smooth(line) == doctest::Approx(0.0));
  line(2, 0) = 3;
  CHECK(loss_smooth(line) == doctest::Approx(1 + 4 + 1));
}

TEST_CASE("sync loss") {
  const Eigen::MatrixXd v = random_clip(20, 16, 1), a = random_clip(20, 16, 2);
  CHECK(sync_loss(v, a) == doctest::Approx(sync_loss(a, v)));
  // Orthonormal rows: positives score 1/tau, everything else 0.
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(8, 8);
  const double tau = 0.07;
  const auto anchor = [tau](int others) { return -1.0 / tau + std::log(std::exp(1.0 / tau) + others); };
  // Interior anchors drop two neighbours, the two end anchors drop one.
  const double expected = (6.0 * anchor(5) + 2.0 * anchor(6)) / 8.0;
  CHECK(sync_loss(I, I, cosine_similarity(tau)) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(cosine_similarity(1.0)(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0)) == 0.0);
}

TEST_CASE("clip container round trip") {
  ClipFile f;
  f.values = random_clip(50, 3, 9).cast<float>().cast<double>();
  f.names = {"a", "b", "c"};
  const ClipFile back = decode_clip(encode_clip(f));
  CHECK(back.values == f.values);
  CHECK(back.names == f.names);
  CHECK(back.context == kContextFrames);
  std::vector<char> bad = encode_clip(f);
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_clip(bad), FormatError);
}
