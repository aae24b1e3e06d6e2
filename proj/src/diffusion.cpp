#include "facesync/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "container.hpp"

namespace facesync {

using nlohmann::json;

NoiseSchedule build_schedule(int T, double beta_1, double beta_T) {
  if (T < 1) throw Error("schedule: T must be positive");
  if (!(beta_1 > 0.0 && beta_T < 1.0 && beta_1 <= beta_T)) throw Error("schedule: need 0 < beta_1 <= beta_T < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int n = 0; n < T; ++n) {
    s.beta[n] = T == 1 ? beta_1 : beta_1 + (beta_T - beta_1) * n / (T - 1);
    prod *= 1.0 - s.beta[n];
    s.alpha_bar[n] = prod;
  }
  return s;
}

Clip add_noise(const Clip& b0, const NoiseSchedule& schedule, int n, const Clip& eps) {
  if (n < 0 || n >= schedule.T) throw Error("add_noise: step out of range");
  if (b0.rows() != eps.rows() || b0.cols() != eps.cols()) throw DimensionError("add_noise: shape mismatch");
  const double ab = schedule.alpha_bar[n];
  return std::sqrt(ab) * b0 + std::sqrt(1.0 - ab) * eps;
}

Clip cfg_combine(const Clip& cond, const Clip& uncond, double scale) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols())
    throw DimensionError("cfg_combine: shape mismatch");
  // Same value as uncond + scale * (cond - uncond); exact for scale = 1.
  return cond + (scale - 1.0) * (cond - uncond);
}

Clip cfg_combine(const Clip& cond_audio, const Clip& cond_style, const Clip& uncond, double scale) {
  if (cond_audio.rows() != uncond.rows() || cond_audio.cols() != uncond.cols() ||
      cond_style.rows() != uncond.rows() || cond_style.cols() != uncond.cols())
    throw DimensionError("cfg_combine: shape mismatch");
  return uncond + scale * (cond_audio - uncond) + scale * (cond_style - uncond);
}

// --- denoisers ---------------------------------------------------------------------

MockDenoiser::MockDenoiser(int open_index, double gain) : open_index_(open_index), gain_(gain) {}

Clip MockDenoiser::predict(const DenoiserInput& in) const {
  const Clip& x = *in.noisy;
  const int rows = static_cast<int>(x.rows()), dims = static_cast<int>(x.cols());
  Eigen::RowVectorXd base = Eigen::RowVectorXd::Zero(dims);
  if (in.style && !in.drop_style) {
    if (in.style->cols() != dims) throw DimensionError("mock denoiser: style width mismatch");
    base = in.style->colwise().mean().cwiseMax(0.0).cwiseMin(1.0);
  }
  Clip out = base.replicate(rows, 1);
  if (in.audio && !in.drop_audio && open_index_ >= 0 && open_index_ < dims) {
    const Eigen::VectorXd loud = in.audio->rowwise().mean();
    const double lo = loud.minCoeff(), hi = loud.maxCoeff();
    for (int i = 0; i < rows && i < loud.size(); ++i) {
      const double level = hi > lo ? (loud[i] - lo) / (hi - lo) : 0.0;
      out(i, open_index_) = std::clamp(base[open_index_] + gain_ * level, 0.0, 1.0);
    }
  }
  if (!in.drop_context) out.topRows(std::min(kContextFrames, rows)) = x.topRows(std::min(kContextFrames, rows));
  return out;
}

Clip EchoDenoiser::predict(const DenoiserInput& in) const {
  if (in.noisy->rows() != clip_.rows() || in.noisy->cols() != clip_.cols())
    throw DimensionError("echo denoiser: recorded clip has a different shape");
  return clip_;
}

Clip GaussianDenoiser::predict(const DenoiserInput& in) const {
  const double ab = schedule_.alpha_bar.at(in.step);
  const double s2 = sigma_ * sigma_;
  const double den = ab * s2 + 1.0 - ab;
  return ((std::sqrt(ab) * s2 / den) * in.noisy->array() + (1.0 - ab) * mu_ / den).matrix();
}

// --- sampler -----------------------------------------------------------------------

std::vector<int> inference_timesteps(const NoiseSchedule& schedule, int steps) {
  if (steps < 1 || steps > schedule.T || schedule.T % steps != 0)
    throw Error("sampler: steps must divide T (" + std::to_string(schedule.T) + ")");
  const int stride = schedule.T / steps;
  std::vector<int> ts;
  for (int k = 0; k < steps; ++k) ts.push_back(schedule.T - 1 - k * stride);
  return ts;
}

Clip sample(const Denoiser& denoiser, const Clip& context, const Eigen::MatrixXd* audio, const Clip* style,
            const NoiseSchedule& schedule, const SamplerOptions& options, std::uint64_t seed, int frames) {
  const int ctx = std::min<int>(kContextFrames, static_cast<int>(context.rows()));
  const int dims = static_cast<int>(context.cols());
  if (context.rows() < kContextFrames) throw DimensionError("sampler: context needs 5 frames");
  if (frames <= ctx) throw DimensionError("sampler: clip must be longer than its context");
  const std::vector<int> ts = inference_timesteps(schedule, options.steps);
  const bool guided = options.guidance != 1.0 && (audio != nullptr || style != nullptr);

  const auto call = [&](const DenoiserInput& in) {
    Clip out = denoiser.predict(in);
    if (out.rows() != frames || out.cols() != dims)
      throw DimensionError("sampler: denoiser returned " + std::to_string(out.rows()) + "x" +
                           std::to_string(out.cols()) + ", expected " + std::to_string(frames) + "x" +
                           std::to_string(dims));
    return out;
  };
  const auto predict = [&](const Clip& x, int n) -> Clip {
    DenoiserInput in{&x, audio, style, n};
    if (!guided) return call(in);
    DenoiserInput u = in;
    u.drop_audio = u.drop_style = true;
    const Clip cu = call(u);
    if (audio && style) {
      DenoiserInput ia = in, is = in;
      ia.drop_style = true;
      is.drop_audio = true;
      return cfg_combine(call(ia), call(is), cu, options.guidance);
    }
    return cfg_combine(call(in), cu, options.guidance);
  };

  Rng rng(seed);
  Clip x(frames, dims);
  x.topRows(ctx) = context.topRows(ctx);
  for (int i = ctx; i < frames; ++i)
    for (int d = 0; d < dims; ++d) x(i, d) = rng.normal();

  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int n = ts[k];
    const double ab = schedule.alpha_bar[n];
    const double ab_prev = k + 1 < ts.size() ? schedule.alpha_bar[ts[k + 1]] : 1.0;
    const double a_step = ab / ab_prev;
    const double c0 = std::sqrt(ab_prev) * (1.0 - a_step) / (1.0 - ab);
    const double ct = std::sqrt(a_step) * (1.0 - ab_prev) / (1.0 - ab);
    const double var_post = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - a_step);

    const Clip x0 = predict(x, n);
    const Clip x0c = x0.cwiseMax(options.clip_lo).cwiseMin(options.clip_hi);
    Clip var = Clip::Constant(frames, dims, var_post);
    if (options.variance == VarianceMode::kTweedie) {
      const double h = options.probe_scale * std::sqrt(1.0 - ab);
      Clip z = Clip::Zero(frames, dims);
      for (int i = ctx; i < frames; ++i)
        for (int d = 0; d < dims; ++d) z(i, d) = rng.rademacher();
      const Clip xp = x + h * z;
      const Clip diag = (z.array() * (predict(xp, n) - x0).array() / h).matrix();
      const double scale = (1.0 - ab) / std::sqrt(ab);
      var.array() += c0 * c0 * (scale * diag.array()).max(0.0);
    }
    const Clip mean = c0 * x0c + ct * x;
    for (int i = ctx; i < frames; ++i)
      for (int d = 0; d < dims; ++d) x(i, d) = mean(i, d) + std::sqrt(var(i, d)) * rng.normal();
    x.topRows(ctx) = context.topRows(ctx);
  }
  return x;
}

// --- losses ------------------------------------------------------------------------

namespace {

void same_shape(const Clip& a, const Clip& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(std::string(what) + ": shape mismatch");
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double sync_term(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Similarity& phi) {
  const int n = static_cast<int>(x.rows());
  double sum = 0.0;
  std::vector<double> logits;
  for (int i = 0; i < n; ++i) {
    logits.clear();
    for (int j = 0; j < n; ++j)
      if (j != i - 1 && j != i + 1) logits.push_back(phi(x.row(i).transpose(), y.row(j).transpose()));
    sum += log_sum_exp(logits) - phi(x.row(i).transpose(), y.row(i).transpose());
  }
  return sum;
}

}  // namespace

double loss_simple(const Clip& pred, const Clip& target) {
  same_shape(pred, target, "loss_simple");
  return (pred - target).squaredNorm();
}

double loss_velocity(const Clip& pred, const Clip& target) {
  same_shape(pred, target, "loss_velocity");
  const Eigen::Index n = pred.rows();
  if (n < 2) return 0.0;
  const Clip dt = target.bottomRows(n - 1) - target.topRows(n - 1);
  const Clip dp = pred.bottomRows(n - 1) - pred.topRows(n - 1);
  return (dt - dp).squaredNorm();
}

double loss_smooth(const Clip& pred) {
  const Eigen::Index n = pred.rows();
  if (n < 3) return 0.0;
  return (pred.bottomRows(n - 2) - 2.0 * pred.middleRows(1, n - 2) + pred.topRows(n - 2)).squaredNorm();
}

Similarity cosine_similarity(double temperature) {
  if (!(temperature > 0.0)) throw Error("sync_loss: temperature must be positive");
  return [temperature](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double den = std::max(x.norm() * y.norm(), 1e-12);
    return x.dot(y) / den / temperature;
  };
}

double sync_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& a, const Similarity& similarity) {
  if (v.rows() != a.rows() || v.cols() != a.cols()) throw DimensionError("sync_loss: v and a must have equal shape");
  if (v.rows() < 1) throw DimensionError("sync_loss: empty input");
  return (sync_term(v, a, similarity) + sync_term(a, v, similarity)) / (2.0 * v.rows());
}

// --- BSC1 --------------------------------------------------------------------------

std::vector<char> encode_clip(const ClipFile& clip) {
  if (!clip.names.empty() && static_cast<Eigen::Index>(clip.names.size()) != clip.values.cols())
    throw DimensionError("BSC1: name count does not match the clip width");
  detail::ByteWriter w;
  w.magic("BSC1");
  w.header({{"format", "BSC1"},
            {"version", 1},
            {"frames", clip.values.rows()},
            {"dims", clip.values.cols()},
            {"context", clip.context},
            {"names", clip.names}});
  for (Eigen::Index i = 0; i < clip.values.rows(); ++i)
    for (Eigen::Index d = 0; d < clip.values.cols(); ++d) w.f32(static_cast<float>(clip.values(i, d)));
  return w.bytes();
}

ClipFile decode_clip(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes), "BSC1");
  r.expect_magic("BSC1");
  const json h = r.header();
  ClipFile clip;
  int frames = 0, dims = 0;
  try {
    frames = h.at("frames").get<int>();
    dims = h.at("dims").get<int>();
    clip.context = h.value("context", kContextFrames);
    if (h.contains("names")) clip.names = h.at("names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("BSC1: bad header (") + e.what() + ")");
  }
  if (frames < 0 || dims < 0) throw FormatError("BSC1: negative shape");
  clip.values.resize(frames, dims);
  for (int i = 0; i < frames; ++i)
    for (int d = 0; d < dims; ++d) clip.values(i, d) = r.f32();
  r.expect_end();
  return clip;
}

void save_clip(const ClipFile& clip, const std::string& path) { detail::write_file(path, encode_clip(clip)); }

ClipFile load_clip(const std::string& path) { return decode_clip(detail::read_file(path)); }

}  // namespace facesync
