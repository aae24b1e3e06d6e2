#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "facesync/audio.hpp"
#include "facesync/common.hpp"

namespace facesync {

inline constexpr int kClipFrames = 50;
inline constexpr int kContextFrames = 5;

/// Frames x dimensions (50 x 35 for mouth clips).
using Clip = Eigen::MatrixXd;

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta[n], n = 0 .. T-1
  std::vector<double> alpha_bar;  // prod_{k <= n} (1 - beta[k])
};

/// Linear beta from beta_1 to beta_T.
NoiseSchedule build_schedule(int T = 1000, double beta_1 = 1e-4, double beta_T = 0.02);

/// sqrt(abar_n) * b0 + sqrt(1 - abar_n) * eps.
Clip add_noise(const Clip& b0, const NoiseSchedule& schedule, int n, const Clip& eps);

/// Classifier-free guidance, uncond + scale * (cond - uncond).
Clip cfg_combine(const Clip& cond, const Clip& uncond, double scale = 1.2);

/// Two independently guided conditions:
/// uncond + scale * (cond_audio - uncond) + scale * (cond_style - uncond).
Clip cfg_combine(const Clip& cond_audio, const Clip& cond_style, const Clip& uncond, double scale);

/// Inputs to one denoiser evaluation. `noisy` holds all 50 frames with the
/// context rows already set to the clean context.
struct DenoiserInput {
  const Clip* noisy = nullptr;
  const Eigen::MatrixXd* audio = nullptr;  // 50 x D audio embeddings
  const Clip* style = nullptr;             // style clip
  int step = 0;                            // diffusion step n
  bool drop_audio = false;
  bool drop_style = false;
  bool drop_context = false;
};

/// Predicts the clean clip; output has the shape of `noisy`.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Clip predict(const DenoiserInput& input) const = 0;
};

/// Deterministic stand-in: mouth opening follows the loudness of each
/// audio chunk, the remaining values follow the style clip mean.
class MockDenoiser : public Denoiser {
 public:
  /// `open_index` is the mouth dimension driven by loudness (-1 = none).
  explicit MockDenoiser(int open_index, double gain = 0.25);
  Clip predict(const DenoiserInput& input) const override;

 private:
  int open_index_;
  double gain_;
};

/// Returns a recorded clip regardless of the input.
class EchoDenoiser : public Denoiser {
 public:
  explicit EchoDenoiser(Clip clip) : clip_(std::move(clip)) {}
  Clip predict(const DenoiserInput& input) const override;

 private:
  Clip clip_;
};

/// Elementwise closed-form posterior mean for data ~ N(mu, sigma^2).
class GaussianDenoiser : public Denoiser {
 public:
  GaussianDenoiser(const NoiseSchedule& schedule, double mu, double sigma)
      : schedule_(schedule), mu_(mu), sigma_(sigma) {}
  Clip predict(const DenoiserInput& input) const override;

 private:
  NoiseSchedule schedule_;
  double mu_, sigma_;
};

enum class VarianceMode {
  kPosterior,  // beta_tilde only
  kTweedie,    // beta_tilde + c0^2 Var(x0 | x_n)
};

struct SamplerOptions {
  int steps = 50;
  double guidance = 1.2;
  double clip_lo = -0.25;
  double clip_hi = 1.25;
  VarianceMode variance = VarianceMode::kTweedie;
  double probe_scale = 1e-3;  // finite-difference probe, in units of sqrt(1 - abar)
};

/// Strided inference timesteps: T-1, T-1-s, ..., s-1 with s = T / steps.
std::vector<int> inference_timesteps(const NoiseSchedule& schedule, int steps);

/// x0-prediction ancestral sampling of frames kContextFrames.. of a clip.
/// The first rows of `context` (kContextFrames x D) are re-imposed after
/// every step. With guidance != 1 and both conditions present, the
/// denoiser is called unconditionally and once per condition.
Clip sample(const Denoiser& denoiser, const Clip& context, const Eigen::MatrixXd* audio, const Clip* style,
            const NoiseSchedule& schedule, const SamplerOptions& options, std::uint64_t seed,
            int frames = kClipFrames);

/// sum ||pred - target||^2.
double loss_simple(const Clip& pred, const Clip& target);
/// sum ||(target[1:] - target[:-1]) - (pred[1:] - pred[:-1])||^2.
double loss_velocity(const Clip& pred, const Clip& target);
/// sum ||pred[2:] - 2 pred[1:-1] + pred[:-2]||^2.
double loss_smooth(const Clip& pred);

using Similarity = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Cosine similarity divided by `temperature`.
Similarity cosine_similarity(double temperature = 0.07);

/// Symmetric InfoNCE over aligned rows. For anchor i the denominator sums
/// over every j except i - 1 and i + 1 (j = i included); the result is
/// (L(v, a) + L(a, v)) / (2 N).
double sync_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& a, const Similarity& similarity = cosine_similarity());

/// BSC1 container: magic "BSC1", uint32 header length, JSON header
/// {frames, dims, context, names}, float32 row-major values.
struct ClipFile {
  Clip values;
  int context = kContextFrames;
  std::vector<std::string> names;
};
std::vector<char> encode_clip(const ClipFile& clip);
ClipFile decode_clip(std::vector<char> bytes);
void save_clip(const ClipFile& clip, const std::string& path);
ClipFile load_clip(const std::string& path);

}  // namespace facesync
