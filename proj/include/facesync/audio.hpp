#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace facesync {

inline constexpr int kSampleRate = 16000;
inline constexpr int kClipSamples = 32000;  // 2 s
inline constexpr int kFftSize = 800;
inline constexpr int kHopLength = 200;
inline constexpr int kMelBins = 80;
inline constexpr int kSpectrogramFrames = 160;
inline constexpr int kChunkFrames = 16;
inline constexpr int kNumChunks = 50;
inline constexpr double kLogFloor = 1e-5;

/// Mono PCM audio in [-1, 1].
struct Audio {
  int sample_rate = kSampleRate;
  std::vector<float> samples;
};

/// 16-bit PCM WAV. Multi-channel input is rejected.
Audio load_wav(const std::string& path);
void save_wav(const Audio& audio, const std::string& path);

/// Row-major frames x mel bins.
using MelSpectrogram = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filter bank over the rfft bins, kMelBins x (n_fft / 2 + 1),
/// band edges equally spaced on the mel scale between 0 and sr / 2.
Eigen::MatrixXd mel_filter_bank(int sample_rate = kSampleRate, int n_fft = kFftSize, int bins = kMelBins);

/// Center frequency (Hz) of mel filter `bin`.
double mel_center_hz(int bin, int sample_rate = kSampleRate, int bins = kMelBins);

/// log(mel(|STFT|) + 1e-5) with a periodic Hann window, reflect padding of
/// n_fft / 2 on both sides. The padded 2 s clip yields 161 frames; the
/// first 160 are kept.
MelSpectrogram log_mel_spectrogram(const std::vector<float>& samples, int sample_rate = kSampleRate);

struct MelChunks {
  std::vector<MelSpectrogram> chunks;  // kNumChunks of kChunkFrames x kMelBins
  std::vector<int> starts;             // first spectrogram frame of each chunk
};

/// Start frame of chunk i: round(i * (160 - 16) / 49).
int chunk_start(int i);

/// 50 overlapping 16-frame windows of the log-mel spectrogram of exactly
/// 2 s of 16 kHz audio.
MelChunks mel_chunk(const Audio& audio);

/// Per-chunk audio features (50 x 80): the mean log-mel over the chunk.
Eigen::MatrixXd chunk_features(const MelChunks& chunks);

}  // namespace facesync
