#include "facesync/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "container.hpp"
#include "facesync/common.hpp"

namespace facesync {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

std::uint32_t le32(const std::vector<char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

std::uint16_t le16(const std::vector<char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

}  // namespace

Audio load_wav(const std::string& path) {
  const std::vector<char> b = detail::read_file(path);
  const std::string what = "wav '" + path + "'";
  if (b.size() < 12 || std::string(b.data(), 4) != "RIFF" || std::string(b.data() + 8, 4) != "WAVE")
    throw FormatError(what + ": not a RIFF/WAVE file");
  Audio audio;
  int channels = 0, bits = 0, format = 0;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id(b.data() + pos, 4);
    const std::uint32_t size = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) throw FormatError(what + ": truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw FormatError(what + ": short fmt chunk");
      format = le16(b, body);
      channels = le16(b, body + 2);
      audio.sample_rate = static_cast<int>(le32(b, body + 4));
      bits = le16(b, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw FormatError(what + ": only 16-bit PCM is supported");
      if (channels != 1) throw FormatError(what + ": expected mono audio");
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i)
        audio.samples[i] = static_cast<std::int16_t>(le16(b, body + 2 * i)) / 32768.0f;
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_data) throw FormatError(what + ": no data chunk");
  return audio;
}

void save_wav(const Audio& audio, const std::string& path) {
  detail::ByteWriter w;
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  const auto u16 = [&](std::uint16_t v) {
    const std::string s{static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    w.raw(s);
  };
  w.magic("RIFF");
  w.u32(36 + 2 * n);
  w.magic("WAVE");
  w.magic("fmt ");
  w.u32(16);
  u16(1);
  u16(1);
  w.u32(static_cast<std::uint32_t>(audio.sample_rate));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate) * 2);
  u16(2);
  u16(16);
  w.magic("data");
  w.u32(2 * n);
  for (float s : audio.samples) {
    const long v = std::clamp(std::lround(static_cast<double>(s) * 32768.0), -32768L, 32767L);
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  detail::write_file(path, w.bytes());
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double mel_center_hz(int bin, int sample_rate, int bins) {
  const double top = hz_to_mel(sample_rate / 2.0);
  return mel_to_hz(top * (bin + 1) / (bins + 1));
}

Eigen::MatrixXd mel_filter_bank(int sample_rate, int n_fft, int bins) {
  const int nfreq = n_fft / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edge(bins + 2);
  for (int i = 0; i < bins + 2; ++i) edge[i] = mel_to_hz(top * i / (bins + 1));
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(bins, nfreq);
  for (int m = 0; m < bins; ++m)
    for (int k = 0; k < nfreq; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double up = (f - edge[m]) / (edge[m + 1] - edge[m]);
      const double down = (edge[m + 2] - f) / (edge[m + 2] - edge[m + 1]);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  return fb;
}

MelSpectrogram log_mel_spectrogram(const std::vector<float>& samples, int sample_rate) {
  const int n = static_cast<int>(samples.size());
  const int pad = kFftSize / 2;
  if (n <= pad) throw DimensionError("mel: audio shorter than half an FFT window");
  const int frames = std::min(kSpectrogramFrames, 1 + n / kHopLength);
  const int nfreq = kFftSize / 2 + 1;
  static const Eigen::MatrixXd fb = mel_filter_bank(kSampleRate, kFftSize, kMelBins);
  if (sample_rate != kSampleRate) throw Error("mel: expected 16 kHz audio");

  std::vector<double> window(kFftSize);
  for (int i = 0; i < kFftSize; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kFftSize);
  const auto sample = [&](int i) {  // reflect padding
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return static_cast<double>(samples[i]);
  };

  double* in = fftw_alloc_real(kFftSize);
  fftw_complex* out = fftw_alloc_complex(nfreq);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_1d(kFftSize, in, out, FFTW_ESTIMATE);
  }
  MelSpectrogram mel(frames, kMelBins);
  Eigen::VectorXd mag(nfreq);
  for (int t = 0; t < frames; ++t) {
    const int start = t * kHopLength - pad;
    for (int i = 0; i < kFftSize; ++i) in[i] = window[i] * sample(start + i);
    fftw_execute(plan);
    for (int k = 0; k < nfreq; ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
    mel.row(t) = ((fb * mag).array() + kLogFloor).log().transpose();
  }
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return mel;
}

int chunk_start(int i) {
  return static_cast<int>(std::lround(static_cast<double>(i) * (kSpectrogramFrames - kChunkFrames) / (kNumChunks - 1)));
}

MelChunks mel_chunk(const Audio& audio) {
  if (audio.sample_rate != kSampleRate) throw Error("mel_chunk: expected 16 kHz audio");
  if (static_cast<int>(audio.samples.size()) != kClipSamples)
    throw DimensionError("mel_chunk: expected exactly 32000 samples (2 s), got " +
                         std::to_string(audio.samples.size()));
  const MelSpectrogram mel = log_mel_spectrogram(audio.samples, audio.sample_rate);
  MelChunks out;
  for (int i = 0; i < kNumChunks; ++i) {
    const int s = chunk_start(i);
    out.starts.push_back(s);
    out.chunks.push_back(mel.middleRows(s, kChunkFrames));
  }
  return out;
}

Eigen::MatrixXd chunk_features(const MelChunks& chunks) {
  Eigen::MatrixXd f(chunks.chunks.size(), kMelBins);
  for (std::size_t i = 0; i < chunks.chunks.size(); ++i) f.row(i) = chunks.chunks[i].colwise().mean();
  return f;
}

}  // namespace facesync
