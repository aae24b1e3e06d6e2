#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "facesync/audio.hpp"

using namespace facesync;

namespace {

Audio tone(double hz, int samples, double amp = 0.5) {
  Audio a;
  a.samples.resize(samples);
  for (int i = 0; i < samples; ++i)
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate));
  return a;
}

}  // namespace

TEST_CASE("HTK mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  for (double hz : {10.0, 440.0, 3000.0, 8000.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("filter bank triangles") {
  const Eigen::MatrixXd fb = mel_filter_bank();
  CHECK(fb.rows() == kMelBins);
  CHECK(fb.cols() == kFftSize / 2 + 1);
  CHECK(fb.minCoeff() >= 0.0);
  for (int b = 0; b < kMelBins; ++b) CHECK(fb.row(b).maxCoeff() > 0.0);
  for (int b = 1; b < kMelBins; ++b) CHECK(mel_center_hz(b) > mel_center_hz(b - 1));
}

TEST_CASE("spectrogram and chunk shapes") {
  const Audio a = tone(1000.0, kClipSamples);
  const MelSpectrogram s = log_mel_spectrogram(a.samples);
  CHECK(s.rows() == kSpectrogramFrames);
  CHECK(s.cols() == kMelBins);
  const MelChunks c = mel_chunk(a);
  REQUIRE(c.chunks.size() == kNumChunks);
  CHECK(c.starts.front() == 0);
  CHECK(c.starts.back() == kSpectrogramFrames - kChunkFrames);
  CHECK(chunk_start(1) == 3);
  for (const MelSpectrogram& m : c.chunks) {
    CHECK(m.rows() == kChunkFrames);
    CHECK(m.cols() == kMelBins);
  }
  CHECK(chunk_features(c).rows() == kNumChunks);
  Audio short_clip = tone(1000.0, kClipSamples - 1);
  CHECK_THROWS(mel_chunk(short_clip));
}

TEST_CASE("a pure tone peaks in the nearest filter") {
  const Audio a = tone(1000.0, kClipSamples);
  const MelSpectrogram s = log_mel_spectrogram(a.samples);
  int best = 0;
  double dist = 1e9;
  for (int b = 0; b < kMelBins; ++b)
    if (std::abs(mel_center_hz(b) - 1000.0) < dist) dist = std::abs(mel_center_hz(b) - 1000.0), best = b;
  Eigen::Index arg;
  s.row(80).maxCoeff(&arg);
  CHECK(arg == best);
}

TEST_CASE("silence hits the log floor") {
  Audio a;
  a.samples.assign(kClipSamples, 0.0f);
  const MelSpectrogram s = log_mel_spectrogram(a.samples);
  CHECK(s.maxCoeff() == doctest::Approx(std::log(kLogFloor)));
}

TEST_CASE("wav round trip") {
  const Audio a = tone(300.0, 1600, 0.8);
  const std::string path = (std::filesystem::temp_directory_path() / "facesync_test_tone.wav").string();
  save_wav(a, path);
  const Audio b = load_wav(path);
  std::remove(path.c_str());
  REQUIRE(b.samples.size() == a.samples.size());
  CHECK(b.sample_rate == kSampleRate);
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(a.samples[i] - b.samples[i]) <= 0.5 / 32768 + 1e-9);
}
