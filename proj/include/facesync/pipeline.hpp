#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "facesync/audio.hpp"
#include "facesync/camera.hpp"
#include "facesync/diffusion.hpp"
#include "facesync/face_model.hpp"
#include "facesync/fitting.hpp"
#include "facesync/image.hpp"
#include "facesync/maps.hpp"

namespace facesync {

inline constexpr int kFps = 25;
inline constexpr int kSamplesPerFrame = kSampleRate / kFps;  // 640

/// Face box in frame pixels: rows [y1, y2), columns [x1, x2).
struct FaceBox {
  double y1 = 0.0;
  double y2 = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  /// Throws DegenerateError unless y2 > y1 and x2 > x1.
  void validate() const;
  bool operator==(const FaceBox&) const = default;
};

/// Bounding box of a set of screen points.
FaceBox bounding_box(const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& points);

struct DeltaCl {
  std::vector<double> per_frame;
  double mean = 0.0;
};

/// |y2_orig - y2_lipsync| / (y2_orig - y1_orig) per frame.
DeltaCl delta_cl(const std::vector<FaceBox>& orig, const std::vector<FaceBox>& lipsync);

/// Stand-in generator: warp_stable(reference, F_3DMM, foreground). Pixels
/// on the driving foreground sample the reference at p + F; the background
/// passes through.
Image mock_generator(const Image& reference, const RenderMaps& maps);

/// Mouth mask: even-odd fill of the projected inner-lip polyline, dilated by
/// `radius` pixels.
Image mouth_mask(const FaceModel& model, const Vertices& posed, const ProjectiveCamera& camera, double radius);

/// Pixels where the pipeline is allowed to change the face: the mouth masks
/// of both meshes, an `chin_radius` band around both projected jawlines and a
/// `ring_radius` ring around both silhouettes.
Image edit_region(const FaceModel& model, const Vertices& original, const Vertices& edited,
                  const ProjectiveCamera& camera, double mouth_radius, double chin_radius, double ring_radius);

/// Mean absolute difference over channels and the pixels where `region` is 0.
double mean_abs_outside(const Image& a, const Image& b, const Image& region);

struct LipsyncOptions {
  int generator_size = 256;
  double mouth_radius = 6.0;  // px at generator_size
  double chin_band = 8.0;     // px at 256
  double silhouette_ring = 2.0;
  std::string generator = "mock";  // only "mock" is built in
  std::string denoiser = "mock";   // mock | echo | file
  std::string denoiser_clip;       // BSC1 path for "file"
  FitConfig fit;
  SamplerOptions sampler;
  std::uint64_t seed = 0;
};

/// In-memory inputs of one lip-sync job.
struct LipsyncInputs {
  std::vector<Image> frames;  // 3 x H x W
  std::vector<FaceBox> boxes;
  LandmarkTrack landmarks;    // frame pixels
  Audio audio;
  std::optional<ClipFile> style;  // defaults to a segment of the fitted sequence
};

struct LipsyncResult {
  std::vector<Image> frames;  // full output frames
  std::vector<Image> crops;   // blended crops at generator resolution
  std::vector<FaceParams> fitted;
  std::vector<FaceParams> fused;
  Clip mouth;                 // frames x 35 generated mouth blendshapes
  nlohmann::json report;
};

/// Crop, fit, sample mouth blendshapes, fuse, reenact twice (fixed and
/// current reference), blend the mouth and paste back.
LipsyncResult lipsync_run(const FaceModel& model, const LipsyncInputs& inputs, const LipsyncOptions& options);

/// File-level job description (JSON).
struct LipsyncJob {
  std::string frames_dir;  // 00000.png, 00001.png, ...
  std::string boxes;       // JSON [[y1, y2, x1, x2], ...] (one entry = static box)
  std::string landmarks;   // landmarks JSONL in frame pixels
  std::string audio;       // 16 kHz mono WAV
  std::string model;       // FKT1; empty = synthetic rig
  std::string style;       // optional BSC1
  std::string output_dir;
  LipsyncOptions options;
};

LipsyncJob job_from_json(const nlohmann::json& j);
nlohmann::json job_to_json(const LipsyncJob& job);

/// Loads the job inputs, runs the pipeline and writes frames plus report.json.
nlohmann::json lipsync_run_job(const LipsyncJob& job);

/// Frame file name for index i: zero-padded to five digits.
std::string frame_name(int i);
std::vector<Image> load_frames(const std::string& dir);
void save_frames(const std::vector<Image>& frames, const std::string& dir);

std::vector<FaceBox> load_boxes(const std::string& path, int frames);
void save_boxes(const std::vector<FaceBox>& boxes, const std::string& path);

// --- synthetic scene -----------------------------------------------------

struct SyntheticScene {
  std::vector<Image> frames;
  std::vector<FaceBox> boxes;
  LandmarkTrack landmarks;
  Audio audio;
  std::vector<FaceParams> truth;
  ProjectiveCamera camera;  // frame camera
};

/// Rendered talking-head sequence of the synthetic rig: frame_size^2 frames
/// with the face box centered, smooth random parameters and a voiced audio
/// track of matching length.
SyntheticScene make_synthetic_scene(const FaceModel& model, std::uint64_t seed, int frames = 50,
                                    int frame_size = 288, int box_size = 256);

/// Harmonic vowel-like audio with a syllable envelope.
Audio synthetic_speech(std::uint64_t seed, int samples);

}  // namespace facesync
