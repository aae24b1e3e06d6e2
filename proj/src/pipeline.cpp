#include "facesync/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>

#include "facesync/model_io.hpp"
#include "facesync/synthetic.hpp"
#include "facesync/warp.hpp"

namespace facesync {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kPi = std::numbers::pi;

void FaceBox::validate() const {
  if (!(y2 > y1) || !(x2 > x1)) throw DegenerateError("face box: need y2 > y1 and x2 > x1");
}

FaceBox bounding_box(const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& points) {
  if (points.rows() == 0) throw DimensionError("bounding_box: no points");
  return {points.col(1).minCoeff(), points.col(1).maxCoeff(), points.col(0).minCoeff(), points.col(0).maxCoeff()};
}

DeltaCl delta_cl(const std::vector<FaceBox>& orig, const std::vector<FaceBox>& lipsync) {
  if (orig.size() != lipsync.size()) throw DimensionError("delta_cl: frame counts differ");
  DeltaCl out;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    const double h = orig[i].y2 - orig[i].y1;
    if (!(h > 0.0)) throw DegenerateError("delta_cl: degenerate original box at frame " + std::to_string(i));
    out.per_frame.push_back(std::abs(orig[i].y2 - lipsync[i].y2) / h);
  }
  double sum = 0.0;
  for (double v : out.per_frame) sum += v;
  out.mean = out.per_frame.empty() ? 0.0 : sum / out.per_frame.size();
  return out;
}

Image mock_generator(const Image& reference, const RenderMaps& maps) {
  if (reference.height != maps.flow.height || reference.width != maps.flow.width ||
      !maps.foreground.same_shape(Image(1, maps.flow.height, maps.flow.width)))
    throw DimensionError("mock generator: reference and maps differ in resolution");
  return warp_stable(reference, maps.flow, maps.foreground);
}

namespace {

std::vector<Eigen::Vector2d> polyline_points(const Polyline& line, const Vertices& screen) {
  std::vector<Eigen::Vector2d> pts;
  for (int v : line.vertices) pts.emplace_back(screen(v, 0), screen(v, 1));
  return pts;
}

void max_into(Image& dst, const Image& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] = std::max(dst.data[i], src.data[i]);
}

}  // namespace

Image mouth_mask(const FaceModel& model, const Vertices& posed, const ProjectiveCamera& camera, double radius) {
  const Vertices screen = project(posed, camera).xyz;
  Image mask(1, camera.height, camera.width);
  for (const Polyline& line : model.polylines)
    if (line.kind == "inner_lip") max_into(mask, fill_polygon(polyline_points(line, screen), camera.height, camera.width));
  return radius > 0.0 ? dilate(mask, radius) : mask;
}

Image edit_region(const FaceModel& model, const Vertices& original, const Vertices& edited,
                  const ProjectiveCamera& camera, double mouth_radius, double chin_radius, double ring_radius) {
  Image region(1, camera.height, camera.width);
  for (const Vertices* mesh : {&original, &edited}) {
    max_into(region, mouth_mask(model, *mesh, camera, mouth_radius));
    const Vertices screen = project(*mesh, camera).xyz;
    for (const Polyline& line : model.polylines)
      if (line.kind == "jawline")
        max_into(region, polyline_band(polyline_points(line, screen), line.closed, chin_radius, camera.height,
                                       camera.width));
    const Fragments frag = rasterize_screen(screen, model.triangles, camera.height, camera.width);
    max_into(region, boundary_ring(foreground_image(frag), ring_radius));
  }
  return region;
}

double mean_abs_outside(const Image& a, const Image& b, const Image& region) {
  if (!a.same_shape(b) || region.height != a.height || region.width != a.width)
    throw DimensionError("mean_abs_outside: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (region.at(0, y, x) > 0.5f) continue;
      for (int c = 0; c < a.channels; ++c) sum += std::abs(a.at(c, y, x) - b.at(c, y, x));
      ++count;
    }
  return count ? sum / (static_cast<double>(count) * a.channels) : 0.0;
}

// --- pipeline ----------------------------------------------------------------------

namespace {

struct PixelBox {
  int y0, x0, h, w;
};

PixelBox pixel_box(const FaceBox& b) {
  b.validate();
  const int y0 = static_cast<int>(std::lround(b.y1)), x0 = static_cast<int>(std::lround(b.x1));
  return {y0, x0, std::max(1, static_cast<int>(std::lround(b.y2)) - y0),
          std::max(1, static_cast<int>(std::lround(b.x2)) - x0)};
}

// Rows [start, start + rows) of `m`, repeating the last row past the end.
Clip padded_rows(const Eigen::MatrixXd& m, int start, int rows) {
  Clip out(rows, m.cols());
  for (int i = 0; i < rows; ++i) out.row(i) = m.row(std::min<Eigen::Index>(start + i, m.rows() - 1));
  return out;
}

Eigen::MatrixXd audio_features(const Audio& audio, int first_frame) {
  Audio clip;
  clip.sample_rate = audio.sample_rate;
  clip.samples.assign(kClipSamples, 0.0f);
  const std::size_t begin = static_cast<std::size_t>(first_frame) * kSamplesPerFrame;
  for (std::size_t i = 0; i < static_cast<std::size_t>(kClipSamples) && begin + i < audio.samples.size(); ++i)
    clip.samples[i] = audio.samples[begin + i];
  return chunk_features(mel_chunk(clip));
}

json box_json(const FaceBox& b) { return json::array({b.y1, b.y2, b.x1, b.x2}); }

}  // namespace

LipsyncResult lipsync_run(const FaceModel& model, const LipsyncInputs& in, const LipsyncOptions& options) {
  const int frames = static_cast<int>(in.frames.size());
  const int gen = options.generator_size;
  if (frames < kContextFrames + 1) throw DimensionError("lipsync: need at least 6 frames");
  if (static_cast<int>(in.boxes.size()) != frames) throw DimensionError("lipsync: one face box per frame required");
  if (static_cast<int>(in.landmarks.size()) != frames) throw DimensionError("lipsync: one landmark set per frame required");
  if (in.audio.sample_rate != kSampleRate) throw Error("lipsync: audio must be sampled at 16 kHz");
  const double audio_frames = static_cast<double>(in.audio.samples.size()) / kSamplesPerFrame;
  if (std::abs(audio_frames - frames) > 1.0)
    throw Error("lipsync: audio covers " + std::to_string(audio_frames) + " frames, video has " +
                std::to_string(frames));
  if (options.generator != "mock") throw Error("lipsync: unknown generator '" + options.generator + "'");
  if (gen < 16) throw Error("lipsync: generator resolution too small");

  const ProjectiveCamera camera = ProjectiveCamera::fitting_default(gen);
  std::vector<PixelBox> boxes;
  for (const FaceBox& b : in.boxes) boxes.push_back(pixel_box(b));

  // (1) crop faces and move the labels into crop pixels.
  std::vector<Image> crops(frames);
  LandmarkTrack track = in.landmarks;
  for (int f = 0; f < frames; ++f) {
    const PixelBox& b = boxes[f];
    crops[f] = resize_bilinear(crop(in.frames[f], b.y0, b.x0, b.h, b.w), gen, gen);
    LandmarkFrame& lf = track[f];
    for (Eigen::Index i = 0; i < lf.points.rows(); ++i) {
      lf.points(i, 0) = (lf.points(i, 0) - b.x0) * gen / b.w;
      lf.points(i, 1) = (lf.points(i, 1) - b.y0) * gen / b.h;
    }
  }

  // (2) fit the sequence.
  FitConfig fit_config = options.fit;
  fit_config.seed = options.seed;
  const FitResult fit = fit_sequence(track, model, camera, fit_config);
  if (fit.diagnostics.diverged) throw Error("lipsync: landmark fitting diverged");

  // (3) sample mouth blendshapes clip by clip, each conditioned on the last
  // five frames of the previous one.
  const std::vector<int> indices = default_mouth_indices(model);
  check_mouth_indices(indices, model.num_blendshapes());
  Eigen::MatrixXd fitted_mouth(frames, kNumMouthBlendshapes);
  for (int f = 0; f < frames; ++f) fitted_mouth.row(f) = extract_mouth(fit.params[f], indices).transpose();

  std::string style_source = "input";
  Clip style;
  if (in.style) {
    style = in.style->values;
    if (style.cols() != kNumMouthBlendshapes) throw DimensionError("lipsync: style clip must have 35 columns");
  } else if (frames >= 2 * kClipFrames) {
    style = fitted_mouth.bottomRows(kClipFrames);
    style_source = "fitted_tail";
  } else {
    style = padded_rows(fitted_mouth, 0, kClipFrames);
    style_source = "fitted_same_segment";
  }

  int open_index = -1;
  const int jaw_open = model.blendshape_index("jawOpen");
  for (int i = 0; i < kNumMouthBlendshapes; ++i)
    if (indices[i] == jaw_open) open_index = i;

  std::optional<Eigen::MatrixXd> recorded;
  if (options.denoiser == "echo") {
    recorded = fitted_mouth;
  } else if (options.denoiser == "file") {
    recorded = load_clip(options.denoiser_clip).values;
    if (recorded->cols() != kNumMouthBlendshapes) throw DimensionError("lipsync: denoiser clip must have 35 columns");
  } else if (options.denoiser != "mock") {
    throw Error("lipsync: unknown denoiser '" + options.denoiser + "'");
  }

  const NoiseSchedule schedule = build_schedule();
  Clip mouth = Clip::Zero(frames, kNumMouthBlendshapes);
  mouth.topRows(kContextFrames) = fitted_mouth.topRows(kContextFrames);
  int clips = 0;
  for (int start = 0; start + kContextFrames < frames; start += kClipFrames - kContextFrames, ++clips) {
    const Clip context = mouth.middleRows(start, kContextFrames);
    const Eigen::MatrixXd audio = audio_features(in.audio, start);
    std::unique_ptr<Denoiser> denoiser;
    if (recorded) denoiser = std::make_unique<EchoDenoiser>(padded_rows(*recorded, start, kClipFrames));
    else denoiser = std::make_unique<MockDenoiser>(open_index);
    const Clip clip = sample(*denoiser, context, &audio, &style, schedule, options.sampler,
                             options.seed * 1000003ULL + static_cast<std::uint64_t>(clips), kClipFrames);
    const int end = std::min(start + kClipFrames, frames);
    mouth.middleRows(start + kContextFrames, end - start - kContextFrames) =
        clip.middleRows(kContextFrames, end - start - kContextFrames);
  }

  // (4)-(8) fuse, reenact twice, blend the mouth, paste back.
  LipsyncResult result;
  result.fitted = fit.params;
  result.fused.resize(frames);
  for (int f = 0; f < frames; ++f) result.fused[f] = fuse_mouth(fit.params[f], mouth.row(f).transpose(), indices);
  result.mouth = mouth;
  result.frames.resize(frames);
  result.crops.resize(frames);

  const double scale = static_cast<double>(gen) / 256.0;
  std::vector<double> locality(frames), locality_cf(frames), mouth_area(frames);
  std::vector<FaceBox> box_orig(frames), box_sync(frames);
  parallel_for(0, frames, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    const Vertices v_fit = evaluate_mesh(model, result.fitted[f]);
    const Vertices v_fused = evaluate_mesh(model, result.fused[f]);
    const Image i_cf = mock_generator(crops[f], render_maps(model, result.fitted[f], result.fused[f], camera));
    const Image i_ff = mock_generator(crops[0], render_maps(model, result.fitted[0], result.fused[f], camera));
    const Image mask = mouth_mask(model, v_fused, camera, options.mouth_radius * scale);
    const Image blended = composite_blend(i_cf, i_ff, mask);

    const Image region = edit_region(model, v_fit, v_fused, camera, options.mouth_radius * scale,
                                     options.chin_band * scale, options.silhouette_ring * scale);
    locality[f] = mean_abs_outside(blended, crops[f], region);
    locality_cf[f] = mean_abs_outside(i_cf, crops[f], region);
    double area = 0.0;
    for (float v : mask.data) area += v;
    mouth_area[f] = area;

    // Face boxes from the 68 face landmarks, in frame pixels.
    const PixelBox& b = boxes[f];
    const auto frame_box = [&](const FaceParams& p) {
      const LandmarkFrame lf = render_landmarks(model, p, camera, f);
      Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> pts = lf.points.topRows(kNumFaceLandmarks);
      pts.col(0) = pts.col(0) * (static_cast<double>(b.w) / gen) + Eigen::VectorXd::Constant(pts.rows(), b.x0);
      pts.col(1) = pts.col(1) * (static_cast<double>(b.h) / gen) + Eigen::VectorXd::Constant(pts.rows(), b.y0);
      return bounding_box(pts);
    };
    box_orig[f] = frame_box(result.fitted[f]);
    box_sync[f] = frame_box(result.fused[f]);

    Image out = in.frames[f];
    const Image patch = resize_bilinear(blended, b.h, b.w);
    for (int c = 0; c < out.channels && c < patch.channels; ++c)
      for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) {
          const int fy = b.y0 + y, fx = b.x0 + x;
          if (fy >= 0 && fy < out.height && fx >= 0 && fx < out.width) out.at(c, fy, fx) = patch.at(c, y, x);
        }
    result.frames[f] = std::move(out);
    result.crops[f] = blended;
  });

  const DeltaCl dcl = delta_cl(box_orig, box_sync);
  json per_frame = json::array();
  double loc_sum = 0.0, loc_max = 0.0;
  for (int f = 0; f < frames; ++f) {
    per_frame.push_back({{"frame", f},
                         {"locality", locality[f]},
                         {"locality_current_reference", locality_cf[f]},
                         {"delta_cl", dcl.per_frame[f]},
                         {"mouth_mask_area", mouth_area[f]},
                         {"box_orig", box_json(box_orig[f])},
                         {"box_lipsync", box_json(box_sync[f])},
                         {"fit_landmark_loss", fit.diagnostics.landmark[f]}});
    loc_sum += locality[f];
    loc_max = std::max(loc_max, locality[f]);
  }
  result.report = {
      {"status", fit.diagnostics.converged ? "ok" : "fit_not_converged"},
      {"frames", frames},
      {"clips", clips},
      {"style_source", style_source},
      {"summary",
       {{"locality_mean", loc_sum / frames},
        {"locality_max", loc_max},
        {"delta_cl_mean", dcl.mean},
        {"fit_rmse_px", fit.diagnostics.rmse},
        {"fit_iterations", fit.diagnostics.iterations},
        {"fit_converged", fit.diagnostics.converged}}},
      {"per_frame", per_frame}};
  return result;
}

// --- job files ---------------------------------------------------------------------

namespace {

json options_to_json(const LipsyncOptions& o) {
  return {{"generator_size", o.generator_size},
          {"mouth_radius", o.mouth_radius},
          {"chin_band", o.chin_band},
          {"silhouette_ring", o.silhouette_ring},
          {"generator", o.generator},
          {"denoiser", o.denoiser},
          {"denoiser_clip", o.denoiser_clip},
          {"seed", o.seed},
          {"fit",
           {{"lambda_lm", o.fit.lambda_lm},
            {"lambda_reg", o.fit.lambda_reg},
            {"lambda_constraint", o.fit.lambda_constraint},
            {"lambda_smooth", o.fit.lambda_smooth},
            {"iterations", o.fit.iterations},
            {"step_size", o.fit.step_size},
            {"tolerance", o.fit.tolerance},
            {"optimizer", o.fit.optimizer == Optimizer::kAdam ? "adam" : "lm"}}},
          {"sampler",
           {{"steps", o.sampler.steps},
            {"guidance", o.sampler.guidance},
            {"clip_lo", o.sampler.clip_lo},
            {"clip_hi", o.sampler.clip_hi},
            {"variance", o.sampler.variance == VarianceMode::kTweedie ? "tweedie" : "posterior"},
            {"probe_scale", o.sampler.probe_scale}}}};
}

LipsyncOptions options_from_json(const json& j) {
  LipsyncOptions o;
  o.generator_size = j.value("generator_size", o.generator_size);
  o.mouth_radius = j.value("mouth_radius", o.mouth_radius);
  o.chin_band = j.value("chin_band", o.chin_band);
  o.silhouette_ring = j.value("silhouette_ring", o.silhouette_ring);
  o.generator = j.value("generator", o.generator);
  o.denoiser = j.value("denoiser", o.denoiser);
  o.denoiser_clip = j.value("denoiser_clip", o.denoiser_clip);
  o.seed = j.value("seed", o.seed);
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    o.fit.lambda_lm = f.value("lambda_lm", o.fit.lambda_lm);
    o.fit.lambda_reg = f.value("lambda_reg", o.fit.lambda_reg);
    o.fit.lambda_constraint = f.value("lambda_constraint", o.fit.lambda_constraint);
    o.fit.lambda_smooth = f.value("lambda_smooth", o.fit.lambda_smooth);
    o.fit.iterations = f.value("iterations", o.fit.iterations);
    o.fit.step_size = f.value("step_size", o.fit.step_size);
    o.fit.tolerance = f.value("tolerance", o.fit.tolerance);
    const std::string opt = f.value("optimizer", std::string("lm"));
    if (opt != "lm" && opt != "adam") throw Error("job: optimizer must be 'lm' or 'adam'");
    o.fit.optimizer = opt == "adam" ? Optimizer::kAdam : Optimizer::kLevenbergMarquardt;
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    o.sampler.steps = s.value("steps", o.sampler.steps);
    o.sampler.guidance = s.value("guidance", o.sampler.guidance);
    o.sampler.clip_lo = s.value("clip_lo", o.sampler.clip_lo);
    o.sampler.clip_hi = s.value("clip_hi", o.sampler.clip_hi);
    o.sampler.probe_scale = s.value("probe_scale", o.sampler.probe_scale);
    const std::string var = s.value("variance", std::string("tweedie"));
    if (var != "tweedie" && var != "posterior") throw Error("job: variance must be 'tweedie' or 'posterior'");
    o.sampler.variance = var == "tweedie" ? VarianceMode::kTweedie : VarianceMode::kPosterior;
  }
  return o;
}

}  // namespace

LipsyncJob job_from_json(const json& j) {
  try {
    LipsyncJob job;
    job.frames_dir = j.at("frames").get<std::string>();
    job.boxes = j.at("boxes").get<std::string>();
    job.landmarks = j.at("landmarks").get<std::string>();
    job.audio = j.at("audio").get<std::string>();
    job.model = j.value("model", std::string());
    job.style = j.value("style", std::string());
    job.output_dir = j.at("output").get<std::string>();
    job.options = options_from_json(j.value("options", json::object()));
    return job;
  } catch (const json::exception& e) {
    throw Error(std::string("job: ") + e.what());
  }
}

json job_to_json(const LipsyncJob& job) {
  return {{"frames", job.frames_dir}, {"boxes", job.boxes},   {"landmarks", job.landmarks},
          {"audio", job.audio},       {"model", job.model},   {"style", job.style},
          {"output", job.output_dir}, {"options", options_to_json(job.options)}};
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", i);
  return buf;
}

std::vector<Image> load_frames(const std::string& dir) {
  static const std::regex pattern(R"(\d{5}\.png)");
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) throw Error("frames: not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, pattern)) names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] != frame_name(static_cast<int>(i))) throw Error("frames: missing " + frame_name(static_cast<int>(i)));
  std::vector<Image> frames;
  for (const std::string& n : names) {
    Image img = load_png((fs::path(dir) / n).string());
    if (img.channels == 1) {
      Image rgb(3, img.height, img.width);
      for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), rgb.data.begin() + c * img.plane());
      img = std::move(rgb);
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

void save_frames(const std::vector<Image>& frames, const std::string& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i)
    save_png(frames[i], (fs::path(dir) / frame_name(static_cast<int>(i))).string());
}

std::vector<FaceBox> load_boxes(const std::string& path, int frames) {
  std::ifstream is(path);
  if (!is) throw Error("boxes: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("boxes: " + std::string(e.what()));
  }
  if (!j.is_array() || j.empty()) throw FormatError("boxes: expected a non-empty array of [y1, y2, x1, x2]");
  std::vector<FaceBox> boxes;
  for (const json& b : j) {
    if (!b.is_array() || b.size() != 4) throw FormatError("boxes: each entry needs four numbers");
    FaceBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    box.validate();
    boxes.push_back(box);
  }
  if (boxes.size() == 1) boxes.resize(frames, boxes[0]);
  if (static_cast<int>(boxes.size()) != frames) throw DimensionError("boxes: count does not match the frames");
  return boxes;
}

void save_boxes(const std::vector<FaceBox>& boxes, const std::string& path) {
  json j = json::array();
  for (const FaceBox& b : boxes) j.push_back(box_json(b));
  std::ofstream os(path);
  if (!os) throw Error("boxes: cannot write " + path);
  os << j.dump() << "\n";
}

json lipsync_run_job(const LipsyncJob& job) {
  const FaceModel model = job.model.empty() ? make_synthetic_rig() : load_model(job.model);
  LipsyncInputs in;
  in.frames = load_frames(job.frames_dir);
  in.boxes = load_boxes(job.boxes, static_cast<int>(in.frames.size()));
  in.landmarks = load_landmarks(job.landmarks);
  in.audio = load_wav(job.audio);
  if (!job.style.empty()) in.style = load_clip(job.style);
  LipsyncResult r = lipsync_run(model, in, job.options);

  fs::create_directories(job.output_dir);
  save_frames(r.frames, (fs::path(job.output_dir) / "frames").string());
  ClipFile mouth{r.mouth, kContextFrames, {}};
  for (int i : default_mouth_indices(model)) mouth.names.push_back(model.blendshape_names[i]);
  save_clip(mouth, (fs::path(job.output_dir) / "mouth.bsc").string());
  r.report["config"] = job_to_json(job);
  std::ofstream os(fs::path(job.output_dir) / "report.json");
  os << r.report.dump(2) << "\n";
  if (!os) throw Error("lipsync: cannot write the report");
  return r.report;
}

// --- synthetic scene ---------------------------------------------------------------

Audio synthetic_speech(std::uint64_t seed, int samples) {
  Rng rng(seed);
  Audio a;
  a.samples.resize(samples);
  // Syllables of random length and loudness, separated by short pauses.
  std::vector<std::array<double, 3>> syllables;  // start, length, gain (seconds)
  for (double t = 0.0; t < static_cast<double>(samples) / kSampleRate;) {
    const double len = rng.uniform(0.12, 0.3);
    syllables.push_back({t, len, rng.uniform(0.3, 1.0)});
    t += len + rng.uniform(0.02, 0.15);
  }
  const double f0 = rng.uniform(100.0, 180.0);
  const double formant = rng.uniform(500.0, 900.0);
  std::size_t s = 0;
  double phase = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    while (s + 1 < syllables.size() && t >= syllables[s + 1][0]) ++s;
    const auto& syl = syllables[s];
    const double u = (t - syl[0]) / syl[1];
    const double env = u >= 0.0 && u <= 1.0 ? syl[2] * std::pow(std::sin(kPi * u), 2) : 0.0;
    phase += 2.0 * kPi * f0 * (1.0 + 0.03 * std::sin(2.0 * kPi * 5.0 * t)) / kSampleRate;
    double v = 0.0;
    for (int h = 1; h <= 12; ++h) {
      const double fh = h * f0;
      const double w = std::exp(-std::pow((fh - formant) / 400.0, 2)) + 0.3 / h;
      v += w * std::sin(h * phase);
    }
    a.samples[i] = static_cast<float>(0.15 * env * v);
  }
  return a;
}

SyntheticScene make_synthetic_scene(const FaceModel& model, std::uint64_t seed, int frames, int frame_size,
                                    int box_size) {
  if (frames < 1 || box_size < 16 || frame_size < box_size) throw Error("synthetic scene: bad size");
  SyntheticScene scene;
  const int offset = (frame_size - box_size) / 2;
  scene.camera = ProjectiveCamera::fitting_default(box_size).shifted(offset, offset);
  scene.camera.width = scene.camera.height = frame_size;
  Rng rng(seed);
  scene.truth = random_sequence(model, rng, frames, 10, 0.5);
  scene.frames.resize(frames);
  scene.landmarks.resize(frames);
  parallel_for(0, frames, [&](std::size_t f) {
    scene.frames[f] = render_synthetic(model, evaluate_mesh(model, scene.truth[f]), scene.camera);
    scene.landmarks[f] = render_landmarks(model, scene.truth[f], scene.camera, static_cast<int>(f));
  });
  const double lo = offset, hi = offset + box_size;
  scene.boxes.assign(frames, FaceBox{lo, hi, lo, hi});
  scene.audio = synthetic_speech(seed ^ 0x5eed5eedULL, frames * kSamplesPerFrame);
  return scene;
}

}  // namespace facesync
