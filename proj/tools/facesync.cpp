#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "facesync/audio.hpp"
#include "facesync/common.hpp"
#include "facesync/decimate.hpp"
#include "facesync/diffusion.hpp"
#include "facesync/fitting.hpp"
#include "facesync/maps.hpp"
#include "facesync/model_io.hpp"
#include "facesync/pipeline.hpp"
#include "facesync/synthetic.hpp"
#include "facesync/warp.hpp"

using namespace facesync;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
};

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw Error("cannot write " + path);
}

// "synthetic" selects the built-in procedural rig.
FaceModel open_model(const std::string& path) { return path == "synthetic" ? make_synthetic_rig() : load_model(path); }

Image load_any(const std::string& path) {
  return fs::path(path).extension() == ".png" ? load_png(path) : load_fmap(path);
}

// --- subcommands -------------------------------------------------------------------

struct DecimateArgs {
  std::string model, out, plan;
  int target = 0;
  int expressions = 50;
  bool mean_only = false;
};

void run_decimate(const DecimateArgs& a, const Globals& g) {
  const FaceModel model = open_model(a.model);
  const ExpressionQuadrics q =
      a.mean_only ? mean_shape_quadrics(model) : expression_quadrics(model, a.expressions, g.seed);
  const DecimationResult r = decimate_symmetric(model, q, a.target);
  save_model(r.model, a.out);
  json report = plan_to_json(r.plan);
  if (!a.plan.empty()) write_json(report, a.plan);
  std::cout << "vertices " << r.plan.vertices_before << " -> " << r.plan.vertices_after << ", triangles "
            << r.plan.triangles_before << " -> " << r.plan.triangles_after << "\n";
  if (!r.plan.reached_target) std::cout << "warning: target vertex count not reached exactly\n";
}

struct RenderArgs {
  std::string model, params, out_dir;
  int ref_frame = 0;
  bool previews = true;
};

void run_render_maps(const RenderArgs& a) {
  const FaceModel model = open_model(a.model);
  const ParamsFile pf = load_params(a.params);
  if (a.ref_frame < 0 || a.ref_frame >= static_cast<int>(pf.frames.size()))
    throw Error("render-maps: reference frame out of range");
  fs::create_directories(a.out_dir);
  const FaceParams& ref = pf.frames[a.ref_frame];
  parallel_for(0, pf.frames.size(), [&](std::size_t i) {
    const RenderMaps m = render_maps(model, ref, pf.frames[i], pf.camera);
    const std::string stem = (fs::path(a.out_dir) / frame_name(static_cast<int>(i))).replace_extension().string();
    save_fmap(m.P, "P", stem + "_P.fmap");
    save_fmap(m.S, "S", stem + "_S.fmap");
    save_fmap(m.flow, "F3DMM", stem + "_flow.fmap");
    save_fmap(m.foreground, "foreground", stem + "_fg.fmap");
    if (a.previews) {
      Image p(3, m.P.height, m.P.width);
      for (int c = 0; c < 3; ++c) {
        const Image n = normalize_channel(m.P, c, -12.0f, 12.0f);
        std::copy(n.data.begin(), n.data.end(), p.data.begin() + c * p.plane());
      }
      save_png(p, stem + "_P.png");
      Image s(1, m.S.height, m.S.width);
      for (std::size_t k = 0; k < s.plane(); ++k) s.data[k] = std::max(m.S.data[k], m.S.data[k + s.plane()]);
      save_png(s, stem + "_S.png");
      save_png(normalize_channel(m.flow, 0, -10.0f, 10.0f), stem + "_flow_x.png");
      save_png(normalize_channel(m.flow, 1, -10.0f, 10.0f), stem + "_flow_y.png");
    }
  });
  std::cout << "wrote maps for " << pf.frames.size() << " frames to " << a.out_dir << "\n";
}

struct FitArgs {
  std::string model, landmarks, out, optimizer = "lm";
  int iterations = 100;
  int size = 224;
};

void run_fit(const FitArgs& a, const Globals& g) {
  const FaceModel model = open_model(a.model);
  const LandmarkTrack track = load_landmarks(a.landmarks);
  FitConfig cfg;
  cfg.iterations = a.iterations;
  cfg.seed = g.seed;
  cfg.optimizer = a.optimizer == "adam" ? Optimizer::kAdam : Optimizer::kLevenbergMarquardt;
  const ProjectiveCamera camera = ProjectiveCamera::fitting_default(a.size);
  const FitResult r = fit_sequence(track, model, camera, cfg);
  ParamsFile pf;
  pf.camera = camera;
  pf.alpha = r.alpha;
  pf.frames = r.params;
  for (const LandmarkFrame& f : track) pf.frame_ids.push_back(f.frame);
  pf.diagnostics = diagnostics_to_json(r.diagnostics);
  save_params(pf, a.out);
  std::cout << "rmse " << r.diagnostics.rmse << " px, iterations " << r.diagnostics.iterations
            << (r.diagnostics.converged ? ", converged" : ", not converged") << "\n";
  if (r.diagnostics.diverged) throw Error("fit diverged");
}

struct SampleArgs {
  std::string audio, style, denoiser = "mock", clip, context, out;
  int steps = 50;
  double guidance = 1.2;
  std::string variance = "tweedie";
};

void run_sample(const SampleArgs& a, const Globals& g) {
  const ClipFile style = load_clip(a.style);
  const Audio audio = load_wav(a.audio);
  const Eigen::MatrixXd features = chunk_features(mel_chunk(audio));
  const ClipFile context = a.context.empty() ? style : load_clip(a.context);
  if (context.values.rows() < kContextFrames) throw DimensionError("sample-bs: context needs 5 frames");

  std::unique_ptr<Denoiser> denoiser;
  if (a.denoiser == "mock") {
    int open = -1;
    for (std::size_t i = 0; i < style.names.size(); ++i)
      if (style.names[i] == "jawOpen") open = static_cast<int>(i);
    denoiser = std::make_unique<MockDenoiser>(open);
  } else if (a.denoiser == "file") {
    if (a.clip.empty()) throw Error("sample-bs: --clip is required with --denoiser file");
    denoiser = std::make_unique<EchoDenoiser>(load_clip(a.clip).values);
  } else {
    throw Error("sample-bs: unknown denoiser '" + a.denoiser + "'");
  }
  SamplerOptions opt;
  opt.steps = a.steps;
  opt.guidance = a.guidance;
  opt.variance = a.variance == "posterior" ? VarianceMode::kPosterior : VarianceMode::kTweedie;
  const Clip ctx = context.values.topRows(kContextFrames);
  const Clip out = sample(*denoiser, ctx, &features, &style.values, build_schedule(), opt, g.seed);
  save_clip({out, kContextFrames, style.names}, a.out);
  std::cout << "wrote " << out.rows() << "x" << out.cols() << " clip to " << a.out << "\n";
}

struct SimArgs {
  std::string out = "lipsync_out";
  std::string denoiser = "mock";
  std::string model = "synthetic";
  int frames = 50;
};

void run_lipsync_sim(const SimArgs& a, const Globals& g) {
  LipsyncJob job;
  if (!g.config.empty()) {
    job = job_from_json(read_json(g.config));
  } else {
    const FaceModel model = open_model(a.model);
    const SyntheticScene scene = make_synthetic_scene(model, g.seed, a.frames);
    const fs::path in = fs::path(a.out) / "input";
    fs::create_directories(in);
    save_frames(scene.frames, (in / "frames").string());
    save_boxes(scene.boxes, (in / "boxes.json").string());
    save_landmarks(scene.landmarks, (in / "landmarks.jsonl").string());
    save_wav(scene.audio, (in / "audio.wav").string());
    job.frames_dir = (in / "frames").string();
    job.boxes = (in / "boxes.json").string();
    job.landmarks = (in / "landmarks.jsonl").string();
    job.audio = (in / "audio.wav").string();
    job.model = a.model == "synthetic" ? "" : a.model;
    job.output_dir = (fs::path(a.out) / "output").string();
    job.options.denoiser = a.denoiser;
    job.options.seed = g.seed;
    write_json(job_to_json(job), (in / "job.json").string());
  }
  const json report = lipsync_run_job(job);
  const json& s = report.at("summary");
  std::cout << "frames " << report.at("frames") << ", locality mean " << s.at("locality_mean") << ", max "
            << s.at("locality_max") << ", delta_cl mean " << s.at("delta_cl_mean") << "\n"
            << "report: " << (fs::path(job.output_dir) / "report.json").string() << "\n";
}

struct MetricsArgs {
  std::string pred, ref, mask, boxes_orig, boxes_sync, out;
};

void run_metrics(const MetricsArgs& a) {
  json j = json::object();
  if (!a.pred.empty() || !a.ref.empty()) {
    if (a.pred.empty() || a.ref.empty()) throw Error("metrics: --pred and --ref go together");
    const Image pred = load_any(a.pred), ref = load_any(a.ref);
    const Image mask = a.mask.empty() ? Image(1, pred.height, pred.width) : load_any(a.mask);
    j["locality"] = locality_metric(pred, ref, mask);
  }
  if (!a.boxes_orig.empty() || !a.boxes_sync.empty()) {
    if (a.boxes_orig.empty() || a.boxes_sync.empty()) throw Error("metrics: --boxes-orig and --boxes-lipsync go together");
    const json jo = read_json(a.boxes_orig);
    const std::vector<FaceBox> bo = load_boxes(a.boxes_orig, static_cast<int>(jo.size()));
    const std::vector<FaceBox> bs = load_boxes(a.boxes_sync, static_cast<int>(bo.size()));
    const DeltaCl d = delta_cl(bo, bs);
    j["delta_cl"] = {{"per_frame", d.per_frame}, {"mean", d.mean}};
  }
  if (j.empty()) throw Error("metrics: nothing to compute");
  write_json(j, a.out);
}

struct ImportArgs {
  std::string config, out;
};

void run_import(const ImportArgs& a) {
  const json j = read_json(a.config);
  ObjImportConfig cfg;
  const fs::path base = fs::path(a.config).parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  const auto range = [](const json& r) { return VertexRange{r.at(0).get<int>(), r.at(1).get<int>()}; };
  try {
    cfg.neutral = resolve(j.at("neutral").get<std::string>());
    for (const auto& p : j.value("identity", json::array())) cfg.identity.push_back(resolve(p.get<std::string>()));
    for (const auto& e : j.at("expressions"))
      cfg.expressions.emplace_back(e.at("name").get<std::string>(), resolve(e.at("path").get<std::string>()));
    for (const auto& r : j.value("keep", json::array())) cfg.keep.push_back(range(r));
    if (j.contains("eyeball_right")) cfg.eyeball_right = range(j.at("eyeball_right"));
    if (j.contains("eyeball_left")) cfg.eyeball_left = range(j.at("eyeball_left"));
    cfg.symmetry_tolerance = j.value("symmetry_tolerance", cfg.symmetry_tolerance);
  } catch (const json::exception& e) {
    throw FormatError("import-obj: " + std::string(e.what()));
  }
  const FaceModel m = import_obj_model(cfg);
  save_model(m, a.out);
  std::cout << "imported " << m.num_vertices() << " vertices, " << m.num_triangles() << " triangles, "
            << m.num_blendshapes() << " blendshapes\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facesync: 3DMM face model, conditioning maps, fitting and lip-sync tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "Job JSON (lipsync-sim)");

  DecimateArgs dec;
  auto* c_dec = app.add_subcommand("decimate", "Symmetric expression-aware mesh decimation");
  c_dec->add_option("--model", dec.model, "Input FKT1 model or 'synthetic'")->required();
  c_dec->add_option("--target-verts", dec.target, "Target vertex count")->required();
  c_dec->add_option("--expr", dec.expressions, "Random expressions averaged into the quadrics");
  c_dec->add_flag("--mean-only", dec.mean_only, "Use mean-shape quadrics only");
  c_dec->add_option("--out", dec.out, "Output FKT1 model")->required();
  c_dec->add_option("--plan", dec.plan, "Collapse plan JSON");

  RenderArgs ren;
  auto* c_ren = app.add_subcommand("render-maps", "Render P, S, F_3DMM and foreground maps");
  c_ren->add_option("--model", ren.model, "FKT1 model or 'synthetic'")->required();
  c_ren->add_option("--params", ren.params, "Fitted params JSON")->required();
  c_ren->add_option("--ref-frame", ren.ref_frame, "Reference frame for F_3DMM");
  c_ren->add_option("--out-dir", ren.out_dir, "Output directory")->required();
  c_ren->add_flag("!--no-previews", ren.previews, "Skip 8-bit previews");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit model parameters to a landmark track");
  c_fit->add_option("--model", fit.model, "FKT1 model or 'synthetic'")->required();
  c_fit->add_option("--landmarks", fit.landmarks, "Landmarks JSONL")->required();
  c_fit->add_option("--out", fit.out, "Output params JSON")->required();
  c_fit->add_option("--iters", fit.iterations, "Iteration budget");
  c_fit->add_option("--size", fit.size, "Square image size of the landmark coordinates");
  c_fit->add_option("--optimizer", fit.optimizer, "lm or adam")->check(CLI::IsMember({"lm", "adam"}));

  SampleArgs smp;
  auto* c_smp = app.add_subcommand("sample-bs", "Sample a mouth blendshape clip");
  c_smp->add_option("--audio", smp.audio, "2 s 16 kHz mono WAV")->required();
  c_smp->add_option("--style", smp.style, "Style clip (BSC1)")->required();
  c_smp->add_option("--context", smp.context, "Context clip (BSC1, first 5 frames; default: style)");
  c_smp->add_option("--denoiser", smp.denoiser, "mock or file")->check(CLI::IsMember({"mock", "file"}));
  c_smp->add_option("--clip", smp.clip, "Recorded clip for --denoiser file");
  c_smp->add_option("--steps", smp.steps, "Denoising steps");
  c_smp->add_option("--guidance", smp.guidance, "Guidance scale");
  c_smp->add_option("--variance", smp.variance, "tweedie or posterior")->check(CLI::IsMember({"tweedie", "posterior"}));
  c_smp->add_option("--out", smp.out, "Output clip (BSC1)")->required();

  SimArgs sim;
  auto* c_sim = app.add_subcommand("lipsync-sim", "Run the lip-sync pipeline (synthetic scene unless --config)");
  c_sim->add_option("--out", sim.out, "Output directory");
  c_sim->add_option("--frames", sim.frames, "Synthetic scene length");
  c_sim->add_option("--denoiser", sim.denoiser, "mock or echo")->check(CLI::IsMember({"mock", "echo"}));
  c_sim->add_option("--model", sim.model, "FKT1 model or 'synthetic'");

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Locality metric and delta CL");
  c_met->add_option("--pred", met.pred, "Predicted image (PNG or FMAP)");
  c_met->add_option("--ref", met.ref, "Reference image (PNG or FMAP)");
  c_met->add_option("--mask", met.mask, "Mask image (1 = allowed to change)");
  c_met->add_option("--boxes-orig", met.boxes_orig, "Original boxes JSON");
  c_met->add_option("--boxes-lipsync", met.boxes_sync, "Lip-synced boxes JSON");
  c_met->add_option("--out", met.out, "Output JSON (default stdout)");

  std::string rig_out;
  auto* c_rig = app.add_subcommand("make-rig", "Write the procedural synthetic rig");
  c_rig->add_option("--out", rig_out, "Output FKT1 model")->required();

  ImportArgs imp;
  auto* c_imp = app.add_subcommand("import-obj", "Convert an OBJ blendshape rig to FKT1");
  c_imp->add_option("--config", imp.config, "Import description JSON")->required();
  c_imp->add_option("--out", imp.out, "Output FKT1 model")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (g.threads > 0) set_thread_count(g.threads);
    if (*c_dec) run_decimate(dec, g);
    else if (*c_ren) run_render_maps(ren);
    else if (*c_fit) run_fit(fit, g);
    else if (*c_smp) run_sample(smp, g);
    else if (*c_sim) run_lipsync_sim(sim, g);
    else if (*c_met) run_metrics(met);
    else if (*c_rig) save_model(make_synthetic_rig(), rig_out);
    else if (*c_imp) run_import(imp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
