#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "facesync/maps.hpp"
#include "facesync/pipeline.hpp"
#include "facesync/synthetic.hpp"

using namespace facesync;

namespace {

const FaceModel& rig() {
  static const FaceModel m = make_synthetic_rig();
  return m;
}

}  // namespace

TEST_CASE("relative chin displacement") {
  const std::vector<FaceBox> orig{{10, 110, 0, 50}, {0, 200, 0, 50}};
  CHECK(delta_cl(orig, orig).mean == 0.0);
  const DeltaCl d = delta_cl(orig, {{10, 120, 0, 50}, {0, 190, 0, 50}});
  CHECK(d.per_frame[0] == doctest::Approx(0.1));
  CHECK(d.per_frame[1] == doctest::Approx(0.05));
  CHECK(d.mean == doctest::Approx(0.075));
  CHECK_THROWS_AS(delta_cl({{10, 10, 0, 5}}, {{10, 10, 0, 5}}), DegenerateError);
  CHECK_THROWS_AS(delta_cl(orig, {orig[0]}), DimensionError);
}

TEST_CASE("bounding box of points") {
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> p(3, 2);
  p << 1, 5, 4, 2, 3, 9;
  const FaceBox b = bounding_box(p);
  CHECK(b == FaceBox{2, 9, 1, 4});
  CHECK_THROWS(FaceBox{5, 5, 0, 1}.validate());
}

TEST_CASE("box file round trip and broadcast") {
  const std::string path = (std::filesystem::temp_directory_path() / "facesync_test_boxes.json").string();
  save_boxes({{1, 2, 3, 4}}, path);
  const std::vector<FaceBox> b = load_boxes(path, 3);
  std::remove(path.c_str());
  REQUIRE(b.size() == 3);
  CHECK(b[2] == FaceBox{1, 2, 3, 4});
  CHECK(frame_name(7) == "00007.png");
}

TEST_CASE("mock generator passes the reference through for identical meshes") {
  const ProjectiveCamera cam = ProjectiveCamera::fitting_default(128);
  Rng rng(1);
  const FaceParams p = random_params(rig(), rng, 0.5);
  const Image ref = render_synthetic(rig(), evaluate_mesh(rig(), p), cam);
  const Image out = mock_generator(ref, render_maps(rig(), p, p, cam));
  for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(std::abs(out.data[i] - ref.data[i]) < 1e-6);
  CHECK_THROWS_AS(mock_generator(crop(ref, 0, 0, 64, 64), render_maps(rig(), p, p, cam)), DimensionError);
}

TEST_CASE("mouth mask covers the lips and little else") {
  const ProjectiveCamera cam = ProjectiveCamera::fitting_default(256);
  FaceParams p = FaceParams::neutral(rig());
  p.beta[rig().blendshape_index("jawOpen")] = 0.8;
  const Vertices posed = evaluate_mesh(rig(), p);
  const Image k = mouth_mask(rig(), posed, cam, 6.0);
  double area = 0.0;
  for (float v : k.data) area += v;
  CHECK(area > 100.0);
  CHECK(area < 0.1 * k.data.size());
  const Image region = edit_region(rig(), posed, posed, cam, 6.0, 8.0, 2.0);
  for (std::size_t i = 0; i < k.data.size(); ++i)
    if (k.data[i] > 0.5f) CHECK(region.data[i] == 1.0f);
}

TEST_CASE("closed loop with a recorded mouth track changes nothing") {
  const SyntheticScene scene = make_synthetic_scene(rig(), 3, 12);
  LipsyncInputs in{scene.frames, scene.boxes, scene.landmarks, scene.audio, std::nullopt};
  LipsyncOptions o;
  o.denoiser = "echo";
  o.sampler.steps = 10;
  const LipsyncResult r = lipsync_run(rig(), in, o);
  REQUIRE(r.frames.size() == 12);
  CHECK(r.mouth.rows() == 12);
  CHECK(r.report["status"] == "ok");
  CHECK(r.report["summary"]["locality_max"].get<double>() < 1e-6);
  CHECK(r.report["summary"]["delta_cl_mean"].get<double>() < 1e-6);
  for (std::size_t f = 0; f < r.fused.size(); ++f) CHECK((r.fused[f].beta - r.fitted[f].beta).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("job JSON round trip") {
  LipsyncJob job;
  job.frames_dir = "in/frames";
  job.boxes = "in/boxes.json";
  job.landmarks = "in/landmarks.jsonl";
  job.audio = "in/audio.wav";
  job.output_dir = "out";
  job.options.denoiser = "echo";
  job.options.sampler.steps = 25;
  job.options.fit.optimizer = Optimizer::kAdam;
  const LipsyncJob back = job_from_json(job_to_json(job));
  CHECK(back.frames_dir == job.frames_dir);
  CHECK(back.output_dir == job.output_dir);
  CHECK(back.options.denoiser == "echo");
  CHECK(back.options.sampler.steps == 25);
  CHECK(back.options.fit.optimizer == Optimizer::kAdam);
  CHECK(job_to_json(back) == job_to_json(job));
}
