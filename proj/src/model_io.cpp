#include "facesync/model_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "container.hpp"

namespace facesync {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "FKT1";

json range_json(const VertexRange& r) { return json{{"begin", r.begin}, {"end", r.end}}; }

VertexRange range_from(const json& j) { return VertexRange{j.at("begin").get<int>(), j.at("end").get<int>()}; }

}  // namespace

std::vector<char> encode_model(const FaceModel& model) {
  model.validate();
  const int n = model.num_vertices();
  json header;
  header["format"] = "FKT1";
  header["version"] = 1;
  header["num_vertices"] = n;
  header["num_triangles"] = model.num_triangles();
  header["num_identity"] = model.num_identity();
  header["blendshape_names"] = model.blendshape_names;
  header["eyeball_right"] = range_json(model.eyeball_right);
  header["eyeball_left"] = range_json(model.eyeball_left);
  header["iris_right"] = model.iris_right;
  header["iris_left"] = model.iris_left;
  json lms = json::array();
  for (const auto& lm : model.landmarks)
    lms.push_back({{"triangle", lm.triangle}, {"bary", lm.bary}});
  header["landmarks"] = lms;
  json polys = json::array();
  for (const auto& p : model.polylines)
    polys.push_back({{"name", p.name}, {"kind", p.kind}, {"closed", p.closed}, {"vertices", p.vertices}});
  header["polylines"] = polys;
  header["blocks"] = json::array({
      {{"name", "mean"}, {"dtype", "f32"}, {"shape", {n, 3}}},
      {{"name", "identity"}, {"dtype", "f32"}, {"shape", {model.num_identity(), n, 3}}},
      {{"name", "blendshapes"}, {"dtype", "f32"}, {"shape", {model.num_blendshapes(), n, 3}}},
      {{"name", "triangles"}, {"dtype", "u32"}, {"shape", {model.num_triangles(), 3}}},
      {{"name", "symmetry"}, {"dtype", "u32"}, {"shape", {n}}},
  });

  detail::ByteWriter w;
  w.magic(kMagic);
  w.header(header);
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) w.f32(model.mean[i]);
  for (Eigen::Index k = 0; k < model.identity.cols(); ++k)
    for (Eigen::Index i = 0; i < model.identity.rows(); ++i) w.f32(model.identity(i, k));
  for (Eigen::Index k = 0; k < model.blendshapes.cols(); ++k)
    for (Eigen::Index i = 0; i < model.blendshapes.rows(); ++i) w.f32(model.blendshapes(i, k));
  for (const auto& t : model.triangles)
    for (int v : t) w.u32(static_cast<std::uint32_t>(v));
  for (int s : model.symmetry) w.u32(static_cast<std::uint32_t>(s));
  return w.bytes();
}

FaceModel decode_model(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes), "FKT1");
  r.expect_magic(kMagic);
  const json h = r.header();
  FaceModel m;
  try {
    if (h.at("version").get<int>() != 1) throw FormatError("FKT1: unsupported version");
    const int n = h.at("num_vertices").get<int>();
    const int nt = h.at("num_triangles").get<int>();
    const int ni = h.at("num_identity").get<int>();
    m.blendshape_names = h.at("blendshape_names").get<std::vector<std::string>>();
    const int nb = static_cast<int>(m.blendshape_names.size());
    if (n <= 0 || nt < 0 || ni < 0) throw FormatError("FKT1: negative counts in header");
    m.eyeball_right = range_from(h.at("eyeball_right"));
    m.eyeball_left = range_from(h.at("eyeball_left"));
    m.iris_right = h.at("iris_right").get<std::vector<int>>();
    m.iris_left = h.at("iris_left").get<std::vector<int>>();
    for (const auto& lm : h.at("landmarks"))
      m.landmarks.push_back({lm.at("triangle").get<int>(), lm.at("bary").get<std::array<double, 3>>()});
    for (const auto& p : h.at("polylines"))
      m.polylines.push_back({p.at("name").get<std::string>(), p.at("kind").get<std::string>(),
                             p.at("closed").get<bool>(), p.at("vertices").get<std::vector<int>>()});

    m.mean.resize(3 * n);
    for (int i = 0; i < 3 * n; ++i) m.mean[i] = r.f32();
    m.identity.resize(3 * n, ni);
    for (int k = 0; k < ni; ++k)
      for (int i = 0; i < 3 * n; ++i) m.identity(i, k) = r.f32();
    m.blendshapes.resize(3 * n, nb);
    for (int k = 0; k < nb; ++k)
      for (int i = 0; i < 3 * n; ++i) m.blendshapes(i, k) = r.f32();
    m.triangles.resize(nt);
    for (auto& t : m.triangles)
      for (int& v : t) v = static_cast<int>(r.u32());
    m.symmetry.resize(n);
    for (int& s : m.symmetry) s = static_cast<int>(r.u32());
  } catch (const json::exception& e) {
    throw FormatError(std::string("FKT1: malformed header (") + e.what() + ")");
  }
  r.expect_end();
  m.validate();
  return m;
}

void save_model(const FaceModel& model, const std::string& path) {
  detail::write_file(path, encode_model(model));
}

FaceModel load_model(const std::string& path) { return decode_model(detail::read_file(path)); }

std::vector<int> mirror_symmetry_map(const Vertices& vertices, double tolerance) {
  const int n = static_cast<int>(vertices.rows());
  const double cell = std::max(tolerance, 1e-12) * 2.0;
  const auto key = [cell](double x, double y, double z) {
    const auto q = [cell](double v) { return static_cast<std::int64_t>(std::floor(v / cell)); };
    return std::make_tuple(q(x), q(y), q(z));
  };
  struct Hash {
    std::size_t operator()(const std::tuple<std::int64_t, std::int64_t, std::int64_t>& k) const {
      const auto [a, b, c] = k;
      return static_cast<std::size_t>(a * 73856093LL ^ b * 19349663LL ^ c * 83492791LL);
    }
  };
  std::unordered_map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::vector<int>, Hash> grid;
  for (int i = 0; i < n; ++i) grid[key(vertices(i, 0), vertices(i, 1), vertices(i, 2))].push_back(i);

  std::vector<int> nearest(n, -1);
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVector3d m(-vertices(i, 0), vertices(i, 1), vertices(i, 2));
    const auto [kx, ky, kz] = key(m.x(), m.y(), m.z());
    double best = tolerance;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({kx + dx, ky + dy, kz + dz});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            const double d = (vertices.row(j) - m).norm();
            if (d <= best) {
              best = d;
              nearest[i] = j;
            }
          }
        }
  }
  std::vector<int> sym(n);
  for (int i = 0; i < n; ++i) {
    const int j = nearest[i];
    sym[i] = (j >= 0 && nearest[j] == i) ? j : i;
  }
  return sym;
}

void read_obj(const std::string& path, Vertices* vertices, std::vector<Triangle>* triangles) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open OBJ '" + path + "'");
  std::vector<Eigen::Vector3d> pts;
  std::vector<Triangle> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Eigen::Vector3d p;
      ls >> p.x() >> p.y() >> p.z();
      if (!ls) throw FormatError("OBJ '" + path + "': bad vertex record");
      pts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const int idx = std::stoi(tok.substr(0, tok.find('/')));
        poly.push_back(idx > 0 ? idx - 1 : static_cast<int>(pts.size()) + idx);
      }
      for (std::size_t k = 2; k < poly.size(); ++k) tris.push_back({poly[0], poly[k - 1], poly[k]});
    }
  }
  vertices->resize(static_cast<int>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) vertices->row(i) = pts[i].transpose();
  *triangles = std::move(tris);
}

FaceModel import_obj_model(const ObjImportConfig& config) {
  Vertices neutral;
  std::vector<Triangle> tris;
  read_obj(config.neutral, &neutral, &tris);
  const int n_all = static_cast<int>(neutral.rows());

  std::vector<int> remap(n_all, -1);
  int n = 0;
  const auto kept = [&](int v) {
    if (config.keep.empty()) return true;
    for (const auto& r : config.keep)
      if (r.contains(v)) return true;
    return false;
  };
  for (int v = 0; v < n_all; ++v)
    if (kept(v)) remap[v] = n++;

  const auto load_delta = [&](const std::string& path, Eigen::MatrixXf& basis, int col) {
    Vertices shape;
    std::vector<Triangle> unused;
    read_obj(path, &shape, &unused);
    if (shape.rows() != n_all) throw FormatError("OBJ '" + path + "': vertex count differs from neutral");
    for (int v = 0; v < n_all; ++v) {
      if (remap[v] < 0) continue;
      for (int c = 0; c < 3; ++c)
        basis(3 * remap[v] + c, col) = static_cast<float>(shape(v, c) - neutral(v, c));
    }
  };

  FaceModel m;
  m.mean.resize(3 * n);
  Vertices kept_vertices(n, 3);
  for (int v = 0; v < n_all; ++v) {
    if (remap[v] < 0) continue;
    for (int c = 0; c < 3; ++c) {
      m.mean[3 * remap[v] + c] = static_cast<float>(neutral(v, c));
      kept_vertices(remap[v], c) = m.mean[3 * remap[v] + c];
    }
  }
  m.identity = Eigen::MatrixXf::Zero(3 * n, static_cast<Eigen::Index>(config.identity.size()));
  for (std::size_t k = 0; k < config.identity.size(); ++k)
    load_delta(config.identity[k], m.identity, static_cast<int>(k));
  m.blendshapes = Eigen::MatrixXf::Zero(3 * n, static_cast<Eigen::Index>(config.expressions.size()));
  for (std::size_t k = 0; k < config.expressions.size(); ++k) {
    m.blendshape_names.push_back(config.expressions[k].first);
    load_delta(config.expressions[k].second, m.blendshapes, static_cast<int>(k));
  }
  for (const auto& t : tris) {
    if (remap[t[0]] < 0 || remap[t[1]] < 0 || remap[t[2]] < 0) continue;
    m.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  }
  const auto map_range = [&](const VertexRange& r) {
    VertexRange out{n, 0};
    for (int v = r.begin; v < r.end; ++v)
      if (remap[v] >= 0) {
        out.begin = std::min(out.begin, remap[v]);
        out.end = std::max(out.end, remap[v] + 1);
      }
    return out.end > out.begin ? out : VertexRange{};
  };
  m.eyeball_right = map_range(config.eyeball_right);
  m.eyeball_left = map_range(config.eyeball_left);
  m.symmetry = mirror_symmetry_map(kept_vertices, config.symmetry_tolerance);
  m.validate();
  return m;
}

}  // namespace facesync
