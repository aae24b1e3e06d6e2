#include "facesync/decimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "facesync/common.hpp"

namespace facesync {

// --- Quadric -------------------------------------------------------------------

Quadric Quadric::plane(const Eigen::Vector3d& n, double d, double w) {
  Quadric q;
  q.a = {w * n.x() * n.x(), w * n.x() * n.y(), w * n.x() * n.z(), w * n.x() * d, w * n.y() * n.y(),
         w * n.y() * n.z(), w * n.y() * d,     w * n.z() * n.z(), w * n.z() * d, w * d * d};
  return q;
}

double Quadric::evaluate(const Eigen::Vector3d& p) const {
  const double x = p.x(), y = p.y(), z = p.z();
  return a[0] * x * x + 2 * a[1] * x * y + 2 * a[2] * x * z + 2 * a[3] * x + a[4] * y * y + 2 * a[5] * y * z +
         2 * a[6] * y + a[7] * z * z + 2 * a[8] * z + a[9];
}

Eigen::Matrix4d Quadric::matrix() const {
  Eigen::Matrix4d m;
  m << a[0], a[1], a[2], a[3], a[1], a[4], a[5], a[6], a[2], a[5], a[7], a[8], a[3], a[6], a[8], a[9];
  return m;
}

Quadric& Quadric::operator+=(const Quadric& o) {
  for (int i = 0; i < 10; ++i) a[i] += o.a[i];
  return *this;
}

Quadric Quadric::operator+(const Quadric& o) const {
  Quadric r = *this;
  return r += o;
}

Quadric Quadric::operator*(double s) const {
  Quadric r = *this;
  for (double& v : r.a) v *= s;
  return r;
}

std::vector<Quadric> ExpressionQuadrics::mean() const {
  std::vector<Quadric> out(num_vertices);
  for (int e = 0; e < num_expressions; ++e)
    for (int v = 0; v < num_vertices; ++v) out[v] += at(e, v);
  for (auto& q : out) q = q * (1.0 / num_expressions);
  return out;
}

ExpressionQuadrics quadrics_for_expressions(const FaceModel& model, const std::vector<Eigen::VectorXd>& betas,
                                            const QuadricOptions& options) {
  if (betas.empty()) throw Error("quadrics: need at least one expression");
  const int n = model.num_vertices();
  ExpressionQuadrics out;
  out.num_expressions = static_cast<int>(betas.size());
  out.num_vertices = n;
  out.per_expression.assign(betas.size() * static_cast<std::size_t>(n), Quadric{});
  out.positions.resize(betas.size());

  // Boundary edges: edges used by exactly one triangle, with that triangle.
  std::map<std::pair<int, int>, std::pair<int, int>> edge_use;  // edge -> (count, triangle)
  for (int t = 0; t < model.num_triangles(); ++t)
    for (int k = 0; k < 3; ++k) {
      auto& e = edge_use[std::minmax(model.triangles[t][k], model.triangles[t][(k + 1) % 3])];
      ++e.first;
      e.second = t;
    }
  std::vector<std::pair<std::pair<int, int>, int>> boundary;
  for (const auto& [edge, use] : edge_use)
    if (use.first == 1) boundary.push_back({edge, use.second});

  const Eigen::VectorXd alpha = Eigen::VectorXd::Zero(model.num_identity());
  parallel_for(0, betas.size(), [&](std::size_t e) {
    const Vertices v = evaluate_shape(model, alpha, betas[e]);
    Quadric* q = &out.per_expression[e * n];
    std::vector<Eigen::Vector3d> normal(model.triangles.size(), Eigen::Vector3d::Zero());
    for (int t = 0; t < model.num_triangles(); ++t) {
      const auto& tri = model.triangles[t];
      const Eigen::Vector3d p0 = v.row(tri[0]), p1 = v.row(tri[1]), p2 = v.row(tri[2]);
      const Eigen::Vector3d c = (p1 - p0).cross(p2 - p0);
      const double len = c.norm();
      if (len <= 1e-300) continue;
      const Eigen::Vector3d nn = c / len;
      normal[t] = nn;
      const Quadric plane = Quadric::plane(nn, -nn.dot(p0), 0.5 * len);
      for (int k = 0; k < 3; ++k) q[tri[k]] += plane;
    }
    for (const auto& [edge, t] : boundary) {
      const Eigen::Vector3d a = v.row(edge.first), b = v.row(edge.second);
      const Eigen::Vector3d dir = b - a;
      const Eigen::Vector3d bn = dir.cross(normal[t]);
      const double len = bn.norm();
      if (len <= 1e-300) continue;
      const Eigen::Vector3d nn = bn / len;
      const Quadric plane = Quadric::plane(nn, -nn.dot(a), options.boundary_weight * dir.squaredNorm());
      q[edge.first] += plane;
      q[edge.second] += plane;
    }
    out.positions[e] = v;
  });
  return out;
}

ExpressionQuadrics expression_quadrics(const FaceModel& model, int n_expr, std::uint64_t seed,
                                       const QuadricOptions& options) {
  if (n_expr < 1) throw Error("expression_quadrics: n_expr must be at least 1");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> betas(n_expr);
  for (auto& b : betas) {
    b.resize(model.num_blendshapes());
    for (int i = 0; i < b.size(); ++i) b[i] = rng.uniform();
  }
  return quadrics_for_expressions(model, betas, options);
}

ExpressionQuadrics mean_shape_quadrics(const FaceModel& model, const QuadricOptions& options) {
  return quadrics_for_expressions(model, {Eigen::VectorXd::Zero(model.num_blendshapes())}, options);
}

nlohmann::json plan_to_json(const DecimationPlan& plan) {
  nlohmann::json collapses = nlohmann::json::array();
  for (const auto& c : plan.collapses) collapses.push_back({{"kept", c.kept}, {"removed", c.removed}, {"cost", c.cost}});
  return {{"vertices_before", plan.vertices_before}, {"vertices_after", plan.vertices_after},
          {"triangles_before", plan.triangles_before}, {"triangles_after", plan.triangles_after},
          {"target_vertices", plan.target_vertices}, {"reached_target", plan.reached_target},
          {"collapses", collapses}, {"remap", plan.remap}};
}

// --- Decimator -----------------------------------------------------------------

struct Decimator::Journal {
  int v = -1, u = -1;
  std::vector<std::pair<int, Triangle>> triangles;  // previous vertex triples
  std::vector<int> killed;
  std::vector<std::pair<int, std::vector<int>>> lists;
  std::vector<Quadric> q_u;
};

Decimator::Decimator(const FaceModel& model, const ExpressionQuadrics& quadrics, const DecimateOptions& options)
    : model_(model), quadrics_(quadrics), options_(options) {
  if (quadrics.num_vertices != model.num_vertices())
    throw DimensionError("decimate: quadrics do not match the model");
  const int n = model.num_vertices();
  rest_ = model.mean_vertices();
  tris_ = model.triangles;
  tri_alive_.assign(tris_.size(), 1);
  vt_.assign(n, {});
  for (int t = 0; t < static_cast<int>(tris_.size()); ++t)
    for (int k = 0; k < 3; ++k) vt_[tris_[t][k]].push_back(t);
  removed_.assign(n, 0);
  q_ = quadrics.per_expression;
  version_.assign(n, 0);
  alive_vertices_ = n;
  alive_triangles_ = static_cast<int>(tris_.size());
  for (int v = 0; v < n; ++v)
    if (movable(v))
      for (int x : ring(v))
        if (allowed(v, x)) heap_.push_back({candidate_cost(v, x), v, x, stamp_of(v, x)});
  std::make_heap(heap_.begin(), heap_.end());
}

bool Decimator::movable(int v) const { return !(options_.exclude_eyeballs && model_.is_eyeball_vertex(v)); }

bool Decimator::allowed(int v, int u) const {
  if (removed_[v] || removed_[u] || v == u || !movable(v) || !movable(u)) return false;
  const auto& m = model_.symmetry;
  if (m[v] == v) return m[u] == u;  // midline vertices stay on the midline
  return m[v] != u;                  // never merge a vertex with its mirror
}

std::uint32_t Decimator::stamp_of(int v, int u) const {
  const auto& m = model_.symmetry;
  return version_[v] + version_[u] + version_[m[v]] + version_[m[u]];
}

double Decimator::collapse_cost(int v, int u) const {
  double sum = 0.0;
  const int n = quadrics_.num_vertices;
  for (int e = 0; e < quadrics_.num_expressions; ++e) {
    const Eigen::Vector3d p = quadrics_.positions[e].row(u);
    sum += (q_[static_cast<std::size_t>(e) * n + u] + q_[static_cast<std::size_t>(e) * n + v]).evaluate(p);
  }
  return sum / quadrics_.num_expressions;
}

double Decimator::candidate_cost(int v, int u) const {
  const auto& m = model_.symmetry;
  if (m[v] == v) return collapse_cost(v, u);
  if (m[u] != u) return collapse_cost(v, u) + collapse_cost(m[v], m[u]);
  double sum = 0.0;
  const int n = quadrics_.num_vertices;
  for (int e = 0; e < quadrics_.num_expressions; ++e) {
    const std::size_t off = static_cast<std::size_t>(e) * n;
    sum += (q_[off + u] + q_[off + v] + q_[off + m[v]]).evaluate(quadrics_.positions[e].row(u));
  }
  return sum / quadrics_.num_expressions;
}

std::vector<int> Decimator::ring(int v) const {
  std::vector<int> r;
  for (int t : vt_[v])
    for (int w : tris_[t])
      if (w != v) r.push_back(w);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

bool Decimator::collapse_valid(int v, int u) const {
  if (removed_[v] || removed_[u]) return false;
  const std::vector<int> rv = ring(v), ru = ring(u);
  if (!std::binary_search(rv.begin(), rv.end(), u)) return false;
  std::vector<int> opposite;
  for (int t : vt_[v]) {
    const auto& tri = tris_[t];
    if (std::find(tri.begin(), tri.end(), u) == tri.end()) continue;
    for (int w : tri)
      if (w != u && w != v) opposite.push_back(w);
  }
  std::sort(opposite.begin(), opposite.end());
  std::vector<int> common;
  std::set_intersection(rv.begin(), rv.end(), ru.begin(), ru.end(), std::back_inserter(common));
  if (common != opposite) return false;  // link condition
  // Closed fans: every vertex of a closed surface must keep valence >= 3.
  const auto boundary_vertex = [&](int w) {
    std::map<int, int> count;
    for (int t : vt_[w])
      for (int x : tris_[t])
        if (x != w) ++count[x];
    for (const auto& [x, c] : count)
      if (c == 1) return true;
    return false;
  };
  const bool edge_boundary = opposite.size() == 1;
  if (!edge_boundary && boundary_vertex(v) && boundary_vertex(u)) return false;
  if (rv.size() <= 3 || ru.size() <= 3) return false;
  for (int w : opposite)
    if (ring(w).size() <= 3) return false;
  // Face normals must not flip or degenerate.
  const Eigen::Vector3d pu = rest_.row(u);
  for (int t : vt_[v]) {
    const auto& tri = tris_[t];
    if (std::find(tri.begin(), tri.end(), u) != tri.end()) continue;
    Eigen::Vector3d p[3], q[3];
    for (int k = 0; k < 3; ++k) {
      p[k] = rest_.row(tri[k]);
      q[k] = tri[k] == v ? pu : p[k];
    }
    const Eigen::Vector3d n0 = (p[1] - p[0]).cross(p[2] - p[0]);
    const Eigen::Vector3d n1 = (q[1] - q[0]).cross(q[2] - q[0]);
    const double l0 = n0.norm(), l1 = n1.norm();
    if (l1 <= 1e-12 * std::max(1.0, l0)) return false;
    if (n0.dot(n1) < options_.max_normal_turn * l0 * l1) return false;
  }
  return true;
}

void Decimator::apply(int v, int u, Journal* j) {
  j->v = v;
  j->u = u;
  std::vector<int> touched{v, u};
  for (int t : vt_[v])
    for (int w : tris_[t]) touched.push_back(w);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (int w : touched) j->lists.push_back({w, vt_[w]});
  const int n = quadrics_.num_vertices;
  for (int e = 0; e < quadrics_.num_expressions; ++e) j->q_u.push_back(q_[static_cast<std::size_t>(e) * n + u]);

  for (int t : std::vector<int>(vt_[v])) {
    auto& tri = tris_[t];
    j->triangles.push_back({t, tri});
    if (std::find(tri.begin(), tri.end(), u) != tri.end()) {
      tri_alive_[t] = 0;
      j->killed.push_back(t);
      --alive_triangles_;
      for (int w : tri)
        if (w != v) {
          auto& list = vt_[w];
          list.erase(std::remove(list.begin(), list.end(), t), list.end());
        }
    } else {
      for (int& w : tri)
        if (w == v) w = u;
      vt_[u].push_back(t);
    }
  }
  vt_[v].clear();
  for (int e = 0; e < quadrics_.num_expressions; ++e)
    q_[static_cast<std::size_t>(e) * n + u] += q_[static_cast<std::size_t>(e) * n + v];
  removed_[v] = 1;
  --alive_vertices_;
}

void Decimator::undo(const Journal& j) {
  for (const auto& [t, tri] : j.triangles) tris_[t] = tri;
  for (int t : j.killed) tri_alive_[t] = 1;
  alive_triangles_ += static_cast<int>(j.killed.size());
  for (const auto& [w, list] : j.lists) vt_[w] = list;
  const int n = quadrics_.num_vertices;
  for (int e = 0; e < quadrics_.num_expressions; ++e) q_[static_cast<std::size_t>(e) * n + j.u] = j.q_u[e];
  removed_[j.v] = 0;
  ++alive_vertices_;
}

bool Decimator::try_candidate(int v, int u, std::vector<Collapse>* done) {
  if (!allowed(v, u) || !collapse_valid(v, u)) return false;
  const auto& m = model_.symmetry;
  const double cost = candidate_cost(v, u);
  Journal first;
  apply(v, u, &first);
  if (m[v] != v) {
    if (!collapse_valid(m[v], m[u])) {
      undo(first);
      return false;
    }
    Journal second;
    apply(m[v], m[u], &second);
    if (!done) {
      undo(second);
      undo(first);
      return true;
    }
    done->push_back({u, v, cost});
    done->push_back({m[u], m[v], cost});
    return true;
  }
  if (!done) {
    undo(first);
    return true;
  }
  done->push_back({u, v, cost});
  return true;
}

void Decimator::push_edges_around(int w) {
  if (removed_[w]) return;
  for (int x : ring(w)) {
    if (allowed(w, x)) {
      heap_.push_back({candidate_cost(w, x), w, x, stamp_of(w, x)});
      std::push_heap(heap_.begin(), heap_.end());
    }
    if (allowed(x, w)) {
      heap_.push_back({candidate_cost(x, w), x, w, stamp_of(x, w)});
      std::push_heap(heap_.begin(), heap_.end());
    }
  }
}

std::vector<Collapse> Decimator::step(bool single_only) {
  std::vector<Collapse> done;
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end());
    const Entry e = heap_.back();
    heap_.pop_back();
    if (removed_[e.v] || removed_[e.u] || e.stamp != stamp_of(e.v, e.u)) continue;
    if (single_only && model_.symmetry[e.v] != e.v) continue;
    if (!try_candidate(e.v, e.u, &done)) continue;
    std::vector<int> kept;
    for (const auto& c : done) kept.push_back(c.kept);
    std::vector<int> dirty = kept;
    for (int k : kept)
      for (int x : ring(k)) dirty.push_back(x);
    std::sort(dirty.begin(), dirty.end());
    dirty.erase(std::unique(dirty.begin(), dirty.end()), dirty.end());
    for (int w : dirty) ++version_[w];
    for (int w : dirty) push_edges_around(w);
    history_.insert(history_.end(), done.begin(), done.end());
    return done;
  }
  return done;
}

std::vector<CollapseCandidate> Decimator::valid_candidates(bool single_only) {
  std::vector<CollapseCandidate> out;
  for (int v = 0; v < static_cast<int>(removed_.size()); ++v) {
    if (removed_[v] || (single_only && model_.symmetry[v] != v)) continue;
    for (int x : ring(v))
      if (try_candidate(v, x, nullptr)) out.push_back({v, x, candidate_cost(v, x)});
  }
  return out;
}

namespace {

// Barycentric weights of the point of triangle abc closest to p.
std::array<double, 3> closest_point_bary(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                         const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double t = d1 / (d1 - d3);
    return {1 - t, t, 0};
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double t = d2 / (d2 - d6);
    return {1 - t, 0, t};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - t, t};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double w1 = vb * denom, w2 = vc * denom;
  return {1 - w1 - w2, w1, w2};
}

}  // namespace

FaceModel Decimator::result(DecimationPlan* plan) const {
  const int n = model_.num_vertices();
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  for (const auto& c : history_) parent[c.removed] = c.kept;
  const auto root = [&](int v) {
    while (parent[v] != v) v = parent[v];
    return v;
  };
  std::vector<int> new_index(n, -1);
  int count = 0;
  for (int i = 0; i < n; ++i)
    if (!removed_[i]) new_index[i] = count++;
  std::vector<int> remap(n);
  for (int i = 0; i < n; ++i) remap[i] = new_index[root(i)];

  FaceModel out;
  out.blendshape_names = model_.blendshape_names;
  out.mean.resize(3 * count);
  out.identity.resize(3 * count, model_.num_identity());
  out.blendshapes.resize(3 * count, model_.num_blendshapes());
  for (int i = 0; i < n; ++i) {
    if (new_index[i] < 0) continue;
    const int j = new_index[i];
    out.mean.segment<3>(3 * j) = model_.mean.segment<3>(3 * i);
    out.identity.middleRows(3 * j, 3) = model_.identity.middleRows(3 * i, 3);
    out.blendshapes.middleRows(3 * j, 3) = model_.blendshapes.middleRows(3 * i, 3);
  }
  for (std::size_t t = 0; t < tris_.size(); ++t)
    if (tri_alive_[t]) out.triangles.push_back({new_index[tris_[t][0]], new_index[tris_[t][1]], new_index[tris_[t][2]]});
  const auto map_range = [&](const VertexRange& r) {
    if (r.size() <= 0) return VertexRange{};
    return VertexRange{new_index[r.begin], new_index[r.begin] + r.size()};
  };
  out.eyeball_right = map_range(model_.eyeball_right);
  out.eyeball_left = map_range(model_.eyeball_left);
  for (int v : model_.iris_right) out.iris_right.push_back(remap[v]);
  for (int v : model_.iris_left) out.iris_left.push_back(remap[v]);
  out.symmetry.resize(count);
  for (int i = 0; i < n; ++i)
    if (new_index[i] >= 0) out.symmetry[new_index[i]] = remap[model_.symmetry[i]];
  for (const auto& p : model_.polylines) {
    Polyline q = p;
    q.vertices.clear();
    for (int v : p.vertices)
      if (q.vertices.empty() || q.vertices.back() != remap[v]) q.vertices.push_back(remap[v]);
    if (q.closed && q.vertices.size() > 1 && q.vertices.front() == q.vertices.back()) q.vertices.pop_back();
    out.polylines.push_back(std::move(q));
  }

  // Landmarks: closest point on the decimated surface of the same part
  // (head or eyeball) as the original binding.
  const Vertices vm = out.mean_vertices();
  const Vertices original = model_.mean_vertices();
  const auto on_eye = [](const FaceModel& m, const Triangle& t) { return m.is_eyeball_vertex(t[0]); };
  for (const auto& lm : model_.landmarks) {
    const auto& ot = model_.triangles[lm.triangle];
    const Eigen::Vector3d p =
        lm.bary[0] * original.row(ot[0]) + lm.bary[1] * original.row(ot[1]) + lm.bary[2] * original.row(ot[2]);
    const bool eye = on_eye(model_, ot);
    LandmarkBinding best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int t = 0; t < out.num_triangles(); ++t) {
      const auto& tri = out.triangles[t];
      if (on_eye(out, tri) != eye) continue;
      const Eigen::Vector3d a = vm.row(tri[0]), b = vm.row(tri[1]), c = vm.row(tri[2]);
      const auto w = closest_point_bary(p, a, b, c);
      const double d = (w[0] * a + w[1] * b + w[2] * c - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best.triangle = t;
        best.bary = {w[0], w[1], 1.0 - w[0] - w[1]};
      }
    }
    out.landmarks.push_back(best);
  }

  if (plan) {
    plan->collapses = history_;
    plan->remap = remap;
    plan->vertices_before = n;
    plan->vertices_after = count;
    plan->triangles_before = model_.num_triangles();
    plan->triangles_after = out.num_triangles();
  }
  return out;
}

DecimationResult decimate_symmetric(const FaceModel& model, const ExpressionQuadrics& quadrics, int target_vertices,
                                    const DecimateOptions& options) {
  model.validate();
  if (target_vertices > model.num_vertices()) throw Error("decimate: target exceeds the current vertex count");
  if (target_vertices < 4) throw Error("decimate: target must be at least 4 vertices");
  Decimator dec(model, quadrics, options);
  while (dec.vertex_count() > target_vertices) {
    const bool single = dec.vertex_count() - target_vertices == 1;
    if (dec.step(single).empty()) break;
  }
  DecimationResult r;
  r.model = dec.result(&r.plan);
  r.plan.target_vertices = target_vertices;
  r.plan.reached_target = r.plan.vertices_after == target_vertices;
  return r;
}

double reevaluated_error(const DecimationPlan& plan, const ExpressionQuadrics& fresh) {
  if (static_cast<int>(plan.remap.size()) != fresh.num_vertices)
    throw DimensionError("reevaluated_error: plan and quadrics disagree on vertex count");
  // Survivor of each original vertex, in original numbering.
  std::vector<int> survivor(fresh.num_vertices);
  for (int i = 0; i < fresh.num_vertices; ++i) survivor[i] = i;
  for (const auto& c : plan.collapses) survivor[c.removed] = c.kept;
  for (int i = 0; i < fresh.num_vertices; ++i) {
    int s = i;
    while (survivor[s] != s) s = survivor[s];
    survivor[i] = s;
  }
  double total = 0.0;
  for (int e = 0; e < fresh.num_expressions; ++e)
    for (int w = 0; w < fresh.num_vertices; ++w)
      if (survivor[w] != w) total += fresh.at(e, w).evaluate(fresh.positions[e].row(survivor[w]));
  return total / fresh.num_expressions;
}

}  // namespace facesync
