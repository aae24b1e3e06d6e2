#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "facesync/face_model.hpp"

namespace facesync {

/// Symmetric 4x4 error quadric stored as its upper triangle
/// (xx, xy, xz, xw, yy, yz, yw, zz, zw, ww).
struct Quadric {
  std::array<double, 10> a{};

  /// Squared distance to the plane n.p + d = 0 (n unit), times `weight`.
  static Quadric plane(const Eigen::Vector3d& n, double d, double weight);
  double evaluate(const Eigen::Vector3d& p) const;
  Eigen::Matrix4d matrix() const;
  Quadric& operator+=(const Quadric& o);
  Quadric operator+(const Quadric& o) const;
  Quadric operator*(double s) const;
};

struct QuadricOptions {
  double boundary_weight = 1.0;  // scale of boundary-preservation planes
};

/// Per-expression vertex quadrics and the positions they were built from.
struct ExpressionQuadrics {
  int num_expressions = 0;
  int num_vertices = 0;
  std::vector<Quadric> per_expression;  // expression-major, e * N + v
  std::vector<Vertices> positions;      // one mesh per expression

  const Quadric& at(int e, int v) const {
    return per_expression[static_cast<std::size_t>(e) * num_vertices + v];
  }
  /// Arithmetic mean over expressions (the averaged VertexQuadric array).
  std::vector<Quadric> mean() const;
};

/// Classical area-weighted plane quadrics of each mesh evaluated at the
/// given blendshape weights (alpha = 0), plus boundary planes.
ExpressionQuadrics quadrics_for_expressions(const FaceModel& model, const std::vector<Eigen::VectorXd>& betas,
                                            const QuadricOptions& options = {});

/// n_expr expressions with beta ~ U[0, 1]^n drawn from `seed`.
ExpressionQuadrics expression_quadrics(const FaceModel& model, int n_expr, std::uint64_t seed,
                                       const QuadricOptions& options = {});

/// Quadrics of the mean shape alone (beta = 0).
ExpressionQuadrics mean_shape_quadrics(const FaceModel& model, const QuadricOptions& options = {});

struct Collapse {
  int kept = 0;
  int removed = 0;
  double cost = 0.0;
};

struct DecimationPlan {
  std::vector<Collapse> collapses;  // execution order; mirrored collapses are adjacent
  std::vector<int> remap;           // old vertex -> new index of its surviving vertex
  int vertices_before = 0;
  int vertices_after = 0;
  int triangles_before = 0;
  int triangles_after = 0;
  int target_vertices = 0;
  bool reached_target = false;
};

nlohmann::json plan_to_json(const DecimationPlan& plan);

struct DecimateOptions {
  bool exclude_eyeballs = true;
  double max_normal_turn = 0.2;  // minimum cos between old and new face normals
};

/// One candidate collapse (with its mirror partner when off the midline).
struct CollapseCandidate {
  int removed = 0;
  int kept = 0;
  double cost = 0.0;
};

/// Greedy symmetric edge-collapse engine with subset placement. The cost of
/// collapsing v into u is the expression mean of p_e(u)^T (Q_e(u) + Q_e(v))
/// p_e(u); a mirrored pair is scored by the sum of both collapses.
class Decimator {
 public:
  Decimator(const FaceModel& model, const ExpressionQuadrics& quadrics, const DecimateOptions& options = {});

  int vertex_count() const { return alive_vertices_; }
  int triangle_count() const { return alive_triangles_; }

  /// Executes the cheapest valid collapse (or mirrored pair). When
  /// `single_only`, only midline collapses are considered. Returns the
  /// executed collapses, empty when no valid candidate remains.
  std::vector<Collapse> step(bool single_only = false);

  /// Exhaustive list of currently valid candidates with their costs.
  std::vector<CollapseCandidate> valid_candidates(bool single_only = false);

  /// Decimated model and plan for the collapses executed so far.
  FaceModel result(DecimationPlan* plan) const;

 private:
  struct Entry {
    double cost;
    int v, u;
    std::uint32_t stamp;
    bool operator<(const Entry& o) const { return cost > o.cost || (cost == o.cost && (v > o.v || (v == o.v && u > o.u))); }
  };
  struct Journal;

  bool movable(int v) const;
  bool allowed(int v, int u) const;
  double collapse_cost(int v, int u) const;
  double candidate_cost(int v, int u) const;
  bool collapse_valid(int v, int u) const;
  void apply(int v, int u, Journal* journal);
  void undo(const Journal& journal);
  bool try_candidate(int v, int u, std::vector<Collapse>* done);
  std::vector<int> ring(int v) const;
  void push_edges_around(int v);
  std::uint32_t stamp_of(int v, int u) const;

  const FaceModel& model_;
  const ExpressionQuadrics& quadrics_;
  DecimateOptions options_;
  Vertices rest_;
  std::vector<Triangle> tris_;
  std::vector<unsigned char> tri_alive_;
  std::vector<std::vector<int>> vt_;
  std::vector<unsigned char> removed_;
  std::vector<Quadric> q_;  // current, expression-major
  std::vector<std::uint32_t> version_;
  std::vector<Entry> heap_;
  std::vector<Collapse> history_;
  int alive_vertices_ = 0;
  int alive_triangles_ = 0;
};

struct DecimationResult {
  FaceModel model;
  DecimationPlan plan;
};

/// Runs the Decimator down to `target_vertices` (exact, or one above when
/// only a midline collapse could close the gap and none is valid).
DecimationResult decimate_symmetric(const FaceModel& model, const ExpressionQuadrics& quadrics,
                                    int target_vertices, const DecimateOptions& options = {});

/// Error of a plan measured with independent quadrics of the original mesh:
/// sum over vertices w of mean_e p_e(s(w))^T Q_e(w) p_e(s(w)), where s(w)
/// is the surviving vertex w collapsed into.
double reevaluated_error(const DecimationPlan& plan, const ExpressionQuadrics& fresh);

}  // namespace facesync
