#include <doctest.h>

#include <set>

#include "facesync/decimate.hpp"
#include "facesync/synthetic.hpp"

using namespace facesync;

namespace {

double brute_cost(const ExpressionQuadrics& q, int v, int u) {
  double c = 0.0;
  for (int e = 0; e < q.num_expressions; ++e) {
    const Quadric sum = q.at(e, u) + q.at(e, v);
    c += sum.evaluate(q.positions[e].row(u).transpose());
  }
  return c / q.num_expressions;
}

}  // namespace

TEST_CASE("plane quadric measures squared distance") {
  const Eigen::Vector3d n(0, 0, 1);
  const Quadric q = Quadric::plane(n, -2.0, 3.0);
  CHECK(q.evaluate({5, -1, 2}) == doctest::Approx(0.0));
  CHECK(q.evaluate({0, 0, 4}) == doctest::Approx(12.0));
  const Eigen::Vector4d h(1, 2, 3, 1);
  CHECK(h.dot(q.matrix() * h) == doctest::Approx(q.evaluate({1, 2, 3})));
  CHECK((q + q).evaluate({0, 0, 0}) == doctest::Approx(24.0));
  CHECK((q * 0.5).evaluate({0, 0, 0}) == doctest::Approx(6.0));
}

TEST_CASE("per-expression quadrics average into the mean array") {
  const FaceModel m = make_icosphere(2);
  const ExpressionQuadrics q = expression_quadrics(m, 3, 7);
  CHECK(q.num_expressions == 3);
  const std::vector<Quadric> mean = q.mean();
  const Eigen::Vector3d p(0.1, 0.2, 0.3);
  for (int v = 0; v < m.num_vertices(); v += 17) {
    double avg = 0.0;
    for (int e = 0; e < 3; ++e) avg += q.at(e, v).evaluate(p);
    CHECK(mean[v].evaluate(p) == doctest::Approx(avg / 3.0));
  }
}

TEST_CASE("greedy step picks the cheapest valid candidate") {
  const FaceModel m = make_icosphere(2);
  const ExpressionQuadrics q = expression_quadrics(m, 3, 11);
  Decimator d(m, q);
  for (int k = 0; k < 5; ++k) {
    const std::vector<CollapseCandidate> cands = d.valid_candidates();
    REQUIRE(!cands.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const CollapseCandidate& c : cands) best = std::min(best, c.cost);
    const std::vector<Collapse> done = d.step();
    REQUIRE(!done.empty());
    // Mirrored pairs carry the joint cost on both entries.
    CHECK(done.front().cost == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("first collapse cost matches a brute-force search") {
  const FaceModel m = make_icosphere(1);
  const ExpressionQuadrics q = expression_quadrics(m, 2, 3);
  Decimator d(m, q);
  const std::vector<Collapse> done = d.step();
  REQUIRE(!done.empty());
  for (const Collapse& c : done) CHECK(c.cost == doctest::Approx(brute_cost(q, c.removed, c.kept)).epsilon(1e-9));
}

TEST_CASE("symmetric decimation keeps mirror pairs and hits the target") {
  const FaceModel m = make_icosphere(3);
  const ExpressionQuadrics q = expression_quadrics(m, 3, 5);
  const int target = m.num_vertices() / 3;
  const DecimationResult r = decimate_symmetric(m, q, target);
  CHECK(r.model.num_vertices() == target);
  CHECK(r.plan.vertices_after == target);
  CHECK(r.plan.reached_target);
  CHECK(r.model.num_triangles() == r.plan.triangles_after);
  CHECK_NOTHROW(r.model.validate());
  const Vertices v = r.model.mean_vertices();
  for (int i = 0; i < v.rows(); ++i) {
    const int j = r.model.symmetry[i];
    CHECK(std::abs(v(i, 0) + v(j, 0)) < 1e-6);
    CHECK(std::abs(v(i, 1) - v(j, 1)) < 1e-6);
    CHECK(std::abs(v(i, 2) - v(j, 2)) < 1e-6);
  }
  // Subset placement: every survivor is an original vertex.
  std::set<int> survivors;
  for (int old = 0; old < m.num_vertices(); ++old) survivors.insert(r.plan.remap[old]);
  CHECK(static_cast<int>(survivors.size()) == target);
  // A closed sphere stays closed: V - E + F = 2 with E = 3F/2.
  CHECK(r.model.num_vertices() - r.model.num_triangles() / 2 == 2);
}

TEST_CASE("plan replay error is non-negative and zero for the empty plan") {
  const FaceModel m = make_icosphere(2);
  const ExpressionQuadrics q = expression_quadrics(m, 2, 1);
  const DecimationResult none = decimate_symmetric(m, q, m.num_vertices());
  CHECK(reevaluated_error(none.plan, q) == doctest::Approx(0.0));
  const DecimationResult some = decimate_symmetric(m, q, m.num_vertices() / 2);
  CHECK(reevaluated_error(some.plan, expression_quadrics(m, 2, 99)) >= 0.0);
  const nlohmann::json j = plan_to_json(some.plan);
  CHECK(j.contains("collapses"));
}
