#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "cords/encode.hpp"
#include "cords/sampling.hpp"
#include "oracles.hpp"

using cords::Box;
using cords::KernelFamily;
using cords::KernelSpec;
using cords::ObjectSet;
using cords::SamplerConfig;
using cords::SampleScheme;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

KernelSpec gaussian(double sigma, int dim) {
  KernelSpec spec;
  spec.family = KernelFamily::Gaussian;
  spec.sigma = sigma;
  spec.dim = dim;
  return spec;
}

ObjectSet demo_set() {
  ObjectSet set;
  set.positions.resize(3, 2);
  set.positions << 0.20, 0.30, 0.50, 0.60, 0.80, 0.35;
  set.features.resize(3, 2);
  set.features << 1.0, -2.0, 0.5, 0.25, -1.5, 3.0;
  return set;
}

Eigen::MatrixXd random_queries(int count, int dim, cords::Rng& rng, double lo, double hi) {
  Eigen::MatrixXd q(count, dim);
  for (int i = 0; i < count; ++i)
    for (int a = 0; a < dim; ++a) q(i, a) = rng.uniform(lo, hi);
  return q;
}

}  // namespace

TEST_CASE("empty set encodes to zero fields", "[encode]") {
  ObjectSet set;
  set.positions.resize(0, 2);
  set.features.resize(0, 3);
  cords::Rng rng(1);
  const auto queries = random_queries(16, 2, rng, -1.0, 1.0);
  const auto values = cords::encode_at(set, gaussian(0.1, 2), queries);
  REQUIRE(values.density.size() == 16);
  REQUIRE(values.features.rows() == 16);
  REQUIRE(values.features.cols() == 3);
  REQUIRE(values.density.isZero(0.0));
  REQUIRE(values.features.isZero(0.0));
}

TEST_CASE("single object peaks at its kernel value", "[encode]") {
  ObjectSet set;
  set.positions = Eigen::MatrixXd::Zero(1, 1);
  set.features.resize(1, 2);
  set.features << 2.0, -0.5;
  Eigen::MatrixXd query = Eigen::MatrixXd::Zero(1, 1);
  const auto values = cords::encode_at(set, gaussian(1.0, 1), query);
  const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  REQUIRE_THAT(values.density[0], WithinRel(peak, 1e-13));
  REQUIRE_THAT(values.features(0, 0), WithinRel(2.0 * peak, 1e-13));
  REQUIRE_THAT(values.features(0, 1), WithinRel(-0.5 * peak, 1e-13));
}

TEST_CASE("density mass equals the object count", "[encode]") {
  const auto set = demo_set();
  const double sigma = 0.1;
  const auto spec = gaussian(sigma, 2);
  Box box;
  box.lo.resize(2);
  box.hi.resize(2);
  box.lo << set.positions.col(0).minCoeff() - 10.0 * sigma,
      set.positions.col(1).minCoeff() - 10.0 * sigma;
  box.hi << set.positions.col(0).maxCoeff() + 10.0 * sigma,
      set.positions.col(1).maxCoeff() + 10.0 * sigma;
  const int n = 601;
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(n, box.lo[0], box.hi[0]);
  const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(n, box.lo[1], box.hi[1]);
  const double hx = (box.hi[0] - box.lo[0]) / (n - 1);
  const double hy = (box.hi[1] - box.lo[1]) / (n - 1);
  Eigen::MatrixXd grid(n * n, 2);
  Eigen::VectorXd weight(n * n);
  for (int i = 0; i < n; ++i) {
    const double wx = (i == 0 || i == n - 1) ? 0.5 * hx : hx;
    for (int j = 0; j < n; ++j) {
      const double wy = (j == 0 || j == n - 1) ? 0.5 * hy : hy;
      grid.row(i * n + j) << xs[i], ys[j];
      weight[i * n + j] = wx * wy;
    }
  }
  const double mass = cords::encode_at(set, spec, grid).density.dot(weight);
  REQUIRE_THAT(mass, WithinAbs(3.0, 1e-3));
}

TEST_CASE("encode_at rejects dimension mismatches", "[encode]") {
  const auto set = demo_set();
  Eigen::MatrixXd bad_query = Eigen::MatrixXd::Zero(1, 3);
  REQUIRE_THROWS_AS(cords::encode_at(set, gaussian(0.1, 2), bad_query),
                    cords::InvalidArgument);
  REQUIRE_THROWS_AS(cords::encode_at(set, gaussian(0.1, 3), Eigen::MatrixXd::Zero(1, 3)),
                    cords::InvalidArgument);
}

TEST_CASE("coincident positions still encode", "[encode]") {
  ObjectSet set;
  set.positions.resize(2, 2);
  set.positions << 0.5, 0.5, 0.5, 0.5;
  set.features = Eigen::MatrixXd::Ones(2, 1);
  Eigen::MatrixXd query(1, 2);
  query << 0.5, 0.5;
  const auto spec = gaussian(0.1, 2);
  const auto values = cords::encode_at(set, spec, query);
  const double peak = 1.0 / (2.0 * std::numbers::pi * 0.01);
  REQUIRE_THAT(values.density[0], WithinRel(2.0 * peak, 1e-12));
}

TEST_CASE("permutation invariance is exact", "[encode]") {
  const auto set = demo_set();
  const auto spec = gaussian(0.07, 2);
  cords::Rng rng(21);
  const auto queries = random_queries(64, 2, rng, 0.0, 1.0);
  const auto base = cords::encode_at(set, spec, queries);

  const std::vector<std::vector<int>> perms = {{2, 0, 1}, {1, 2, 0}, {2, 1, 0}};
  for (const auto& perm : perms) {
    ObjectSet shuffled;
    shuffled.positions.resize(3, 2);
    shuffled.features.resize(3, 2);
    for (int i = 0; i < 3; ++i) {
      shuffled.positions.row(i) = set.positions.row(perm[i]);
      shuffled.features.row(i) = set.features.row(perm[i]);
    }
    const auto got = cords::encode_at(shuffled, spec, queries);
    REQUIRE(got.density == base.density);
    REQUIRE(got.features == base.features);
  }
}

TEST_CASE("feature fields are linear in the features", "[encode]") {
  const auto spec = gaussian(0.07, 2);
  ObjectSet x = demo_set();
  ObjectSet y = demo_set();
  y.features << -0.3, 1.1, 2.0, -0.8, 0.6, 0.9;
  ObjectSet sum = demo_set();
  sum.features = x.features + y.features;

  cords::Rng rng(22);
  const auto queries = random_queries(64, 2, rng, 0.0, 1.0);
  const auto fx = cords::encode_at(x, spec, queries);
  const auto fy = cords::encode_at(y, spec, queries);
  const auto fsum = cords::encode_at(sum, spec, queries);
  REQUIRE((fsum.features - (fx.features + fy.features)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("density superposes over disjoint sets", "[encode]") {
  const auto spec = gaussian(0.05, 2);
  ObjectSet a;
  a.positions.resize(2, 2);
  a.positions << 0.2, 0.2, 0.4, 0.7;
  a.features = Eigen::MatrixXd::Ones(2, 1);
  ObjectSet b;
  b.positions.resize(1, 2);
  b.positions << 0.8, 0.5;
  b.features = Eigen::MatrixXd::Ones(1, 1);
  ObjectSet both;
  both.positions.resize(3, 2);
  both.positions << a.positions, b.positions;
  both.features = Eigen::MatrixXd::Ones(3, 1);

  cords::Rng rng(23);
  const auto queries = random_queries(64, 2, rng, 0.0, 1.0);
  const auto da = cords::encode_at(a, spec, queries).density;
  const auto db = cords::encode_at(b, spec, queries).density;
  const auto dboth = cords::encode_at(both, spec, queries).density;
  REQUIRE((dboth - (da + db)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode_field is deterministic", "[encode]") {
  const auto set = demo_set();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 1024;
  cfg.seed = 314;
  const auto a = cords::encode_field(set, spec, cfg);
  const auto b = cords::encode_field(set, spec, cfg);
  REQUIRE(a.points == b.points);
  REQUIRE(a.density == b.density);
  REQUIRE(a.features == b.features);
  REQUIRE(a.weights == b.weights);
}

TEST_CASE("uniform field mass lands within half a count", "[encode]") {
  cords::Rng rng(600);
  const double sigma = 0.1;
  const auto spec = gaussian(sigma, 2);
  ObjectSet set;
  set.positions.resize(5, 2);
  set.positions << 0.2, 0.2, 0.8, 0.3, 0.5, 0.5, 0.25, 0.75, 0.75, 0.8;
  set.features = Eigen::MatrixXd::Ones(5, 1);

  SamplerConfig cfg;
  cfg.scheme = SampleScheme::Uniform;
  Box box;
  box.lo = Eigen::VectorXd::Constant(2, -0.5);
  box.hi = Eigen::VectorXd::Constant(2, 1.5);
  cfg.box = box;
  cfg.count = 4096;
  for (int s = 0; s < 20; ++s) {
    cfg.seed = 7000 + s;
    const auto field = cords::encode_field(set, spec, cfg);
    REQUIRE(field.scheme == SampleScheme::Uniform);
    for (Eigen::Index i = 1; i < field.weights.size(); ++i)
      REQUIRE(field.weights[i] == field.weights[0]);
    const double mass = field.density.dot(field.weights);
    REQUIRE(std::abs(mass - 5.0) <= 0.5);
  }
}

TEST_CASE("importance field mass lands within half a count", "[encode]") {
  const auto set = demo_set();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 4096;
  cfg.proposal_sigma = 0.06;
  for (int s = 0; s < 100; ++s) {
    cfg.seed = 8000 + s;
    const auto field = cords::encode_field(set, spec, cfg);
    REQUIRE(field.scheme == SampleScheme::Importance);
    REQUIRE(field.proposal_meta.has_value());
    const double mass = field.density.dot(field.weights);
    REQUIRE(std::abs(mass - 3.0) <= 0.5);
  }
}

TEST_CASE("encode_field rejects unusable requests", "[encode]") {
  const auto spec = gaussian(0.05, 2);
  ObjectSet empty;
  empty.positions.resize(0, 2);
  empty.features.resize(0, 1);
  SamplerConfig cfg;
  cfg.count = 64;
  REQUIRE_THROWS_AS(cords::encode_field(empty, spec, cfg), cords::EmptyProposal);
  cfg.count = 0;
  REQUIRE_THROWS_AS(cords::encode_field(demo_set(), spec, cfg), cords::InvalidArgument);
}

TEST_CASE("legacy uniform weights drop the volume factor", "[encode]") {
  const auto set = demo_set();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.scheme = SampleScheme::Uniform;
  Box box;
  box.lo = Eigen::VectorXd::Constant(2, -1.0);
  box.hi = Eigen::VectorXd::Constant(2, 2.0);
  cfg.box = box;
  cfg.count = 256;
  cfg.seed = 5;
  cfg.legacy_unit_weights = true;
  const auto field = cords::encode_field(set, spec, cfg);
  for (Eigen::Index i = 0; i < field.weights.size(); ++i)
    REQUIRE(field.weights[i] == 1.0 / 256.0);
}

TEST_CASE("object set validation", "[encode]") {
  ObjectSet bad = demo_set();
  bad.features.resize(2, 2);
  REQUIRE_THROWS_AS(cords::validate(bad), cords::InvalidArgument);

  ObjectSet nan_set = demo_set();
  nan_set.positions(1, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(cords::validate(nan_set), cords::InvalidArgument);
}
