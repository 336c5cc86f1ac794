#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "cords/decode.hpp"
#include "cords/encode.hpp"
#include "cords/sampling.hpp"
#include "oracles.hpp"

using cords::Box;
using cords::KernelFamily;
using cords::KernelSpec;
using cords::ObjectSet;
using cords::SamplerConfig;
using cords::SampleScheme;
using Catch::Approx;
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

Box unit_box(int dim) {
  Box box;
  box.lo = Eigen::VectorXd::Zero(dim);
  box.hi = Eigen::VectorXd::Ones(dim);
  return box;
}

// Three objects comfortably inside the unit square for sigma = 0.05.
ObjectSet three_objects() {
  ObjectSet set;
  set.positions.resize(3, 2);
  set.positions << 0.30, 0.30, 0.50, 0.70, 0.75, 0.40;
  set.features = Eigen::MatrixXd::Ones(3, 1);
  return set;
}

double density_mass(const ObjectSet& set, const KernelSpec& spec,
                    const cords::DrawResult& draw) {
  const auto values = cords::encode_at(set, spec, draw.points);
  return values.density.dot(draw.weights);
}

double variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST_CASE("uniform draw on the unit square", "[sampling]") {
  const auto draw = cords::sample_uniform(unit_box(2), 4, 99);
  REQUIRE(draw.points.rows() == 4);
  REQUIRE((draw.points.array() >= 0.0).all());
  REQUIRE((draw.points.array() <= 1.0).all());
  for (int s = 0; s < 4; ++s) REQUIRE(draw.weights[s] == 0.25);
  REQUIRE_FALSE(draw.meta.has_value());
}

TEST_CASE("uniform weights integrate constants exactly", "[sampling]") {
  Box box;
  box.lo = Eigen::VectorXd::Constant(2, -1.5);
  box.hi = Eigen::VectorXd::Constant(2, 2.0);
  const auto draw = cords::sample_uniform(box, 1000, 7);
  const double c = 2.75;
  const double integral = c * draw.weights.sum();
  REQUIRE_THAT(integral, WithinRel(c * box.volume(), 1e-13));
}

TEST_CASE("uniform density mass is unbiased over repeated seeds", "[sampling]") {
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  const Box box = unit_box(2);
  const int seeds = 100;
  std::vector<double> estimates;
  estimates.reserve(seeds);
  for (int s = 0; s < seeds; ++s)
    estimates.push_back(density_mass(set, spec, cords::sample_uniform(box, 4096, 1000 + s)));
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= seeds;
  const double se_mean = std::sqrt(variance(estimates) / seeds);
  INFO("mean " << mean << " se " << se_mean);
  REQUIRE(std::abs(mean - 3.0) <= 3.0 * se_mean);
}

TEST_CASE("uniform draw rejects bad input", "[sampling]") {
  Box degenerate;
  degenerate.lo = Eigen::VectorXd::Zero(2);
  degenerate.hi = Eigen::VectorXd::Zero(2);
  REQUIRE_THROWS_AS(cords::sample_uniform(degenerate, 8, 1), cords::InvalidArgument);
  REQUIRE_THROWS_AS(cords::sample_uniform(unit_box(2), 0, 1), cords::InvalidArgument);
}

TEST_CASE("padded box bounds and empty-set rejection", "[sampling]") {
  const auto set = three_objects();
  const Box box = cords::padded_box(set, 0.25);
  REQUIRE_THAT(box.lo[0], WithinAbs(0.30 - 0.25, 1e-15));
  REQUIRE_THAT(box.lo[1], WithinAbs(0.30 - 0.25, 1e-15));
  REQUIRE_THAT(box.hi[0], WithinAbs(0.75 + 0.25, 1e-15));
  REQUIRE_THAT(box.hi[1], WithinAbs(0.70 + 0.25, 1e-15));
  ObjectSet empty;
  empty.positions.resize(0, 2);
  empty.features.resize(0, 1);
  REQUIRE_THROWS_AS(cords::padded_box(empty, 0.1), cords::Error);
}

TEST_CASE("mixture weights are uniform at unit temperature", "[sampling]") {
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  const Eigen::VectorXd pi = cords::proposal_mixture_weights(set, spec, 1.0);
  REQUIRE(pi.size() == 3);
  for (int i = 0; i < 3; ++i) REQUIRE(pi[i] == 1.0 / 3.0);

  ObjectSet empty;
  empty.positions.resize(0, 2);
  empty.features.resize(0, 1);
  REQUIRE_THROWS_AS(cords::proposal_mixture_weights(empty, spec, 1.0), cords::EmptyProposal);
}

TEST_CASE("temperature tilts mixture weights toward dense regions", "[sampling]") {
  // Objects 0 and 1 overlap, object 2 sits alone, so rho is higher at the
  // pair and sharpening (tau > 1) should favor it.
  ObjectSet set;
  set.positions.resize(3, 2);
  set.positions << 0.40, 0.40, 0.44, 0.40, 0.80, 0.80;
  set.features = Eigen::MatrixXd::Ones(3, 1);
  const auto spec = gaussian(0.05, 2);
  const Eigen::VectorXd pi = cords::proposal_mixture_weights(set, spec, 2.0);
  REQUIRE_THAT(pi.sum(), WithinRel(1.0, 1e-12));
  REQUIRE(pi[0] > pi[2]);
  REQUIRE(pi[1] > pi[2]);
}

TEST_CASE("single-object importance draw matches its kernel", "[sampling]") {
  ObjectSet set;
  set.positions.resize(1, 2);
  set.positions << 0.4, 0.6;
  set.features = Eigen::MatrixXd::Ones(1, 1);
  const double sigma = 0.05;
  SamplerConfig cfg;
  cfg.count = 4096;
  cfg.seed = 31;
  const auto draw = cords::sample_importance(set, gaussian(sigma, 2), cfg);
  const Eigen::RowVectorXd mean = draw.points.colwise().mean();
  const double bound = 3.0 * sigma / std::sqrt(4096.0);
  REQUIRE(std::abs(mean[0] - 0.4) <= bound);
  REQUIRE(std::abs(mean[1] - 0.6) <= bound);
  for (int a = 0; a < 2; ++a) {
    const double var =
        (draw.points.col(a).array() - mean[a]).square().sum() / (4096.0 - 1.0);
    REQUIRE_THAT(var, WithinRel(sigma * sigma, 0.15));
  }
  REQUIRE(draw.meta.has_value());
  REQUIRE(draw.meta->proposal_sigma == sigma);
  REQUIRE(draw.meta->importance_fraction == 1.0);
}

TEST_CASE("matched-proposal mass estimate is exact", "[sampling]") {
  // Proposal identical to the encoding kernel makes rho/q constant, so the
  // estimator collapses to N with zero variance.
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 4096;
  for (int s = 0; s < 5; ++s) {
    cfg.seed = 500 + s;
    const double mass = density_mass(set, spec, cords::sample_importance(set, spec, cfg));
    REQUIRE_THAT(mass, WithinAbs(3.0, 1e-9));
  }
}

TEST_CASE("mismatched-proposal mass estimate stays within half a count", "[sampling]") {
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 4096;
  cfg.proposal_sigma = 0.065;
  for (int s = 0; s < 100; ++s) {
    cfg.seed = 2000 + s;
    const double mass = density_mass(set, spec, cords::sample_importance(set, spec, cfg));
    REQUIRE(std::abs(mass - 3.0) <= 0.5);
  }
}

TEST_CASE("importance weights are positive and finite", "[sampling]") {
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 2048;
  cfg.seed = 77;
  for (double fraction : {1.0, 0.6, 0.0}) {
    cfg.importance_fraction = fraction;
    const auto draw = cords::sample_importance(set, spec, cfg);
    REQUIRE(draw.weights.allFinite());
    REQUIRE((draw.weights.array() > 0.0).all());
  }
}

TEST_CASE("mixed-scheme estimates are unbiased for a bump integrand", "[sampling]") {
  // f is a unit-mass Gaussian bump near object 0; its integral over the
  // plane is 1 and the uniform component keeps the weights bounded.
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  ObjectSet bump;
  bump.positions.resize(1, 2);
  bump.positions << 0.32, 0.33;
  bump.features = Eigen::MatrixXd::Ones(1, 1);
  const auto bump_spec = gaussian(0.08, 2);

  SamplerConfig cfg;
  cfg.count = 4096;
  cfg.importance_fraction = 0.6;
  const int seeds = 100;
  std::vector<double> estimates;
  estimates.reserve(seeds);
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = 9000 + s;
    const auto draw = cords::sample_importance(set, spec, cfg);
    const auto values = cords::encode_at(bump, bump_spec, draw.points);
    estimates.push_back(values.density.dot(draw.weights));
  }
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= seeds;
  const double se_mean = std::sqrt(variance(estimates) / seeds);
  INFO("mean " << mean << " se " << se_mean);
  REQUIRE(std::abs(mean - 1.0) <= 3.0 * se_mean);
}

TEST_CASE("proposal normalization constant cancels downstream", "[sampling]") {
  // Scaling q by c rescales the weights by 1/c. Positions and features are
  // untouched because the resampling mass is normalized, the objective never
  // sees weights, and the damped Gram solve is scale-equivariant. Only the
  // raw mass picks up the 1/c factor.
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  cords::SamplerConfig cfg;
  cfg.count = 2048;
  cfg.seed = 404;
  cords::FieldSamples samples = cords::encode_field(set, spec, cfg);

  cords::FieldSamples scaled = samples;
  const double c = 7.0;
  scaled.weights /= c;

  const auto base_fit = cords::fit_positions(samples, spec, 3);
  const auto scaled_fit = cords::fit_positions(scaled, spec, 3);
  REQUIRE((base_fit.centers - scaled_fit.centers).cwiseAbs().maxCoeff() < 1e-10);

  const auto base_feat = cords::recover_features(samples, spec, base_fit.centers);
  const auto scaled_feat = cords::recover_features(scaled, spec, base_fit.centers);
  REQUIRE((base_feat.features - scaled_feat.features).cwiseAbs().maxCoeff() < 1e-10);

  const double base_mass = cords::estimate_count(samples).raw_mass;
  const double scaled_mass = cords::estimate_count(scaled).raw_mass;
  REQUIRE_THAT(scaled_mass, WithinRel(base_mass / c, 1e-12));
}

TEST_CASE("fixed seeds reproduce draws bitwise", "[sampling]") {
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 512;
  cfg.seed = 1234;
  const auto a = cords::sample_importance(set, spec, cfg);
  const auto b = cords::sample_importance(set, spec, cfg);
  REQUIRE(a.points == b.points);
  REQUIRE(a.weights == b.weights);

  cfg.seed = 1235;
  const auto other = cords::sample_importance(set, spec, cfg);
  REQUIRE(a.points != other.points);

  const auto u1 = cords::sample_uniform(unit_box(2), 512, 55);
  const auto u2 = cords::sample_uniform(unit_box(2), 512, 55);
  REQUIRE(u1.points == u2.points);
}

TEST_CASE("importance beats uniform variance on a sparse scene", "[sampling]") {
  // 20 sigma wide box around three tight objects; uniform sampling wastes
  // almost every draw, importance concentrates where rho lives.
  const double sigma = 0.05;
  const auto spec = gaussian(sigma, 2);
  ObjectSet set;
  set.positions.resize(3, 2);
  set.positions << 0.35, 0.40, 0.50, 0.55, 0.62, 0.45;
  set.features = Eigen::MatrixXd::Ones(3, 1);
  const Box box = unit_box(2);

  SamplerConfig cfg;
  cfg.count = 1024;
  cfg.proposal_sigma = 0.06;
  std::vector<double> uni;
  std::vector<double> imp;
  for (int s = 0; s < 100; ++s) {
    uni.push_back(density_mass(set, spec, cords::sample_uniform(box, 1024, 40000 + s)));
    cfg.seed = 50000 + s;
    imp.push_back(density_mass(set, spec, cords::sample_importance(set, spec, cfg)));
  }
  INFO("uniform var " << variance(uni) << " importance var " << variance(imp));
  REQUIRE(variance(imp) < variance(uni));
}

TEST_CASE("legacy unit weights reproduce the unnormalized-proposal convention", "[sampling]") {
  // Under the 1/S convention the proposal is the bare kernel sum, N times
  // the normalized mixture, so the matched-proposal mass collapses to 1.
  const auto set = three_objects();
  const auto spec = gaussian(0.05, 2);
  SamplerConfig cfg;
  cfg.count = 2048;
  cfg.seed = 8;
  cfg.legacy_unit_weights = true;
  const double mass = density_mass(set, spec, cords::sample_importance(set, spec, cfg));
  REQUIRE_THAT(mass, WithinAbs(1.0, 1e-9));

  cfg.importance_fraction = 0.5;
  REQUIRE_THROWS_AS(cords::sample_importance(set, spec, cfg), cords::UnsupportedOperation);
}

TEST_CASE("sampler config validation", "[sampling]") {
  SamplerConfig cfg;
  cfg.count = 0;
  REQUIRE_THROWS_AS(cords::validate(cfg), cords::InvalidArgument);
  cfg.count = 16;
  cfg.proposal_sigma = -0.1;
  REQUIRE_THROWS_AS(cords::validate(cfg), cords::InvalidArgument);
  cfg.proposal_sigma.reset();
  cfg.temperature = 0.0;
  REQUIRE_THROWS_AS(cords::validate(cfg), cords::InvalidArgument);
  cfg.temperature = 1.0;
  cfg.importance_fraction = 1.5;
  REQUIRE_THROWS_AS(cords::validate(cfg), cords::InvalidArgument);
}

TEST_CASE("systematic resample is proportional and validates input", "[sampling]") {
  cords::Rng rng(3);
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(4, 0.25);
  const auto picks = cords::systematic_resample(equal, 4, rng);
  std::vector<int> counts(4, 0);
  for (int p : picks) ++counts[p];
  for (int c : counts) REQUIRE(c == 1);

  Eigen::VectorXd skewed(2);
  skewed << 0.75, 0.25;
  const auto many = cords::systematic_resample(skewed, 1000, rng);
  int zeros = 0;
  for (int p : many) zeros += p == 0 ? 1 : 0;
  REQUIRE(zeros >= 749);
  REQUIRE(zeros <= 751);

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  REQUIRE_THROWS_AS(cords::systematic_resample(zero, 4, rng), cords::Error);
  Eigen::VectorXd negative(2);
  negative << 0.5, -0.1;
  REQUIRE_THROWS_AS(cords::systematic_resample(negative, 4, rng), cords::Error);
  REQUIRE_THROWS_AS(cords::systematic_resample(equal, 0, rng), cords::Error);
  Eigen::VectorXd empty(0);
  REQUIRE_THROWS_AS(cords::systematic_resample(empty, 4, rng), cords::Error);
}

TEST_CASE("subsample picks sorted unique indices", "[sampling]") {
  cords::Rng rng(17);
  const auto idx = cords::subsample_indices(100, 25, rng);
  REQUIRE(idx.size() == 25);
  for (size_t i = 1; i < idx.size(); ++i) REQUIRE(idx[i] > idx[i - 1]);
  REQUIRE(idx.front() >= 0);
  REQUIRE(idx.back() < 100);

  const auto all = cords::subsample_indices(10, 10, rng);
  for (int i = 0; i < 10; ++i) REQUIRE(all[i] == i);
  REQUIRE(cords::subsample_indices(10, 0, rng).empty());
  REQUIRE_THROWS_AS(cords::subsample_indices(10, 11, rng), cords::Error);
  REQUIRE_THROWS_AS(cords::subsample_indices(10, -1, rng), cords::Error);
}
