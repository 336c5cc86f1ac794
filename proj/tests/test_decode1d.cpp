#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "cords/decode1d.hpp"

using cords::FrbComponent;
using cords::FrbConfig;
using cords::GridField1D;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Clean four-burst fixture, onsets sorted and well separated (>= 15 sigma_rho).
std::vector<FrbComponent> four_bursts() {
  return {{0.25, 1.2, -1.0, 1.5},
          {0.40, 2.0, -2.0, 3.0},
          {0.55, 1.5, -1.5, 2.0},
          {0.75, 2.3, -0.8, 5.0}};
}

GridField1D zero_field(int grid_size, int channels) {
  GridField1D field;
  field.times = cords::make_times(grid_size);
  field.dt = 1.0 / (grid_size - 1);
  field.density = Eigen::VectorXd::Zero(grid_size);
  field.channels = Eigen::MatrixXd::Zero(channels, grid_size);
  for (int c = 0; c < channels; ++c)
    field.channel_info.push_back({"c" + std::to_string(c), false});
  return field;
}

int nearest_bin(const GridField1D& field, double t) {
  return static_cast<int>(std::llround(t / field.dt));
}

}  // namespace

TEST_CASE("grid field validation catches malformed fields", "[decode1d]") {
  GridField1D good = zero_field(64, 2);
  REQUIRE_NOTHROW(cords::validate(good));

  GridField1D shorty = good;
  shorty.times.resize(1);
  shorty.density.resize(1);
  REQUIRE_THROWS_AS(cords::validate(shorty), cords::InvalidField);

  GridField1D mismatched = good;
  mismatched.density.resize(63);
  REQUIRE_THROWS_AS(cords::validate(mismatched), cords::InvalidField);

  GridField1D ragged = good;
  ragged.channels.resize(2, 63);
  REQUIRE_THROWS_AS(cords::validate(ragged), cords::InvalidField);

  GridField1D undocumented = good;
  undocumented.channel_info.pop_back();
  REQUIRE_THROWS_AS(cords::validate(undocumented), cords::InvalidField);

  GridField1D skewed = good;
  skewed.times[10] += 1e-6;
  REQUIRE_THROWS_AS(cords::validate(skewed), cords::InvalidField);

  GridField1D bandless = good;
  bandless.sigma_rho = 0.0;
  REQUIRE_THROWS_AS(cords::validate(bandless), cords::InvalidField);

  GridField1D infected = good;
  infected.density[5] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(cords::validate(infected), cords::InvalidField);
}

TEST_CASE("make_times spans the unit interval uniformly", "[decode1d]") {
  const Eigen::VectorXd times = cords::make_times(101);
  REQUIRE(times.size() == 101);
  REQUIRE(times[0] == 0.0);
  REQUIRE(times[100] == 1.0);
  for (int i = 1; i < 101; ++i)
    REQUIRE_THAT(times[i] - times[i - 1], WithinAbs(0.01, 1e-15));
  REQUIRE_THROWS_AS(cords::make_times(1), cords::InvalidArgument);
}

TEST_CASE("nms with k = 0 returns nothing", "[decode1d]") {
  Eigen::VectorXd density = Eigen::VectorXd::Ones(32);
  REQUIRE(cords::nms_peaks(density, 0, 3).empty());
  REQUIRE_THROWS_AS(cords::nms_peaks(density, -1, 3), cords::InvalidArgument);
  REQUIRE_THROWS_AS(cords::nms_peaks(density, 2, 0), cords::InvalidArgument);
}

TEST_CASE("nms keeps equal peaks beyond the window, lower index first", "[decode1d]") {
  Eigen::VectorXd density = Eigen::VectorXd::Zero(64);
  density[40] = 2.0;
  density[10] = 2.0;
  const std::vector<int> picks = cords::nms_peaks(density, 2, 5);
  REQUIRE(picks == std::vector<int>{10, 40});
}

TEST_CASE("nms suppresses the window around each pick", "[decode1d]") {
  Eigen::VectorXd density = Eigen::VectorXd::Zero(64);
  density[10] = 2.0;
  density[13] = 1.9;
  density[16] = 1.8;
  const std::vector<int> picks = cords::nms_peaks(density, 3, 5);
  REQUIRE(picks == std::vector<int>{10, 16});
}

TEST_CASE("nms finds the true onset bins of three encoded bursts", "[decode1d]") {
  const std::vector<FrbComponent> comps = {
      {0.20, 1.5, -1.0, 2.0}, {0.45, 2.0, -1.5, 3.0}, {0.70, 1.2, -2.0, 1.5}};
  const GridField1D field = cords::encode_frb(comps, 1000);
  const int min_sep =
      static_cast<int>(std::llround(2.0 * field.sigma_rho / field.dt));
  std::vector<int> picks = cords::nms_peaks(field.density, 3, min_sep);
  std::sort(picks.begin(), picks.end());
  const std::vector<int> expected = {nearest_bin(field, 0.20),
                                     nearest_bin(field, 0.45),
                                     nearest_bin(field, 0.70)};
  REQUIRE(picks == expected);
}

TEST_CASE("nms is idempotent on the suppressed signal", "[decode1d]") {
  const std::vector<FrbComponent> comps = {
      {0.30, 1.8, -1.0, 2.0}, {0.50, 1.8, -1.2, 2.5}, {0.72, 1.8, -1.4, 3.0}};
  const GridField1D field = cords::encode_frb(comps, 1000);
  const int min_sep = 20;
  const std::vector<int> picks = cords::nms_peaks(field.density, 3, min_sep);
  REQUIRE(picks.size() == 3);

  Eigen::VectorXd suppressed = field.density;
  for (int p : picks) {
    const int lo = std::max(0, p - min_sep);
    const int hi = std::min(static_cast<int>(suppressed.size()) - 1, p + min_sep);
    suppressed.segment(lo, hi - lo + 1).setZero();
  }
  const std::vector<int> rest = cords::nms_peaks(suppressed, 10, min_sep);
  for (int r : rest)
    for (int p : picks) REQUIRE(std::abs(r - p) > min_sep);
}

TEST_CASE("subpixel refinement of a symmetric triple stays put", "[decode1d]") {
  Eigen::VectorXd density = Eigen::VectorXd::Zero(32);
  density[9] = 1.0;
  density[10] = 2.0;
  density[11] = 1.0;
  const auto res = cords::subpixel_refine(density, 10);
  REQUIRE_FALSE(res.degenerate);
  REQUIRE(res.index == 10.0);
}

TEST_CASE("subpixel refinement recovers a 0.3-bin offset on a Gaussian", "[decode1d]") {
  const int t = 1000;
  const Eigen::VectorXd times = cords::make_times(t);
  const double dt = 1.0 / (t - 1);
  const double sigma = 0.01;
  const double center = times[500] + 0.3 * dt;
  Eigen::VectorXd density(t);
  for (int i = 0; i < t; ++i) {
    const double z = (times[i] - center) / sigma;
    density[i] = std::exp(-0.5 * z * z);
  }
  int argmax = 0;
  density.maxCoeff(&argmax);
  REQUIRE(argmax == 500);
  const auto res = cords::subpixel_refine(density, 500);
  REQUIRE_FALSE(res.degenerate);
  REQUIRE_THAT(res.index, WithinAbs(500.3, 0.02));
}

TEST_CASE("subpixel refinement flags degenerate and boundary cases", "[decode1d]") {
  Eigen::VectorXd monotone = Eigen::VectorXd::Zero(16);
  monotone[4] = 1.0;
  monotone[5] = 2.0;
  monotone[6] = 3.0;
  const auto flat = cords::subpixel_refine(monotone, 5);  // zero curvature
  REQUIRE(flat.degenerate);
  REQUIRE(flat.index == 5.0);

  Eigen::VectorXd valley = Eigen::VectorXd::Zero(16);
  valley[4] = 3.0;
  valley[5] = 1.0;
  valley[6] = 3.0;
  const auto v = cords::subpixel_refine(valley, 5);
  REQUIRE(v.degenerate);
  REQUIRE(v.index == 5.0);

  Eigen::VectorXd edge = Eigen::VectorXd::Ones(16);
  REQUIRE(cords::subpixel_refine(edge, 0).degenerate);
  REQUIRE(cords::subpixel_refine(edge, 15).degenerate);
  REQUIRE(cords::subpixel_refine(edge, 15).index == 15.0);
  REQUIRE_THROWS_AS(cords::subpixel_refine(edge, 16), cords::InvalidArgument);
  REQUIRE_THROWS_AS(cords::subpixel_refine(edge, -1), cords::InvalidArgument);
}

TEST_CASE("subpixel vertex is clipped to half a bin", "[decode1d]") {
  Eigen::VectorXd density = Eigen::VectorXd::Zero(16);
  density[4] = 1.0;
  density[5] = 2.0;
  density[6] = 2.5;  // vertex lands 1.5 bins right, clamp pulls it back
  const auto res = cords::subpixel_refine(density, 5);
  REQUIRE_FALSE(res.degenerate);
  REQUIRE(res.index == 5.5);
}

TEST_CASE("decode recovers four clean bursts", "[decode1d]") {
  const std::vector<FrbComponent> comps = four_bursts();
  const GridField1D field = cords::encode_frb(comps, 1000);
  const auto res = cords::decode_lightcurve(field);

  REQUIRE(res.count == 4);
  REQUIRE_FALSE(res.shortfall);
  REQUIRE_FALSE(res.edge_proximal);
  REQUIRE_FALSE(res.fallback_used);
  REQUIRE(res.onsets.size() == 4);
  REQUIRE(res.values.rows() == 4);
  REQUIRE(res.natural.rows() == 4);

  for (int i = 0; i < 4; ++i) {
    REQUIRE_THAT(res.onsets[i], WithinAbs(comps[i].t0, 1e-3));
    REQUIRE_THAT(res.values(i, 0), WithinRel(comps[i].log_amp, 1e-2));
    REQUIRE_THAT(res.values(i, 1), WithinRel(comps[i].log_rise, 1e-2));
    REQUIRE_THAT(res.values(i, 2), WithinRel(comps[i].skew, 1e-2));
    REQUIRE_THAT(res.natural(i, 0), WithinRel(std::pow(10.0, comps[i].log_amp), 1e-2));
    REQUIRE_THAT(res.natural(i, 1), WithinRel(std::pow(10.0, comps[i].log_rise), 1e-2));
    // skew is not a log channel, so natural passes through untouched
    REQUIRE(res.natural(i, 2) == res.values(i, 2));
  }
  for (int i = 1; i < 4; ++i) REQUIRE(res.onsets[i] > res.onsets[i - 1]);
}

TEST_CASE("decode of a flat zero field is empty", "[decode1d]") {
  const GridField1D field = zero_field(1000, 3);
  const auto res = cords::decode_lightcurve(field);
  REQUIRE(res.count == 0);
  REQUIRE(res.raw_mass == 0.0);
  REQUIRE(res.onsets.size() == 0);
  REQUIRE(res.values.rows() == 0);
  REQUIRE(res.values.cols() == 3);
  REQUIRE_FALSE(res.shortfall);
}

TEST_CASE("negative density is clamped before decoding", "[decode1d]") {
  GridField1D field = zero_field(512, 0);
  field.density = Eigen::VectorXd::Constant(512, -0.3);
  const auto res = cords::decode_lightcurve(field);
  REQUIRE(res.raw_mass == 0.0);
  REQUIRE(res.count == 0);
}

TEST_CASE("seed shortfall is reported, found components returned", "[decode1d]") {
  GridField1D field = zero_field(1000, 0);
  // Two single-bin spikes carrying trapezoid mass 3: N-hat = 3, seeds = 2.
  const double spike = 1.5 / field.dt;
  field.density[300] = spike;
  field.density[700] = spike;
  const auto res = cords::decode_lightcurve(field);
  REQUIRE(res.count == 3);
  REQUIRE(res.shortfall);
  REQUIRE(res.onsets.size() == 2);
  REQUIRE(res.values.rows() == 2);
}

TEST_CASE("onsets near the domain edge raise the edge flag", "[decode1d]") {
  const std::vector<FrbComponent> comps = {{0.03, 1.5, -1.0, 2.0}};
  const GridField1D field = cords::encode_frb(comps, 1000);
  const auto res = cords::decode_lightcurve(field);
  REQUIRE(res.count == 1);
  REQUIRE(res.edge_proximal);
  REQUIRE_THAT(res.onsets[0], WithinAbs(0.03, 5e-3));
}

TEST_CASE("decode is deterministic", "[decode1d]") {
  const GridField1D field = cords::encode_frb(four_bursts(), 1000);
  const auto a = cords::decode_lightcurve(field);
  const auto b = cords::decode_lightcurve(field);
  REQUIRE(a.onsets == b.onsets);
  REQUIRE(a.values == b.values);
  REQUIRE(a.raw_mass == b.raw_mass);
}

TEST_CASE("prior draws respect the configured ranges", "[decode1d]") {
  const FrbConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto draw = cords::simulate_frb(cfg, seed);
    const int n = static_cast<int>(draw.components.size());
    REQUIRE(n >= 1);
    REQUIRE(n <= 6);
    for (int i = 0; i < n; ++i) {
      const auto& c = draw.components[i];
      REQUIRE((c.t0 >= 0.2 && c.t0 <= 0.8));
      REQUIRE((c.log_amp >= 1.0 && c.log_amp <= 2.477));
      REQUIRE((c.log_rise >= -3.0 && c.log_rise <= -0.222));
      REQUIRE((c.skew >= 1.0 && c.skew <= 6.0));
      if (i > 0) REQUIRE(c.t0 >= draw.components[i - 1].t0);
    }
    REQUIRE(draw.rate.size() == cfg.grid_size);
    REQUIRE(draw.counts.size() == cfg.grid_size);
    for (Eigen::Index i = 0; i < draw.counts.size(); ++i) {
      REQUIRE(draw.counts[i] >= 0.0);
      REQUIRE(draw.counts[i] == std::floor(draw.counts[i]));
    }
  }
}

TEST_CASE("background-only draws are Poisson around the floor", "[decode1d]") {
  FrbConfig cfg;
  cfg.n_min = 0;
  cfg.n_max = 0;
  const auto draw = cords::simulate_frb(cfg, 7);
  REQUIRE(draw.components.empty());
  REQUIRE(draw.rate.minCoeff() == 5.0);
  REQUIRE(draw.rate.maxCoeff() == 5.0);
  const double mean = draw.counts.mean();
  const double se = std::sqrt(5.0 / cfg.grid_size);
  REQUIRE_THAT(mean, WithinAbs(5.0, 3.0 * se));
}

TEST_CASE("the simulator replays exactly under a fixed seed", "[decode1d]") {
  const FrbConfig cfg;
  const auto a = cords::simulate_frb(cfg, 42);
  const auto b = cords::simulate_frb(cfg, 42);
  REQUIRE(a.components.size() == b.components.size());
  for (std::size_t i = 0; i < a.components.size(); ++i) {
    REQUIRE(a.components[i].t0 == b.components[i].t0);
    REQUIRE(a.components[i].log_amp == b.components[i].log_amp);
  }
  REQUIRE(a.counts == b.counts);

  const auto c = cords::simulate_frb(cfg, 43);
  REQUIRE(a.counts != c.counts);
}

TEST_CASE("clean encodings carry trapezoid mass N", "[decode1d]") {
  FrbConfig cfg;
  cfg.min_onset_sep = 0.04;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto draw = cords::simulate_frb(cfg, seed);
    const GridField1D field = cords::encode_frb(draw.components, 1000);
    const double n = static_cast<double>(draw.components.size());
    REQUIRE_THAT(cords::trapezoid_mass(field), WithinAbs(n, 1e-6));
  }
}

TEST_CASE("round trip over simulated priors recovers counts and onsets", "[decode1d]") {
  FrbConfig cfg;
  cfg.min_onset_sep = 0.04;  // 4 sigma_rho keeps seeds resolvable
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto draw = cords::simulate_frb(cfg, seed);
    const GridField1D field = cords::encode_frb(draw.components, 1000);
    const auto res = cords::decode_lightcurve(field);
    const int n = static_cast<int>(draw.components.size());
    INFO("seed " << seed << " n " << n);
    REQUIRE(res.count == n);
    REQUIRE(res.onsets.size() == n);
    // both sides sorted and separated, so nearest-onset alignment is by rank
    for (int i = 0; i < n; ++i)
      REQUIRE_THAT(res.onsets[i], WithinAbs(draw.components[i].t0, 2e-3));
  }
}

TEST_CASE("average pooling preserves the mass estimate", "[decode1d]") {
  const std::vector<FrbComponent> comps = {{0.35, 1.8, -1.2, 2.0},
                                           {0.65, 2.1, -1.8, 3.5}};
  const GridField1D field = cords::encode_frb(comps, 1000);
  const double mass = cords::trapezoid_mass(field);
  for (int factor : {2, 4}) {
    const GridField1D pooled = cords::downsample(field, factor);
    REQUIRE(pooled.grid_size() == 1000 / factor);
    REQUIRE_THAT(pooled.dt, WithinRel(field.dt * factor, 1e-12));
    REQUIRE_THAT(pooled.times[0], WithinAbs(field.times.head(factor).mean(), 1e-15));
    REQUIRE_THAT(pooled.channels(0, 0),
                 WithinAbs(field.channels.row(0).head(factor).mean(), 1e-12));
    REQUIRE_THAT(cords::trapezoid_mass(pooled), WithinRel(mass, 1e-3));
  }
}

TEST_CASE("pooling by one is the identity and bad factors throw", "[decode1d]") {
  const GridField1D field = cords::encode_frb(four_bursts(), 256);
  const GridField1D same = cords::downsample(field, 1);
  REQUIRE(same.density == field.density);
  REQUIRE(same.times == field.times);
  REQUIRE_THROWS_AS(cords::downsample(field, 0), cords::InvalidArgument);
  REQUIRE_THROWS_AS(cords::downsample(field, 255), cords::InvalidArgument);
}
