#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "cords/decode.hpp"
#include "cords/encode.hpp"
#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/rng.hpp"
#include "cords/sampling.hpp"

namespace cords {

// ============================================================================
// Local-maxima benchmark: smooth random fields, grid peak truth, exact-match
// scoring of the decoder against it.
// ============================================================================
//
// Fields are Gaussian-process samples on [-3,3]^2 approximated by D random
// Fourier features of the squared-exponential kernel,
//   f(r) = alpha * sqrt(2/D) * sum_d cos(w_d . r + b_d),
// multiplied by a separable half-cosine taper so every maximum is interior.

struct RffField {
  Eigen::MatrixXd weights_w;  // D x 2 frequencies
  Eigen::VectorXd phases_b;   // D
  double amplitude = 1.5;
  double lengthscale = 0.9;
  int num_features = 150;
  double envelope_margin = 0.8;

  // Raw (un-enveloped) field at a batch of points, S x 2.
  Eigen::VectorXd raw(const Eigen::MatrixXd& points) const {
    const double scale = amplitude * std::sqrt(2.0 / num_features);
    return scale * ((points * weights_w.transpose()).rowwise() +
                    phases_b.transpose())
                       .array()
                       .cos()
                       .rowwise()
                       .sum()
                       .matrix();
  }
};

// Stream use: 0 = frequencies (row major), 1 = phases.
inline RffField sample_rff_field(double lengthscale, double amplitude, int num_features,
                                 std::uint64_t seed) {
  if (!(lengthscale > 0.0)) throw InvalidArgument("sample_rff_field: lengthscale must be > 0");
  if (num_features < 1) throw InvalidArgument("sample_rff_field: need at least one feature");
  RffField field;
  field.amplitude = amplitude;
  field.lengthscale = lengthscale;
  field.num_features = num_features;
  field.weights_w.resize(num_features, 2);
  field.phases_b.resize(num_features);
  Rng base(seed);
  Rng wrng = base.stream(0);
  for (int i = 0; i < num_features; ++i)
    for (int j = 0; j < 2; ++j) field.weights_w(i, j) = wrng.normal() / lengthscale;
  Rng brng = base.stream(1);
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (int i = 0; i < num_features; ++i) field.phases_b[i] = brng.uniform(0.0, kTwoPi);
  return field;
}

// The taper formula as printed rises from 0 with its clipped argument; read
// literally the interior would be dark and the boundary bright. The default
// takes the complementary window (interior exactly 1, boundary exactly 0);
// the literal reading stays available as a switch.
enum class EnvelopeMode { InteriorOne, LiteralRising };

namespace detail {

inline double envelope_axis(double x, double half_extent, double margin, EnvelopeMode mode) {
  const double u = std::clamp(std::fabs(x) - (half_extent - margin), 0.0, margin);
  const double rising = 0.5 * (1.0 - std::cos(M_PI * u / margin));
  return mode == EnvelopeMode::InteriorOne ? 1.0 - rising : rising;
}

}  // namespace detail

inline double apply_envelope(double value, const Eigen::Vector2d& r, double margin,
                             EnvelopeMode mode = EnvelopeMode::InteriorOne) {
  if (!(margin > 0.0)) throw InvalidArgument("apply_envelope: margin must be > 0");
  constexpr double kHalf = 3.0;
  return value * detail::envelope_axis(r.x(), kHalf, margin, mode) *
         detail::envelope_axis(r.y(), kHalf, margin, mode);
}

// Enveloped field over a batch of points.
inline Eigen::VectorXd enveloped_values(const RffField& field, const Eigen::MatrixXd& points,
                                        EnvelopeMode mode = EnvelopeMode::InteriorOne) {
  Eigen::VectorXd v = field.raw(points);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = apply_envelope(v[i], points.row(i).transpose(), field.envelope_margin, mode);
  return v;
}

// Strict local maxima of row-major grid values v[iy * grid_n + ix] over an
// axis shared by both coordinates: a cell beats every neighbor within
// Chebyshev radius min_distance, exceeds threshold_rel times the positive
// global maximum, and at most the max_peaks tallest survive. Coordinates are
// the grid-cell centers.
inline Eigen::MatrixXd grid_peaks_values(const Eigen::VectorXd& v, const Eigen::VectorXd& axis,
                                         double threshold_rel = 0.05, int min_distance = 3,
                                         int max_peaks = 50) {
  const int grid_n = static_cast<int>(axis.size());
  if (grid_n < 3) throw InvalidArgument("grid_peaks_values: need a grid of >= 3 per axis");
  if (v.size() != static_cast<Eigen::Index>(grid_n) * grid_n)
    throw InvalidArgument("grid_peaks_values: value count must be grid_n^2");
  const double vmax = v.maxCoeff();
  if (!(vmax > 0.0)) return Eigen::MatrixXd(0, 2);
  const double threshold = threshold_rel * vmax;

  struct Peak {
    double value;
    int ix, iy;
  };
  std::vector<Peak> peaks;
  for (int iy = 0; iy < grid_n; ++iy)
    for (int ix = 0; ix < grid_n; ++ix) {
      const double val = v[iy * grid_n + ix];
      if (val <= threshold) continue;
      bool is_max = true;
      for (int dy = -min_distance; dy <= min_distance && is_max; ++dy)
        for (int dx = -min_distance; dx <= min_distance && is_max; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = ix + dx;
          const int ny = iy + dy;
          if (nx < 0 || nx >= grid_n || ny < 0 || ny >= grid_n) continue;
          if (v[ny * grid_n + nx] >= val) is_max = false;
        }
      if (is_max) peaks.push_back({val, ix, iy});
    }
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& a, const Peak& b) { return a.value > b.value; });
  if (static_cast<int>(peaks.size()) > max_peaks) peaks.resize(max_peaks);

  Eigen::MatrixXd out(peaks.size(), 2);
  for (size_t i = 0; i < peaks.size(); ++i) {
    out(i, 0) = axis[peaks[i].ix];
    out(i, 1) = axis[peaks[i].iy];
  }
  return out;
}

// Peak extraction for an RFF field: evaluates the enveloped field on a
// grid_n x grid_n grid over [-3,3]^2 and delegates to grid_peaks_values.
inline Eigen::MatrixXd grid_peaks(const RffField& field, int grid_n = 181,
                                  double threshold_rel = 0.05, int min_distance = 3,
                                  int max_peaks = 50,
                                  EnvelopeMode mode = EnvelopeMode::InteriorOne) {
  if (grid_n < 3) throw InvalidArgument("grid_peaks: grid_n must be >= 3");
  const Eigen::VectorXd axis = Eigen::VectorXd::LinSpaced(grid_n, -3.0, 3.0);
  Eigen::MatrixXd pts(grid_n * grid_n, 2);
  for (int iy = 0; iy < grid_n; ++iy)
    for (int ix = 0; ix < grid_n; ++ix) {
      pts(iy * grid_n + ix, 0) = axis[ix];
      pts(iy * grid_n + ix, 1) = axis[iy];
    }
  return grid_peaks_values(enveloped_values(field, pts, mode), axis, threshold_rel,
                           min_distance, max_peaks);
}

struct MatchResult {
  bool correct = false;
  double max_pair_dist = 0.0;  // over assigned pairs; 0 when nothing to pair
};

// Exact-match score. Pairs are assigned greedily by global distance, each
// point consumed once; correct iff the counts agree and every assigned pair
// lies within epsilon (inclusive).
inline MatchResult match_maxima(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
                                double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("match_maxima: epsilon must be > 0");
  MatchResult res;
  const int np = static_cast<int>(predicted.rows());
  const int nt = static_cast<int>(truth.rows());
  const int pairs = std::min(np, nt);
  if (pairs > 0) {
    struct Cand {
      double d;
      int p, t;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<size_t>(np) * nt);
    for (int p = 0; p < np; ++p)
      for (int t = 0; t < nt; ++t)
        cands.push_back({(predicted.row(p) - truth.row(t)).norm(), p, t});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.d != b.d) return a.d < b.d;
      return a.p != b.p ? a.p < b.p : a.t < b.t;
    });
    std::vector<char> used_p(np, 0), used_t(nt, 0);
    int assigned = 0;
    for (const Cand& cand : cands) {
      if (assigned == pairs) break;
      if (used_p[cand.p] || used_t[cand.t]) continue;
      used_p[cand.p] = used_t[cand.t] = 1;
      res.max_pair_dist = std::max(res.max_pair_dist, cand.d);
      ++assigned;
    }
  }
  res.correct = (np == nt) && res.max_pair_dist <= epsilon;
  return res;
}

inline bool maxima_accuracy(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
                            double epsilon = 0.24) {
  return match_maxima(predicted, truth, epsilon).correct;
}

struct BenchConfig {
  int instances = 200;
  double lengthscale = 0.9;
  double amplitude = 1.5;
  int num_features = 150;
  double envelope_margin = 0.8;
  EnvelopeMode envelope_mode = EnvelopeMode::InteriorOne;
  int grid_n = 181;
  double threshold_rel = 0.05;
  int min_distance = 3;
  int max_peaks = 50;
  double epsilon = 0.24;
  double encode_sigma = 0.06;  // bandwidth for encoding truth peaks
  int sample_count = 4096;     // P
  int subsample = 2048;        // K
  std::uint64_t seed = 0;
  bool oracle = false;  // score the truth against itself (metric sanity)
  DecodeOptions decode;
};

struct BenchRow {
  std::uint64_t seed = 0;  // per-instance seed; replays the instance alone
  int n_true = 0;
  int n_pred = 0;
  bool correct = false;
  double max_pair_dist = 0.0;
  double decode_ms = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchRow> rows;
  double accuracy = 0.0;
  double mean_decode_ms = 0.0;
};

// One benchmark instance. Instance stream use: 0 = field, 1 = sampling,
// 2 = subsample, 3 = decode.
inline BenchRow run_bench_instance(const BenchConfig& cfg, std::uint64_t instance_seed) {
  BenchRow row;
  row.seed = instance_seed;
  Rng base(instance_seed);

  const RffField field = sample_rff_field(cfg.lengthscale, cfg.amplitude, cfg.num_features,
                                          base.stream(0).next_u64());
  const Eigen::MatrixXd truth =
      grid_peaks(field, cfg.grid_n, cfg.threshold_rel, cfg.min_distance, cfg.max_peaks,
                 cfg.envelope_mode);
  row.n_true = static_cast<int>(truth.rows());

  Eigen::MatrixXd predicted(0, 2);
  const auto tic = std::chrono::steady_clock::now();
  if (cfg.oracle) {
    predicted = truth;
  } else if (row.n_true > 0) {
    try {
      ObjectSet set;
      set.positions = truth;
      set.features.resize(truth.rows(), 0);

      const KernelSpec spec{KernelFamily::Gaussian, cfg.encode_sigma, 2, true};
      SamplerConfig sampler;
      sampler.scheme = SampleScheme::Importance;
      sampler.count = cfg.sample_count;
      sampler.seed = base.stream(1).next_u64();
      FieldSamples samples = encode_field(set, spec, sampler);

      if (cfg.subsample < cfg.sample_count) {
        Rng sub = base.stream(2);
        const std::vector<int> keep =
            subsample_indices(cfg.sample_count, cfg.subsample, sub);
        const double reweight =
            static_cast<double>(cfg.sample_count) / static_cast<double>(cfg.subsample);
        FieldSamples thin;
        thin.scheme = samples.scheme;
        thin.proposal_meta = samples.proposal_meta;
        thin.points.resize(keep.size(), samples.points.cols());
        thin.density.resize(keep.size());
        thin.features.resize(keep.size(), samples.features.cols());
        thin.weights.resize(keep.size());
        for (size_t i = 0; i < keep.size(); ++i) {
          thin.points.row(i) = samples.points.row(keep[i]);
          thin.density[i] = samples.density[keep[i]];
          thin.features.row(i) = samples.features.row(keep[i]);
          thin.weights[i] = samples.weights[keep[i]] * reweight;
        }
        samples = std::move(thin);
      }

      DecodeOptions dec = cfg.decode;
      dec.seed = base.stream(3).next_u64();
      const DecodeResult result = decode_set(samples, spec, dec);
      predicted = result.centers;
    } catch (const Error&) {
      predicted.resize(0, 2);  // scored as incorrect below
    }
  }
  row.decode_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tic)
                      .count();

  row.n_pred = static_cast<int>(predicted.rows());
  const MatchResult match = match_maxima(predicted, truth, cfg.epsilon);
  row.correct = match.correct;
  row.max_pair_dist = match.max_pair_dist;
  return row;
}

inline BenchReport run_benchmark(const BenchConfig& cfg) {
  if (cfg.instances < 1) throw InvalidArgument("run_benchmark: need at least one instance");
  BenchReport report;
  report.config = cfg;
  report.rows.reserve(cfg.instances);
  Rng base(cfg.seed);
  int correct = 0;
  double total_ms = 0.0;
  for (int i = 0; i < cfg.instances; ++i) {
    const BenchRow row = run_bench_instance(cfg, base.stream(static_cast<std::uint64_t>(i)).next_u64());
    correct += row.correct ? 1 : 0;
    total_ms += row.decode_ms;
    report.rows.push_back(row);
  }
  report.accuracy = static_cast<double>(correct) / cfg.instances;
  report.mean_decode_ms = total_ms / cfg.instances;
  return report;
}

}  // namespace cords
