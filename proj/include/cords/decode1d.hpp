#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cords/decode.hpp"
#include "cords/encode.hpp"
#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/kernels.hpp"
#include "cords/optimize.hpp"
#include "cords/rng.hpp"

namespace cords {

// ============================================================================
// 1D gridded decode (light curves) and the FRB test simulator
// ============================================================================
//
// Fields live on a uniform T-point grid over [0, 1]: times[i] = i * dt with
// dt = 1/(T-1). The density channel is a sum of normalized Gaussians of
// bandwidth sigma_rho at the component onsets; feature channels use
// bandwidth sigma_feat. Amplitude-like channels are stored in log10.
//
// Decoding follows the d-dimensional pipeline with grid specializations:
// trapezoid mass -> greedy NMS seeding -> quadratic subpixel refinement ->
// short L-BFGS -> weighted Gram solve with w_i = dt.

struct Channel {
  std::string name;
  bool log10 = false;
};

struct GridField1D {
  Eigen::VectorXd times;     // T, uniform on [0, 1]
  double dt = 0.0;
  Eigen::VectorXd density;   // T
  Eigen::MatrixXd channels;  // C x T
  std::vector<Channel> channel_info;
  double sigma_rho = 0.01;   // encoding bandwidths travel with the field
  double sigma_feat = 0.015;

  int grid_size() const { return static_cast<int>(times.size()); }
  int num_channels() const { return static_cast<int>(channels.rows()); }
};

inline void validate(const GridField1D& field) {
  const auto t = field.times.size();
  if (t < 2) throw InvalidField("GridField1D: need at least two grid points");
  if (field.density.size() != t)
    throw InvalidField("GridField1D: density length must match times");
  if (field.channels.rows() > 0 && field.channels.cols() != t)
    throw InvalidField("GridField1D: channel length must match times");
  if (static_cast<int>(field.channel_info.size()) != field.channels.rows())
    throw InvalidField("GridField1D: channel_info must describe every channel");
  if (!field.times.allFinite() || !field.density.allFinite() ||
      !field.channels.allFinite() || !std::isfinite(field.dt))
    throw InvalidField("GridField1D: all values must be finite");
  if (!(field.sigma_rho > 0.0) || !(field.sigma_feat > 0.0))
    throw InvalidField("GridField1D: bandwidths must be > 0");
  for (Eigen::Index i = 1; i < t; ++i) {
    const double step = field.times[i] - field.times[i - 1];
    if (!(step > 0.0) || std::fabs(step - field.dt) > 1e-12 * std::max(1.0, field.dt))
      throw InvalidField("GridField1D: times must increase uniformly by dt");
  }
}

inline Eigen::VectorXd make_times(int grid_size) {
  if (grid_size < 2) throw InvalidArgument("make_times: need at least two points");
  return Eigen::VectorXd::LinSpaced(grid_size, 0.0, 1.0);
}

// Trapezoid quadrature of the density over [0, 1].
inline double trapezoid_mass(const GridField1D& field) {
  validate(field);
  return field.dt * (field.density.sum() -
                     0.5 * (field.density[0] + field.density[field.times.size() - 1]));
}

// Greedy non-maximum suppression: repeatedly take the highest remaining bin
// (ties to the lower index), suppressing indices within +-min_sep of each
// pick. Stops early when no positive bin remains.
inline std::vector<int> nms_peaks(const Eigen::VectorXd& density, int k, int min_sep) {
  if (k < 0) throw InvalidArgument("nms_peaks: k must be >= 0");
  if (min_sep < 1) throw InvalidArgument("nms_peaks: min_sep must be >= 1");
  const int t = static_cast<int>(density.size());
  std::vector<int> picks;
  std::vector<char> suppressed(t, 0);
  while (static_cast<int>(picks.size()) < k) {
    int best = -1;
    double best_v = 0.0;
    for (int i = 0; i < t; ++i) {
      if (suppressed[i]) continue;
      if (density[i] > best_v) {
        best_v = density[i];
        best = i;
      }
    }
    if (best < 0) break;  // signal exhausted
    picks.push_back(best);
    const int lo = std::max(0, best - min_sep);
    const int hi = std::min(t - 1, best + min_sep);
    for (int i = lo; i <= hi; ++i) suppressed[i] = 1;
  }
  return picks;
}

struct SubpixelResult {
  double index = 0.0;       // fractional grid index
  bool degenerate = false;  // boundary bin or non-negative curvature
};

// Quadratic (three-point parabola) refinement of a peak index. The vertex
// offset is clipped to +-0.5 bins; boundary peaks and flat/valley triples
// return the bin center, flagged.
inline SubpixelResult subpixel_refine(const Eigen::VectorXd& density, int index) {
  const int t = static_cast<int>(density.size());
  if (index < 0 || index >= t) throw InvalidArgument("subpixel_refine: index out of range");
  if (index == 0 || index == t - 1) return {static_cast<double>(index), true};
  const double left = density[index - 1];
  const double mid = density[index];
  const double right = density[index + 1];
  const double curvature = left - 2.0 * mid + right;
  if (curvature >= 0.0) return {static_cast<double>(index), true};
  double offset = 0.5 * (left - right) / curvature;
  offset = std::clamp(offset, -0.5, 0.5);
  return {index + offset, false};
}

struct Decode1DOptions {
  LbfgsConfig lbfgs;
  bool log_space = false;
  double exponent_clamp = 12.0;  // log10 channels are exponentiated within +-clamp
};

struct Decode1DResult {
  int count = 0;            // mass estimate
  double raw_mass = 0.0;
  Eigen::VectorXd onsets;   // K, sorted ascending; K < count only on shortfall
  Eigen::MatrixXd values;   // K x C, field space (log10 where flagged)
  Eigen::MatrixXd natural;  // K x C, log channels exponentiated
  bool shortfall = false;
  bool edge_proximal = false;  // some onset within 5 sigma_rho of the domain edge
  double residual = 0.0;
  double gram_condition = 0.0;
  bool fallback_used = false;
};

inline Decode1DResult decode_lightcurve(const GridField1D& field,
                                        const Decode1DOptions& opts = {}) {
  validate(field);
  GridField1D work = field;
  work.density = work.density.cwiseMax(0.0);  // the documented clamp

  Decode1DResult res;
  res.raw_mass = trapezoid_mass(work);
  res.count = std::max(0, round_half_up(res.raw_mass));
  const int c = work.num_channels();
  if (res.count == 0) {
    res.onsets.resize(0);
    res.values.resize(0, c);
    res.natural.resize(0, c);
    return res;
  }

  const int min_sep =
      std::max(1, static_cast<int>(std::llround(2.0 * work.sigma_rho / work.dt)));
  const std::vector<int> seeds = nms_peaks(work.density, res.count, min_sep);
  res.shortfall = static_cast<int>(seeds.size()) < res.count;
  const int k = static_cast<int>(seeds.size());

  Eigen::MatrixXd onsets0(k, 1);
  for (int i = 0; i < k; ++i)
    onsets0(i, 0) = work.times[0] + subpixel_refine(work.density, seeds[i]).index * work.dt;

  const KernelSpec rho_spec{KernelFamily::Gaussian, work.sigma_rho, 1, true};
  ObjectiveOptions obj_opts;
  obj_opts.log_space = opts.log_space;
  const PositionObjective objective(work.times, work.density, rho_spec, k, obj_opts);
  const RefineResult refined = refine_centers(objective, onsets0, opts.lbfgs);
  res.residual = refined.opt.value;

  // Feature Gram on the grid: constant quadrature weights w_i = dt.
  FieldSamples grid;
  grid.points = work.times;
  grid.density = work.density;
  grid.features = work.channels.transpose();
  grid.weights = Eigen::VectorXd::Constant(work.grid_size(), work.dt);
  const KernelSpec feat_spec{KernelFamily::Gaussian, work.sigma_feat, 1, true};
  const FeatureRecovery rec = recover_features(grid, feat_spec, refined.centers);
  res.gram_condition = rec.gram_condition;
  res.fallback_used = rec.fallback_used;

  const double lo = work.times[0];
  const double hi = work.times[work.grid_size() - 1];
  for (int i = 0; i < k; ++i) {
    const double t = refined.centers(i, 0);
    if (t - lo < 5.0 * work.sigma_rho || hi - t < 5.0 * work.sigma_rho)
      res.edge_proximal = true;
  }

  // Sort components by onset.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return refined.centers(a, 0) < refined.centers(b, 0);
  });
  res.onsets.resize(k);
  res.values.resize(k, c);
  res.natural.resize(k, c);
  for (int i = 0; i < k; ++i) {
    res.onsets[i] = refined.centers(order[i], 0);
    res.values.row(i) = rec.features.row(order[i]);
    for (int ch = 0; ch < c; ++ch) {
      const double v = res.values(i, ch);
      res.natural(i, ch) =
          field.channel_info[ch].log10
              ? std::pow(10.0, std::clamp(v, -opts.exponent_clamp, opts.exponent_clamp))
              : v;
    }
  }
  return res;
}

// ----------------------------------------------------------------------------
// FRB-style simulator (test fixture; decode never depends on it)
// ----------------------------------------------------------------------------

struct FrbComponent {
  double t0 = 0.0;
  double log_amp = 0.0;   // log10 of the peak amplitude
  double log_rise = 0.0;  // log10 of the rise time constant
  double skew = 1.0;      // decay constant = skew * rise
};

struct FrbConfig {
  int grid_size = 1000;
  double background = 5.0;
  int n_min = 1;
  int n_max = 6;
  double t0_lo = 0.2, t0_hi = 0.8;
  double log_amp_lo = 1.0, log_amp_hi = 2.477;
  double log_rise_lo = -3.0, log_rise_hi = -0.222;
  double skew_lo = 1.0, skew_hi = 6.0;
  double min_onset_sep = 0.0;  // rejection threshold on onset spacing; 0 = off
};

// Two-sided exponential pulse, amplitude-normalized at the peak: rise
// constant tau for t <= t0, decay constant skew * tau beyond it.
inline double frb_pulse(const FrbComponent& comp, double t) {
  const double amp = std::pow(10.0, comp.log_amp);
  const double tau = std::pow(10.0, comp.log_rise);
  const double dt = t - comp.t0;
  return dt <= 0.0 ? amp * std::exp(dt / tau)
                   : amp * std::exp(-dt / (comp.skew * tau));
}

inline Eigen::VectorXd frb_rate(const std::vector<FrbComponent>& components,
                                const Eigen::VectorXd& times, double background) {
  Eigen::VectorXd rate = Eigen::VectorXd::Constant(times.size(), background);
  for (const auto& comp : components)
    for (Eigen::Index i = 0; i < times.size(); ++i) rate[i] += frb_pulse(comp, times[i]);
  return rate;
}

// Prior draw: N ~ U{n_min..n_max}, then per component t0, log-amplitude,
// log-rise, skew, each uniform in its range. When min_onset_sep > 0 the
// whole draw is rejected and redrawn until onsets are separated; components
// are returned sorted by onset.
inline std::vector<FrbComponent> sample_frb_components(const FrbConfig& cfg, Rng& rng) {
  if (cfg.n_min < 0 || cfg.n_max < cfg.n_min)
    throw InvalidArgument("sample_frb_components: need 0 <= n_min <= n_max");
  const int n = cfg.n_min + static_cast<int>(rng.uniform_index(cfg.n_max - cfg.n_min + 1));
  std::vector<FrbComponent> comps(n);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (int i = 0; i < n; ++i) {
      comps[i].t0 = rng.uniform(cfg.t0_lo, cfg.t0_hi);
      comps[i].log_amp = rng.uniform(cfg.log_amp_lo, cfg.log_amp_hi);
      comps[i].log_rise = rng.uniform(cfg.log_rise_lo, cfg.log_rise_hi);
      comps[i].skew = rng.uniform(cfg.skew_lo, cfg.skew_hi);
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i)
      for (int j = i + 1; j < n && ok; ++j)
        if (std::fabs(comps[i].t0 - comps[j].t0) < cfg.min_onset_sep) ok = false;
    if (ok) {
      std::sort(comps.begin(), comps.end(),
                [](const FrbComponent& a, const FrbComponent& b) { return a.t0 < b.t0; });
      return comps;
    }
  }
  throw InvalidArgument("sample_frb_components: rejection sampling failed to separate onsets");
}

struct FrbDraw {
  std::vector<FrbComponent> components;
  Eigen::VectorXd rate;    // Poisson intensity per bin
  Eigen::VectorXd counts;  // observed counts
};

// Deterministic given the seed. Stream use: 0 = prior draw, 1 = counts.
inline FrbDraw simulate_frb(const FrbConfig& cfg, std::uint64_t seed) {
  FrbDraw draw;
  Rng base(seed);
  Rng prior = base.stream(0);
  draw.components = sample_frb_components(cfg, prior);
  const Eigen::VectorXd times = make_times(cfg.grid_size);
  draw.rate = frb_rate(draw.components, times, cfg.background);
  Rng counts = base.stream(1);
  draw.counts.resize(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i)
    draw.counts[i] = static_cast<double>(counts.poisson(draw.rate[i]));
  return draw;
}

// Clean analytic encoding of FRB components: density at sigma_rho, channels
// (log-amplitude, log-rise, skew) at sigma_feat.
inline GridField1D encode_frb(const std::vector<FrbComponent>& components,
                              int grid_size, double sigma_rho = 0.01,
                              double sigma_feat = 0.015) {
  const int n = static_cast<int>(components.size());
  ObjectSet set;
  set.positions.resize(n, 1);
  set.features.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    set.positions(i, 0) = components[i].t0;
    set.features(i, 0) = components[i].log_amp;
    set.features(i, 1) = components[i].log_rise;
    set.features(i, 2) = components[i].skew;
  }

  GridField1D field;
  field.times = make_times(grid_size);
  field.dt = 1.0 / (grid_size - 1);
  field.sigma_rho = sigma_rho;
  field.sigma_feat = sigma_feat;
  const KernelSpec rho_spec{KernelFamily::Gaussian, sigma_rho, 1, true};
  const KernelSpec feat_spec{KernelFamily::Gaussian, sigma_feat, 1, true};
  field.density = encode_at(set, rho_spec, field.times).density;
  field.channels = encode_at(set, feat_spec, field.times).features.transpose();
  field.channel_info = {{"log_amp", true}, {"log_rise", true}, {"skew", false}};
  return field;
}

// Average pooling by an integer factor; dt scales by the factor, pooled
// times sit at window centers, a trailing partial window is dropped.
inline GridField1D downsample(const GridField1D& field, int factor) {
  validate(field);
  if (factor < 1) throw InvalidArgument("downsample: factor must be >= 1");
  const int t2 = field.grid_size() / factor;
  if (t2 < 2) throw InvalidArgument("downsample: factor leaves fewer than two points");
  GridField1D out;
  out.dt = field.dt * factor;
  out.sigma_rho = field.sigma_rho;
  out.sigma_feat = field.sigma_feat;
  out.times.resize(t2);
  out.density.resize(t2);
  out.channels.resize(field.channels.rows(), t2);
  out.channel_info = field.channel_info;
  const double inv = 1.0 / factor;
  for (int i = 0; i < t2; ++i) {
    const int base = i * factor;
    out.times[i] = field.times.segment(base, factor).mean();
    out.density[i] = field.density.segment(base, factor).sum() * inv;
    out.channels.col(i) = field.channels.middleCols(base, factor).rowwise().sum() * inv;
  }
  return out;
}

}  // namespace cords
