#include "gaitspeed/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "gaitspeed/wire.hpp"

namespace gaitspeed {

double error_pct(double v_measured, double v_ref) {
  if (!(v_ref > 0.0)) throw std::invalid_argument("reference speed must be > 0");
  return std::abs((v_measured - v_ref) / v_ref) * 100.0;
}

double mae(std::span<const PairedMeasurement> pairs) {
  if (pairs.empty()) throw InsufficientData("mae needs at least one pair");
  double sum = 0.0;
  for (const auto& p : pairs) sum += std::abs(p.v_test_mps - p.v_ref_mps);
  return sum / static_cast<double>(pairs.size());
}

AgreementReport bland_altman(std::span<const PairedMeasurement> pairs) {
  if (pairs.size() < 2) throw InsufficientData("Bland-Altman needs at least two pairs");
  AgreementReport r;
  r.n = pairs.size();
  const double n = static_cast<double>(r.n);
  double sum_diff = 0.0, sum_err = 0.0;
  for (const auto& p : pairs) {
    const double d = p.v_test_mps - p.v_ref_mps;
    sum_diff += d;
    sum_err += error_pct(p.v_test_mps, p.v_ref_mps);
    r.points.push_back({(p.v_test_mps + p.v_ref_mps) / 2.0, d});
  }
  r.bias_mps = sum_diff / n;
  double ss = 0.0;
  for (const auto& pt : r.points) ss += (pt.diff - r.bias_mps) * (pt.diff - r.bias_mps);
  r.sd_mps = std::sqrt(ss / (n - 1.0));
  r.loa_low_mps = r.bias_mps - 1.96 * r.sd_mps;
  r.loa_high_mps = r.bias_mps + 1.96 * r.sd_mps;
  r.mae_mps = mae(pairs);
  r.mean_error_pct = sum_err / n;
  return r;
}

std::vector<EvalWalk> eval_walks(std::span<const CorpusWalk> corpus) {
  std::vector<EvalWalk> out;
  out.reserve(corpus.size());
  for (const auto& w : corpus) out.push_back({w.entry, w.exit, w.meta.truth.true_speed_mps});
  return out;
}

std::optional<double> proposed_speed(std::span<const RssiSample> entry, std::span<const RssiSample> exit,
                                     const DetectionParams& params) {
  try {
    auto e = offline_reference_edges(entry, exit, params);
    return compute_gait_speed(e.t_start_us, e.t_end_us, params.distance_m);
  } catch (const ReferenceUnavailable&) {
    return std::nullopt;
  } catch (const InvalidInterval&) {
    return std::nullopt;
  }
}

std::optional<double> baseline_speed(std::span<const RssiSample> entry, std::span<const RssiSample> exit,
                                     double threshold_dbm, double distance_m) {
  auto e = baseline_edges(entry, exit, threshold_dbm);
  if (!e || e->t_end_us <= e->t_start_us) return std::nullopt;
  return compute_gait_speed(e->t_start_us, e->t_end_us, distance_m);
}

std::vector<double> threshold_values(const ThresholdRange& range) {
  if (!(range.step_dbm > 0.0)) throw std::invalid_argument("threshold step must be > 0");
  if (range.high_dbm < range.low_dbm) throw std::invalid_argument("empty threshold range");
  std::vector<double> out;
  // Index-based so the endpoint is not lost to accumulated rounding.
  const auto count = static_cast<std::size_t>(std::floor((range.high_dbm - range.low_dbm) / range.step_dbm + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) out.push_back(range.low_dbm + static_cast<double>(i) * range.step_dbm);
  return out;
}

// ---------------------------------------------------------------------------

SuccessSummary success_summary(std::span<const TrialResult> trials, std::span<const Exclusion> exclusions) {
  SuccessSummary s;
  for (const auto& t : trials) {
    bool excluded = false;
    if (t.classification == Classification::system_failure) {
      excluded = std::any_of(exclusions.begin(), exclusions.end(), [&](const Exclusion& x) {
        return (x.tag == t.tag.label || x.tag == t.tag.epc) && x.completed_at == t.completed_at;
      });
    }
    for (OutcomeCounts* c : {&s.overall, &s.by_tag[t.tag.label]}) {
      if (excluded) ++c->excluded;
      else if (t.classification == Classification::success) ++c->success;
      else if (t.classification == Classification::erroneous) ++c->erroneous;
      else ++c->system_failure;
    }
  }
  return s;
}

std::vector<Exclusion> read_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path.string() + ": not valid JSON");
  std::vector<Exclusion> out;
  try {
    for (const auto& e : j.at("excluded")) {
      Exclusion x;
      x.tag = e.at("tag").get<std::string>();
      x.completed_at = parse_rfc3339(e.at("completedAt").get<std::string>());
      if (auto r = e.find("reason"); r != e.end() && r->is_string()) x.reason = r->get<std::string>();
      out.push_back(std::move(x));
    }
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t drop_nonclinical(std::vector<std::pair<double, double>>& points) {
  return std::erase_if(points, [](const auto& p) {
    return !(p.second >= kMinClinicalSpeed && p.second <= kMaxClinicalSpeed);
  });
}

LinearFit linear_fit(std::span<const std::pair<double, double>> points, double confidence,
                     std::size_t band_points) {
  if (points.size() < 3) throw InsufficientData("linear fit needs at least three points");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must be in (0, 1)");
  LinearFit f;
  f.n = points.size();
  f.confidence = confidence;
  const double n = static_cast<double>(f.n);
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw SingularFit("all x values are equal");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - (f.intercept + f.slope * x);
    sse += r * r;
  }
  f.residual_se = std::sqrt(sse / (n - 2.0));
  f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;

  boost::math::students_t dist(n - 2.0);
  f.t_critical = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
  const double slope_half = f.t_critical * f.residual_se / std::sqrt(sxx);
  f.slope_ci_low = f.slope - slope_half;
  f.slope_ci_high = f.slope + slope_half;

  auto [lo_it, hi_it] = std::minmax_element(points.begin(), points.end(),
                                            [](const auto& a, const auto& b) { return a.first < b.first; });
  const double x_lo = lo_it->first, x_hi = hi_it->first;
  const std::size_t m = std::max<std::size_t>(band_points, 2);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(m - 1);
    const double y = f.intercept + f.slope * x;
    const double half = f.t_critical * f.residual_se * std::sqrt(1.0 / n + (x - mx) * (x - mx) / sxx);
    f.band.push_back({x, y, y - half, y + half});
  }
  return f;
}

// ---------------------------------------------------------------------------

namespace {

std::string num(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

void write_sweep_table(std::ostream& out, std::span<const SweepCell> cells) {
  out << "w\ttau\tmean_error_pct\tmae_mps\tsuccesses\tn\tsuccess_fraction\n";
  for (const auto& c : cells)
    out << c.w << '\t' << num(c.tau, 2) << '\t' << num(c.mean_error_pct) << '\t' << num(c.mae_mps) << '\t'
        << c.successes << '\t' << c.n << '\t' << num(c.success_fraction, 4) << '\n';
}

void write_baseline_table(std::ostream& out, std::span<const BaselineRow> rows) {
  out << "rank\tthreshold_dbm\tmae_mps\tmean_error_pct\tsuccesses\tn\tsuccess_fraction\n";
  for (const auto& r : rows)
    out << r.rank << '\t' << num(r.threshold_dbm, 2) << '\t' << num(r.mae_mps) << '\t' << num(r.mean_error_pct)
        << '\t' << r.successes << '\t' << r.n << '\t' << num(r.success_fraction, 4) << '\n';
}

void write_agreement_points(std::ostream& out, std::span<const BlandAltmanPoint> points) {
  out << "mean_mps\tdiff_mps\n";
  for (const auto& p : points) out << num(p.mean) << '\t' << num(p.diff) << '\n';
}

void write_fit_band(std::ostream& out, const LinearFit& fit) {
  out << "x\ty_fit\tci_low\tci_high\n";
  for (const auto& b : fit.band)
    out << num(b.x) << '\t' << num(b.y_fit) << '\t' << num(b.lower) << '\t' << num(b.upper) << '\n';
}

void write_summary_table(std::ostream& out, const SuccessSummary& s) {
  out << "group\ttrials\tsuccess\tsuccess_pct\tsystem_failure\tsystem_failure_pct\terroneous\terroneous_pct"
         "\texcluded\texcluded_pct\n";
  auto row = [&](const std::string& name, const OutcomeCounts& c) {
    out << name << '\t' << c.total() << '\t' << c.success << '\t' << num(c.pct(c.success), 1) << '\t'
        << c.system_failure << '\t' << num(c.pct(c.system_failure), 1) << '\t' << c.erroneous << '\t'
        << num(c.pct(c.erroneous), 1) << '\t' << c.excluded << '\t' << num(c.pct(c.excluded), 1) << '\n';
  };
  for (const auto& [tag, c] : s.by_tag) row(tag, c);
  row("total", s.overall);
}

}  // namespace gaitspeed
