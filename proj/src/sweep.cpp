#include <algorithm>
#include <cmath>
#include <limits>

#include "gaitspeed/evalkit.hpp"

namespace gaitspeed {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Outcome {
  bool ok = false;
  double err_pct = 0.0;
  double abs_err = 0.0;
};

Outcome score(std::optional<double> speed, double ref) {
  if (!speed) return {};
  return {true, error_pct(*speed, ref), std::abs(*speed - ref)};
}

DetectionParams cell_params(const SweepGrid& g, int w, double tau) {
  DetectionParams p = g.base;
  p.w1 = p.w2 = w;
  p.tau1 = p.tau2 = tau;
  return p;
}

void check_grid(std::span<const EvalWalk> corpus, const SweepGrid& g) {
  if (corpus.empty()) throw InsufficientData("empty corpus");
  if (g.w_values.empty() || g.tau_values.empty()) throw std::invalid_argument("empty sweep grid");
  for (int w : g.w_values)
    for (double tau : g.tau_values) validate(cell_params(g, w, tau));
}

// Reduction in walk order; shared by both implementations so results match
// bit for bit.
template <class Cell>
void reduce(Cell& c, const Outcome* outcomes, std::size_t n) {
  double sum_err = 0.0, sum_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i].ok) continue;
    ++c.successes;
    sum_err += outcomes[i].err_pct;
    sum_abs += outcomes[i].abs_err;
  }
  c.n = n;
  c.success_fraction = static_cast<double>(c.successes) / static_cast<double>(n);
  c.mean_error_pct = c.successes ? sum_err / static_cast<double>(c.successes) : kNaN;
  c.mae_mps = c.successes ? sum_abs / static_cast<double>(c.successes) : kNaN;
}

std::vector<SweepCell> sweep_cells(const SweepGrid& g) {
  std::vector<SweepCell> cells;
  for (double tau : g.tau_values)
    for (int w : g.w_values) cells.push_back({w, tau, 0.0, 0.0, 0.0, 0, 0});
  return cells;
}

void rank_rows(std::vector<BaselineRow>& rows, double min_fraction) {
  auto tier = [&](const BaselineRow& r) { return r.successes == 0 ? 2 : r.success_fraction >= min_fraction ? 0 : 1; };
  std::stable_sort(rows.begin(), rows.end(), [&](const BaselineRow& a, const BaselineRow& b) {
    const int ta = tier(a), tb = tier(b);
    if (ta != tb) return ta < tb;
    if (ta == 2) return false;
    return a.mae_mps < b.mae_mps;
  });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
}

std::vector<BaselineRow> baseline_rows(std::span<const EvalWalk> corpus, const ThresholdRange& range) {
  if (corpus.empty()) throw InsufficientData("empty corpus");
  std::vector<BaselineRow> rows;
  for (double th : threshold_values(range)) rows.push_back({th, 0, 0, 0.0, 0.0, 0.0, 0});
  return rows;
}

}  // namespace

std::vector<SweepCell> parameter_sweep_serial(std::span<const EvalWalk> corpus, const SweepGrid& grid) {
  check_grid(corpus, grid);
  auto cells = sweep_cells(grid);
  std::vector<Outcome> outcomes(corpus.size());
  for (auto& c : cells) {
    const auto p = cell_params(grid, c.w, c.tau);
    for (std::size_t i = 0; i < corpus.size(); ++i)
      outcomes[i] = score(proposed_speed(corpus[i].entry, corpus[i].exit, p), corpus[i].reference_mps);
    reduce(c, outcomes.data(), corpus.size());
  }
  return cells;
}

std::vector<SweepCell> parameter_sweep(std::span<const EvalWalk> corpus, const SweepGrid& grid) {
  check_grid(corpus, grid);
  auto cells = sweep_cells(grid);
  const std::size_t nw = corpus.size();
  const std::size_t total = cells.size() * nw;
  std::vector<Outcome> outcomes(total);
  const auto jobs = static_cast<long long>(total);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long k = 0; k < jobs; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const auto& c = cells[idx / nw];
    const auto& walk = corpus[idx % nw];
    outcomes[idx] = score(proposed_speed(walk.entry, walk.exit, cell_params(grid, c.w, c.tau)), walk.reference_mps);
  }
  for (std::size_t ci = 0; ci < cells.size(); ++ci) reduce(cells[ci], outcomes.data() + ci * nw, nw);
  return cells;
}

std::vector<BaselineRow> threshold_search_serial(std::span<const EvalWalk> corpus, const ThresholdRange& range,
                                                 double distance_m) {
  auto rows = baseline_rows(corpus, range);
  std::vector<Outcome> outcomes(corpus.size());
  for (auto& r : rows) {
    for (std::size_t i = 0; i < corpus.size(); ++i)
      outcomes[i] = score(baseline_speed(corpus[i].entry, corpus[i].exit, r.threshold_dbm, distance_m),
                          corpus[i].reference_mps);
    reduce(r, outcomes.data(), corpus.size());
  }
  rank_rows(rows, range.min_success_fraction);
  return rows;
}

std::vector<BaselineRow> threshold_search(std::span<const EvalWalk> corpus, const ThresholdRange& range,
                                          double distance_m) {
  auto rows = baseline_rows(corpus, range);
  const std::size_t nw = corpus.size();
  const std::size_t total = rows.size() * nw;
  std::vector<Outcome> outcomes(total);
  const auto jobs = static_cast<long long>(total);
#pragma omp parallel for schedule(dynamic, 8)
  for (long long k = 0; k < jobs; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const auto& walk = corpus[idx % nw];
    outcomes[idx] = score(baseline_speed(walk.entry, walk.exit, rows[idx / nw].threshold_dbm, distance_m),
                          walk.reference_mps);
  }
  for (std::size_t ri = 0; ri < rows.size(); ++ri) reduce(rows[ri], outcomes.data() + ri * nw, nw);
  rank_rows(rows, range.min_success_fraction);
  return rows;
}

}  // namespace gaitspeed
