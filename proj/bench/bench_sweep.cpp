// Serial reference vs OpenMP sweep and threshold search on a simulated corpus.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <omp.h>

#include "gaitspeed/evalkit.hpp"
#include "gaitspeed/simulator.hpp"

using namespace gaitspeed;

bool same(double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); }

bool identical(const std::vector<SweepCell>& a, const std::vector<SweepCell>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].w != b[i].w || a[i].tau != b[i].tau || a[i].successes != b[i].successes ||
        !same(a[i].mean_error_pct, b[i].mean_error_pct) || !same(a[i].mae_mps, b[i].mae_mps))
      return false;
  return true;
}

bool identical(const std::vector<BaselineRow>& a, const std::vector<BaselineRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].threshold_dbm != b[i].threshold_dbm || a[i].rank != b[i].rank || a[i].successes != b[i].successes ||
        !same(a[i].mean_error_pct, b[i].mean_error_pct) || !same(a[i].mae_mps, b[i].mae_mps))
      return false;
  return true;
}

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

int main(int argc, char** argv) {
  CorpusOptions opt;
  opt.n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 200;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 3;
  auto [manifest, walks] = build_corpus(opt);
  auto corpus = eval_walks(walks);

  SweepGrid grid;
  for (int w = 5; w <= 20; ++w) grid.w_values.push_back(w);
  grid.tau_values = {1.0, 2.0, 3.0};

  std::vector<SweepCell> a, b;
  const double ts = best_of(reps, [&] { a = parameter_sweep_serial(corpus, grid); });
  const double tp = best_of(reps, [&] { b = parameter_sweep(corpus, grid); });

  std::vector<BaselineRow> c, d;
  const double bs = best_of(reps, [&] { c = threshold_search_serial(corpus, {}, opt.distance_m); });
  const double bp = best_of(reps, [&] { d = threshold_search(corpus, {}, opt.distance_m); });

  std::printf("walks %zu  threads %d\n", corpus.size(), omp_get_max_threads());
  std::printf("%-18s %10s %10s %8s %s\n", "kernel", "serial_ms", "omp_ms", "speedup", "match");
  std::printf("%-18s %10.2f %10.2f %8.2f %s\n", "parameter_sweep", ts, tp, ts / tp, identical(a, b) ? "yes" : "NO");
  std::printf("%-18s %10.2f %10.2f %8.2f %s\n", "threshold_search", bs, bp, bs / bp, identical(c, d) ? "yes" : "NO");
  return identical(a, b) && identical(c, d) ? 0 : 1;
}
