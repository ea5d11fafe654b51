// gaitspeed: service, reader emulator and offline evaluation.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gaitspeed/config.hpp"
#include "gaitspeed/evalkit.hpp"
#include "gaitspeed/gateway.hpp"
#include "gaitspeed/replay.hpp"
#include "gaitspeed/simulator.hpp"
#include "gaitspeed/trial_log.hpp"

using namespace gaitspeed;
namespace fs = std::filesystem;

namespace {

// "5..20", "5..20:5" or "1,2,3".
std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  if (auto dots = s.find(".."); dots != std::string::npos) {
    double lo = std::stod(s.substr(0, dots));
    std::string rest = s.substr(dots + 2);
    double step = 1.0;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
      step = std::stod(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    double hi = std::stod(rest);
    if (!(step > 0) || hi < lo) throw CLI::ValidationError("range", "bad range '" + s + "'");
    for (double v = lo; v <= hi + 1e-9; v += step) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw CLI::ValidationError("list", "empty list");
  return out;
}

// Whitespace, comma or tab separated numeric columns; lines starting with a
// letter or '#' are skipped.
std::vector<std::vector<double>> read_columns(const fs::path& path, std::size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (char& c : line)
      if (c == ',' || c == '\t') c = ' ';
    auto first = line.find_first_not_of(' ');
    if (first == std::string::npos || line[first] == '#' || std::isalpha(static_cast<unsigned char>(line[first])))
      continue;
    std::stringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.size() < min_cols) throw std::runtime_error(path.string() + ": expected " + std::to_string(min_cols) + " columns: " + line);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void add_profile_options(CLI::App* cmd, WalkProfile& p) {
  cmd->add_option("--lateral", p.lateral_offset_m, "Distance from the antenna wall (m)");
  cmd->add_option("--start-x", p.start_x_m, "Start position before the entry antenna (m)");
  cmd->add_option("--rate", p.sample_rate_hz, "Reads per second per antenna");
  cmd->add_option("--noise", p.noise_sigma_dbm, "RSSI noise sigma (dBm)");
  cmd->add_option("--noise-corr", p.noise_corr_s, "Noise correlation time (s), 0 = white");
  cmd->add_option("--rssi-step", p.rssi_step_dbm, "Reader RSSI resolution (dB), 0 = continuous");
  cmd->add_option("--beamwidth", p.beamwidth_deg, "Antenna half-power beamwidth (deg)");
  cmd->add_option("--floor", p.floor_dbm, "Detectability floor (dBm)");
  cmd->add_option("--tag-gain", p.tag_gain_db, "Tag gain offset (dB)");
}

int cmd_serve(const fs::path& config_path, std::optional<unsigned short> port, std::optional<std::string> host,
              std::optional<fs::path> data_dir, int threads) {
  ServiceConfig cfg;
  if (fs::exists(config_path)) cfg = load_config(config_path);
  else spdlog::info("{} not found, starting with defaults", config_path.string());
  if (port) cfg.server.port = *port;
  if (host) cfg.server.host = *host;
  if (data_dir) cfg.server.data_dir = *data_dir;

  // Block termination signals before any thread starts; main waits for them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Engine engine(engine_options(cfg));
  for (const auto& [label, epc] : cfg.tags) engine.register_tag(label, epc);
  TrialLog log(cfg.server.data_dir / "trials.jsonl");
  Gateway gateway(engine, log, cfg, config_path);
  gateway.start(threads);
  std::cout << "listening on " << cfg.server.host << ':' << gateway.port() << std::endl;

  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}, shutting down", sig);
  gateway.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-antenna RFID gait-speed service and tools"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP/push service");
  fs::path config_path = "gaitspeed.json";
  std::optional<unsigned short> port;
  std::optional<std::string> host;
  std::optional<fs::path> data_dir;
  int threads = 2;
  serve->add_option("-c,--config", config_path, "Config file (created on first change)");
  serve->add_option("-p,--port", port, "Listen port (0 = ephemeral)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--data-dir", data_dir, "Directory for the trial log");
  serve->add_option("--threads", threads, "I/O threads")->check(CLI::PositiveNumber);

  // gen-walk
  auto* gen_walk = app.add_subcommand("gen-walk", "Simulate one walk into a capture file");
  WalkProfile walk_profile;
  double walk_distance = 4.0;
  std::string walk_epc = simulated_epc(0);
  std::vector<std::string> false_peaks;
  fs::path walk_out;
  gen_walk->add_option("--speed", walk_profile.speed_mps, "Walking speed (m/s)")->check(CLI::Range(0.2, 3.0));
  gen_walk->add_option("--seed", walk_profile.seed, "Noise seed");
  gen_walk->add_option("--false-peak", false_peaks, "Pre-walk entry excursion TIME,DURATION,PEAK_DBM (repeatable)");
  gen_walk->add_option("--distance", walk_distance, "Antenna separation (m)");
  gen_walk->add_option("--epc", walk_epc, "Tag EPC");
  gen_walk->add_option("-o,--out", walk_out, "Capture file")->required();
  add_profile_options(gen_walk, walk_profile);

  // gen-corpus
  auto* gen_corpus = app.add_subcommand("gen-corpus", "Simulate a labelled corpus of walks");
  CorpusOptions corpus_opt;
  fs::path corpus_out;
  gen_corpus->add_option("-n,--count", corpus_opt.n, "Number of walks")->check(CLI::PositiveNumber);
  gen_corpus->add_option("--speed-min", corpus_opt.speed_min_mps);
  gen_corpus->add_option("--speed-max", corpus_opt.speed_max_mps);
  gen_corpus->add_option("--seed", corpus_opt.seed);
  gen_corpus->add_option("--distance", corpus_opt.distance_m);
  gen_corpus->add_option("--max-false-peaks", corpus_opt.max_false_peaks);
  gen_corpus->add_option("--failure-fraction", corpus_opt.failure_fraction, "Walks the entry antenna never reads");
  gen_corpus->add_option("--running-fraction", corpus_opt.running_fraction, "Walks at running speed");
  gen_corpus->add_flag("!--fixed-geometry", corpus_opt.vary_geometry, "Same lateral offset and tag gain for every walk");
  gen_corpus->add_option("-o,--out", corpus_out, "Output directory")->required();
  add_profile_options(gen_corpus, corpus_opt.base);

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "POST a capture to a running service");
  fs::path replay_in;
  ReplayOptions replay_opt;
  std::optional<std::string> endpoint;
  double window_ms = 100.0;
  replay_cmd->add_option("capture", replay_in)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("-e,--endpoint", endpoint, "Service base URL (default $GAITSPEED_ENDPOINT or http://127.0.0.1:8080)");
  replay_cmd->add_option("--time-scale", replay_opt.time_scale, "1 = real time, 0 = as fast as possible");
  replay_cmd->add_option("--window-ms", window_ms, "Batch window (ms)");
  replay_cmd->add_option("--retries", replay_opt.retries);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Window/threshold sweep over a corpus");
  fs::path sweep_corpus, sweep_out;
  std::string w_list = "5..20", tau_list = "1,2,3";
  sweep->add_option("--corpus", sweep_corpus)->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--w", w_list, "Window sizes, e.g. 5..20 or 8,14");
  sweep->add_option("--tau", tau_list, "Drop thresholds (dB)");
  sweep->add_option("-o,--out", sweep_out, "Table file (tab separated)");

  // baseline-search
  auto* base = app.add_subcommand("baseline-search", "Fixed-threshold baseline over a corpus");
  fs::path base_corpus, base_out;
  ThresholdRange range;
  DetectionParams compare{};
  base->add_option("--corpus", base_corpus)->required()->check(CLI::ExistingDirectory);
  base->add_option("--low", range.low_dbm);
  base->add_option("--high", range.high_dbm);
  base->add_option("--step", range.step_dbm);
  base->add_option("--min-success", range.min_success_fraction, "Success fraction needed to rank by MAE");
  base->add_option("--w", compare.w1, "Window for the proposed-method comparison line");
  base->add_option("--tau", compare.tau1, "Threshold for the proposed-method comparison line");
  base->add_option("-o,--out", base_out);

  // agree
  auto* agree = app.add_subcommand("agree", "MAE and Bland-Altman agreement");
  fs::path pairs_in, agree_corpus, agree_out;
  DetectionParams agree_params{};
  auto* pairs_opt = agree->add_option("--pairs", pairs_in, "Columns: v_test v_ref")->check(CLI::ExistingFile);
  auto* corpus_src = agree->add_option("--corpus", agree_corpus, "System output vs ground truth")->check(CLI::ExistingDirectory);
  pairs_opt->excludes(corpus_src);
  agree->add_option("--w", agree_params.w1);
  agree->add_option("--tau", agree_params.tau1);
  agree->add_option("-o,--out", agree_out, "Plot points (mean, diff)");

  // summary
  auto* summary = app.add_subcommand("summary", "Outcome counts from a trial log");
  fs::path summary_log, exclusions_in;
  summary->add_option("log", summary_log)->required();
  summary->add_option("--exclusions", exclusions_in, "Operator exclusion sidecar")->check(CLI::ExistingFile);

  // fit
  auto* fit = app.add_subcommand("fit", "Linear regression with confidence band");
  fs::path fit_in, fit_out;
  double confidence = 0.95;
  fit->add_option("points", fit_in, "Columns: x y")->required()->check(CLI::ExistingFile);
  fit->add_option("--confidence", confidence);
  fit->add_option("-o,--out", fit_out, "Band file");
  bool keep_all = false;
  fit->add_flag("--keep-all", keep_all, "Keep speeds outside the clinical range");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*serve) return cmd_serve(config_path, port, host, data_dir, threads);

    if (*gen_walk) {
      for (const auto& fp : false_peaks) {
        auto v = parse_list(fp);
        if (v.size() != 3) throw std::invalid_argument("--false-peak needs TIME,DURATION,PEAK_DBM");
        walk_profile.false_peaks.push_back({v[0], v[1], v[2]});
      }
      DetectionParams p;
      p.distance_m = walk_distance;
      Walk w = generate_walk(walk_profile, p);
      Capture c{CaptureHeader{w.truth, walk_profile, walk_distance, walk_epc}, walk_reads(w, walk_epc)};
      write_capture(walk_out, c);
      std::cout << "entry " << w.entry.size() << " exit " << w.exit.size() << " samples; speed "
                << w.truth.true_speed_mps << " m/s\n";
      return w.sparse_entry ? 3 : 0;
    }

    if (*gen_corpus) {
      auto m = generate_corpus(corpus_opt, corpus_out);
      std::cout << m.walks.size() << " walks written to " << corpus_out.string() << '\n';
      return 0;
    }

    if (*replay_cmd) {
      if (endpoint) replay_opt.endpoint = *endpoint;
      else if (const char* env = std::getenv("GAITSPEED_ENDPOINT")) replay_opt.endpoint = env;
      replay_opt.batch_window_us = static_cast<std::int64_t>(window_ms * 1000.0);
      auto c = read_capture(replay_in);
      auto r = replay(c.reads, replay_opt);
      std::cout << "sent " << r.batches_sent << "/" << r.batches_total << " batches, " << r.reads_sent
                << " reads\n";
      if (r.aborted) {
        std::cerr << "replay aborted: " << r.error << '\n';
        return 1;
      }
      return 0;
    }

    if (*sweep) {
      auto walks = eval_walks(load_corpus(sweep_corpus));
      SweepGrid g;
      for (double w : parse_list(w_list)) g.w_values.push_back(static_cast<int>(w));
      g.tau_values = parse_list(tau_list);
      g.base.distance_m = read_manifest(sweep_corpus).distance_m;
      auto cells = parameter_sweep(walks, g);
      write_sweep_table(std::cout, cells);
      if (!sweep_out.empty()) {
        auto out = open_out(sweep_out);
        write_sweep_table(out, cells);
      }
      return 0;
    }

    if (*base) {
      auto walks = eval_walks(load_corpus(base_corpus));
      const double distance = read_manifest(base_corpus).distance_m;
      auto rows = threshold_search(walks, range, distance);
      write_baseline_table(std::cout, rows);
      if (!base_out.empty()) {
        auto out = open_out(base_out);
        write_baseline_table(out, rows);
      }
      compare.w2 = compare.w1;
      compare.tau2 = compare.tau1;
      compare.distance_m = distance;
      SweepGrid g{{compare.w1}, {compare.tau1}, compare};
      auto cell = parameter_sweep(walks, g).front();
      std::cout << "# proposed (w=" << compare.w1 << ", tau=" << compare.tau1 << "): mae_mps " << cell.mae_mps
                << " successes " << cell.successes << "/" << cell.n << '\n';
      return 0;
    }

    if (*agree) {
      std::vector<PairedMeasurement> pairs;
      if (!pairs_in.empty()) {
        for (auto& row : read_columns(pairs_in, 2)) pairs.push_back({row[0], row[1], std::nullopt});
      } else if (!agree_corpus.empty()) {
        agree_params.w2 = agree_params.w1;
        agree_params.tau2 = agree_params.tau1;
        agree_params.distance_m = read_manifest(agree_corpus).distance_m;
        for (const auto& w : load_corpus(agree_corpus))
          if (auto v = proposed_speed(w.entry, w.exit, agree_params))
            pairs.push_back({*v, w.meta.truth.true_speed_mps, w.meta.file});
      } else {
        throw std::invalid_argument("agree needs --pairs or --corpus");
      }
      auto r = bland_altman(pairs);
      std::printf("n\t%zu\nmae_mps\t%.4f\nmean_error_pct\t%.3f\nbias_mps\t%.4f\nsd_mps\t%.4f\nloa_mps\t%.4f\t%.4f\n",
                  r.n, r.mae_mps, r.mean_error_pct, r.bias_mps, r.sd_mps, r.loa_low_mps, r.loa_high_mps);
      std::printf("# clinical reference: mae %.3f bias %.3f loa [%.3f, %.3f]\n", clinical_reference::kMaeMps,
                  clinical_reference::kBiasMps, clinical_reference::kLoaLowMps, clinical_reference::kLoaHighMps);
      if (!agree_out.empty()) {
        auto out = open_out(agree_out);
        write_agreement_points(out, r.points);
      }
      return 0;
    }

    if (*summary) {
      if (!fs::exists(summary_log)) throw std::runtime_error("cannot read " + summary_log.string());
      auto loaded = read_trial_log(summary_log);
      std::vector<Exclusion> ex;
      if (!exclusions_in.empty()) ex = read_exclusions(exclusions_in);
      auto s = success_summary(loaded.trials, ex);
      write_summary_table(std::cout, s);
      if (s.empty()) std::cout << "# n=0\n";
      if (loaded.skipped_lines) std::cout << "# skipped " << loaded.skipped_lines << " unreadable lines\n";
      return 0;
    }

    if (*fit) {
      std::vector<std::pair<double, double>> pts;
      for (auto& row : read_columns(fit_in, 2)) pts.emplace_back(row[0], row[1]);
      const std::size_t removed = keep_all ? 0 : drop_nonclinical(pts);
      auto f = linear_fit(pts, confidence);
      std::printf("removed\t%zu\n", removed);
      std::printf("n\t%zu\nslope\t%.6g\t[%.6g, %.6g]\nintercept\t%.6g\nr_squared\t%.4f\n", f.n, f.slope,
                  f.slope_ci_low, f.slope_ci_high, f.intercept, f.r_squared);
      if (!fit_out.empty()) {
        auto out = open_out(fit_out);
        write_fit_band(out, f);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
