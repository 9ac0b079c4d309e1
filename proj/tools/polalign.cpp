// polalign: command-line front end for sweeps, fits, single alignments,
// timing checks and the detection-rate estimate.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "polalign/compensation.hpp"
#include "polalign/errors.hpp"
#include "polalign/io.hpp"
#include "polalign/montecarlo.hpp"
#include "polalign/polarization.hpp"
#include "polalign/random.hpp"
#include "polalign/timing.hpp"
#include "polalign/tomography.hpp"

#ifndef POLALIGN_VERSION
#define POLALIGN_VERSION "0.0.0"
#endif

using namespace polalign;
using nlohmann::json;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kDeg = 180.0 / std::numbers::pi;

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write to " + path + " failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Direction> parse_directions(const std::vector<std::string>& names) {
  std::vector<Direction> out;
  for (const auto& s : names) {
    if (s == "both") {
      out.push_back(Direction::Forward);
      out.push_back(Direction::Reversed);
    } else {
      out.push_back(parse_direction(s));
    }
  }
  return out;
}

json real(double x) { return std::stod(format_real(x)); }

std::array<double, 3> stokes(const DensityMatrix& rho) {
  const auto b = rho.bloch();
  return {b[2], b[0], b[1]};
}

// State shared between a command and the manifest writer.
struct Run {
  std::vector<std::string> args;
  std::string command;
  json config = json::object();
  std::string manifest_path;
  std::string out_path;
};

struct CommonFlags {
  std::string format;
  std::string out;
  std::string manifest;
  int jobs = 1;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, CommonFlags& f, const std::string& default_format,
                const std::vector<std::string>& formats) {
  f.format = default_format;
  sub->add_option("--format", f.format, "Output format")->check(CLI::IsMember(formats))->capture_default_str();
  sub->add_option("--out", f.out, "Output path (default: stdout)");
  sub->add_option("--manifest", f.manifest, "Write a run manifest to this path");
  sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--seed", f.seed, "Master seed")->capture_default_str();
}

// simulate

struct SimulateFlags {
  CommonFlags common;
  std::vector<std::string> directions{"forward"};
  std::vector<int> n_values;
  std::vector<double> fs_values;
  std::vector<double> bg_values{0.0};
  std::string subtract = "off";
  int samples = 200;
  int restarts = 10;
};

void cmd_simulate(const SimulateFlags& f, Run& run) {
  SweepGrid grid;
  grid.directions = parse_directions(f.directions);
  grid.n_values = f.n_values;
  grid.fs_values = f.fs_values;
  grid.background_means = f.bg_values;
  if (f.subtract == "off") {
    grid.subtract = {false};
  } else if (f.subtract == "on") {
    grid.subtract = {true};
  } else {
    grid.subtract = {false, true};
  }
  CompensationOptions opts;
  opts.restarts = f.restarts;
  grid.validate();
  opts.validate();

  json dirs = json::array();
  for (Direction d : grid.directions) dirs.push_back(std::string(direction_name(d)));
  json fs = json::array();
  for (double x : grid.fs_values) fs.push_back(real(x));
  json bg = json::array();
  for (double x : grid.background_means) bg.push_back(real(x));
  run.config = {{"directions", dirs}, {"n", grid.n_values}, {"fs", fs},        {"bg", bg},
                {"subtract", f.subtract}, {"samples", f.samples}, {"seed", f.common.seed},
                {"jobs", f.common.jobs},  {"restarts", f.restarts}, {"format", f.common.format}};

  const SweepResult result = run_sweep(grid, f.samples, f.common.seed, f.common.jobs, opts);
  std::ostringstream os;
  if (f.common.format == "json") {
    write_sweep_json(os, result.cells);
  } else {
    write_sweep_csv(os, result.cells);
  }
  emit(os.str(), f.common.out);
}

// fit

struct FitFlags {
  CommonFlags common;
  std::string input;
  std::vector<std::string> directions;
};

void cmd_fit(const FitFlags& f, Run& run) {
  const std::string text = read_text(f.input);
  std::istringstream is(text);
  const auto first = text.find_first_not_of(" \t\r\n");
  const std::vector<CellRecord> cells =
      (first != std::string::npos && text[first] == '{') ? read_sweep_json(is) : read_sweep_csv(is);

  std::vector<Direction> dirs;
  if (f.directions.empty()) {
    for (Direction d : {Direction::Forward, Direction::Reversed}) {
      for (const auto& c : cells) {
        if (c.direction == d) {
          dirs.push_back(d);
          break;
        }
      }
    }
  } else {
    dirs = parse_directions(f.directions);
  }
  if (dirs.empty()) throw FitError("sweep file holds no cells");
  run.config = {{"input", f.input}, {"format", f.common.format}};

  json report = json::array();
  std::ostringstream os;
  for (Direction d : dirs) {
    const auto selected = select_fit_cells(cells, d);
    FitResult fit;
    try {
      fit = fit_power_law(selected);
    } catch (const FitError& e) {
      throw FitError(std::string(direction_name(d)) + ": " + e.what());
    }
    json used = json::array();
    for (const auto& c : selected) used.push_back({{"n", c.n}, {"fs", real(c.fs)}});
    report.push_back({{"direction", std::string(direction_name(d))},
                      {"alpha", real(fit.alpha)},
                      {"beta", real(fit.beta)},
                      {"gamma", real(fit.gamma)},
                      {"r_squared", real(fit.r_squared)},
                      {"cells_used", fit.cells_used},
                      {"cells", used}});
    os << direction_name(d) << ": alpha=" << format_real(fit.alpha) << " beta=" << format_real(fit.beta)
       << " gamma=" << format_real(fit.gamma) << " r2=" << format_real(fit.r_squared) << " cells=" << fit.cells_used
       << '\n';
    os << "  cells (n, fs):";
    for (const auto& c : selected) os << " (" << c.n << ", " << format_real(c.fs) << ")";
    os << '\n';
  }
  if (f.common.format == "json") {
    emit(json{{"fits", report}}.dump(2) + "\n", f.common.out);
  } else {
    emit(os.str(), f.common.out);
  }
}

// align

struct AlignFlags {
  CommonFlags common;
  std::string counts;
  int restarts = 10;
  bool subtract_background = false;
  double motion_penalty = 0.0;
  std::vector<double> previous_deg;
};

void cmd_align(const AlignFlags& f, Run& run) {
  const CountFile file = read_count_file(f.counts);
  CountMatrix cm = file.counts;
  if (f.subtract_background) {
    if (!file.background_mean) throw InvalidInput("--subtract-background needs metadata.background_mean");
    const double per_cell = *file.background_mean / static_cast<double>(cm.rows());
    for (std::size_t r = 0; r < cm.rows(); ++r) {
      for (std::size_t c = 0; c < cm.cols(); ++c) cm.set(r, c, std::max(0.0, cm.at(r, c) - per_cell));
    }
  }

  CompensationOptions opts;
  opts.restarts = f.restarts;
  opts.motion_penalty = f.motion_penalty;
  if (!f.previous_deg.empty()) {
    if (f.previous_deg.size() != 3) throw InvalidInput("--previous takes three angles in degrees");
    opts.previous_angles = WavePlateAngles(f.previous_deg[0] / kDeg, f.previous_deg[1] / kDeg, f.previous_deg[2] / kDeg);
  }
  opts.validate();
  run.config = {{"counts", f.counts},
                {"restarts", f.restarts},
                {"seed", f.common.seed},
                {"subtract_background", f.subtract_background},
                {"motion_penalty", f.motion_penalty},
                {"format", f.common.format}};

  const ReconstructionSet recon = reconstruct(cm);
  Rng rng(derive_seed({f.common.seed, 0x616c69676eULL}));
  const CompensationResult res = optimize(recon, bb84_states(), opts, rng);
  const auto& a = res.angles;
  const double residual = predicted_residual_qber(a, recon, bb84_states());

  json states = json::array();
  std::ostringstream os;
  os << "direction: " << direction_name(cm.direction()) << '\n';
  os << "total counts: " << format_real(cm.total()) << '\n';
  os << "reconstructed states (S1 S2 S3, purity):\n";
  for (std::size_t i = 0; i < 4; ++i) {
    const auto s = stokes(recon.states[i]);
    const char label = label_char(kBB84Labels[i]);
    os << "  " << label << ": " << format_real(s[0]) << ' ' << format_real(s[1]) << ' ' << format_real(s[2]) << ", "
       << format_real(recon.states[i].purity()) << '\n';
    states.push_back({{"label", std::string(1, label)},
                      {"stokes", {real(s[0]), real(s[1]), real(s[2])}},
                      {"purity", real(recon.states[i].purity())}});
  }
  os << "angles (deg): " << format_real(a.theta1 * kDeg) << ' ' << format_real(a.theta2 * kDeg) << ' '
     << format_real(a.theta3 * kDeg) << '\n';
  os << "predicted QBER: " << format_real(res.predicted_qber) << '\n';
  os << "predicted residual QBER: " << format_real(residual) << '\n';
  os << "cost: " << format_real(res.cost) << '\n';
  os << "evaluations: " << res.evaluations_used << '\n';
  os << "converged: " << (res.converged ? "yes" : "no") << '\n';

  if (f.common.format == "json") {
    const json j = {{"direction", std::string(direction_name(cm.direction()))},
                    {"total_counts", real(cm.total())},
                    {"states", states},
                    {"angles_deg", {real(a.theta1 * kDeg), real(a.theta2 * kDeg), real(a.theta3 * kDeg)}},
                    {"predicted_qber", real(res.predicted_qber)},
                    {"predicted_residual_qber", real(residual)},
                    {"cost", real(res.cost)},
                    {"evaluations", res.evaluations_used},
                    {"converged", res.converged}};
    emit(j.dump(2) + "\n", f.common.out);
  } else {
    emit(os.str(), f.common.out);
  }
}

// timing-check

struct TimingFlags {
  CommonFlags common;
  std::string counts;
  double confidence = 0.99;
};

void cmd_timing(const TimingFlags& f, Run& run) {
  const CountFile file = read_count_file(f.counts);
  run.config = {{"counts", f.counts}, {"confidence", real(f.confidence)}, {"format", f.common.format}};
  const AlignmentVerdict v = classify(linear_slice(file.counts), f.confidence);
  const std::string cell = std::string(1, label_char(v.input)) + "->" + label_char(v.outcome);
  if (f.common.format == "json") {
    const json j = {{"verdict", verdict_name(v.verdict)},
                    {"input", std::string(1, label_char(v.input))},
                    {"outcome", std::string(1, label_char(v.outcome))},
                    {"max_conditional_frequency", real(v.max_conditional_frequency)},
                    {"interval", {real(v.lower), real(v.upper)}},
                    {"confidence", real(v.confidence)},
                    {"total_counts", real(v.total_counts)}};
    emit(j.dump(2) + "\n", f.common.out);
    return;
  }
  std::ostringstream os;
  os << "verdict: " << verdict_name(v.verdict) << '\n';
  os << "max cell: " << cell << " frequency " << format_real(v.max_conditional_frequency) << '\n';
  os << "interval: [" << format_real(v.lower) << ", " << format_real(v.upper) << "] at confidence "
     << format_real(v.confidence) << '\n';
  os << "linear counts: " << format_real(v.total_counts) << '\n';
  emit(os.str(), f.common.out);
}

// rate

struct RateFlags {
  CommonFlags common;
  double pulse_rate = 0.0;
  double mu = 0.0;
  std::optional<double> loss_db;
  std::optional<double> eta;
  double y0 = 0.0;
  double detections = 400.0;
};

void cmd_rate(const RateFlags& f, Run& run) {
  if (f.loss_db && f.eta) throw InvalidInput("give either --loss-db or --eta, not both");
  DetectionRateParams p;
  p.pulse_rate = f.pulse_rate;
  p.mean_photon_number = f.mu;
  p.channel_transmission = f.loss_db ? transmission_from_loss_db(*f.loss_db) : f.eta.value_or(1.0);
  p.vacuum_yield = f.y0;
  if (!(f.detections > 0.0)) throw InvalidInput("--detections must be positive");
  const double rate = expected_detection_rate(p);
  run.config = {{"pulse_rate", real(p.pulse_rate)}, {"mu", real(p.mean_photon_number)},
                {"eta", real(p.channel_transmission)}, {"y0", real(p.vacuum_yield)},
                {"detections", real(f.detections)}, {"format", f.common.format}};
  const bool finite = rate > 0.0;
  const double seconds = finite ? f.detections / rate : 0.0;
  if (f.common.format == "json") {
    const json j = {{"rate_hz", real(rate)},
                    {"transmission", real(p.channel_transmission)},
                    {"detections", real(f.detections)},
                    {"acquisition_seconds", finite ? json(real(seconds)) : json(nullptr)}};
    emit(j.dump(2) + "\n", f.common.out);
    return;
  }
  std::ostringstream os;
  os << "detection rate: " << format_real(rate) << " Hz\n";
  os << "time for " << format_real(f.detections) << " detections: " << (finite ? format_real(seconds) : "inf")
     << " s\n";
  emit(os.str(), f.common.out);
}

// counts

struct CountsFlags {
  CommonFlags common;
  std::string direction = "forward";
  int n = 400;
  double fs = 1.0;
  double bg = 0.0;
  std::string channel = "haar";
  bool shuffle_timing = false;
};

void cmd_counts(const CountsFlags& f, Run& run) {
  TrialConfig cfg;
  cfg.direction = parse_direction(f.direction);
  cfg.n_detected = f.n;
  cfg.signal_fidelity = f.fs;
  cfg.background_mean = f.bg;
  cfg.seed = f.common.seed;
  cfg.validate();
  run.config = {{"direction", f.direction}, {"n", f.n},       {"fs", real(f.fs)},
                {"bg", real(f.bg)},         {"channel", f.channel}, {"shuffle_timing", f.shuffle_timing},
                {"seed", f.common.seed}};

  Rng channel_rng(derive_seed({f.common.seed, 1}));
  Rng signal_rng(derive_seed({f.common.seed, 2}));
  Rng background_rng(derive_seed({f.common.seed, 3}));
  ChannelUnitary u = ChannelUnitary::identity();
  if (f.channel == "haar") {
    u = haar_random_unitary(channel_rng);
  } else if (f.channel == "worst-case") {
    u = worst_case_unitary();
  }
  CountFile file;
  file.counts = generate_counts(u, cfg, signal_rng, background_rng, !f.shuffle_timing);
  if (f.bg > 0.0) file.background_mean = f.bg;
  emit(to_json(file), f.common.out);
}

// replay

int run_cli(std::vector<std::string> args);

std::vector<std::string> strip_option(const std::vector<std::string>& args, const std::string& name) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == name) {
      ++i;
      continue;
    }
    if (args[i].rfind(name + "=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

int cmd_replay(const std::string& manifest_path, const std::string& out) {
  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array() || m["argv"].empty()) throw SchemaError("manifest lacks argv");
  std::vector<std::string> args;
  for (const auto& a : m["argv"]) {
    if (!a.is_string()) throw SchemaError("manifest argv entries must be strings");
    args.push_back(a.get<std::string>());
  }
  if (args.front() == "replay") throw SchemaError("a manifest cannot replay another replay");
  args = strip_option(args, "--manifest");
  if (!out.empty()) {
    args = strip_option(args, "--out");
    args.push_back("--out");
    args.push_back(out);
  }
  return run_cli(args);
}

void write_manifest(const Run& run, double seconds) {
  const json m = {{"tool", "polalign"},
                  {"version", POLALIGN_VERSION},
                  {"command", run.command},
                  {"argv", run.args},
                  {"config", run.config},
                  {"output", run.out_path},
                  {"wall_clock_seconds", seconds}};
  emit(m.dump(2) + "\n", run.manifest_path);
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Polarization-frame alignment for BB84: simulation, tomography and compensation", "polalign"};
  app.set_version_flag("--version", POLALIGN_VERSION);
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* s = app.add_subcommand("simulate", "Monte Carlo sweep of residual QBER over a grid");
  add_common(s, sim.common, "csv", {"csv", "json"});
  s->add_option("--direction", sim.directions, "forward, reversed or both")->delimiter(',')->capture_default_str();
  s->add_option("--n", sim.n_values, "Detected signal photons N (comma list)")->delimiter(',')->required();
  s->add_option("--fs", sim.fs_values, "Signal fidelities F_S (comma list)")->delimiter(',')->required();
  s->add_option("--bg", sim.bg_values, "Mean background counts per detector (comma list)")
      ->delimiter(',')
      ->capture_default_str();
  s->add_option("--bg-subtract", sim.subtract, "off, on or paired")
      ->check(CLI::IsMember({"off", "on", "paired"}))
      ->capture_default_str();
  s->add_option("--samples", sim.samples, "Trials per cell")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--restarts", sim.restarts, "Optimizer restarts")->check(CLI::PositiveNumber)->capture_default_str();

  FitFlags fit;
  auto* fi = app.add_subcommand("fit", "Power-law fit of a sweep file");
  add_common(fi, fit.common, "text", {"text", "json"});
  fi->add_option("--in", fit.input, "Sweep CSV or JSON")->required();
  fi->add_option("--direction", fit.directions, "Directions to fit (default: all present)")->delimiter(',');

  AlignFlags align;
  auto* al = app.add_subcommand("align", "Reconstruct states from a count file and optimize the wave plates");
  add_common(al, align.common, "text", {"text", "json"});
  al->add_option("--counts", align.counts, "Count file")->required();
  al->add_option("--restarts", align.restarts, "Optimizer restarts")->check(CLI::PositiveNumber)->capture_default_str();
  al->add_flag("--subtract-background", align.subtract_background, "Subtract metadata.background_mean");
  al->add_option("--motion-penalty", align.motion_penalty, "Cost per radian of plate travel")->capture_default_str();
  al->add_option("--previous", align.previous_deg, "Current plate angles in degrees")->delimiter(',');

  TimingFlags timing;
  auto* tc = app.add_subcommand("timing-check", "Decide between timing and polarization-frame misalignment");
  add_common(tc, timing.common, "text", {"text", "json"});
  tc->add_option("--counts", timing.counts, "Count file")->required();
  tc->add_option("--confidence", timing.confidence, "Family-wise confidence level")->capture_default_str();

  RateFlags rate;
  auto* ra = app.add_subcommand("rate", "Expected detection rate for a weak coherent source");
  add_common(ra, rate.common, "text", {"text", "json"});
  ra->add_option("--pulse-rate", rate.pulse_rate, "Pulse repetition rate in Hz")->required();
  ra->add_option("--mu", rate.mu, "Mean photon number per pulse")->required();
  ra->add_option("--loss-db", rate.loss_db, "Channel loss in dB");
  ra->add_option("--eta", rate.eta, "Channel transmission");
  ra->add_option("--y0", rate.y0, "Vacuum yield")->capture_default_str();
  ra->add_option("--detections", rate.detections, "Detections for the acquisition-time estimate")
      ->capture_default_str();

  CountsFlags counts;
  auto* co = app.add_subcommand("counts", "Generate a synthetic count file");
  add_common(co, counts.common, "json", {"json"});
  co->add_option("--direction", counts.direction, "forward or reversed")->capture_default_str();
  co->add_option("--n", counts.n, "Signal detections")->capture_default_str();
  co->add_option("--fs", counts.fs, "Signal fidelity")->capture_default_str();
  co->add_option("--bg", counts.bg, "Mean background counts per detector")->capture_default_str();
  co->add_option("--channel", counts.channel, "identity, haar or worst-case")
      ->check(CLI::IsMember({"identity", "haar", "worst-case"}))
      ->capture_default_str();
  co->add_flag("--shuffle-timing", counts.shuffle_timing, "Tag events with unrelated inputs");

  std::string replay_manifest;
  std::string replay_out;
  auto* re = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  re->add_option("manifest", replay_manifest, "Manifest file")->required();
  re->add_option("--out", replay_out, "Override the recorded output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }

  Run run;
  run.args = args;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (re->parsed()) return cmd_replay(replay_manifest, replay_out);
    const CommonFlags* common = nullptr;
    if (s->parsed()) {
      run.command = "simulate";
      common = &sim.common;
      cmd_simulate(sim, run);
    } else if (fi->parsed()) {
      run.command = "fit";
      common = &fit.common;
      cmd_fit(fit, run);
    } else if (al->parsed()) {
      run.command = "align";
      common = &align.common;
      cmd_align(align, run);
    } else if (tc->parsed()) {
      run.command = "timing-check";
      common = &timing.common;
      cmd_timing(timing, run);
    } else if (ra->parsed()) {
      run.command = "rate";
      common = &rate.common;
      cmd_rate(rate, run);
    } else if (co->parsed()) {
      run.command = "counts";
      common = &counts.common;
      cmd_counts(counts, run);
    }
    std::string manifest = common ? common->manifest : std::string();
    if (manifest.empty() && s->parsed() && !sim.common.out.empty()) manifest = sim.common.out + ".manifest.json";
    if (!manifest.empty()) {
      run.manifest_path = manifest;
      run.out_path = common->out;
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_manifest(run, seconds);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const InsufficientData& e) {
    std::cerr << "insufficient data: " << e.what() << '\n';
    return 1;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return 1;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}
