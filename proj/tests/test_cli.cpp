#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <string>

#include "polalign/compensation.hpp"
#include "polalign/io.hpp"
#include "polalign/timing.hpp"

using namespace polalign;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::path(POLALIGN_TEST_WORKDIR) / "cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stdout captured to a file and stderr discarded.
Run run(const std::string& args) {
  static int counter = 0;
  const std::string out = path("stdout_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string("\"") + POLALIGN_BIN + "\" " + args + " > \"" + out + "\" 2> /dev/null";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("help and version") {
  CHECK(run("--help").status == 0);
  const auto v = run("--version");
  CHECK(v.status == 0);
  CHECK(v.out.find("1.0.0") != std::string::npos);
  CHECK(run("no-such-command").status == 2);
  CHECK(run("").status != 0);
}

TEST_CASE("simulate shape and determinism") {
  const std::string base = "simulate --n 400 800 --fs 1 0.95 --samples 20";
  const std::string args = base + " --seed 5";
  const auto a = run(args + " --out " + path("a.csv"));
  REQUIRE(a.status == 0);
  const auto text = slurp(path("a.csv"));
  const auto lines = lines_of(text);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == kSweepCsvHeader);
  CHECK(fs::exists(path("a.csv.manifest.json")));

  CHECK(run(args + " --jobs 3 --out " + path("b.csv")).status == 0);
  CHECK(slurp(path("b.csv")) == text);

  const auto j = run(args + " --format json --direction both");
  REQUIRE(j.status == 0);
  const auto doc = json::parse(j.out);
  CHECK(doc["cells"].size() == 8);

  CHECK(run(base + " --seed 6 --out " + path("c.csv")).status == 0);
  CHECK(slurp(path("c.csv")) != text);
}

TEST_CASE("simulate input errors") {
  CHECK(run("simulate --n 400 --fs 0.4 --samples 5").status == 2);
  CHECK(run("simulate --n 400 --fs 1.2 --samples 5").status == 2);
  CHECK(run("simulate --n -3 --fs 1 --samples 5").status == 2);
  CHECK(run("simulate --fs 1 --samples 5").status == 2);
  CHECK(run("simulate --n 400 --fs 1 --samples 5 --jobs 0").status == 2);
  CHECK(run("simulate --n 400 --fs 1 --bg -1 --samples 5").status == 2);
}

TEST_CASE("fit recovers an exact law") {
  std::vector<CellRecord> cells;
  const double alpha = 1.7, beta = -2.4, gamma = -1.05;
  for (int n : {400, 800, 1600, 3200}) {
    for (double f : {1.0, 0.95, 0.875}) {
      CellRecord c;
      c.n = n;
      c.fs = f;
      c.samples = 100;
      c.mean_qber = alpha * std::pow(2 * f - 1, beta) * std::pow(n, gamma);
      c.std_qber = 0.001;
      cells.push_back(c);
    }
  }
  {
    std::ofstream out(path("law.csv"));
    write_sweep_csv(out, cells);
  }
  const auto r = run("fit --in " + path("law.csv") + " --format json");
  REQUIRE(r.status == 0);
  const auto doc = json::parse(r.out);
  REQUIRE(doc["fits"].size() == 1);
  const auto& fit = doc["fits"][0];
  CHECK(fit["alpha"].get<double>() == doctest::Approx(alpha).epsilon(1e-6));
  CHECK(fit["beta"].get<double>() == doctest::Approx(beta).epsilon(1e-6));
  CHECK(fit["gamma"].get<double>() == doctest::Approx(gamma).epsilon(1e-6));
  CHECK(fit["r_squared"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));

  {
    std::ofstream out(path("law.json"));
    write_sweep_json(out, cells);
  }
  const auto text = run("fit --in " + path("law.json"));
  CHECK(text.status == 0);
  CHECK(text.out.find("forward") != std::string::npos);
}

TEST_CASE("fit rejects a single N") {
  std::vector<CellRecord> cells;
  for (double f : {1.0, 0.95, 0.9, 0.875, 0.8}) {
    CellRecord c;
    c.n = 400;
    c.fs = f;
    c.samples = 10;
    c.mean_qber = 0.01 / (2 * f - 1);
    cells.push_back(c);
  }
  {
    std::ofstream out(path("single.csv"));
    write_sweep_csv(out, cells);
  }
  const std::string cmd = std::string("\"") + POLALIGN_BIN + "\" fit --in " + path("single.csv") + " 2> " +
                          path("single.err") + " > /dev/null";
  const int raw = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(raw) == 1);
  CHECK(slurp(path("single.err")).find("N") != std::string::npos);
  CHECK(run("fit --in " + path("missing.csv")).status == 1);
}

TEST_CASE("align on an identity channel") {
  REQUIRE(run("counts --n 100000 --channel identity --seed 3 --out " + path("id.json")).status == 0);
  const auto r = run("align --counts " + path("id.json") + " --format json");
  REQUIRE(r.status == 0);
  const auto doc = json::parse(r.out);
  CHECK(doc["direction"] == "forward");
  CHECK(doc["total_counts"].get<double>() == 100000.0);
  CHECK(doc["predicted_qber"].get<double>() < 1e-3);
  CHECK(doc["states"].size() == 4);
  const auto deg = doc["angles_deg"].get<std::vector<double>>();
  REQUIRE(deg.size() == 3);
  const double k = std::numbers::pi / 180.0;
  const WavePlateAngles a(deg[0] * k, deg[1] * k, deg[2] * k);
  CHECK(operator_fidelity(compensation_unitary(a), ChannelUnitary::identity()) > 1 - 1e-4);

  const auto text = run("align --counts " + path("id.json"));
  CHECK(text.status == 0);
  CHECK(text.out.find("predicted QBER") != std::string::npos);
}

TEST_CASE("align on a random channel") {
  REQUIRE(run("counts --n 10000 --fs 0.98 --seed 11 --out " + path("haar.json")).status == 0);
  const auto r = run("align --counts " + path("haar.json") + " --format json");
  REQUIRE(r.status == 0);
  const auto doc = json::parse(r.out);
  CHECK(doc["predicted_residual_qber"].get<double>() < 0.005);
  CHECK(doc["converged"].get<bool>());

  REQUIRE(run("counts --direction reversed --n 10000 --seed 12 --out " + path("rev.json")).status == 0);
  const auto rev = run("align --counts " + path("rev.json") + " --format json");
  REQUIRE(rev.status == 0);
  CHECK(json::parse(rev.out)["direction"] == "reversed");
  CHECK(json::parse(rev.out)["predicted_residual_qber"].get<double>() < 0.005);
}

TEST_CASE("align is repeatable") {
  REQUIRE(run("counts --n 2000 --seed 21 --out " + path("rep.json")).status == 0);
  const auto a = run("align --counts " + path("rep.json") + " --format json --seed 4");
  const auto b = run("align --counts " + path("rep.json") + " --format json --seed 4");
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
}

TEST_CASE("align input errors") {
  {
    std::ofstream out(path("broken.json"));
    out << "{\"schema_version\": 1, \"direction\": \"forward\", \"counts\": [[1,2]]}";
  }
  CHECK(run("align --counts " + path("broken.json")).status == 2);
  {
    std::ofstream out(path("garbage.json"));
    out << "this is not json";
  }
  CHECK(run("align --counts " + path("garbage.json")).status == 2);
  {
    CountFile f;
    f.counts.set(0, 0, 2);
    f.counts.set(1, 1, 1);
    std::ofstream out(path("sparse.json"));
    out << to_json(f);
  }
  CHECK(run("align --counts " + path("sparse.json")).status == 1);
  CHECK(run("align --counts " + path("nowhere.json")).status == 1);
}

TEST_CASE("timing check verdicts") {
  REQUIRE(run("counts --n 20000 --seed 31 --shuffle-timing --out " + path("shuffled.json")).status == 0);
  auto r = run("timing-check --counts " + path("shuffled.json") + " --format json");
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)["verdict"] == "timing-misaligned");

  REQUIRE(run("counts --n 20000 --seed 32 --channel identity --out " + path("aligned.json")).status == 0);
  r = run("timing-check --counts " + path("aligned.json"));
  REQUIRE(r.status == 0);
  CHECK(r.out.find("verdict: polarization-frame-misaligned") != std::string::npos);

  REQUIRE(run("counts --n 20000 --seed 33 --channel worst-case --out " + path("worst.json")).status == 0);
  r = run("timing-check --counts " + path("worst.json") + " --format json");
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)["verdict"] == "polarization-frame-misaligned");

  {
    CountFile f;
    for (std::size_t n = 0; n < 4; ++n) {
      f.counts.set(n, n, 2);
      f.counts.set(n, n ^ 1, 1);
      f.counts.set(n, (n + 2) % 4, 1);
    }
    std::ofstream out(path("tiny.json"));
    out << to_json(f);
  }
  r = run("timing-check --counts " + path("tiny.json") + " --format json");
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)["verdict"] == "inconclusive");
  CHECK(run("timing-check --counts " + path("tiny.json") + " --confidence 1.5").status == 2);
}

TEST_CASE("rate examples") {
  auto r = run("rate --pulse-rate 1e6 --mu 0.5 --loss-db 10 --format json");
  REQUIRE(r.status == 0);
  auto doc = json::parse(r.out);
  const double expected = 1e6 * (1 - std::exp(-0.5 * 0.1));
  CHECK(doc["rate_hz"].get<double>() == doctest::Approx(expected).epsilon(1e-8));
  CHECK(doc["transmission"].get<double>() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(doc["acquisition_seconds"].get<double>() == doctest::Approx(400 / expected).epsilon(1e-8));

  r = run("rate --pulse-rate 1e6 --mu 0.5 --eta 0.1");
  CHECK(r.status == 0);
  CHECK(r.out.find("detection rate:") != std::string::npos);

  CHECK(run("rate --pulse-rate 1e6 --mu -1 --eta 0.1").status == 2);
  CHECK(run("rate --pulse-rate 1e6 --mu 0.5 --eta 0.1 --loss-db 3").status == 2);
}

TEST_CASE("replay reproduces the output") {
  const auto first = run("simulate --n 400 --fs 1 0.9 --samples 10 --seed 8 --out " + path("orig.csv") +
                         " --manifest " + path("orig.manifest.json"));
  REQUIRE(first.status == 0);
  const auto manifest = json::parse(slurp(path("orig.manifest.json")));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest.contains("argv"));
  CHECK(manifest.contains("wall_clock_seconds"));

  REQUIRE(run("replay " + path("orig.manifest.json") + " --out " + path("again.csv")).status == 0);
  CHECK(slurp(path("again.csv")) == slurp(path("orig.csv")));
  CHECK(run("replay " + path("missing.manifest.json")).status != 0);
}
