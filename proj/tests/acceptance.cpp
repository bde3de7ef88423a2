// Acceptance run: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "ivsel/estimator.hpp"
#include "ivsel/identified.hpp"
#include "ivsel/io.hpp"
#include "ivsel/sim.hpp"
#include "support/dgp.hpp"

using namespace ivsel;
namespace fs = std::filesystem;

namespace {

const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back((cond ? "" : "!") + what);
  }
};

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Power alongside the two-sided Wald and percentile-bootstrap rates.
std::string rates(const sim::PresumedSummary& r) {
  return fmt(r.rejection_rate) + " (two-sided " + fmt(r.reject_two_sided) + ", percentile " +
         fmt(r.reject_percentile) + ")";
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol + 1e-12; }

sim::MonteCarloSummary run(int scenario, double a1A, double a1B, double theta,
                           const std::vector<SensitivityParams>& presumed, std::size_t n_boot) {
  sim::ScenarioConfig c = sim::scenario(scenario, a1A, a1B, theta);
  c.n_replicates = 500;
  c.n_boot = n_boot;
  return sim::run_replications(c, presumed, jobs);
}

SensitivityParams with_slopes(int scenario, double a1A, double a1B) {
  const auto c = sim::scenario(scenario, 0, 0, 0);
  return {c.gamma_A, c.gamma_B, a1A, a1B};
}

// Criterion 1: empirical size and power on the correctly specified diagonal.
Check table1() {
  struct Row {
    int scenario;
    double a1A, a1B, power;
  };
  const Row rows[] = {{1, 1, 2, 0.91}, {1, 1, 1, 0.91}, {1, 0, 0, 0.92},
                      {2, 1, 2, 0.86}, {2, 1, 1, 0.85}, {2, 0, 0, 0.94}};
  Check c;
  for (const auto& r : rows) {
    const SensitivityParams p = with_slopes(r.scenario, r.a1A, r.a1B);
    const double size = run(r.scenario, r.a1A, r.a1B, 0.0, {p}, 500).rows[0].rejection_rate;
    const auto power = run(r.scenario, r.a1A, r.a1B, 0.8, {p}, 500).rows[0];
    const std::string tag = "S" + std::to_string(r.scenario) + " (" + fmt(r.a1A, 0) + "," + fmt(r.a1B, 0) + ")";
    c.expect(within(size, 0.05, 0.03), tag + " size " + fmt(size));
    c.expect(within(power.rejection_rate, r.power, 0.04), tag + " power " + rates(power) + " vs " + fmt(r.power, 2));
  }
  return c;
}

// Criterion 2: bias and spread at theta = 0.8 when the shares are known.
Check table2() {
  struct Row {
    double pA, pB;
    double bias[2];
    double sd[2];
  };
  struct Block {
    double tA, tB;
    std::vector<Row> rows;
  };
  const Block blocks[] = {
      {1, 2,
       {{1, 2, {-0.01, 0.01}, {0.28, 0.30}},
        {1, 1, {-0.22, -0.38}, {}},
        {0, 2, {1.38, 0.81}, {}},
        {1, 0, {-1.18, -2.17}, {}},
        {0, 0, {0.21, -1.34}, {}}}},
      {1, 1,
       {{1, 1, {0.00, -0.01}, {0.28, 0.30}},
        {1, 2, {0.19, 0.39}, {}},
        {0, 2, {1.58, 1.17}, {}},
        {1, 0, {-0.98, -1.77}, {}},
        {0, 0, {0.41, -0.95}, {}}}},
  };
  Check c;
  for (int s : {1, 2})
    for (const auto& b : blocks) {
      std::vector<SensitivityParams> presumed;
      for (const auto& r : b.rows) presumed.push_back(with_slopes(s, r.pA, r.pB));
      const auto sum = run(s, b.tA, b.tB, 0.8, presumed, 0);
      for (std::size_t i = 0; i < b.rows.size(); ++i) {
        const Row& r = b.rows[i];
        const auto& got = sum.rows[i];
        const std::string tag = "S" + std::to_string(s) + " (" + fmt(b.tA, 0) + "," + fmt(b.tB, 0) + ")->(" +
                                fmt(r.pA, 0) + "," + fmt(r.pB, 0) + ")";
        if (r.pA == b.tA && r.pB == b.tB) {
          c.expect(std::abs(got.mean_bias) <= 0.04, tag + " bias " + fmt(got.mean_bias));
          c.expect(within(got.sd, r.sd[s - 1], 0.03), tag + " sd " + fmt(got.sd) + " vs " + fmt(r.sd[s - 1], 2));
        } else {
          const double want = r.bias[s - 1];
          c.expect(within(got.mean_bias, want, 0.10) && (want == 0.0 || got.mean_bias * want > 0.0),
                   tag + " bias " + fmt(got.mean_bias) + " vs " + fmt(want, 2));
        }
      }
    }
  return c;
}

// Criterion 3: unknown-share spot rows at theta = 0.8, true slopes (1, 2).
Check table5() {
  Check c;
  const auto s1 = run(1, 1, 2, 0.8, {{0.3, 0.6, 0, 0}}, 0).rows[0];
  c.expect(within(s1.mean_bias, 0.23, 0.10), "S1 (0.3,0.6,0,0) bias " + fmt(s1.mean_bias) + " vs 0.23");
  c.expect(within(s1.mse, 0.11, 0.05), "S1 (0.3,0.6,0,0) mse " + fmt(s1.mse) + " vs 0.11");
  const auto s2 = run(2, 1, 2, 0.8, {{0.2, 0.8, 1, 0}}, 0).rows[0];
  c.expect(within(s2.mean_bias, -3.42, 0.15), "S2 (0.2,0.8,1,0) bias " + fmt(s2.mean_bias) + " vs -3.42");
  return c;
}

// Criterion 4: unknown-share power spot rows, true slopes (1, 2).
Check table4() {
  Check c;
  const auto p1 = run(1, 1, 2, 0.5, {{0.3, 0.6, 0, 2}}, 500).rows[0];
  c.expect(within(p1.rejection_rate, 0.00, 0.02), "S1 (0.3,0.6,0,2) theta 0.5 power " + rates(p1) + " vs 0.00");
  const auto p2 = run(2, 1, 2, 0.8, {{0.5, 0.5, 0, 2}}, 500).rows[0];
  c.expect(within(p2.rejection_rate, 0.75, 0.06), "S2 (0.5,0.5,0,2) theta 0.8 power " + rates(p2) + " vs 0.75");
  return c;
}

// Criterion 5: calibration hits the target share and complier densities
// integrate to one.
Check calibration() {
  Check c;
  Engine eng = make_engine(derive_seed(5, {1}));
  std::uniform_real_distribution<double> slope(-3.0, 3.0), share(0.02, 0.98), loc(-5.0, 5.0), scale(0.3, 4.0);
  std::uniform_int_distribution<int> kind(0, 2), size(5, 400);
  double worst_weight = 0.0, worst_norm = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double a1 = slope(eng), g = share(eng), m = loc(eng), s = scale(eng);
    std::vector<double> y(static_cast<std::size_t>(size(eng)));
    const int k = kind(eng);
    std::normal_distribution<double> nd(m, s);
    std::uniform_real_distribution<double> ud(m - s, m + s);
    std::exponential_distribution<double> ed(1.0 / s);
    for (double& v : y) v = k == 0 ? nd(eng) : k == 1 ? ud(eng) : m + ed(eng);
    const SelectionModel model{calibrate_intercept(y, a1, g), a1, Arm::A};
    worst_weight = std::max(worst_weight, std::abs(mean_weight(y, model) - g));

    const NormalDensity base{m, s};
    const SelectionModel dm{calibrate_intercept(base, a1, g), a1, Arm::A};
    // Trapezoid rule on a fine grid, independent of the library's quadrature.
    const int steps = 40000;
    const double lo = m - 12 * s, hi = m + 12 * s, h = (hi - lo) / steps;
    double area = 0.0;
    for (int j = 0; j <= steps; ++j) {
      const double f = complier_density(lo + j * h, base, dm, g);
      area += (j == 0 || j == steps ? 0.5 : 1.0) * f;
    }
    worst_norm = std::max(worst_norm, std::abs(area * h - 1.0));
  }
  c.expect(worst_weight <= 1e-10, "max |mean weight - share| " + sci(worst_weight));
  c.expect(worst_norm <= 1e-6, "max |density mass - 1| " + sci(worst_norm));
  return c;
}

// Criterion 6: quadrature complier means against rejection sampling.
Check rejection_oracle() {
  Check c;
  const NormalDensity base{2.5, 2.0};
  int miss = 0;
  double worst = 0.0;
  std::uint64_t cell = 0;
  for (double a1 : {-2.0, -1.0, 0.5, 1.0, 2.0})
    for (double g : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const SelectionModel model{calibrate_intercept(base, a1, g), a1, Arm::A};
      const auto rs = sim::rejection_sample_proposals(base, model, 1000000, derive_seed(6, {++cell}));
      double sum = 0.0, sq = 0.0;
      for (double v : rs.draws) sum += v;
      const double n = static_cast<double>(rs.draws.size()), m = sum / n;
      for (double v : rs.draws) sq += (v - m) * (v - m);
      const double se = std::sqrt(sq / (n - 1) / n);
      const double z = std::abs(sim::true_complier_mean(base, a1, g) - m) / se;
      worst = std::max(worst, z);
      if (z > 3.0) ++miss;
    }
  c.expect(miss == 0, std::to_string(miss) + " of 25 cells beyond 3 SE, worst " + fmt(worst, 2) + " SE");
  return c;
}

// Criterion 7: flat slopes reduce to the arm-mean difference exactly.
Check flat_reduction() {
  Check c;
  Engine eng = make_engine(derive_seed(7, {1}));
  std::uniform_int_distribution<int> size(1, 300);
  std::uniform_real_distribution<double> share(0.05, 1.0);
  std::normal_distribution<double> nd(0.0, 3.0);
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    ArmSample s;
    s.y_A.resize(static_cast<std::size_t>(size(eng)));
    s.y_B.resize(static_cast<std::size_t>(size(eng)));
    for (double& v : s.y_A) v = nd(eng) + 1.0;
    for (double& v : s.y_B) v = nd(eng);
    double sa = 0.0, sb = 0.0;
    for (double v : s.y_A) sa += v;
    for (double v : s.y_B) sb += v;
    const double diff = sa / s.y_A.size() - sb / s.y_B.size();
    if (estimate_theta(s, {share(eng), share(eng), 0.0, 0.0}) != diff) ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " of 100 samples differ from the mean difference");
  return c;
}

struct McStats {
  double bias = 0.0, se = 0.0;
};

McStats mc(const std::vector<double>& est, double truth) {
  const double n = static_cast<double>(est.size());
  double m = 0.0;
  for (double v : est) m += v;
  m /= n;
  double sq = 0.0;
  for (double v : est) sq += (v - m) * (v - m);
  return {m - truth, std::sqrt(sq / (n - 1) / n)};
}

// Criterion 8: identified-regime estimators.
Check identified() {
  Check c;
  const oracle::NoInstrumentSelectionDgp d1;
  std::vector<double> a1(500);
  parallel_for(a1.size(), jobs, [&](std::size_t r) {
    a1[r] = estimate_a1(d1.draw(2000, derive_seed(8, {1, r}))).theta_hat;
  });
  const McStats s1 = mc(a1, d1.effect);
  c.expect(std::abs(s1.bias) <= 2 * s1.se, "A.1 bias " + fmt(s1.bias, 4) + " (MC SE " + fmt(s1.se, 4) + ")");

  const oracle::CovariateSelectionDgp d2;
  std::vector<double> a2(500), naive(500);
  parallel_for(a2.size(), jobs, [&](std::size_t r) {
    const auto e = estimate_a2(d2.draw(4000, derive_seed(8, {2, r})));
    a2[r] = e.theta_hat;
    naive[r] = e.naive_theta;
  });
  const McStats s2 = mc(a2, d2.effect), sn = mc(naive, d2.effect);
  c.expect(std::abs(s2.bias) <= 2 * s2.se, "A.2 weighted bias " + fmt(s2.bias, 4) + " (MC SE " + fmt(s2.se, 4) + ")");
  c.expect(std::abs(sn.bias) > 4 * sn.se, "naive bias " + fmt(sn.bias, 4) + " (MC SE " + fmt(sn.se, 4) + ")");
  return c;
}

// Criterion 9: byte-identical CLI outputs across runs and thread counts.
Check determinism() {
  Check c;
  const fs::path dir = fs::temp_directory_path() / "ivsel_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) { std::ofstream(dir / name) << text; };

  const auto cfg = sim::scenario(1, 1, 2, 0.8);
  put("arms.csv", io::arm_sample_csv(sim::draw_observed(cfg, sim::solve_mu(cfg), 0)));
  put("data.csv", io::dataset_csv(oracle::CovariateSelectionDgp{}.draw(3000, 9)));
  put("estimate.ini", "[sensitivity]\ngamma_A = 0.4286\ngamma_B = 0.6\nalpha1_A = 1\nalpha1_B = 2\n");
  put("sweep.ini", "[grid]\ngamma_A = 0.3, 0.5\ngamma_B = 0.6\nalpha1_A = 0, 1, 2\nalpha1_B = 0, 2\n");
  put("simulate.ini", "[scenario]\npreset = 2\ntrue_alpha1_A = 1\ntrue_alpha1_B = 2\ntheta = 0, 0.8\n"
                      "replicates = 40\n[presumed]\ncorrect = 1, 2\nflat = 0, 0\n");

  struct Cmd {
    std::string command, config, input, format;
  };
  const Cmd cmds[] = {{"calibrate", "estimate.ini", "arms.csv", "csv"},
                      {"estimate", "estimate.ini", "arms.csv", "json"},
                      {"sweep", "sweep.ini", "arms.csv", "csv"},
                      {"simulate", "simulate.ini", "", "csv"},
                      {"identified", "", "data.csv", "json"}};
  for (const auto& cmd : cmds) {
    std::vector<std::string> outs;
    for (const char* jobs_flag : {"1", "1", "4"}) {
      const std::string out = (dir / (cmd.command + "_" + std::to_string(outs.size()) + "." + cmd.format)).string();
      std::string line = std::string(IVSEL_BINARY) + " " + cmd.command + " --seed 99 --boot 100 --format " +
                         cmd.format + " --jobs " + jobs_flag + " --out " + out;
      if (!cmd.config.empty()) line += " --config " + (dir / cmd.config).string();
      if (!cmd.input.empty()) line += " --input " + (dir / cmd.input).string();
      const int raw = std::system((line + " >/dev/null 2>&1").c_str());
      if (!WIFEXITED(raw) || WEXITSTATUS(raw) != 0) {
        c.expect(false, cmd.command + " exited with failure");
        break;
      }
      std::string text = io::read_file(out);
      if (cmd.command == "simulate") text += io::read_file(dir / (cmd.command + "_" + std::to_string(outs.size()) + "_long.csv"));
      outs.push_back(text);
    }
    if (outs.size() == 3)
      c.expect(outs[0] == outs[1] && outs[0] == outs[2], cmd.command + (outs[0] == outs[1] && outs[0] == outs[2] ? " identical" : " differs"));
  }
  fs::remove_all(dir);
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Check()> fn;
  };
  const Criterion criteria[] = {
      {1, "size and power, correctly specified slopes", table1},
      {2, "bias and sd with known shares", table2},
      {3, "bias and mse with presumed shares", table5},
      {4, "power with presumed shares", table4},
      {5, "calibration and density normalization", calibration},
      {6, "rejection sampling agrees with quadrature", rejection_oracle},
      {7, "flat slopes give the mean difference", flat_reduction},
      {8, "identified-regime estimators", identified},
      {9, "deterministic CLI outputs", determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = cr.fn();
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("criterion %d: %s  %s [%s] (%.1fs)\n", cr.id, c.ok ? "PASS" : "FAIL", cr.name, detail.c_str(), secs);
    std::fflush(stdout);
    if (!c.ok) ++failed;
  }
  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
