#pragma once

// Command dispatch for the `ivsel` tool. Every command reads its inputs,
// computes, and writes one output artifact (two for `simulate` in CSV
// mode) atomically, prefixed with a provenance header.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivsel/config.hpp"
#include "ivsel/error.hpp"
#include "ivsel/estimator.hpp"
#include "ivsel/identified.hpp"
#include "ivsel/io.hpp"
#include "ivsel/sim.hpp"
#include "ivsel/strata.hpp"
#include "ivsel/version.hpp"
#include "ivsel/weights.hpp"

namespace ivsel::cli {

inline constexpr std::uint64_t default_seed = 12345;

struct RunOutcome {
  int exit_code = 0;
  std::string error_record;  // JSON, empty on success
  std::vector<std::filesystem::path> outputs;
};

/// Column-oriented table of mixed numbers and strings.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
};

namespace detail {

inline std::string short_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline std::string cell_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_null()) return "nan";
  return io::format_double(v.get<double>());
}

inline nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

struct Provenance {
  std::string command;
  std::uint64_t seed = 0;
  std::string digest;
};

inline std::string render_csv(const Table& t, const Provenance& p) {
  std::string out = "# ivsel " + std::string(version) + "\n# command=" + p.command +
                    " seed=" + std::to_string(p.seed) + " config_digest=" + p.digest + "\n";
  for (std::size_t j = 0; j < t.columns.size(); ++j) out += (j ? "," : "") + t.columns[j];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + cell_text(row[j]);
    out += '\n';
  }
  return out;
}

inline std::string render_json(const Table& t, const Provenance& p) {
  nlohmann::ordered_json doc;
  doc["provenance"] = {{"tool", "ivsel"}, {"version", version}, {"command", p.command},
                       {"seed", p.seed}, {"config_digest", p.digest}};
  doc["records"] = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json rec;
    for (std::size_t j = 0; j < t.columns.size(); ++j) rec[t.columns[j]] = row[j];
    doc["records"].push_back(rec);
  }
  return doc.dump(2) + "\n";
}

inline SensitivityParams read_sensitivity(const ConfigFile& cfg) {
  SensitivityParams p{cfg.number("sensitivity", "gamma_A"), cfg.number("sensitivity", "gamma_B"),
                      cfg.number_or("sensitivity", "alpha1_A", 0.0),
                      cfg.number_or("sensitivity", "alpha1_B", 0.0)};
  p.validate();
  return p;
}

inline Stratum parse_stratum(const std::string& s) {
  for (std::size_t i = 0; i < stratum_count; ++i)
    if (ivsel::to_string(static_cast<Stratum>(i)) == s) return static_cast<Stratum>(i);
  throw ValidationError("unknown stratum '" + s + "'", "malformed_config");
}

inline StrataProportions read_strata(const ConfigFile& cfg) {
  std::array<double, stratum_count> pi{};
  for (std::size_t i = 0; i < 6; ++i)
    pi[i] = cfg.number_or("strata", ivsel::to_string(static_cast<Stratum>(i)), 0.0);
  return StrataProportions::make(pi);
}

inline CellProbabilities read_cells(const ConfigFile& cfg) {
  if (!cfg.has_section("cells")) return cell_probabilities(read_strata(cfg));
  CellProbabilities::Table t{};
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t d = 0; d < 3; ++d)
      t[z][d] = cfg.number("cells", "d_" + std::string(ivsel::to_string(static_cast<Treatment>(d))) +
                                        "_given_z_" + std::string(ivsel::to_string(static_cast<Arm>(z))));
  return CellProbabilities::make(t);
}

inline SweepGrid read_grid(const ConfigFile& cfg) {
  SweepGrid g;
  if (auto empty = cfg.get("identify", "empty")) {
    const Gammas gm = identify_gammas(read_cells(cfg), parse_stratum(*empty));
    g.gamma_A_values = {gm.gamma_A};
    g.gamma_B_values = {gm.gamma_B};
    g.fixed_gammas = true;
  } else {
    g.gamma_A_values = cfg.list("grid", "gamma_A");
    g.gamma_B_values = cfg.list("grid", "gamma_B");
  }
  g.alpha1_A_values = cfg.list("grid", "alpha1_A");
  g.alpha1_B_values = cfg.list("grid", "alpha1_B");
  g.validate();
  return g;
}

inline Table sweep_table(const std::vector<SweepRow>& rows) {
  Table t{{"gamma_A", "gamma_B", "alpha1_A", "alpha1_B", "theta_hat", "se", "ci_lo", "ci_hi", "status"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.params.gamma_A, r.params.gamma_B, r.params.alpha1_A, r.params.alpha1_B,
                      num(r.theta_hat), num(r.se), num(r.ci_lo), num(r.ci_hi), r.status});
  return t;
}

struct ScenarioSpec {
  sim::ScenarioConfig base;
  std::vector<double> thetas;
  std::vector<SensitivityParams> presumed;
};

inline ScenarioSpec read_scenario(const ConfigFile& cfg) {
  ScenarioSpec spec;
  sim::ScenarioConfig& c = spec.base;
  const double a1A = cfg.number_or("scenario", "true_alpha1_A", 0.0);
  const double a1B = cfg.number_or("scenario", "true_alpha1_B", 0.0);
  if (auto preset = cfg.get("scenario", "preset")) {
    const int id = *preset == "1" || *preset == "scenario1" ? 1
                   : *preset == "2" || *preset == "scenario2" ? 2
                                                               : 0;
    if (id == 0) throw ValidationError("unknown scenario preset '" + *preset + "'", "malformed_config");
    c = sim::scenario(id, a1A, a1B, 0.0);
  } else {
    c.name = cfg.get("scenario", "name").value_or("custom");
    c.true_alpha1_A = a1A;
    c.true_alpha1_B = a1B;
    if (cfg.has_section("strata") || cfg.has_section("cells")) {
      const CellProbabilities cells = read_cells(cfg);
      c.cell_A = cells(Arm::A, Treatment::A);
      c.cell_B = cells(Arm::B, Treatment::B);
      if (cfg.has_section("strata")) {
        const Gammas g = gammas_from_strata(read_strata(cfg));
        c.gamma_A = g.gamma_A;
        c.gamma_B = g.gamma_B;
      }
    }
    c.cell_A = cfg.number_or("scenario", "cell_A", c.cell_A);
    c.cell_B = cfg.number_or("scenario", "cell_B", c.cell_B);
  }
  c.gamma_A = cfg.number_or("scenario", "gamma_A", c.gamma_A);
  c.gamma_B = cfg.number_or("scenario", "gamma_B", c.gamma_B);
  c.base_A.mean = cfg.number_or("scenario", "mean_A", c.base_A.mean);
  c.base_A.sd = cfg.number_or("scenario", "sd", c.base_A.sd);
  c.sd_B = c.base_A.sd;
  const std::string sampling = cfg.get("scenario", "sampling").value_or("total");
  if (sampling == "total")
    c.sampling = sim::Sampling::total;
  else if (sampling == "per_arm")
    c.sampling = sim::Sampling::per_arm;
  else
    throw ValidationError("sampling must be 'total' or 'per_arm'", "malformed_config");
  c.n = static_cast<std::size_t>(cfg.number_or("scenario", "n", static_cast<double>(c.n)));
  c.n_replicates = static_cast<std::size_t>(cfg.number_or("scenario", "replicates", static_cast<double>(c.n_replicates)));
  c.level = cfg.number_or("run", "level", c.level);
  spec.thetas = cfg.get("scenario", "theta") ? cfg.list("scenario", "theta") : std::vector<double>{0.0, 0.5, 0.8};

  for (const auto& [label, value] : cfg.entries("presumed")) {
    const auto v = ConfigFile::to_list(value, "presumed", label);
    if (v.size() == 2)
      spec.presumed.push_back({c.gamma_A, c.gamma_B, v[0], v[1]});
    else if (v.size() == 4)
      spec.presumed.push_back({v[0], v[1], v[2], v[3]});
    else
      throw ValidationError("[presumed] " + label + " needs 2 or 4 numbers", "malformed_config");
  }
  if (spec.presumed.empty()) spec.presumed.push_back(c.truth());
  return spec;
}

}  // namespace detail

/// Executes one command. Never throws for domain errors: failures are
/// reported through the exit code and a JSON error record.
inline RunOutcome run(const RunConfig& rc) {
  RunOutcome outcome;
  try {
    const ConfigFile cfg = rc.config_path ? ConfigFile::load(*rc.config_path) : ConfigFile{};
    const std::uint64_t seed =
        rc.seed ? *rc.seed : static_cast<std::uint64_t>(cfg.number_or("run", "seed", static_cast<double>(default_seed)));
    const std::size_t boot =
        rc.boot ? *rc.boot
                : static_cast<std::size_t>(cfg.number_or("run", "boot", static_cast<double>(default_bootstrap_replicates)));
    const double level = cfg.number_or("run", "level", 0.05);

    std::optional<std::filesystem::path> input = rc.input;
    if (!input) {
      if (auto v = cfg.get("data", "input")) {
        std::filesystem::path p(*v);
        if (p.is_relative() && rc.config_path) p = rc.config_path->parent_path() / p;
        input = p;
      }
    }
    std::string input_text;
    if (rc.command != Command::simulate) {
      if (!input) throw ValidationError("an input file is required (--input or [data] input)", "missing_input");
      input_text = io::read_file(*input);
    }

    std::string digest_src = to_string(rc.command) + "\n" + cfg.text() + "\nseed=" + std::to_string(seed) +
                             "\nboot=" + std::to_string(boot) + "\nformat=" +
                             (rc.format == Format::csv ? "csv" : "json") +
                             "\nweights=" + (rc.weights == WeightMode::inverse ? "inverse" : "literal") +
                             "\ninput=" + io::hex64(io::fnv1a(input_text));
    const detail::Provenance prov{to_string(rc.command), seed, io::hex64(io::fnv1a(digest_src))};

    std::vector<std::pair<std::filesystem::path, std::string>> files;
    auto emit = [&](const std::filesystem::path& path, const Table& t) {
      files.emplace_back(path, rc.format == Format::csv ? detail::render_csv(t, prov) : detail::render_json(t, prov));
    };

    switch (rc.command) {
      case Command::calibrate: {
        const ArmSample s = io::parse_arm_sample(input_text);
        const SensitivityParams p = detail::read_sensitivity(cfg);
        Table t{{"arm", "gamma", "alpha1", "alpha0", "mean_weight"}, {}};
        for (Arm arm : {Arm::A, Arm::B}) {
          const auto& y = arm == Arm::A ? s.y_A : s.y_B;
          const double g = arm == Arm::A ? p.gamma_A : p.gamma_B;
          const double a1 = arm == Arm::A ? p.alpha1_A : p.alpha1_B;
          const SelectionModel m = calibrated_model(y, a1, g, arm);
          t.rows.push_back({std::string(ivsel::to_string(arm)), g, a1, m.alpha0, mean_weight(y, m)});
        }
        emit(rc.out, t);
        break;
      }
      case Command::estimate: {
        const ArmSample s = io::parse_arm_sample(input_text);
        SweepGrid g;
        const SensitivityParams p = detail::read_sensitivity(cfg);
        g.gamma_A_values = {p.gamma_A};
        g.gamma_B_values = {p.gamma_B};
        g.alpha1_A_values = {p.alpha1_A};
        g.alpha1_B_values = {p.alpha1_B};
        const auto rows = sweep(s, g, boot, seed, level, rc.jobs);
        if (rows.front().status != "ok")
          throw NumericalError("estimation failed: " + rows.front().status, rows.front().status);
        emit(rc.out, detail::sweep_table(rows));
        break;
      }
      case Command::sweep: {
        const ArmSample s = io::parse_arm_sample(input_text);
        emit(rc.out, detail::sweep_table(sweep(s, detail::read_grid(cfg), boot, seed, level, rc.jobs)));
        break;
      }
      case Command::identified: {
        const io::DatasetLoad load = io::parse_dataset(input_text);
        Table t{{"estimator", "theta_hat", "status", "weight_mode", "n_clipped", "n_selected", "n_records"}, {}};
        const std::string mode = rc.weights == WeightMode::inverse ? "inverse" : "literal";
        const auto n_rec = static_cast<std::uint64_t>(load.records());
        try {
          t.rows.push_back({"a1_moment", estimate_a1(load.data).theta_hat, "ok", "none", 0, 0, n_rec});
        } catch (const Error& e) {
          t.rows.push_back({"a1_moment", nullptr, e.kind(), "none", 0, 0, n_rec});
        }
        try {
          const A2Estimate a2 = estimate_a2(load.data, rc.weights);
          t.rows.push_back({"a2_weighted_2sls", a2.theta_hat, a2.fit.converged ? "ok" : "logit_not_converged",
                            mode, static_cast<std::uint64_t>(a2.n_clipped),
                            static_cast<std::uint64_t>(a2.n_selected), n_rec});
          t.rows.push_back({"naive_selected_wald", a2.naive_theta, "ok", "uniform", 0,
                            static_cast<std::uint64_t>(a2.n_selected), n_rec});
        } catch (const Error& e) {
          t.rows.push_back({"a2_weighted_2sls", nullptr, e.kind(), mode, 0, 0, n_rec});
        }
        emit(rc.out, t);
        break;
      }
      case Command::simulate: {
        detail::ScenarioSpec spec = detail::read_scenario(cfg);
        spec.base.seed = seed;
        spec.base.n_boot = boot;
        Table long_t{{"scenario", "theta_target", "mu", "true_gamma_A", "true_gamma_B", "true_alpha1_A",
                      "true_alpha1_B", "gamma_A", "gamma_B", "alpha1_A", "alpha1_B", "mean_bias", "sd", "mse",
                      "rejection_rate", "reject_two_sided", "reject_one_sided", "reject_percentile", "bias_ci_lo",
                      "bias_ci_hi",
                      "bias_significant", "n_failed"},
                     {}};
        Table wide{{"gamma_A", "gamma_B", "alpha1_A", "alpha1_B"}, {}};
        for (const auto& p : spec.presumed) wide.rows.push_back({p.gamma_A, p.gamma_B, p.alpha1_A, p.alpha1_B});
        std::vector<sim::MonteCarloSummary> runs;
        for (double theta : spec.thetas) {
          sim::ScenarioConfig c = spec.base;
          c.theta_target = theta;
          runs.push_back(sim::run_replications(c, spec.presumed, rc.jobs));
        }
        for (const auto& run : runs) {
          const std::string label = detail::short_number(run.config.theta_target);
          wide.columns.push_back("rate_" + label);
          for (std::size_t i = 0; i < run.rows.size(); ++i) wide.rows[i].push_back(detail::num(run.rows[i].rejection_rate));
        }
        for (const auto& run : runs) {
          const std::string label = detail::short_number(run.config.theta_target);
          for (const char* col : {"bias_", "sd_", "mse_"}) wide.columns.push_back(col + label);
          for (std::size_t i = 0; i < run.rows.size(); ++i) {
            const auto& r = run.rows[i];
            wide.rows[i].insert(wide.rows[i].end(), {r.mean_bias, r.sd, r.mse});
          }
          for (const auto& r : run.rows) {
            const auto& c = run.config;
            long_t.rows.push_back({c.name, c.theta_target, run.mu, c.gamma_A, c.gamma_B, c.true_alpha1_A,
                                   c.true_alpha1_B, r.presumed.gamma_A, r.presumed.gamma_B, r.presumed.alpha1_A,
                                   r.presumed.alpha1_B, r.mean_bias, r.sd, r.mse, detail::num(r.rejection_rate),
                                   detail::num(r.reject_two_sided), detail::num(r.reject_one_sided),
                                   detail::num(r.reject_percentile), r.bias_ci_lo,
                                   r.bias_ci_hi, r.bias_significant(), static_cast<std::uint64_t>(r.n_failed)});
          }
        }
        if (rc.format == Format::csv) {
          emit(rc.out, wide);
          auto long_path = rc.out;
          long_path.replace_filename(rc.out.stem().string() + "_long" + rc.out.extension().string());
          emit(long_path, long_t);
        } else {
          emit(rc.out, long_t);
        }
        break;
      }
    }
    for (const auto& [path, content] : files) {
      io::atomic_write(path, content);
      outcome.outputs.push_back(path);
    }
  } catch (const Error& e) {
    outcome.exit_code = static_cast<int>(e.code());
    outcome.error_record =
        nlohmann::json{{"error", {{"code", outcome.exit_code}, {"kind", e.kind()}, {"message", e.what()}}}}.dump();
  }
  return outcome;
}

}  // namespace ivsel::cli
