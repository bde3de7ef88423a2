#pragma once

// Run configuration: an INI-style key/value file with sections, plus
// command-line overrides.
//
//   [run]         seed, boot, level
//   [data]        input
//   [sensitivity] gamma_A, gamma_B, alpha1_A, alpha1_B
//   [grid]        gamma_A, gamma_B, alpha1_A, alpha1_B   (comma lists)
//   [identify]    empty = S3 | S5 | S6   (grid gammas from [cells] or [strata])
//   [cells]       d_A_given_z_A, d_B_given_z_A, d_C_given_z_A, d_A_given_z_B, ...
//   [strata]      S1 .. S6
//   [scenario]    preset, gamma_A, gamma_B, cell_A, cell_B, true_alpha1_A,
//                 true_alpha1_B, theta, sampling, n, replicates
//   [presumed]    <label> = alpha1_A, alpha1_B  |  gamma_A, gamma_B, alpha1_A, alpha1_B

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ivsel/error.hpp"
#include "ivsel/identified.hpp"
#include "ivsel/io.hpp"

namespace ivsel::cli {

enum class Command { calibrate, estimate, sweep, simulate, identified };
enum class Format { csv, json };

inline Command parse_command(const std::string& s) {
  if (s == "calibrate") return Command::calibrate;
  if (s == "estimate") return Command::estimate;
  if (s == "sweep") return Command::sweep;
  if (s == "simulate") return Command::simulate;
  if (s == "identified") return Command::identified;
  throw ValidationError("unknown command '" + s + "'", "unknown_command");
}

inline std::string to_string(Command c) {
  switch (c) {
    case Command::calibrate: return "calibrate";
    case Command::estimate: return "estimate";
    case Command::sweep: return "sweep";
    case Command::simulate: return "simulate";
    default: return "identified";
  }
}

struct RunConfig {
  Command command = Command::estimate;
  std::optional<std::filesystem::path> config_path;
  std::optional<std::filesystem::path> input;
  std::filesystem::path out;
  Format format = Format::csv;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> boot;
  WeightMode weights = WeightMode::inverse;
  unsigned jobs = 1;
};

/// Parsed key/value file; empty when no config was given.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(const std::string& text) {
    ConfigFile c;
    c.text_ = text;
    std::istringstream in(text);
    try {
      boost::property_tree::read_ini(in, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ValidationError("config: " + e.message() + " at line " + std::to_string(e.line()),
                            "malformed_config");
    }
    return c;
  }

  static ConfigFile load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

  const std::string& text() const { return text_; }

  bool has_section(const std::string& section) const { return tree_.get_child_optional(section).has_value(); }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
  }

  std::string require(const std::string& section, const std::string& key) const {
    auto v = get(section, key);
    if (!v) throw ValidationError("config is missing [" + section + "] " + key, "missing_key");
    return *v;
  }

  double number(const std::string& section, const std::string& key) const {
    return to_number(require(section, key), section, key);
  }

  double number_or(const std::string& section, const std::string& key, double fallback) const {
    auto v = get(section, key);
    return v ? to_number(*v, section, key) : fallback;
  }

  std::vector<double> list(const std::string& section, const std::string& key) const {
    return to_list(require(section, key), section, key);
  }

  /// Keys of a section in file order.
  std::vector<std::pair<std::string, std::string>> entries(const std::string& section) const {
    std::vector<std::pair<std::string, std::string>> out;
    if (const auto sec = tree_.get_child_optional(section))
      for (const auto& [k, v] : *sec) out.emplace_back(k, v.data());
    return out;
  }

  static double to_number(const std::string& text, const std::string& section, const std::string& key) {
    double v;
    if (!io::parse_double(text, v) || !std::isfinite(v))
      throw ValidationError("config [" + section + "] " + key + ": not a finite number: '" + text + "'",
                            "malformed_config");
    return v;
  }

  static std::vector<double> to_list(const std::string& text, const std::string& section,
                                     const std::string& key) {
    std::vector<double> out;
    for (auto f : io::split(text)) out.push_back(to_number(std::string(f), section, key));
    return out;
  }

 private:
  std::string text_;
  boost::property_tree::ptree tree_;
};

}  // namespace ivsel::cli
