#pragma once

// CSV ingestion and emission, float formatting and atomic file output.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "ivsel/error.hpp"
#include "ivsel/estimator.hpp"
#include "ivsel/identified.hpp"
#include "ivsel/types.hpp"

namespace ivsel::io {

/// Shortest-safe round-trip formatting: 17 significant digits.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), end);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan") {
    out = std::nan("");
    return true;
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'", "missing_file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and rename, so readers never observe a
/// partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'", "write_failed");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("short write to '" + tmp.string() + "'", "write_failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'", "write_failed");
  }
}

/// 64-bit FNV-1a, used for config digests in provenance headers.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Iterates data lines of a CSV text, skipping blank and '#' comment lines.
// Calls on_header(fields, line_no) for the first data line and
// on_row(fields, line_no) for the rest.
template <class Header, class Row>
void for_each_csv_line(const std::string& text, Header&& on_header, Row&& on_row) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    const auto fields = split(line);
    if (!seen_header) {
      on_header(fields, line_no);
      seen_header = true;
    } else {
      on_row(fields, line_no);
    }
  }
  if (!seen_header) throw ValidationError("file has no header line", "malformed_csv");
}

inline std::string at_line(std::size_t line_no) { return " at line " + std::to_string(line_no); }

inline double parse_field(std::string_view f, std::size_t line_no, std::string_view column) {
  double v;
  if (!parse_double(f, v))
    throw ValidationError("cannot parse " + std::string(column) + " value '" + std::string(f) + "'" +
                              at_line(line_no),
                          "malformed_row");
  if (!std::isfinite(v))
    throw ValidationError("non-finite " + std::string(column) + at_line(line_no), "non_finite");
  return v;
}

struct DatasetLoad {
  Dataset data;
  // counts[z][d] over the (Z, D) cells
  std::array<std::array<std::size_t, 3>, 2> counts{};
  std::size_t records() const { return data.records.size(); }
};

/// Header `y,z,d[,x1,...,xk]`; r is derived as 1{d in {A,B}}.
inline DatasetLoad parse_dataset(const std::string& text) {
  DatasetLoad load;
  std::size_t k = 0;
  for_each_csv_line(
      text,
      [&](const std::vector<std::string_view>& h, std::size_t line_no) {
        if (h.size() < 3 || h[0] != "y" || h[1] != "z" || h[2] != "d")
          throw ValidationError("dataset header must start with y,z,d" + at_line(line_no), "malformed_header");
        for (std::size_t j = 3; j < h.size(); ++j)
          if (h[j] != "x" + std::to_string(j - 2))
            throw ValidationError("covariate columns must be named x1..xk" + at_line(line_no),
                                  "malformed_header");
        k = h.size() - 3;
      },
      [&](const std::vector<std::string_view>& f, std::size_t line_no) {
        if (f.size() != k + 3)
          throw ValidationError("expected " + std::to_string(k + 3) + " fields, found " +
                                    std::to_string(f.size()) + at_line(line_no),
                                "malformed_row");
        Record rec;
        rec.y = parse_field(f[0], line_no, "y");
        try {
          rec.z = parse_arm(f[1]);
          rec.d = parse_treatment(f[2]);
        } catch (const ValidationError& e) {
          throw ValidationError(std::string(e.what()) + at_line(line_no), e.kind());
        }
        rec.r = rec.d == Treatment::C ? 0 : 1;
        rec.x.reserve(k);
        for (std::size_t j = 0; j < k; ++j)
          rec.x.push_back(parse_field(f[j + 3], line_no, "x" + std::to_string(j + 1)));
        ++load.counts[static_cast<std::size_t>(rec.z)][static_cast<std::size_t>(rec.d)];
        load.data.records.push_back(std::move(rec));
      });
  return load;
}

inline DatasetLoad load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

inline std::string dataset_csv(const Dataset& data) {
  std::string out = "y,z,d";
  for (std::size_t j = 0; j < data.covariate_count(); ++j) out += ",x" + std::to_string(j + 1);
  out += '\n';
  for (const auto& rec : data.records) {
    out += format_double(rec.y);
    out += ',';
    out += to_string(rec.z);
    out += ',';
    out += to_string(rec.d);
    for (double v : rec.x) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

/// Header `arm,y`.
inline ArmSample parse_arm_sample(const std::string& text) {
  ArmSample s;
  for_each_csv_line(
      text,
      [](const std::vector<std::string_view>& h, std::size_t line_no) {
        if (h.size() != 2 || h[0] != "arm" || h[1] != "y")
          throw ValidationError("arm sample header must be arm,y" + at_line(line_no), "malformed_header");
      },
      [&](const std::vector<std::string_view>& f, std::size_t line_no) {
        if (f.size() != 2)
          throw ValidationError("expected 2 fields" + at_line(line_no), "malformed_row");
        Arm arm;
        try {
          arm = parse_arm(f[0]);
        } catch (const ValidationError& e) {
          throw ValidationError(std::string(e.what()) + at_line(line_no), e.kind());
        }
        (arm == Arm::A ? s.y_A : s.y_B).push_back(parse_field(f[1], line_no, "y"));
      });
  s.validate();
  return s;
}

inline ArmSample load_arm_sample(const std::filesystem::path& path) {
  return parse_arm_sample(read_file(path));
}

inline std::string arm_sample_csv(const ArmSample& s) {
  std::string out = "arm,y\n";
  for (double v : s.y_A) out += "A," + format_double(v) + "\n";
  for (double v : s.y_B) out += "B," + format_double(v) + "\n";
  return out;
}

}  // namespace ivsel::io
