#pragma once

#include <string>
#include <string_view>

#include "ivsel/error.hpp"

namespace ivsel {

/// Value of the binary instrument: which of the two treatments of interest
/// the instrument predisposes towards.
enum class Arm { A = 0, B = 1 };

/// Received treatment; C is the third option excluded from the comparison.
enum class Treatment { A = 0, B = 1, C = 2 };

inline constexpr std::string_view to_string(Arm a) { return a == Arm::A ? "A" : "B"; }

inline constexpr std::string_view to_string(Treatment t) {
  switch (t) {
    case Treatment::A: return "A";
    case Treatment::B: return "B";
    default: return "C";
  }
}

inline Arm parse_arm(std::string_view s) {
  if (s == "A") return Arm::A;
  if (s == "B") return Arm::B;
  throw ValidationError("unknown instrument label '" + std::string(s) + "' (expected A or B)",
                        "unknown_label");
}

inline Treatment parse_treatment(std::string_view s) {
  if (s == "A") return Treatment::A;
  if (s == "B") return Treatment::B;
  if (s == "C") return Treatment::C;
  throw ValidationError("unknown treatment label '" + std::string(s) + "' (expected A, B or C)",
                        "unknown_label");
}

}  // namespace ivsel
