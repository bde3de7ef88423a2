#pragma once

namespace ivsel {
inline constexpr const char* version = "0.1.0";
}
