#pragma once

namespace imd {
inline constexpr const char* kVersion = "0.1.0";
}
