#pragma once

namespace camp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace camp
