#pragma once

namespace spanrl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spanrl
