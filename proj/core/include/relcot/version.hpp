#pragma once

namespace relcot {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace relcot
