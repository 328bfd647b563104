#pragma once

namespace debias {

inline constexpr const char* kToolName = "debias";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace debias
