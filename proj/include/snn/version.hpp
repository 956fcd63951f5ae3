#pragma once

namespace snn {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace snn
