#pragma once

namespace hgff {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hgff
