#pragma once

namespace moshead {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace moshead
