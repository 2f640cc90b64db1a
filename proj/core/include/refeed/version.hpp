#pragma once

namespace refeed {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace refeed
