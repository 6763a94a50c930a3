#pragma once

namespace purrbeat {
inline constexpr const char* kVersion = "0.1.0";
}
