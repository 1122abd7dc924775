#pragma once

#include <string>
#include <string_view>

namespace spanrl::utf8 {

// Throws ValidationError on malformed input (overlong forms, surrogates,
// truncated sequences, code points above U+10FFFF).
[[nodiscard]] std::u32string decode(std::string_view bytes);
[[nodiscard]] std::string encode(std::u32string_view code_points);

}  // namespace spanrl::utf8
