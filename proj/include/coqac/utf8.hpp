#pragma once

#include <cstddef>
#include <string>
#include <string_view>

// Character offsets throughout the engine count Unicode code points, which is
// what QuAC's answer_start values index.
namespace coqac::utf8 {

// Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string decode(std::string_view bytes);
std::string encode(std::u32string_view text);
std::string encode(char32_t cp);

std::size_t length(std::string_view bytes);

// Code-point substring [start, start + count), clamped to the text.
std::string substr(std::string_view bytes, std::size_t start, std::size_t count);

}  // namespace coqac::utf8
