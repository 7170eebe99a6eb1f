#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

// Code-point helpers. Offsets in the dataset format count Unicode scalar
// values, not bytes.
namespace symptex::utf8 {

std::size_t length(std::string_view s);

/// Byte offset of the code point at index `cp`, or nullopt past the end.
std::optional<std::size_t> byte_offset(std::string_view s, std::size_t cp);

/// Code-point index of a byte offset that lies on a boundary.
std::size_t cp_index(std::string_view s, std::size_t byte);

/// Substring by code-point range [begin, end).
std::optional<std::string> slice(std::string_view s, std::size_t begin, std::size_t end);

/// First `n` code points of `s`.
std::string prefix(std::string_view s, std::size_t n);

}  // namespace symptex::utf8
