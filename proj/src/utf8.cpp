#include "symptex/utf8.hpp"

namespace symptex::utf8 {
namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

std::size_t length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if (!is_continuation(c)) ++n;
  }
  return n;
}

std::optional<std::size_t> byte_offset(std::string_view s, std::size_t cp) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_continuation(static_cast<unsigned char>(s[i]))) continue;
    if (seen == cp) return i;
    ++seen;
  }
  if (seen == cp) return s.size();
  return std::nullopt;
}

std::size_t cp_index(std::string_view s, std::size_t byte) {
  return length(s.substr(0, byte));
}

std::optional<std::string> slice(std::string_view s, std::size_t begin, std::size_t end) {
  if (begin > end) return std::nullopt;
  auto b = byte_offset(s, begin);
  auto e = byte_offset(s, end);
  if (!b || !e) return std::nullopt;
  return std::string(s.substr(*b, *e - *b));
}

std::string prefix(std::string_view s, std::size_t n) {
  auto e = byte_offset(s, n);
  return std::string(e ? s.substr(0, *e) : s);
}

}  // namespace symptex::utf8
