#ifndef PROMO_TEXTIO_HPP_
#define PROMO_TEXTIO_HPP_

// Shared helpers for the versioned structured-text formats.  Every file
// starts with a "<format-name> v<N>" line; doubles are written with
// shortest-round-trip precision so save/load is bit-exact.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "promo/errors.hpp"

namespace promo {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view tok) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw incompat_error("malformed number: '" + std::string(tok) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view tok) {
  std::int64_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw incompat_error("malformed integer: '" + std::string(tok) + "'");
  return v;
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Reads all lines, dropping trailing '\r' and skipping blank/comment lines.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw incompat_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

// Checks the leading "<name> v<version>" line.
inline void expect_header(const std::vector<std::string>& lines,
                          const std::string& name, int version,
                          const std::string& path) {
  if (lines.empty())
    throw incompat_error("empty file: " + path);
  const auto toks = split_tokens(lines[0]);
  if (toks.size() != 2 || toks[0] != name ||
      toks[1] != "v" + std::to_string(version))
    throw incompat_error("expected '" + name + " v" + std::to_string(version) +
                         "' header in " + path + ", got '" + lines[0] + "'");
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw incompat_error("cannot write file: " + path);
  out.precision(17);
  return out;
}

// FNV-1a, used as a content checksum for stale-dual detection.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64_doubles(const std::vector<double>& v,
                                     std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (const double d : v) h = fnv1a64(format_double(d), fnv1a64(" ", h));
  return h;
}

}  // namespace promo

#endif  // PROMO_TEXTIO_HPP_
