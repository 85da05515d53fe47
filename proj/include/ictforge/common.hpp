#pragma once

// Shared plumbing: error types, a counter-based deterministic RNG, and the
// small string/number helpers used across the library.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace ictforge {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Invalid or inconsistent configuration (bad flag values, unknown family...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an API contract (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Seed requested outside the split's configured range.
class SeedRangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted document carries a schema version this build cannot read.
class SchemaVersionError : public std::runtime_error {
 public:
  SchemaVersionError(int expected, int actual)
      : std::runtime_error("unsupported schema_version " + std::to_string(actual) +
                           " (expected " + std::to_string(expected) + ")"),
        expected(expected),
        actual(actual) {}
  int expected;
  int actual;
};

/// Remote-environment bridge failure (connect, timeout, malformed reply).
class BridgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured-text parse failure (model replies, response sections).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// All stochastic choices inside the library go through splitmix64 so that
// runs replay identically across platforms. std::uniform_int_distribution is
// not portable across standard libraries and is avoided on purpose.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Value of a counter-based stream: independent draws addressed by index.
constexpr std::uint64_t stream_draw(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Small sequential RNG over the splitmix64 state chain.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform draw in [0, n). Modulo bias is irrelevant at our range sizes.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(below(items.size()))];
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Case-insensitive substring search; npos when absent.
inline std::size_t find_ci(const std::string& haystack, const std::string& needle) {
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  return h.find(n);
}

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
  return find_ci(haystack, needle) != std::string::npos;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

/// Reward rendering used by every prompt template: integral values print
/// without a decimal point, everything else with two decimals.
inline std::string format_reward(double value) {
  if (std::isfinite(value) && std::floor(value) == value && std::fabs(value) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(value));
    return buf;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ictforge
