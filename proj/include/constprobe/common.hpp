#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace constprobe {

/// Malformed or inconsistent input data (alignment, integrity, supply).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, int line, int column)
      : DataError(what + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Seeded random stream. The distributions are implemented here rather than
/// taken from <random> so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Uniform real in [0, 1).
  double uniform();

  /// Standard normal (Box-Muller).
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes);
  Fnv1a& update(std::string_view text);
  template <typename T>
  Fnv1a& update_value(const T& value) {
    return update(std::as_bytes(std::span<const T>(&value, 1)));
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);
std::uint64_t hash_file(const std::string& path);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once, so results written per index are independent of
/// the thread count.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body);

void set_default_threads(unsigned threads);
unsigned default_threads();

}  // namespace constprobe

#include "constprobe/detail/parallel.hpp"
