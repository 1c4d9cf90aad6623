#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace caal {

// Process exit codes shared by the library error types and the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

struct Error : std::runtime_error {
  Error(std::string msg, int code) : std::runtime_error(std::move(msg)), exit_code(code) {}
  int exit_code;
};

struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(std::move(msg), kExitConfig) {}
};
struct DataError : Error {
  explicit DataError(std::string msg) : Error(std::move(msg), kExitData) {}
};
struct NumericError : Error {
  explicit NumericError(std::string msg) : Error(std::move(msg), kExitNumeric) {}
};
struct IoError : Error {
  explicit IoError(std::string msg) : Error(std::move(msg), kExitIo) {}
};

// FNV-1a 64-bit; stable across platforms, used for config provenance hashes.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Shortest exact decimal representation; round-trips bit-exactly, which keeps
// emitted CSV files byte-stable across reruns.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace caal
