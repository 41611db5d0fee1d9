#pragma once

#include <cstdarg>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace agcn {

// ---------------------------------------------------------------------------
// Errors

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, long line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}
  const std::string& file() const { return file_; }
  long line() const { return line_; }

 private:
  std::string file_;
  long line_;
};

// ---------------------------------------------------------------------------
// Logging, controlled by the AGCN_LOG environment variable (error|info|debug).

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_at(LogLevel level, const char* fmt, ...);

#define AGCN_LOG_ERROR(...) ::agcn::log_at(::agcn::LogLevel::error, __VA_ARGS__)
#define AGCN_LOG_INFO(...) ::agcn::log_at(::agcn::LogLevel::info, __VA_ARGS__)
#define AGCN_LOG_DEBUG(...) ::agcn::log_at(::agcn::LogLevel::debug, __VA_ARGS__)

// ---------------------------------------------------------------------------
// Deterministic RNG. A thin wrapper so every random draw in the project goes
// through one seedable generator type.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double gaussian(double sigma) {
    return std::normal_distribution<double>(0.0, sigma)(gen_);
  }
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }
  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// FNV-1a, used to derive per-name seeds for parameter initialization.
std::uint64_t hash_name(const std::string& name, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Flat key=value config files ('#' starts a comment, blank lines ignored).

class KeyValueFile {
 public:
  static KeyValueFile load(const std::string& path);
  static KeyValueFile from_string(const std::string& text, const std::string& name = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated integers, e.g. "64,64,128".
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  // Semicolon-separated groups of comma-separated integers, e.g. "128,128;128,256".
  std::vector<std::vector<int>> get_int_list_list(
      const std::string& key, const std::vector<std::vector<int>>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
};

}  // namespace agcn
