#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hybridsentry {

/// Guard used for every ratio denominator and standard-deviation divisor.
inline constexpr double kEpsilon = 1e-8;

// Error hierarchy. The CLI maps each class onto a distinct exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Unknown sample id or malformed embedding record.
class EmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Calendar day. Stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days day) : day_(day) {}

  /// Parses strict ISO-8601 `YYYY-MM-DD`; throws DataError otherwise.
  static Date parse(std::string_view text);
  static Date from_serial(std::int64_t days_since_epoch);

  [[nodiscard]] std::string to_string() const;
  [[nodiscard]] std::int64_t serial() const { return day_.time_since_epoch().count(); }
  [[nodiscard]] std::chrono::sys_days sys_days() const { return day_; }

  Date operator+(std::int64_t days) const { return Date(day_ + std::chrono::days(days)); }
  Date operator-(std::int64_t days) const { return Date(day_ - std::chrono::days(days)); }
  std::int64_t operator-(const Date& other) const { return serial() - other.serial(); }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days day_{};
};

/// Seeded generator with portable uniform/normal draws. The std
/// distributions are implementation-defined, so draws are derived from the
/// raw mt19937_64 stream instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Hardware concurrency, capped by HYBRIDSENTRY_THREADS when set.
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n). Each index must write only its own output
/// slot, which keeps results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace hybridsentry
