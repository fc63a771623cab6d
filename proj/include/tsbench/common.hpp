#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace tsbench {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kMalformedRow,
  kDuplicateTimestamp,
  kIrregularSampling,
  kEmptyDataset,
  kEmptySplit,
  kUnknownSeries,
  kNonFinite,
  kStaleCache,
  kTrialFailed,
  kSweepFailed,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the core carries a machine-readable code so the
/// C boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

/// xoshiro256** seeded through splitmix64. The distributions in <random> are
/// implementation-defined, so every derived draw is implemented here to keep
/// seeded runs bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::uint64_t state_[4];
};

/// Mixes two 64-bit values into a well-spread seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// 64-bit FNV-1a accumulator used for content fingerprints.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size);
  void update_u64(std::uint64_t v);
  void update_f64(double v);
  void update_str(std::string_view s);
  std::uint64_t digest() const { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace tsbench
