#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace embench {

enum class ErrorCode {
  kIo,
  kBadMagic,
  kBadHeader,
  kTruncated,
  kNonFinite,
  kDuplicateId,
  kMissingIds,
  kZeroNorm,
  kInvalidManifest,
  kInvalidArgument,
  kShapeMismatch,
  kMisaligned,
  kEmptyInput,
  kMissingProbs,
  kDiverged,
  kUnknownKind,
  kImageTooSmall,
  kNonFiniteGradient,
  kProtocol,
  kSchemaMismatch,
  kKeyConflict,
  kConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Counter-based generator: output i is a pure function of (key, i), so
// streams are identical across platforms and standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal (Box-Muller, no caching).
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_key(std::uint64_t seed, std::string_view a, std::string_view b = {});

// Fisher-Yates permutation of [0, n) driven by rng.
std::vector<std::size_t> random_permutation(std::size_t n, CounterRng& rng);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
// Exceptions are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

std::size_t default_threads();

}  // namespace embench
