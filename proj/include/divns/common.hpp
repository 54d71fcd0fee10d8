#ifndef DIVNS_COMMON_HPP
#define DIVNS_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace divns {

using Index = std::int32_t;
using Rng = std::mt19937_64;

/// Row-major dense matrix; one embedding per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A filtering step removed every record.
class EmptyResultError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Purpose tags keep streams used for different jobs independent.
enum class StreamTag : std::uint64_t {
  kSplit = 1,
  kInit = 2,
  kPools = 3,
  kDiverse = 4,
  kShuffle = 5,
  kToy = 6,
  kSynthetic = 7,
  kBaseline = 8,
};

/// Deterministic RNG stream keyed by (seed, tag, epoch, entity). Results
/// never depend on which thread consumes the stream.
inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t epoch = 0,
                       std::uint64_t entity = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = detail::splitmix64(h ^ epoch);
  h = detail::splitmix64(h ^ entity);
  return Rng(h);
}

/// Splits [0, n) into contiguous chunks, one per worker. `fn(begin, end)`.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, &errors, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace divns

#endif  // DIVNS_COMMON_HPP
