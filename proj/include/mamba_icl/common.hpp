// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.
//
// Shared numeric aliases, error types and seeded random streams.

#ifndef MAMBA_ICL_COMMON_HPP_
#define MAMBA_ICL_COMMON_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mamba_icl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid user-supplied configuration (dimensions, counts, step sizes).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what)
      : std::invalid_argument(what) {}
};

// Parameters for which a formula is singular (e.g. a zero entry of A in ZOH).
class DegenerateParameterError : public std::domain_error {
 public:
  explicit DegenerateParameterError(const std::string& what)
      : std::domain_error(what) {}
};

// Training left the region where iterates are meaningful (blow-up or NaN).
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

// An operation was called in a state its contract excludes.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

using Rng = std::mt19937_64;

// Independent stream for (seed, index). Trials and sweep points each get
// their own index so results do not depend on evaluation order.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32), 0x6d616d62u};
  return Rng(seq);
}

// Draws standard normals from one stream. The distribution caches a spare
// variate, so a sampler must never be shared between streams.
class NormalSampler {
 public:
  explicit NormalSampler(Rng& rng) : rng_(rng) {}
  double operator()() { return dist_(rng_); }
  Vec vector(Eigen::Index n);
  Mat matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  Rng& rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace mamba_icl

#endif  // MAMBA_ICL_COMMON_HPP_
