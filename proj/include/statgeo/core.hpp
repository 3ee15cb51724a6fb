#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace statgeo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  DomainError,
  InvalidParam,
  FamilyMismatch,
  ShapeError,
  InvalidK,
  NoRegularization,
  InvalidEpsilon,
  OffSimplex,
  DegenerateWeights,
  OutOfRange,
  NonFiniteEnergy,
  SingularMetric,
  NonFinite,
  DegenerateEstimate,
  NonConvergence,
  ParseError,
};

const char* to_string(ErrorCode code);

/// Library error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidParam: return "InvalidParam";
    case ErrorCode::FamilyMismatch: return "FamilyMismatch";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NoRegularization: return "NoRegularization";
    case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::OffSimplex: return "OffSimplex";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NonFiniteEnergy: return "NonFiniteEnergy";
    case ErrorCode::SingularMetric: return "SingularMetric";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateEstimate: return "DegenerateEstimate";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Seeded random stream. Identical seeds replay identical draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    ++draws_;
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    ++draws_;
    return normal_(engine_);
  }

  /// Gamma(shape, rate = 1).
  double gamma(double shape) {
    ++draws_;
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  /// Independent child stream derived from this stream's seed and a tag.
  Rng split(std::uint64_t tag) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    std::uint64_t s[1];
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    s[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return Rng(s[0]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace statgeo
