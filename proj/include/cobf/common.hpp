// Shared numeric types, identifiers, errors and seed derivation.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cobf {

template <typename Real>
using Complex = std::complex<Real>;

/// Row-major complex matrix; rows are subcarriers, columns are antennas.
template <typename Real>
using CMatrixX = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using CVectorX = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

template <typename Real>
using CRowVectorX = Eigen::Matrix<std::complex<Real>, 1, Eigen::Dynamic>;

using Vec3 = Eigen::Vector3d;
using Rng = std::mt19937_64;

struct StaId {
  int value = -1;
  auto operator<=>(const StaId&) const = default;
};

struct ApId {
  int value = -1;
  auto operator<=>(const ApId&) const = default;
};

struct LinkId {
  StaId sta;
  ApId ap;
  auto operator<=>(const LinkId&) const = default;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class DegenerateChannelError : public Error {
 public:
  using Error::Error;
};

class PrecodingError : public Error {
 public:
  using Error::Error;
};

/// Internal invariant violated during simulation.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed: mix64 chained over (parent, stream tag, index).
/// Stream tags keep topology, mobility, traffic, channel and MAC randomness separate so
/// that scenarios sharing a master seed share the first three.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, std::uint64_t index = 0) {
  return mix64(mix64(mix64(parent) ^ tag) ^ (index * 0xd1b54a32d192ed03ULL));
}

namespace stream {
inline constexpr std::uint64_t kDeployment = 0x01;
inline constexpr std::uint64_t kTopology = 0x10;
inline constexpr std::uint64_t kMobility = 0x11;
inline constexpr std::uint64_t kTraffic = 0x12;
inline constexpr std::uint64_t kChannel = 0x20;
inline constexpr std::uint64_t kChannelEvolution = 0x21;
inline constexpr std::uint64_t kMac = 0x30;
inline constexpr std::uint64_t kEstimation = 0x31;
inline constexpr std::uint64_t kCompression = 0x32;
inline constexpr std::uint64_t kLinkErrors = 0x33;
}  // namespace stream

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

}  // namespace cobf
