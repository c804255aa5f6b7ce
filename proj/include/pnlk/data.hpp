#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pnlk/geometry.hpp"
#include "pnlk/pointnet.hpp"

namespace pnlk {

// ---------------------------------------------------------------------------
// Meshes and point clouds
// ---------------------------------------------------------------------------

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::vector<std::size_t>> faces;
};

/// Parses an ASCII OFF file (vertices and faces; comments after '#').
/// Errors carry the offending line number.
Mesh load_off_mesh(const std::filesystem::path& path);
Mesh parse_off(std::istream& in);

/// Vertices of an OFF mesh as a cloud. Faces are read and ignored.
PointCloud load_off(const std::filesystem::path& path);

/// Writes vertices (and optional faces) with `precision` significant digits.
void write_off(const std::filesystem::path& path, const Mesh& mesh, int precision = 17);
void write_off(const std::filesystem::path& path, const PointCloud& cloud, int precision = 17);

/// Area-weighted uniform samples on the triangulated faces.
PointCloud sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed);

/// x,y,z rows with a header line.
void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud_csv(const std::filesystem::path& path);

/// Shifts and uniformly scales so the bounding box sits in [0,1]^3 with its
/// longest side exactly 1. A zero-extent axis is centred at 0.5.
PointCloud normalize_unit_cube(const PointCloud& cloud);

/// Random subset without replacement (shrinking) or with replacement
/// (growing). Returns the chosen source indices.
std::vector<std::size_t> resample_indices(std::size_t n, std::size_t target, std::mt19937_64& rng);
PointCloud resample(const PointCloud& cloud, std::size_t target, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Registration pairs
// ---------------------------------------------------------------------------

struct PairSpec {
  double initial_angle_deg = 30.0;
  double translation_bound = 0.3;
  std::uint64_t seed = 0;
  std::size_t num_points = 1024;
  /// Draw the source from the same resampled indices as the template.
  bool shared_indices = false;

  void validate() const;
};

struct RegistrationPair {
  PointCloud templ;
  PointCloud source;
  RigidTransform gt;  // maps the source onto the template
};

/// Rotates about a uniformly random axis by exactly the spec angle, then
/// translates by a vector with components drawn from U[0, bound).
RegistrationPair make_pair(const PointCloud& templ, const PairSpec& spec);

/// Unit axis drawn uniformly on the sphere (normalised Gaussian).
Vec3 random_axis(std::mt19937_64& rng);
RigidTransform axis_angle(const Vec3& axis, double angle_rad, const Vec3& translation = Vec3::Zero());

// ---------------------------------------------------------------------------
// Weight blob
// ---------------------------------------------------------------------------

/// Little-endian stream of 32-bit words:
///
///   magic       0x4B4C4E50 ("PNLK")
///   version     (major << 16) | minor
///   value_bits  32 or 64: width of every real that follows
///   q_n         Q-format half width for the fixed-point core, 0 for float
///   layers      always 5
///   per layer   K, L, then W (L*K row-major), b, bn_w, bn_b, bn_mean,
///               bn_var (L each) and epsilon
///   crc32       zlib CRC-32 of every preceding byte
///
/// A 64-bit value occupies two words, low word first.
inline constexpr std::uint32_t kBlobMagic = 0x4B4C4E50u;
inline constexpr std::uint16_t kBlobVersionMajor = 1;
inline constexpr std::uint16_t kBlobVersionMinor = 0;

struct WeightBlobOptions {
  int value_bits = 64;
  int q_n = 0;
};

struct WeightBlob {
  PointNetParams params;
  WeightBlobOptions options;
  std::uint16_t version_major = kBlobVersionMajor;
  std::uint16_t version_minor = kBlobVersionMinor;
};

std::vector<std::uint32_t> encode_weight_blob(const PointNetParams& params,
                                              const WeightBlobOptions& options = {});
/// Throws ChecksumError, DimensionError, VersionError or FormatError.
WeightBlob decode_weight_blob(std::span<const std::uint32_t> words);

void write_weights(const std::filesystem::path& path, const PointNetParams& params,
                   const WeightBlobOptions& options = {});
WeightBlob read_weights(const std::filesystem::path& path);

std::vector<std::uint32_t> bytes_to_words(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> words_to_bytes(std::span<const std::uint32_t> words);

std::uint32_t crc32_words(std::span<const std::uint32_t> words);

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

struct RandomParamsOptions {
  /// Scale of the Xavier-style uniform weight draw; all weights stay in [-1, 1].
  double weight_gain = 1.0;
  double epsilon = kDefaultBnEpsilon;
};

/// Seeded random network with weights in [-1, 1] (uniform, scaled by
/// sqrt(3 / fan_in)) and mild BN statistics.
PointNetParams make_random_params(std::uint64_t seed, const RandomParamsOptions& options = {});

/// Cloud of `n` points uniform in the unit cube.
PointCloud random_cloud(std::size_t n, std::uint64_t seed);

/// Cross-component golden vectors: a blob plus expected outputs on one cloud.
struct FixtureBundle {
  std::filesystem::path weights_path;
  PointCloud cloud;
  Eigen::VectorXd feature;   // 1024
  Eigen::MatrixXd jacobian;  // 1024 x 6 (empty if absent)
  Eigen::VectorXd twist;     // 6 (empty if absent): one LK step, cloud as template
  std::optional<PointCloud> source;  // source of that step; the cloud itself if absent
  double perturbation = 1e-2;
};

/// Directory layout: weights.bin, cloud.csv, feature.csv, and optionally
/// jacobian.csv, twist.csv, source.csv, meta.json ({"perturbation": t}).
FixtureBundle load_fixture_bundle(const std::filesystem::path& dir);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

/// Synthetic OFF shapes (boxes, ellipsoids, tori, ...) for runs without
/// a real mesh corpus. Returns the written paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          std::size_t count, std::uint64_t seed);

/// Sorted *.off files in a directory.
std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& dir);

}  // namespace pnlk
