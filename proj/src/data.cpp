#include "pnlk/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include <zlib.h>

#include "json.hpp"
#include "pnlk/error.hpp"

namespace pnlk {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// OFF
// ---------------------------------------------------------------------------

namespace {

struct Line {
  std::size_t number;
  std::string text;
};

std::vector<Line> content_lines(std::istream& in) {
  std::vector<Line> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back({number, text});
  }
  return lines;
}

template <typename T>
std::vector<T> numbers(const Line& line, std::size_t want, const char* what) {
  std::istringstream ss(line.text);
  std::vector<T> out;
  T v;
  while (out.size() < want && ss >> v) out.push_back(v);
  if (out.size() < want) {
    throw ParseError(std::string("expected ") + std::to_string(want) + " values for " + what,
                     line.number);
  }
  return out;
}

}  // namespace

Mesh parse_off(std::istream& in) {
  const auto lines = content_lines(in);
  if (lines.empty()) throw ParseError("empty OFF file", 0);

  std::size_t cursor = 0;
  std::string header = lines[0].text;
  header.erase(0, header.find_first_not_of(" \t"));
  if (header.rfind("OFF", 0) != 0) throw ParseError("missing OFF header", lines[0].number);

  // Some exporters glue the counts onto the header ("OFF490 518 0").
  Line counts_line{lines[0].number, header.substr(3)};
  if (counts_line.text.find_first_not_of(" \t\r") == std::string::npos) {
    if (lines.size() < 2) throw ParseError("missing vertex/face counts", lines[0].number);
    counts_line = lines[1];
    cursor = 2;
  } else {
    cursor = 1;
  }
  const auto counts = numbers<long long>(counts_line, 2, "vertex/face counts");
  if (counts[0] < 0 || counts[1] < 0) throw ParseError("negative element count", counts_line.number);
  const auto nv = static_cast<std::size_t>(counts[0]);
  const auto nf = static_cast<std::size_t>(counts[1]);

  Mesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i, ++cursor) {
    if (cursor >= lines.size()) {
      throw ParseError("header declares " + std::to_string(nv) + " vertices, found " +
                           std::to_string(i),
                       lines.back().number);
    }
    const auto v = numbers<double>(lines[cursor], 3, "vertex");
    mesh.vertices.emplace_back(v[0], v[1], v[2]);
  }
  mesh.faces.reserve(nf);
  for (std::size_t i = 0; i < nf; ++i, ++cursor) {
    if (cursor >= lines.size()) {
      throw ParseError("header declares " + std::to_string(nf) + " faces, found " +
                           std::to_string(i),
                       lines.back().number);
    }
    std::istringstream ss(lines[cursor].text);
    long long k = 0;
    if (!(ss >> k) || k < 0) throw ParseError("bad face vertex count", lines[cursor].number);
    std::vector<std::size_t> face(static_cast<std::size_t>(k));
    for (auto& idx : face) {
      long long v = -1;
      if (!(ss >> v)) throw ParseError("face has too few indices", lines[cursor].number);
      if (v < 0 || static_cast<std::size_t>(v) >= nv) {
        throw ParseError("face index out of range", lines[cursor].number);
      }
      idx = static_cast<std::size_t>(v);
    }
    mesh.faces.push_back(std::move(face));
  }
  if (cursor < lines.size()) {
    throw ParseError("unexpected data after the declared vertices and faces", lines[cursor].number);
  }
  return mesh;
}

Mesh load_off_mesh(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_off(in);
}

PointCloud load_off(const fs::path& path) { return PointCloud(load_off_mesh(path).vertices); }

void write_off(const fs::path& path, const Mesh& mesh, int precision) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(precision);
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) {
    out << f.size();
    for (auto i : f) out << ' ' << i;
    out << '\n';
  }
}

void write_off(const fs::path& path, const PointCloud& cloud, int precision) {
  write_off(path, Mesh{cloud.points(), {}}, precision);
}

PointCloud sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  struct Tri {
    std::size_t a, b, c;
  };
  std::vector<Tri> tris;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    for (std::size_t k = 1; k + 1 < f.size(); ++k) {
      const Tri t{f[0], f[k], f[k + 1]};
      const double area =
          0.5 * (mesh.vertices[t.b] - mesh.vertices[t.a]).cross(mesh.vertices[t.c] - mesh.vertices[t.a]).norm();
      total += area;
      tris.push_back(t);
      cumulative.push_back(total);
    }
  }
  if (tris.empty() || !(total > 0.0)) throw InvalidArgument("mesh has no faces with positive area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = u(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto& t = tris[std::min<std::size_t>(it - cumulative.begin(), tris.size() - 1)];
    double r1 = u(rng), r2 = u(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3& a = mesh.vertices[t.a];
    pts.push_back(a + r1 * (mesh.vertices[t.b] - a) + r2 * (mesh.vertices[t.c] - a));
  }
  return PointCloud(std::move(pts));
}

void write_cloud_csv(const fs::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "x,y,z\n";
  for (const auto& p : cloud) out << p.x() << ',' << p.y() << ',' << p.z() << '\n';
}

PointCloud read_cloud_csv(const fs::path& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 3) throw ParseError("cloud CSV must have 3 columns", 1);
  std::vector<Vec3> pts;
  pts.reserve(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) pts.emplace_back(m(i, 0), m(i, 1), m(i, 2));
  return PointCloud(std::move(pts));
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(text);
    std::string cell;
    bool header = false;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        header = true;
        break;
      }
    }
    if (header) {
      if (rows.empty()) continue;  // column names
      throw ParseError("non-numeric CSV cell", number);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged CSV row", number);
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Normalisation and resampling
// ---------------------------------------------------------------------------

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  Vec3 lo = cloud[0];
  Vec3 hi = cloud[0];
  for (const auto& p : cloud) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 extent = hi - lo;
  const double side = extent.maxCoeff();
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    Vec3 q;
    for (int k = 0; k < 3; ++k) q(k) = extent(k) > 0.0 ? (p(k) - lo(k)) / side : 0.5;
    out.push_back(q);
  }
  return PointCloud(std::move(out));
}

std::vector<std::size_t> resample_indices(std::size_t n, std::size_t target, std::mt19937_64& rng) {
  if (n == 0 || target == 0) throw InvalidArgument("resample needs non-empty input and target");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n == target) return idx;
  if (n > target) {
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < target; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(target);
    return idx;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (idx.size() < target) idx.push_back(pick(rng));
  return idx;
}

PointCloud resample(const PointCloud& cloud, std::size_t target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto idx = resample_indices(cloud.size(), target, rng);
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cloud[i]);
  return PointCloud(std::move(out));
}

// ---------------------------------------------------------------------------
// Pairs
// ---------------------------------------------------------------------------

void PairSpec::validate() const {
  if (!(initial_angle_deg >= 0.0 && initial_angle_deg <= 90.0)) {
    throw InvalidArgument("initial angle must lie in [0, 90] degrees");
  }
  if (!(translation_bound >= 0.0)) throw InvalidArgument("translation bound must be >= 0");
  if (num_points < 1) throw InvalidArgument("num_points must be >= 1");
}

Vec3 random_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

RigidTransform axis_angle(const Vec3& axis, double angle_rad, const Vec3& translation) {
  const RigidTransform rot = exp_se3(Twist(axis.normalized() * angle_rad, Vec3::Zero()));
  return RigidTransform(rot.rotation(), translation);
}

RegistrationPair make_pair(const PointCloud& templ, const PairSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Vec3 axis = random_axis(rng);
  Vec3 t = Vec3::Zero();
  if (spec.translation_bound > 0.0) {
    std::uniform_real_distribution<double> u(0.0, spec.translation_bound);
    for (int k = 0; k < 3; ++k) t(k) = u(rng);
  }
  const RigidTransform perturb =
      axis_angle(axis, spec.initial_angle_deg * std::numbers::pi / 180.0, t);

  const auto ti = resample_indices(templ.size(), spec.num_points, rng);
  const auto si = spec.shared_indices ? ti : resample_indices(templ.size(), spec.num_points, rng);

  std::vector<Vec3> tp, sp;
  tp.reserve(ti.size());
  sp.reserve(si.size());
  for (auto i : ti) tp.push_back(templ[i]);
  for (auto i : si) sp.push_back(perturb * templ[i]);
  return {PointCloud(std::move(tp)), PointCloud(std::move(sp)), perturb.inverse()};
}

// ---------------------------------------------------------------------------
// Weight blob
// ---------------------------------------------------------------------------

namespace {

class WordWriter {
 public:
  explicit WordWriter(int value_bits) : value_bits_(value_bits) {}
  void u32(std::uint32_t v) { words_.push_back(v); }
  void real(double v) {
    if (value_bits_ == 32) {
      words_.push_back(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      words_.push_back(static_cast<std::uint32_t>(bits));
      words_.push_back(static_cast<std::uint32_t>(bits >> 32));
    }
  }
  std::vector<std::uint32_t> take() { return std::move(words_); }

 private:
  int value_bits_;
  std::vector<std::uint32_t> words_;
};

class WordReader {
 public:
  explicit WordReader(std::span<const std::uint32_t> words) : words_(words) {}
  void set_value_bits(int bits) { value_bits_ = bits; }
  std::uint32_t u32() {
    if (pos_ >= words_.size()) throw FormatError("weight blob is truncated");
    return words_[pos_++];
  }
  double real() {
    if (value_bits_ == 32) return std::bit_cast<float>(u32());
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint32_t> words_;
  std::size_t pos_ = 0;
  int value_bits_ = 64;
};

void check_options(const WeightBlobOptions& o) {
  if (o.value_bits != 32 && o.value_bits != 64) throw FormatError("value width must be 32 or 64 bits");
  if (o.q_n != 0 && (o.q_n < 2 || o.q_n > 31)) throw FormatError("q_n must be 0 or in [2, 31]");
}

}  // namespace

std::uint32_t crc32_words(std::span<const std::uint32_t> words) {
  const auto bytes = words_to_bytes(words);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> words_to_bytes(std::span<const std::uint32_t> words) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(words.size() * 4);
  for (auto w : words) {
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(w >> (8 * k)));
  }
  return bytes;
}

std::vector<std::uint32_t> bytes_to_words(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw FormatError("weight blob length is not a multiple of 4 bytes");
  std::vector<std::uint32_t> words(bytes.size() / 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = std::uint32_t{bytes[4 * i]} | (std::uint32_t{bytes[4 * i + 1]} << 8) |
               (std::uint32_t{bytes[4 * i + 2]} << 16) | (std::uint32_t{bytes[4 * i + 3]} << 24);
  }
  return words;
}

std::vector<std::uint32_t> encode_weight_blob(const PointNetParams& params,
                                              const WeightBlobOptions& options) {
  check_options(options);
  WordWriter w(options.value_bits);
  w.u32(kBlobMagic);
  w.u32((std::uint32_t{kBlobVersionMajor} << 16) | kBlobVersionMinor);
  w.u32(static_cast<std::uint32_t>(options.value_bits));
  w.u32(static_cast<std::uint32_t>(options.q_n));
  w.u32(static_cast<std::uint32_t>(kNumLayers));
  for (const auto& layer : params.layers()) {
    w.u32(static_cast<std::uint32_t>(layer.in_dim()));
    w.u32(static_cast<std::uint32_t>(layer.out_dim()));
    for (int r = 0; r < layer.out_dim(); ++r) {
      for (int c = 0; c < layer.in_dim(); ++c) w.real(layer.weight(r, c));
    }
    for (const auto* v : {&layer.bias, &layer.bn_weight, &layer.bn_bias, &layer.bn_mean, &layer.bn_var}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) w.real((*v)(i));
    }
    w.real(layer.epsilon);
  }
  auto words = w.take();
  words.push_back(crc32_words(words));
  return words;
}

WeightBlob decode_weight_blob(std::span<const std::uint32_t> words) {
  if (words.size() < 6) throw FormatError("weight blob is truncated");
  const auto body = words.first(words.size() - 1);
  if (crc32_words(body) != words.back()) throw ChecksumError("weight blob checksum mismatch");

  WordReader r(body);
  if (r.u32() != kBlobMagic) throw FormatError("bad weight blob magic");
  const std::uint32_t version = r.u32();
  const auto major = static_cast<std::uint16_t>(version >> 16);
  const auto minor = static_cast<std::uint16_t>(version & 0xFFFFu);
  if (major != kBlobVersionMajor) {
    throw VersionError("unsupported weight blob version " + std::to_string(major) + "." +
                       std::to_string(minor));
  }
  WeightBlobOptions options;
  options.value_bits = static_cast<int>(r.u32());
  options.q_n = static_cast<int>(r.u32());
  check_options(options);
  r.set_value_bits(options.value_bits);

  const std::uint32_t layer_count = r.u32();
  if (layer_count != kNumLayers) {
    throw DimensionError("weight blob has " + std::to_string(layer_count) + " layers, expected 5");
  }
  std::array<LayerParams, kNumLayers> layers;
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto k = r.u32();
    const auto l = r.u32();
    if (static_cast<int>(k) != kLayerWidths[i] || static_cast<int>(l) != kLayerWidths[i + 1]) {
      throw DimensionError("layer " + std::to_string(i) + " is FC(" + std::to_string(k) + "," +
                           std::to_string(l) + "), expected FC(" + std::to_string(kLayerWidths[i]) +
                           "," + std::to_string(kLayerWidths[i + 1]) + ")");
    }
    auto& layer = layers[i];
    layer.weight.resize(l, k);
    for (std::uint32_t row = 0; row < l; ++row) {
      for (std::uint32_t col = 0; col < k; ++col) layer.weight(row, col) = r.real();
    }
    for (auto* v : {&layer.bias, &layer.bn_weight, &layer.bn_bias, &layer.bn_mean, &layer.bn_var}) {
      v->resize(l);
      for (std::uint32_t j = 0; j < l; ++j) (*v)(j) = r.real();
    }
    layer.epsilon = r.real();
  }
  if (r.position() != body.size()) throw FormatError("trailing words after the last layer");

  try {
    return WeightBlob{PointNetParams(std::move(layers)), options, major, minor};
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("weight blob holds invalid parameters: ") + e.what());
  }
}

void write_weights(const fs::path& path, const PointNetParams& params,
                   const WeightBlobOptions& options) {
  const auto bytes = words_to_bytes(encode_weight_blob(params, options));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightBlob read_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_weight_blob(bytes_to_words(bytes));
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

PointNetParams make_random_params(std::uint64_t seed, const RandomParamsOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 1.5);
  std::array<LayerParams, kNumLayers> layers;
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const int k = kLayerWidths[i];
    const int l = kLayerWidths[i + 1];
    const double scale = std::min(1.0, options.weight_gain * std::sqrt(3.0 / k));
    auto& p = layers[i];
    p.weight.resize(l, k);
    for (int r = 0; r < l; ++r) {
      for (int c = 0; c < k; ++c) p.weight(r, c) = scale * u(rng);
    }
    p.bias.resize(l);
    p.bn_weight.resize(l);
    p.bn_bias.resize(l);
    p.bn_mean.resize(l);
    p.bn_var.resize(l);
    for (int r = 0; r < l; ++r) {
      p.bias(r) = 0.1 * u(rng);
      p.bn_weight(r) = pos(rng);
      p.bn_bias(r) = 0.1 * u(rng);
      p.bn_mean(r) = 0.1 * u(rng);
      p.bn_var(r) = pos(rng);
    }
    p.epsilon = options.epsilon;
  }
  return PointNetParams(std::move(layers));
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return PointCloud(std::move(pts));
}

FixtureBundle load_fixture_bundle(const fs::path& dir) {
  FixtureBundle b{dir / "weights.bin", read_cloud_csv(dir / "cloud.csv"), {}, {}, {}, std::nullopt, 1e-2};
  if (!fs::exists(b.weights_path)) throw std::runtime_error("fixture bundle lacks weights.bin");
  const Eigen::MatrixXd f = read_matrix_csv(dir / "feature.csv");
  if (f.size() != kFeatureDim) throw ParseError("feature.csv must hold 1024 values", 1);
  b.feature = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  if (fs::exists(dir / "jacobian.csv")) {
    b.jacobian = read_matrix_csv(dir / "jacobian.csv");
    if (b.jacobian.rows() != kFeatureDim || b.jacobian.cols() != 6) {
      throw ParseError("jacobian.csv must be 1024 x 6", 1);
    }
  }
  if (fs::exists(dir / "twist.csv")) {
    const Eigen::MatrixXd t = read_matrix_csv(dir / "twist.csv");
    if (t.size() != 6) throw ParseError("twist.csv must hold 6 values", 1);
    b.twist = Eigen::Map<const Eigen::VectorXd>(t.data(), 6);
  }
  if (fs::exists(dir / "source.csv")) b.source = read_cloud_csv(dir / "source.csv");
  if (fs::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    const auto meta = nlohmann::json::parse(in);
    b.perturbation = meta.value("perturbation", 1e-2);
  }
  return b;
}

namespace {

Mesh grid_surface(int nu, int nv, const std::function<Vec3(double, double)>& f, bool wrap_u,
                  bool wrap_v) {
  Mesh m;
  const int cu = wrap_u ? nu : nu + 1;
  const int cv = wrap_v ? nv : nv + 1;
  for (int i = 0; i < cu; ++i) {
    for (int j = 0; j < cv; ++j) m.vertices.push_back(f(double(i) / nu, double(j) / nv));
  }
  auto at = [&](int i, int j) {
    return static_cast<std::size_t>((i % cu) * cv + (j % cv));
  };
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  return m;
}

}  // namespace

std::vector<fs::path> write_synthetic_corpus(const fs::path& dir, std::size_t count,
                                             std::uint64_t seed) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double kTau = 2.0 * std::numbers::pi;
  static constexpr const char* kNames[] = {"ellipsoid", "torus", "cylinder", "cone", "blob"};

  std::vector<fs::path> paths;
  for (std::size_t s = 0; s < count; ++s) {
    const int kind = static_cast<int>(s % 5);
    const Vec3 axes(0.5 + u(rng), 0.5 + u(rng), 0.5 + u(rng));
    // Low-frequency bumps break the symmetry of the primitive.
    const Vec3 bump(0.1 + 0.2 * u(rng), 0.1 + 0.2 * u(rng), 0.1 + 0.2 * u(rng));
    const double phase = kTau * u(rng);
    auto deform = [=](Vec3 p) {
      const double w = 1.0 + bump.x() * std::sin(2.0 * p.x() + phase) +
                       bump.y() * std::cos(3.0 * p.y() - phase) + bump.z() * p.z() * p.x();
      return Vec3(p.x() * axes.x() * w, p.y() * axes.y(), p.z() * axes.z() + 0.3 * p.x() * p.x());
    };
    Mesh m;
    switch (kind) {
      case 0:
        m = grid_surface(32, 24, [&](double a, double b) {
              const double th = kTau * a, ph = std::numbers::pi * b;
              return deform({std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th), std::cos(ph)});
            }, true, false);
        break;
      case 1: {
        const double r = 0.25 + 0.2 * u(rng);
        m = grid_surface(40, 16, [&](double a, double b) {
              const double th = kTau * a, ph = kTau * b;
              return deform({(1 + r * std::cos(ph)) * std::cos(th), (1 + r * std::cos(ph)) * std::sin(th),
                             r * std::sin(ph)});
            }, true, true);
        break;
      }
      case 2:
        m = grid_surface(32, 20, [&](double a, double b) {
              const double th = kTau * a;
              return deform({std::cos(th), std::sin(th), 2.0 * b - 1.0});
            }, true, false);
        break;
      case 3:
        m = grid_surface(32, 20, [&](double a, double b) {
              const double th = kTau * a;
              return deform({(1.0 - b) * std::cos(th), (1.0 - b) * std::sin(th), 2.0 * b - 1.0});
            }, true, false);
        break;
      default: {
        const double k1 = 2.0 + 3.0 * u(rng), k2 = 2.0 + 3.0 * u(rng);
        m = grid_surface(36, 24, [&](double a, double b) {
              const double th = kTau * a, ph = std::numbers::pi * b;
              const double rad = 1.0 + 0.25 * std::sin(k1 * th) * std::sin(k2 * ph);
              return deform(rad * Vec3(std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th),
                                       std::cos(ph)));
            }, true, false);
        break;
      }
    }
    std::ostringstream name;
    name << std::setw(3) << std::setfill('0') << s << '_' << kNames[kind] << ".off";
    const fs::path p = dir / name.str();
    write_off(p, m, 10);
    paths.push_back(p);
  }
  return paths;
}

std::vector<fs::path> list_corpus(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".off") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pnlk
