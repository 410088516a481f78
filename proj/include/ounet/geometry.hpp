#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ounet/errors.hpp"

namespace ounet {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Point3 operator*(Point3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Point3 operator*(double s, Point3 a) { return a * s; }
  friend constexpr bool operator==(Point3 a, Point3 b) = default;

  constexpr double dot(Point3 o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Point3 cross(Point3 a, Point3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double squared_distance(Point3 a, Point3 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Point3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}

  std::size_t count() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
  Point3& operator[](std::size_t i) { return points[i]; }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline Point3 centroid(const PointCloud& pc) {
  Point3 c;
  for (const auto& p : pc.points) c = c + p;
  return pc.empty() ? c : c * (1.0 / static_cast<double>(pc.count()));
}

// Max distance to the centroid; stands in for the bounding-sphere radius.
inline double bounding_sphere_radius(const PointCloud& pc) {
  const Point3 c = centroid(pc);
  double r2 = 0.0;
  for (const auto& p : pc.points) r2 = std::max(r2, squared_distance(p, c));
  return std::sqrt(r2);
}

// ---------------------------------------------------------------------------
// Rigid poses

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Point3 operator*(Point3 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z, m[3] * p.x + m[4] * p.y + m[5] * p.z,
            m[6] * p.x + m[7] * p.y + m[8] * p.z};
  }
  Mat3 transposed() const { return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}}; }
  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a.m[i * 3 + k] * b.m[k * 3 + j];
        r.m[i * 3 + j] = s;
      }
    return r;
  }
};

// R = Rz * Ry * Rx, angles in radians.
inline Mat3 rotation_from_euler(double rx, double ry, double rz) {
  const double cx = std::cos(rx), sx = std::sin(rx);
  const double cy = std::cos(ry), sy = std::sin(ry);
  const double cz = std::cos(rz), sz = std::sin(rz);
  const Mat3 mx{{1, 0, 0, 0, cx, -sx, 0, sx, cx}};
  const Mat3 my{{cy, 0, sy, 0, 1, 0, -sy, 0, cy}};
  const Mat3 mz{{cz, -sz, 0, sz, cz, 0, 0, 0, 1}};
  return mz * my * mx;
}

struct Pose {
  std::array<double, 3> euler{0, 0, 0};
  Point3 translation;

  bool is_identity() const {
    return euler == std::array<double, 3>{0, 0, 0} && translation == Point3{};
  }
  Mat3 rotation() const { return rotation_from_euler(euler[0], euler[1], euler[2]); }
  Point3 apply(Point3 p) const { return rotation() * p + translation; }
  Point3 inverse_apply(Point3 p) const { return rotation().transposed() * (p - translation); }
};

// ---------------------------------------------------------------------------
// Analytic shapes

enum class ShapeKind { kSphere, kTorus, kBox, kSuperellipsoid };

inline std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSphere: return "sphere";
    case ShapeKind::kTorus: return "torus";
    case ShapeKind::kBox: return "box";
    case ShapeKind::kSuperellipsoid: return "superellipsoid";
  }
  return "unknown";
}

inline ShapeKind shape_kind_from_string(std::string_view s) {
  if (s == "sphere") return ShapeKind::kSphere;
  if (s == "torus") return ShapeKind::kTorus;
  if (s == "box") return ShapeKind::kBox;
  if (s == "superellipsoid") return ShapeKind::kSuperellipsoid;
  throw ConfigError("unknown shape kind '" + std::string(s) + "'");
}

// Parameters per kind:
//   sphere          r
//   torus           R (major), r (minor), axis z
//   box             a, b, c (half extents)
//   superellipsoid  a, b, c (semi axes), e (exponent in [2, 8])
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kSphere;
  std::map<std::string, double> params;
  Pose pose;

  static ShapeSpec sphere(double r) { return {ShapeKind::kSphere, {{"r", r}}, {}}; }
  static ShapeSpec torus(double major, double minor) {
    return {ShapeKind::kTorus, {{"R", major}, {"r", minor}}, {}};
  }
  static ShapeSpec box(double a, double b, double c) {
    return {ShapeKind::kBox, {{"a", a}, {"b", b}, {"c", c}}, {}};
  }
  static ShapeSpec superellipsoid(double a, double b, double c, double e) {
    return {ShapeKind::kSuperellipsoid, {{"a", a}, {"b", b}, {"c", c}, {"e", e}}, {}};
  }
  static ShapeSpec defaults(ShapeKind kind) {
    switch (kind) {
      case ShapeKind::kSphere: return sphere(1.0);
      case ShapeKind::kTorus: return torus(0.6, 0.25);
      case ShapeKind::kBox: return box(0.8, 0.6, 0.4);
      case ShapeKind::kSuperellipsoid: return superellipsoid(0.8, 0.6, 0.5, 4.0);
    }
    return sphere(1.0);
  }

  double param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
      throw ConfigError("shape '" + std::string(ounet::to_string(kind)) + "' is missing parameter '" +
                        name + "'");
    return it->second;
  }

  void validate() const {
    auto positive = [&](const char* name) {
      const double v = param(name);
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("shape parameter '") + name + "' must be positive");
    };
    switch (kind) {
      case ShapeKind::kSphere: positive("r"); break;
      case ShapeKind::kTorus:
        positive("R");
        positive("r");
        if (param("r") >= param("R")) throw ConfigError("torus requires r < R");
        break;
      case ShapeKind::kBox:
        positive("a");
        positive("b");
        positive("c");
        break;
      case ShapeKind::kSuperellipsoid:
        positive("a");
        positive("b");
        positive("c");
        if (param("e") < 2.0 || param("e") > 8.0)
          throw ConfigError("superellipsoid exponent must lie in [2, 8]");
        break;
    }
  }

  // "kind:key=value,key=value"; pose keys rx, ry, rz (radians), tx, ty, tz.
  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << ounet::to_string(kind);
    char sep = ':';
    for (const auto& [k, v] : params) {
      os << sep << k << '=' << v;
      sep = ',';
    }
    const char* pose_keys[] = {"rx", "ry", "rz"};
    for (int i = 0; i < 3; ++i)
      if (pose.euler[i] != 0.0) {
        os << sep << pose_keys[i] << '=' << pose.euler[i];
        sep = ',';
      }
    const char* t_keys[] = {"tx", "ty", "tz"};
    for (int i = 0; i < 3; ++i)
      if (pose.translation[i] != 0.0) {
        os << sep << t_keys[i] << '=' << pose.translation[i];
        sep = ',';
      }
    return os.str();
  }

  static ShapeSpec parse(std::string_view text) {
    const auto colon = text.find(':');
    ShapeSpec spec = defaults(shape_kind_from_string(text.substr(0, colon)));
    if (colon == std::string_view::npos) return spec;
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("malformed shape parameter '" + std::string(item) + "'");
      const std::string key(item.substr(0, eq));
      double value = 0.0;
      try {
        std::size_t used = 0;
        const std::string vs(item.substr(eq + 1));
        value = std::stod(vs, &used);
        if (used != vs.size()) throw std::invalid_argument(vs);
      } catch (const std::exception&) {
        throw ConfigError("malformed shape parameter value in '" + std::string(item) + "'");
      }
      if (key == "rx") spec.pose.euler[0] = value;
      else if (key == "ry") spec.pose.euler[1] = value;
      else if (key == "rz") spec.pose.euler[2] = value;
      else if (key == "tx") spec.pose.translation.x = value;
      else if (key == "ty") spec.pose.translation.y = value;
      else if (key == "tz") spec.pose.translation.z = value;
      else if (spec.params.count(key)) spec.params[key] = value;
      else
        throw ConfigError("unknown parameter '" + key + "' for shape '" +
                          std::string(ounet::to_string(spec.kind)) + "'");
    }
    spec.validate();
    return spec;
  }
};

namespace detail {

inline double superellipsoid_implicit(Point3 p, double a, double b, double c, double e) {
  return std::pow(std::abs(p.x / a), e) + std::pow(std::abs(p.y / b), e) +
         std::pow(std::abs(p.z / c), e);
}

// Radial distance to the surface along unit direction u (F is homogeneous of degree e).
inline double superellipsoid_radius(Point3 u, double a, double b, double c, double e) {
  return std::pow(superellipsoid_implicit(u, a, b, c, e), -1.0 / e);
}

inline void orthonormal_basis(Point3 n, Point3& t1, Point3& t2) {
  const Point3 helper = std::abs(n.x) < 0.9 ? Point3{1, 0, 0} : Point3{0, 1, 0};
  t1 = cross(n, helper);
  t1 = t1 * (1.0 / t1.norm());
  t2 = cross(n, t1);
}

// Unsigned distance to the superellipsoid surface by direct minimisation over
// the radial parameterisation S(u) = u * rho(u).
inline double superellipsoid_distance(Point3 p, double a, double b, double c, double e) {
  auto surface = [&](Point3 u) {
    u = u * (1.0 / u.norm());
    return u * superellipsoid_radius(u, a, b, c, e);
  };
  auto dist2 = [&](Point3 u) { return squared_distance(p, surface(u)); };

  Point3 best_dir = p.squared_norm() > 0.0 ? p : Point3{0, 0, 1};
  double best = dist2(best_dir);
  if (best < 1e-26) return std::sqrt(best);

  // Coarse global search over a Fibonacci sphere guards against local minima.
  constexpr int kCoarse = 256;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kCoarse; ++i) {
    const double zc = 1.0 - 2.0 * (i + 0.5) / kCoarse;
    const double rr = std::sqrt(std::max(0.0, 1.0 - zc * zc));
    const Point3 u{rr * std::cos(golden * i), rr * std::sin(golden * i), zc};
    const double d = dist2(u);
    if (d < best) {
      best = d;
      best_dir = u;
    }
  }

  // Compass search on a moving tangent chart.
  Point3 center = best_dir * (1.0 / best_dir.norm());
  double step = 0.1;
  for (int iter = 0; iter < 2000 && step > 1e-12; ++iter) {
    Point3 t1, t2;
    orthonormal_basis(center, t1, t2);
    bool improved = false;
    const Point3 moves[4] = {t1 * step, t1 * -step, t2 * step, t2 * -step};
    for (const auto& mv : moves) {
      Point3 u = center + mv;
      u = u * (1.0 / u.norm());
      const double d = dist2(u);
      if (d < best) {
        best = d;
        center = u;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return std::sqrt(best);
}

}  // namespace detail

// Signed distance (negative inside). Sphere, torus and box use closed forms; the
// superellipsoid distance is found by numerical minimisation over its surface.
inline double signed_distance(const ShapeSpec& spec, Point3 world) {
  const Point3 p = spec.pose.is_identity() ? world : spec.pose.inverse_apply(world);
  switch (spec.kind) {
    case ShapeKind::kSphere: return p.norm() - spec.param("r");
    case ShapeKind::kTorus: {
      const double q = std::hypot(p.x, p.y) - spec.param("R");
      return std::hypot(q, p.z) - spec.param("r");
    }
    case ShapeKind::kBox: {
      const Point3 q{std::abs(p.x) - spec.param("a"), std::abs(p.y) - spec.param("b"),
                     std::abs(p.z) - spec.param("c")};
      const Point3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
      return outside.norm() + std::min(std::max({q.x, q.y, q.z}), 0.0);
    }
    case ShapeKind::kSuperellipsoid: {
      const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c"),
                   e = spec.param("e");
      const double d = detail::superellipsoid_distance(p, a, b, c, e);
      return detail::superellipsoid_implicit(p, a, b, c, e) < 1.0 ? -d : d;
    }
  }
  throw ConfigError("unknown shape kind");
}

namespace detail {

inline Point3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Point3 v{n(rng), n(rng), n(rng)};
    const double len = v.norm();
    if (len > 1e-12) return v * (1.0 / len);
  }
}

}  // namespace detail

// Uniform, area-weighted sampling of an analytic surface.
inline PointCloud sample_surface(const ShapeSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample_surface requires n >= 1");
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Point3> out;
  out.reserve(n);

  switch (spec.kind) {
    case ShapeKind::kSphere: {
      const double r = spec.param("r");
      for (std::size_t i = 0; i < n; ++i) out.push_back(detail::random_unit(rng) * r);
      break;
    }
    case ShapeKind::kTorus: {
      const double big = spec.param("R"), small = spec.param("r");
      while (out.size() < n) {
        const double theta = 2.0 * std::numbers::pi * uni(rng);
        const double phi = 2.0 * std::numbers::pi * uni(rng);
        // Area element is proportional to (R + r cos phi).
        if (uni(rng) * (big + small) > big + small * std::cos(phi)) continue;
        const double ring = big + small * std::cos(phi);
        out.push_back({ring * std::cos(theta), ring * std::sin(theta), small * std::sin(phi)});
      }
      break;
    }
    case ShapeKind::kBox: {
      const double h[3] = {spec.param("a"), spec.param("b"), spec.param("c")};
      const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
      const double total = areas[0] + areas[1] + areas[2];
      for (std::size_t i = 0; i < n; ++i) {
        const double pick = uni(rng) * total;
        const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
        Point3 p;
        for (int k = 0; k < 3; ++k) p[k] = (2.0 * uni(rng) - 1.0) * h[k];
        p[axis] = uni(rng) < 0.5 ? -h[axis] : h[axis];
        out.push_back(p);
      }
      break;
    }
    case ShapeKind::kSuperellipsoid: {
      const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c"),
                   e = spec.param("e");
      // Rejection on the Jacobian of the radial map: dA = rho^2 / (n . u) dOmega.
      auto weight = [&](Point3 u) {
        const double rho = detail::superellipsoid_radius(u, a, b, c, e);
        const Point3 s = u * rho;
        Point3 g{std::pow(std::abs(s.x / a), e - 1) / a * (s.x < 0 ? -1 : 1),
                 std::pow(std::abs(s.y / b), e - 1) / b * (s.y < 0 ? -1 : 1),
                 std::pow(std::abs(s.z / c), e - 1) / c * (s.z < 0 ? -1 : 1)};
        g = g * (1.0 / g.norm());
        return rho * rho / std::max(1e-12, g.dot(u));
      };
      double wmax = 0.0;
      std::mt19937_64 probe(0x5eed);
      for (int i = 0; i < 4096; ++i) wmax = std::max(wmax, weight(detail::random_unit(probe)));
      wmax *= 1.25;
      while (out.size() < n) {
        const Point3 u = detail::random_unit(rng);
        if (uni(rng) * wmax > weight(u)) continue;
        out.push_back(u * detail::superellipsoid_radius(u, a, b, c, e));
      }
      break;
    }
  }
  if (!spec.pose.is_identity())
    for (auto& p : out) p = spec.pose.apply(p);
  return PointCloud(std::move(out));
}

// ---------------------------------------------------------------------------
// Normalisation

// Maps p -> p * scale + offset.
struct CubeTransform {
  double scale = 1.0;
  Point3 offset;

  Point3 apply(Point3 p) const { return p * scale + offset; }
  Point3 invert(Point3 q) const { return (q - offset) * (1.0 / scale); }

  PointCloud apply(const PointCloud& pc) const {
    PointCloud out = pc;
    for (auto& p : out.points) p = apply(p);
    return out;
  }
  PointCloud invert(const PointCloud& pc) const {
    PointCloud out = pc;
    for (auto& p : out.points) p = invert(p);
    return out;
  }
};

inline CubeTransform unit_cube_transform(const PointCloud& pc) {
  if (pc.empty()) throw InputError("normalize_unit_cube requires a non-empty cloud");
  Point3 lo = pc[0], hi = pc[0];
  for (const auto& p : pc.points)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  const Point3 center = (lo + hi) * 0.5;
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  CubeTransform t;
  t.scale = extent > 0.0 ? 2.0 / extent : 1.0;
  t.offset = center * -t.scale;
  return t;
}

inline PointCloud clamp_to_cube(PointCloud pc, double bound = 1.0) {
  for (auto& p : pc.points)
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k], -bound, bound);
  return pc;
}

// The clamp only removes rounding overshoot of the extreme points.
inline std::pair<PointCloud, CubeTransform> normalize_unit_cube(const PointCloud& pc) {
  const CubeTransform t = unit_cube_transform(pc);
  return {clamp_to_cube(t.apply(pc)), t};
}

// ---------------------------------------------------------------------------
// Corruption and augmentation

struct NoiseSpec {
  double sigma_fraction = 0.0;
  std::uint64_t seed = 0;
};

// Sigma is a fraction of the bounding-sphere radius; results are clamped just
// inside the unit cube. A zero sigma returns the cloud untouched.
inline PointCloud add_gaussian_noise(const PointCloud& pc, const NoiseSpec& spec) {
  if (pc.empty()) throw InputError("add_gaussian_noise requires a non-empty cloud");
  if (spec.sigma_fraction < 0.0) throw ConfigError("noise sigma_fraction must be >= 0");
  if (spec.sigma_fraction == 0.0) return pc;
  const double sigma = spec.sigma_fraction * bounding_sphere_radius(pc);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n(0.0, sigma);
  constexpr double kBound = 1.0 - 1e-6;
  PointCloud out = pc;
  for (auto& p : out.points)
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k] + n(rng), -kBound, kBound);
  return out;
}

struct AugmentConfig {
  double mirror_probability = 0.5;
  double elastic_granularity = 0.4;
  double elastic_magnitude = 0.08;
};

// A sampled augmentation: per-axis mirror flags and a displacement lattice with
// trilinear interpolation. The same instance is applied to every cloud of a pair.
class Augmentation {
 public:
  Augmentation(std::uint64_t seed, const AugmentConfig& cfg = {}) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int k = 0; k < 3; ++k) mirror_[k] = uni(rng) < cfg.mirror_probability;
    // Lattice covers [-1 - g/2, 1 + g/2] so interpolation never extrapolates.
    origin_ = -1.0 - 0.5 * cfg.elastic_granularity;
    side_ = static_cast<int>(std::ceil((2.0 + cfg.elastic_granularity) / cfg.elastic_granularity)) + 1;
    lattice_.resize(static_cast<std::size_t>(side_) * side_ * side_);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    for (auto& v : lattice_)
      v = Point3{amp(rng), amp(rng), amp(rng)} * cfg.elastic_magnitude;
  }

  bool mirrored(int axis) const { return mirror_[axis]; }

  Point3 displacement(Point3 p) const {
    if (cfg_.elastic_magnitude == 0.0) return {};
    double f[3];
    int i0[3];
    for (int k = 0; k < 3; ++k) {
      const double g = (p[k] - origin_) / cfg_.elastic_granularity;
      i0[k] = std::clamp(static_cast<int>(std::floor(g)), 0, side_ - 2);
      f[k] = std::clamp(g - i0[k], 0.0, 1.0);
    }
    Point3 d;
    for (int c = 0; c < 8; ++c) {
      const int dx = (c >> 2) & 1, dy = (c >> 1) & 1, dz = c & 1;
      const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
      d = d + at(i0[0] + dx, i0[1] + dy, i0[2] + dz) * w;
    }
    return d;
  }

  Point3 apply(Point3 p) const {
    for (int k = 0; k < 3; ++k)
      if (mirror_[k]) p[k] = -p[k];
    p = p + displacement(p);
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k], -1.0, 1.0);
    return p;
  }

  PointCloud apply(const PointCloud& pc) const {
    PointCloud out = pc;
    for (auto& p : out.points) p = apply(p);
    return out;
  }

 private:
  const Point3& at(int x, int y, int z) const {
    return lattice_[(static_cast<std::size_t>(x) * side_ + y) * side_ + z];
  }

  AugmentConfig cfg_;
  std::array<bool, 3> mirror_{false, false, false};
  double origin_ = -1.0;
  int side_ = 2;
  std::vector<Point3> lattice_;
};

inline std::pair<PointCloud, PointCloud> augment(const std::pair<PointCloud, PointCloud>& pair,
                                                 std::uint64_t seed,
                                                 const AugmentConfig& cfg = {}) {
  const Augmentation aug(seed, cfg);
  return {aug.apply(pair.first), aug.apply(pair.second)};
}

}  // namespace ounet
