#include "flowservo/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iz));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double cell, const Vec3& p) {
  const Vec3 q = p / cell;
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double tx = smooth(q.x() - fx), ty = smooth(q.y() - fy), tz = smooth(q.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * lattice_value(seed, ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

void add_grid(std::vector<ScenePoint>& out, std::uint64_t seed, double cell, double x0, double x1,
              double y0, double y1, double z, double spacing) {
  if (y1 < y0) return;
  const int nx = static_cast<int>(std::floor((x1 - x0) / spacing)) + 1;
  const int ny = static_cast<int>(std::floor((y1 - y0) / spacing)) + 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec3 p{x0 + i * spacing, y0 + j * spacing, z};
      out.push_back({p, static_cast<float>(texture_intensity(seed, cell, p))});
    }
  }
}

// Horizontal plane at height y; spacing grows with depth so the on-screen density
// stays roughly constant.
void add_desk(std::vector<ScenePoint>& out, std::uint64_t seed, double cell, double x0, double x1,
              double y, double z0, double z1, double spacing_per_m) {
  for (double z = z0; z <= z1; z += spacing_per_m * z) {
    const double step = spacing_per_m * z;
    const int nx = static_cast<int>(std::floor((x1 - x0) / step)) + 1;
    for (int i = 0; i < nx; ++i) {
      const Vec3 p{x0 + i * step, y, z};
      out.push_back({p, static_cast<float>(texture_intensity(seed, cell, p))});
    }
  }
}

// Relative depth gap below which two splats count as the same surface.
constexpr double kSameSurface = 0.01;

}  // namespace

double texture_intensity(std::uint64_t seed, double cell, const Vec3& p) {
  // Two octaves; the coarse one dominates so the image stays smooth at pixel scale.
  const double coarse = value_noise(seed, 2.0 * cell, p);
  const double fine = value_noise(seed ^ 0x5bd1e995ULL, cell, p);
  return std::clamp(0.65 * coarse + 0.35 * fine, 0.0, 1.0);
}

SyntheticScene generate_scene(const SceneConfig& config) {
  const Vec3 lo = config.extent_min;
  const Vec3 hi = config.extent_max;
  if (!((hi - lo).array() > 0.0).all()) throw DomainError("scene extent must have positive size");
  if (!(config.wall_spacing > 0.0) || !(config.surface_spacing > 0.0) || !(config.texture_cell > 0.0)) {
    throw DomainError("scene spacings must be positive");
  }
  if (config.clutter_patches < 0 || !(config.patch_size_min > 0.0) ||
      config.patch_size_max < config.patch_size_min) {
    throw DomainError("invalid clutter patch parameters");
  }

  SyntheticScene scene;
  scene.seed = config.seed;
  scene.extent_min = lo;
  scene.extent_max = hi;
  const std::uint64_t tex_seed = splitmix64(config.seed ^ 0x7e57u);

  add_grid(scene.points, tex_seed, config.texture_cell, lo.x(), hi.x(), lo.y(), hi.y(), hi.z(),
           config.wall_spacing);
  const double desk_y = config.desk_height;
  const bool has_desk = desk_y > lo.y() && desk_y < hi.y();
  if (has_desk) {
    add_desk(scene.points, tex_seed, config.texture_cell, lo.x(), hi.x(), desk_y, lo.z(), hi.z(),
             config.surface_spacing);
  }
  const double top_limit = has_desk ? desk_y : hi.y();

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double depth_span = hi.z() - lo.z();
  for (int k = 0; k < config.clutter_patches; ++k) {
    double side = config.patch_size_min + unit(rng) * (config.patch_size_max - config.patch_size_min);
    side = std::min({side, hi.x() - lo.x(), top_limit - lo.y()});
    // Keep patches off the wall plane so they have their own depth.
    const double z = lo.z() + unit(rng) * 0.8 * depth_span;
    // Spread sideways in proportion to depth so patches stay near the optical axis.
    const double half = std::min(0.6 * z, (hi.x() - lo.x() - side) / 2);
    const double cx = (lo.x() + hi.x()) / 2 + (2.0 * unit(rng) - 1.0) * half;
    // Standing on the desk when there is one, otherwise anywhere in the box.
    const double bottom = has_desk ? top_limit : lo.y() + side + unit(rng) * (hi.y() - lo.y() - side);
    add_grid(scene.points, tex_seed, config.texture_cell, cx - side / 2, cx + side / 2, bottom - side,
             bottom, z, config.surface_spacing * z);
  }
  if (scene.points.size() < 1000) {
    throw DomainError("scene has " + std::to_string(scene.points.size()) +
                      " points; at least 1000 required");
  }
  return scene;
}

RenderResult render(const SyntheticScene& scene, const Pose& pose, const Intrinsics& k) {
  const int w = k.width, h = k.height;
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  RenderResult out;
  out.image = {w, h, std::vector<float>(n, 0.0f)};
  out.depth = {w, h, std::vector<double>(n, DepthMap::kInvalid)};
  std::vector<double> zbuf(n, std::numeric_limits<double>::infinity());
  std::vector<double> center_dist(n, std::numeric_limits<double>::infinity());
  std::vector<float>& img = out.image.intensities;

  const Mat3 rt = pose.rotation.transpose();
  const Vec3 tc = -rt * pose.translation;
  for (const ScenePoint& sp : scene.points) {
    const Vec3 pc = rt * sp.position + tc;
    const double z = pc.z();
    if (!(z > kMinDepth)) continue;
    const double uf = k.fx * pc.x() / z + k.cx;
    const double vf = k.fy * pc.y() / z + k.cy;
    const double u = std::floor(uf + 0.5);
    const double v = std::floor(vf + 0.5);
    if (u < 0.0 || v < 0.0 || u >= w || v >= h) continue;
    const std::size_t idx = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
    const double d2 = (uf - u) * (uf - u) + (vf - v) * (vf - v);
    // Depths within kSameSurface of each other belong to one surface; there the point
    // nearest the pixel center wins, so coplanar points do not flicker.
    const double z_old = zbuf[idx];
    const bool empty = !std::isfinite(z_old);
    const bool same_surface = !empty && std::abs(z - z_old) <= kSameSurface * z_old;
    if (empty || (same_surface && d2 < center_dist[idx]) || (!same_surface && z < z_old)) {
      zbuf[idx] = z;
      center_dist[idx] = d2;
      img[idx] = sp.intensity;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(zbuf[i])) out.depth.depths[i] = zbuf[i];
  }
  return out;
}

FlowField flow_from_depth(const DepthMap& depth_a, const Pose& pose_a, const Pose& pose_b,
                          const Intrinsics& k) {
  if (depth_a.width != k.width || depth_a.height != k.height) {
    throw DomainError("flow_from_depth: depth map does not match intrinsics");
  }
  FlowField flow(k.width, k.height);
  const Pose b_from_a = pose_b.inverse() * pose_a;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (!depth_a.valid(u, v)) continue;
      const double z = depth_a.at(u, v);
      const Vec3 pa{z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
      const Vec3 pb = b_from_a.transform(pa);
      if (!(pb.z() > kMinDepth)) continue;
      const double ub = k.fx * pb.x() / pb.z() + k.cx;
      const double vb = k.fy * pb.y() / pb.z() + k.cy;
      if (!(ub >= -0.5 && ub < k.width - 0.5 && vb >= -0.5 && vb < k.height - 0.5)) continue;
      flow.set(u, v, static_cast<float>(ub - u), static_cast<float>(vb - v));
    }
  }
  return flow;
}

FlowField analytic_flow(const SyntheticScene& scene, const Pose& pose_a, const Pose& pose_b,
                        const Intrinsics& intrinsics) {
  return flow_from_depth(render(scene, pose_a, intrinsics).depth, pose_a, pose_b, intrinsics);
}

PhotometricError photometric_error(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.intensities.size() != b.intensities.size()) {
    throw DomainError("photometric_error: image sizes differ");
  }
  PhotometricError e;
  for (std::size_t i = 0; i < a.intensities.size(); ++i) {
    const double d = static_cast<double>(a.intensities[i]) - static_cast<double>(b.intensities[i]);
    e.sum += d * d;
  }
  e.mean = a.intensities.empty() ? 0.0 : e.sum / static_cast<double>(a.intensities.size());
  return e;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.intensities.size());
  std::transform(image.intensities.begin(), image.intensities.end(), bytes.begin(), [](float f) {
    return static_cast<unsigned char>(std::lround(std::clamp(f, 0.0f, 1.0f) * 255.0f));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw Error("unsupported PGM " + path.string());
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error("truncated PGM " + path.string());
  Image img{w, h, {}};
  img.intensities.reserve(bytes.size());
  for (unsigned char b : bytes) img.intensities.push_back(static_cast<float>(b) / 255.0f);
  return img;
}

}  // namespace flowservo
