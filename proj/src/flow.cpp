#include "flowservo/flow.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "flowservo/error.hpp"

namespace flowservo {

static_assert(std::endian::native == std::endian::little, ".flo I/O assumes a little-endian host");

namespace {

// Middlebury convention for unknown flow: components above 1e9 in magnitude.
constexpr float kUnknownFlow = 1e10f;
constexpr float kUnknownThreshold = 1e9f;
constexpr std::size_t kFloHeaderBytes = 12;

bool known(float f) { return std::isfinite(f) && std::abs(f) <= kUnknownThreshold; }

}  // namespace

FlowField::FlowField(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DomainError("flow field size must be non-negative");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  u_.assign(n, 0.0f);
  v_.assign(n, 0.0f);
  valid_.assign(n, 0);
}

void FlowField::set(int x, int y, float du, float dv) {
  const std::size_t i = index(x, y);
  u_[i] = du;
  v_[i] = dv;
  valid_[i] = 1;
}

void FlowField::invalidate(int x, int y) {
  const std::size_t i = index(x, y);
  u_[i] = 0.0f;
  v_[i] = 0.0f;
  valid_[i] = 0;
}

std::size_t FlowField::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t m : valid_) n += m;
  return n;
}

FlowField FlowField::from_components(int width, int height, std::vector<float> u, std::vector<float> v) {
  FlowField f(width, height);
  if (u.size() != f.pixel_count() || v.size() != f.pixel_count()) {
    throw DomainError("flow component size does not match dimensions");
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (known(u[i]) && known(v[i])) {
      f.u_[i] = u[i];
      f.v_[i] = v[i];
      f.valid_[i] = 1;
    }
  }
  return f;
}

FlowField FlowField::zeros(int width, int height) {
  FlowField f(width, height);
  f.valid_.assign(f.pixel_count(), 1);
  return f;
}

Eigen::VectorXd FlowSampleSet::displacement_vector() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(2 * samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[static_cast<Eigen::Index>(2 * i)] = samples[i].dx;
    out[static_cast<Eigen::Index>(2 * i + 1)] = samples[i].dy;
  }
  return out;
}

FlowField compose_flows(const FlowField& ab, const FlowField& bc) {
  if (ab.width() != bc.width() || ab.height() != bc.height()) {
    throw DomainError("compose_flows: flow fields differ in size");
  }
  FlowField out(ab.width(), ab.height());
  for (int y = 0; y < ab.height(); ++y) {
    for (int x = 0; x < ab.width(); ++x) {
      if (ab.valid(x, y) && bc.valid(x, y)) {
        out.set(x, y, ab.u(x, y) + bc.u(x, y), ab.v(x, y) + bc.v(x, y));
      }
    }
  }
  return out;
}

std::vector<int> SampleGrid::positions(int extent) const {
  if (stride <= 0) throw DomainError("sample stride must be positive");
  std::vector<int> out;
  for (int p = stride / 2; p < extent; p += stride) out.push_back(p);
  return out;
}

std::size_t SampleGrid::cell_count(int width, int height) const {
  return positions(width).size() * positions(height).size();
}

FlowSampleSet subsample(const FlowField& flow, const Intrinsics& k, const SampleGrid& grid,
                        std::size_t min_samples) {
  if (flow.width() != k.width || flow.height() != k.height) {
    throw DomainError("subsample: flow size does not match intrinsics");
  }
  FlowSampleSet out;
  const std::vector<int> us = grid.positions(flow.width());
  const std::vector<int> vs = grid.positions(flow.height());
  for (int v : vs) {
    for (int u : us) {
      if (!flow.valid(u, v)) continue;
      FlowSample s;
      s.u = u;
      s.v = v;
      s.coord = normalize_pixel(k, u, v);
      s.dx = static_cast<double>(flow.u(u, v)) / k.fx;
      s.dy = static_cast<double>(flow.v(u, v)) / k.fy;
      out.samples.push_back(s);
    }
  }
  if (out.size() < min_samples) {
    throw CoverageError("subsample: " + std::to_string(out.size()) + " valid samples, " +
                            std::to_string(min_samples) + " required",
                        out.size(), min_samples);
  }
  return out;
}

DepthEstimate depth_from_flow(const FlowSampleSet& flow, const VelocityScrew& twist, double dt,
                              std::span<const double> previous, double fallback_depth,
                              double min_translational_flow) {
  if (!(dt > 0.0)) throw DomainError("depth_from_flow: dt must be positive");
  if (!previous.empty() && previous.size() != flow.size()) {
    throw DomainError("depth_from_flow: previous depth count does not match samples");
  }
  const Vec3 t = twist.linear * dt;
  const Vec3 w = twist.angular * dt;
  if (!(t.norm() > 0.0)) {
    throw UnobservableDepthError("depth_from_flow: twist has no translation");
  }

  DepthEstimate est;
  est.depths.resize(flow.size());
  est.conditioned.assign(flow.size(), false);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const FlowSample& s = flow.samples[i];
    const double x = s.coord.x, y = s.coord.y;
    // Translational flow per unit inverse depth.
    const double ax = -t.x() + x * t.z();
    const double ay = -t.y() + y * t.z();
    // Flow left after removing the depth-independent rotational part.
    const double rx = s.dx - (x * y * w.x() - (1.0 + x * x) * w.y() + y * w.z());
    const double ry = s.dy - ((1.0 + y * y) * w.x() - x * y * w.y() - x * w.z());
    const double norm2 = ax * ax + ay * ay;
    double depth = 0.0;
    bool ok = false;
    if (std::sqrt(norm2) >= min_translational_flow) {
      const double inv_depth = (ax * rx + ay * ry) / norm2;
      depth = 1.0 / inv_depth;
      ok = std::isfinite(depth) && depth > kMinDepth && depth < 1e4;
    }
    est.conditioned[i] = ok;
    est.depths[i] = ok ? depth : (previous.empty() ? fallback_depth : previous[i]);
  }
  return est;
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  const std::size_t n = flow.pixel_count();
  std::vector<std::uint8_t> bytes(kFloHeaderBytes + 8 * n);
  auto put = [&bytes](std::size_t offset, const auto& value) {
    std::memcpy(bytes.data() + offset, &value, sizeof(value));
  };
  put(0, kFloMagic);
  put(4, static_cast<std::int32_t>(flow.width()));
  put(8, static_cast<std::int32_t>(flow.height()));
  const auto u = flow.u_data();
  const auto v = flow.v_data();
  const auto mask = flow.mask();
  for (std::size_t i = 0; i < n; ++i) {
    put(kFloHeaderBytes + 8 * i, mask[i] ? u[i] : kUnknownFlow);
    put(kFloHeaderBytes + 8 * i + 4, mask[i] ? v[i] : kUnknownFlow);
  }
  return bytes;
}

FlowField decode_flo(std::span<const std::uint8_t> bytes) {
  auto get_float = [&bytes](std::size_t offset) {
    float f;
    std::memcpy(&f, bytes.data() + offset, sizeof(f));
    return f;
  };
  auto get_int = [&bytes](std::size_t offset) {
    std::int32_t i;
    std::memcpy(&i, bytes.data() + offset, sizeof(i));
    return i;
  };
  if (bytes.size() < 4) throw FormatError(".flo: truncated magic", bytes.size());
  const float magic = get_float(0);
  if (std::memcmp(&magic, &kFloMagic, sizeof(float)) != 0) {
    throw FormatError(".flo: bad magic number", 0);
  }
  if (bytes.size() < kFloHeaderBytes) throw FormatError(".flo: truncated header", bytes.size());
  const std::int32_t w = get_int(4);
  const std::int32_t h = get_int(8);
  if (w < 0) throw FormatError(".flo: negative width", 4);
  if (h < 0) throw FormatError(".flo: negative height", 8);
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t expected = kFloHeaderBytes + 8 * n;
  if (bytes.size() < expected) throw FormatError(".flo: truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError(".flo: trailing bytes", expected);
  std::vector<float> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = get_float(kFloHeaderBytes + 8 * i);
    v[i] = get_float(kFloHeaderBytes + 8 * i + 4);
  }
  return FlowField::from_components(w, h, std::move(u), std::move(v));
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_flo(flow);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo(bytes);
}

}  // namespace flowservo
