#include "sceneprior/renderer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sceneprior {

namespace {

// One (pixel, face) pair that survived the blur-radius cull, with what the
// backward pass needs to differentiate delta wrt the nearest edge.
struct Candidate {
  std::uint32_t pixel;
  int face;
  double depth;
  double delta;
  int va, vb;     // nearest-edge endpoints
  double t;       // closest-point parameter along the edge
  double dx, dy;  // q - closest point
  double sign;    // +1 inside, -1 outside
  double coef = 0.0;  // d occupancy / d delta
};

struct SoftRaster {
  std::vector<double> values;
  std::vector<Candidate> kept;
  std::size_t degenerate = 0;
};

SoftRaster soft_rasterize(std::span<const double> uv, std::span<const double> depth,
                          const std::vector<bool>& valid, std::span<const Face> faces,
                          const RasterConfig& cfg) {
  cfg.validate();
  const int W = cfg.width, H = cfg.height;
  const double reach = std::sqrt(cfg.blur_radius);
  SoftRaster out;
  out.values.assign(static_cast<std::size_t>(W) * H, 0.0);
  std::vector<Candidate> cands;

  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const Face& f = faces[fi];
    if (!valid[f[0]] || !valid[f[1]] || !valid[f[2]]) continue;
    const double px[3] = {uv[f[0] * 2], uv[f[1] * 2], uv[f[2] * 2]};
    const double py[3] = {uv[f[0] * 2 + 1], uv[f[1] * 2 + 1], uv[f[2] * 2 + 1]};
    const double area2 = (px[1] - px[0]) * (py[2] - py[0]) - (py[1] - py[0]) * (px[2] - px[0]);
    if (std::abs(area2) < 1e-14) {
      ++out.degenerate;
      continue;
    }
    const double fdepth = (depth[f[0]] + depth[f[1]] + depth[f[2]]) / 3.0;
    const double umin = std::min({px[0], px[1], px[2]}) - reach;
    const double umax = std::max({px[0], px[1], px[2]}) + reach;
    const double vmin = std::min({py[0], py[1], py[2]}) - reach;
    const double vmax = std::max({py[0], py[1], py[2]}) + reach;
    const int c0 = std::max(0, static_cast<int>(std::ceil(umin * W - 0.5)));
    const int c1 = std::min(W - 1, static_cast<int>(std::floor(umax * W - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(vmin * H - 0.5)));
    const int r1 = std::min(H - 1, static_cast<int>(std::floor(vmax * H - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      const double qy = (r + 0.5) / H;
      for (int c = c0; c <= c1; ++c) {
        const double qx = (c + 0.5) / W;
        bool inside = true;
        double best = std::numeric_limits<double>::infinity();
        Candidate cand{};
        for (int k = 0; k < 3; ++k) {
          const int a = k, b = (k + 1) % 3;
          const double ex = px[b] - px[a], ey = py[b] - py[a];
          const double edge_fn = ex * (qy - py[a]) - ey * (qx - px[a]);
          if (edge_fn * area2 < 0.0) inside = false;
          const double len2 = ex * ex + ey * ey;
          double t = ((qx - px[a]) * ex + (qy - py[a]) * ey) / len2;
          t = std::clamp(t, 0.0, 1.0);
          const double dx = qx - (px[a] + t * ex), dy = qy - (py[a] + t * ey);
          const double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            cand.va = f[a];
            cand.vb = f[b];
            cand.t = t;
            cand.dx = dx;
            cand.dy = dy;
          }
        }
        if (!inside && best > cfg.blur_radius) continue;
        cand.pixel = static_cast<std::uint32_t>(r * W + c);
        cand.face = static_cast<int>(fi);
        cand.depth = fdepth;
        cand.sign = inside ? 1.0 : -1.0;
        cand.delta = cand.sign * best;
        cands.push_back(cand);
      }
    }
  }

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.pixel != b.pixel) return a.pixel < b.pixel;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.face < b.face;
  });

  const std::size_t K = static_cast<std::size_t>(cfg.faces_per_pixel);
  std::vector<double> s, prefix, suffix;
  for (std::size_t begin = 0; begin < cands.size();) {
    std::size_t end = begin;
    while (end < cands.size() && cands[end].pixel == cands[begin].pixel) ++end;
    const std::size_t n = std::min(end - begin, K);
    s.resize(n);
    prefix.assign(n + 1, 1.0);
    suffix.assign(n + 1, 1.0);
    for (std::size_t i = 0; i < n; ++i) s[i] = ad::sigmoid_value(cands[begin + i].delta / cfg.blend_sigma);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * (1.0 - s[i]);
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * (1.0 - s[i]);
    out.values[cands[begin].pixel] = 1.0 - prefix[n];
    for (std::size_t i = 0; i < n; ++i) {
      Candidate c = cands[begin + i];
      c.coef = s[i] * (1.0 - s[i]) / cfg.blend_sigma * prefix[i] * suffix[i + 1];
      if (c.coef != 0.0) out.kept.push_back(c);
    }
    begin = end;
  }
  return out;
}

}  // namespace

void RasterConfig::validate() const {
  if (width <= 0 || height <= 0) throw Error("bad-config", "raster size must be positive");
  if (faces_per_pixel < 1) throw Error("bad-config", "faces_per_pixel must be >= 1");
  if (!(blur_radius > 0.0) || !(blend_sigma > 0.0))
    throw Error("bad-config", "blur radius and blend sigma must be positive");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Mask InstanceIdMap::mask_of(int id) const {
  Mask m{width, height, std::vector<std::uint8_t>(ids.size(), 0)};
  for (std::size_t i = 0; i < ids.size(); ++i) m.data[i] = ids[i] == id ? 1 : 0;
  return m;
}

SilhouetteMap rasterize_screen(std::span<const std::array<double, 2>> uv,
                               std::span<const double> depth, const std::vector<bool>& valid,
                               std::span<const Face> faces, const RasterConfig& config) {
  std::span<const double> flat(uv.empty() ? nullptr : uv.data()->data(), uv.size() * 2);
  SoftRaster r = soft_rasterize(flat, depth, valid, faces, config);
  return {config.width, config.height, std::move(r.values), r.degenerate};
}

SilhouetteMap rasterize_silhouette(const Mesh& world, const Camera& cam, const RasterConfig& config) {
  if (world.empty()) throw Error("empty-mesh", "cannot rasterize an empty mesh");
  const Projection p = project(world.vertices, cam);
  return rasterize_screen(p.uv, p.depth, p.valid, world.faces, config);
}

SoftSilhouette rasterize_silhouette(const ProjectedPoints& projected, std::span<const Face> faces,
                                    const RasterConfig& config) {
  SoftRaster r = soft_rasterize(projected.uv.value(), projected.depth, projected.valid, faces, config);
  const std::size_t iu = projected.uv.id();
  SoftSilhouette out;
  out.degenerate_faces = r.degenerate;
  out.occupancy = projected.uv.tape().push(
      static_cast<std::size_t>(config.height), static_cast<std::size_t>(config.width),
      std::move(r.values), {projected.uv},
      [iu, kept = std::move(r.kept)](ad::Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gu = t.grad_accum(iu);
        for (const Candidate& c : kept) {
          const double w = g[c.pixel] * c.coef * c.sign * -2.0;
          if (w == 0.0) continue;
          gu[c.va * 2] += w * (1.0 - c.t) * c.dx;
          gu[c.va * 2 + 1] += w * (1.0 - c.t) * c.dy;
          gu[c.vb * 2] += w * c.t * c.dx;
          gu[c.vb * 2 + 1] += w * c.t * c.dy;
        }
      });
  return out;
}

InstanceIdMap rasterize_instance_ids(const std::vector<Mesh>& world_meshes, const Camera& cam,
                                     const RasterConfig& config) {
  config.validate();
  const int W = config.width, H = config.height;
  InstanceIdMap out{W, H, std::vector<int>(static_cast<std::size_t>(W) * H, InstanceIdMap::kBackground)};
  std::vector<double> zbuf(out.ids.size(), std::numeric_limits<double>::infinity());
  for (std::size_t obj = 0; obj < world_meshes.size(); ++obj) {
    const Mesh& mesh = world_meshes[obj];
    const Projection p = project(mesh.vertices, cam);
    for (const Face& f : mesh.faces) {
      if (!p.valid[f[0]] || !p.valid[f[1]] || !p.valid[f[2]]) continue;
      double sx[3], sy[3], iz[3];
      for (int k = 0; k < 3; ++k) {
        sx[k] = p.uv[f[k]][0] * W;
        sy[k] = p.uv[f[k]][1] * H;
        iz[k] = 1.0 / p.depth[f[k]];
      }
      const double area2 = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0]);
      if (std::abs(area2) < 1e-12) continue;
      const int c0 = std::max(0, static_cast<int>(std::ceil(std::min({sx[0], sx[1], sx[2]}) - 0.5)));
      const int c1 = std::min(W - 1, static_cast<int>(std::floor(std::max({sx[0], sx[1], sx[2]}) - 0.5)));
      const int r0 = std::max(0, static_cast<int>(std::ceil(std::min({sy[0], sy[1], sy[2]}) - 0.5)));
      const int r1 = std::min(H - 1, static_cast<int>(std::floor(std::max({sy[0], sy[1], sy[2]}) - 0.5)));
      for (int r = r0; r <= r1; ++r) {
        const double qy = r + 0.5;
        for (int c = c0; c <= c1; ++c) {
          const double qx = c + 0.5;
          double b[3];
          bool inside = true;
          for (int k = 0; k < 3; ++k) {
            const int a = (k + 1) % 3, bb = (k + 2) % 3;
            b[k] = ((sx[bb] - sx[a]) * (qy - sy[a]) - (sy[bb] - sy[a]) * (qx - sx[a])) / area2;
            if (b[k] < 0.0) inside = false;
          }
          if (!inside) continue;
          const double z = 1.0 / (b[0] * iz[0] + b[1] * iz[1] + b[2] * iz[2]);
          const std::size_t idx = static_cast<std::size_t>(r) * W + c;
          if (z < zbuf[idx]) {
            zbuf[idx] = z;
            out.ids[idx] = static_cast<int>(obj);
          }
        }
      }
    }
  }
  return out;
}

Mask threshold(std::span<const double> soft, int width, int height, double level) {
  Mask m{width, height, std::vector<std::uint8_t>(soft.size(), 0)};
  for (std::size_t i = 0; i < soft.size(); ++i) m.data[i] = soft[i] > level ? 1 : 0;
  return m;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error("shape-mismatch", "mask_iou of " + std::to_string(a.width) + "x" +
                                      std::to_string(a.height) + " and " + std::to_string(b.width) +
                                      "x" + std::to_string(b.height) + " masks");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] && b.data[i]) ? 1 : 0;
    uni += (a.data[i] || b.data[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::ostringstream os;
  os << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::string body(mask.data.size(), '\0');
  for (std::size_t i = 0; i < mask.data.size(); ++i) body[i] = mask.data[i] ? '\xff' : '\0';
  write_text_file(path, os.str() + body);
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string());
  auto token = [&]() {
    std::string tok;
    char ch;
    while (f.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(f, rest);
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
      } else {
        tok.push_back(ch);
      }
    }
    return tok;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw Error("malformed-pgm", path.string() + " is not P5/P2");
  Mask m;
  try {
    m.width = std::stoi(token());
    m.height = std::stoi(token());
    const int maxval = std::stoi(token());
    if (maxval != 255) throw Error("malformed-pgm", "expected maxval 255 in " + path.string());
  } catch (const std::invalid_argument&) {
    throw Error("malformed-pgm", "bad header in " + path.string());
  }
  m.data.resize(static_cast<std::size_t>(m.width) * m.height);
  for (auto& px : m.data) {
    int v = 0;
    if (magic == "P5") {
      char ch;
      if (!f.get(ch)) throw Error("malformed-pgm", "truncated pixel data in " + path.string());
      v = static_cast<unsigned char>(ch);
    } else {
      v = std::stoi(token());
    }
    px = v >= 128 ? 1 : 0;
  }
  return m;
}

void write_pgm_ascii(const std::filesystem::path& path, std::span<const double> values, int width,
                     int height) {
  std::ostringstream os;
  os << "P2\n" << width << ' ' << height << "\n255\n";
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double v = std::clamp(values[static_cast<std::size_t>(r) * width + c], 0.0, 1.0);
      os << (c ? " " : "") << static_cast<int>(std::lround(v * 255.0));
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

void write_id_pgm(const std::filesystem::path& path, const InstanceIdMap& ids) {
  std::ostringstream os;
  os << "P5\n" << ids.width << ' ' << ids.height << "\n255\n";
  std::string body(ids.ids.size(), '\0');
  for (std::size_t i = 0; i < ids.ids.size(); ++i)
    body[i] = ids.ids[i] < 0 ? '\0' : static_cast<char>(64 + (ids.ids[i] * 37) % 192);
  write_text_file(path, os.str() + body);
}

}  // namespace sceneprior
