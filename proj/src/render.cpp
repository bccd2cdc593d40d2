#include "aim/render.hpp"

#include <algorithm>
#include <cmath>

namespace aim {

NormalizeResult normalize_center(const ColoredPointCloud& cloud) {
  if (cloud.points.empty()) throw StateError("normalize_center: empty cloud");
  NormalizeResult r;
  double cx = 0, cy = 0, cz = 0;
  for (Vec3 p : cloud.points) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  double n = static_cast<double>(cloud.points.size());
  r.center = {static_cast<float>(cx / n), static_cast<float>(cy / n),
              static_cast<float>(cz / n)};
  float scale = 0;
  for (Vec3 p : cloud.points) {
    Vec3 q = p - r.center;
    scale = std::max({scale, std::fabs(q.x), std::fabs(q.y), std::fabs(q.z)});
  }
  if (scale < 1e-9f) throw NumericError("normalize_center: degenerate cloud");
  r.scale = scale;
  r.cloud.points.reserve(cloud.points.size());
  for (Vec3 p : cloud.points) r.cloud.points.push_back((1.0f / scale) * (p - r.center));
  r.cloud.colors = cloud.colors;
  return r;
}

Vec3 denormalize(Vec3 p, Vec3 center, float scale) { return center + scale * p; }

ColoredPointCloud apply_normalization(const ColoredPointCloud& cloud,
                                      Vec3 center, float scale) {
  if (scale < 1e-9f) throw NumericError("apply_normalization: bad scale");
  ColoredPointCloud out;
  out.points.reserve(cloud.points.size());
  for (Vec3 p : cloud.points) out.points.push_back((1.0f / scale) * (p - center));
  out.colors = cloud.colors;
  return out;
}

void view_project(int view, Vec3 p, float& u, float& v, float& depth) {
  switch (view) {
    case 0: u = p.x; v = p.y; depth = 2.0f - p.z; break;   // top
    case 1: u = p.y; v = -p.z; depth = 2.0f - p.x; break;  // front (+x)
    case 2: u = -p.y; v = -p.z; depth = 2.0f + p.x; break; // behind (-x)
    case 3: u = p.x; v = -p.z; depth = 2.0f + p.y; break;  // left (-y)
    case 4: u = -p.x; v = -p.z; depth = 2.0f - p.y; break; // right (+y)
    default: throw StateError("view index out of range");
  }
}

void view_pixel(int view, Vec3 p, int H, int W, float& px, float& py) {
  float u, v, depth;
  view_project(view, p, u, v, depth);
  px = (u + 1.0f) * 0.5f * W - 0.5f;
  py = (v + 1.0f) * 0.5f * H - 0.5f;
}

namespace {

int to_index(float p, int n) {
  int i = static_cast<int>(std::floor(p + 0.5f));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

ViewSet project_views(const ColoredPointCloud& cloud, int H, int W) {
  if (cloud.points.size() != cloud.colors.size())
    throw ShapeError("project_views: points/colors length mismatch");
  ViewSet vs;
  for (View& v : vs.views) {
    v.H = H;
    v.W = W;
    v.data.assign(static_cast<std::size_t>(kViewChannels) * H * W, 0.0f);
  }
  for (int view = 0; view < kNumViews; ++view) {
    View& img = vs.views[view];
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      Vec3 p = cloud.points[i];
      float u, v, depth;
      view_project(view, p, u, v, depth);
      float px, py;
      view_pixel(view, p, H, W, px, py);
      int x = to_index(px, W), y = to_index(py, H);
      float cur = img.at(6, y, x);
      if (cur != 0.0f) {
        if (cur < depth) continue;  // z-buffer: nearer wins
        if (cur == depth) {
          // exact tie: lexicographic XYZ so point order never matters
          auto tie = std::array<float, 3>{img.at(3, y, x), img.at(4, y, x),
                                          img.at(5, y, x)};
          if (std::array<float, 3>{p.x, p.y, p.z} >= tie) continue;
        }
      }
      Vec3 c = cloud.colors[i];
      img.at(0, y, x) = c.x;
      img.at(1, y, x) = c.y;
      img.at(2, y, x) = c.z;
      img.at(3, y, x) = p.x;
      img.at(4, y, x) = p.y;
      img.at(5, y, x) = p.z;
      img.at(6, y, x) = depth;
    }
  }
  return vs;
}

Heatmap encode_heatmap(Vec3 p_hat, int view, int H, int W, float sigma_px) {
  float px, py;
  view_pixel(view, p_hat, H, W, px, py);
  if (px < -0.5f || px > W - 0.5f || py < -0.5f || py > H - 0.5f)
    throw StateError("encode_heatmap: projection outside image");
  Heatmap h;
  h.H = H;
  h.W = W;
  h.w.assign(static_cast<std::size_t>(H) * W, 0.0f);
  float trunc = 3.0f * sigma_px;
  double total = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float dx = x - px, dy = y - py;
      float r2 = dx * dx + dy * dy;
      if (r2 > trunc * trunc) continue;
      float v = sigma_px > 0
                    ? std::exp(-0.5f * r2 / (sigma_px * sigma_px))
                    : (to_index(px, W) == x && to_index(py, H) == y ? 1.0f : 0.0f);
      h.w[y * W + x] = v;
      total += v;
    }
  if (total <= 0.0) {  // sigma -> 0 limit: one-hot at the containing pixel
    h.w[to_index(py, H) * W + to_index(px, W)] = 1.0f;
    total = 1.0;
  }
  for (float& v : h.w) v = static_cast<float>(v / total);
  return h;
}

int decode_position_index(const std::array<Heatmap, kNumViews>& heatmaps,
                          const std::vector<Vec3>& candidates) {
  if (candidates.empty()) throw StateError("decode_position: no candidates");
  int best = 0;
  double best_score = -1e300;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = 0.0;
    for (int view = 0; view < kNumViews; ++view) {
      const Heatmap& h = heatmaps[view];
      float px, py;
      view_pixel(view, candidates[i], h.H, h.W, px, py);
      score += std::log(h.at(to_index(py, h.H), to_index(px, h.W)) + 1e-9);
    }
    if (score > best_score) {  // strict: ties keep the lowest index
      best_score = score;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Vec3 decode_position(const std::array<Heatmap, kNumViews>& heatmaps,
                     const std::vector<Vec3>& candidates) {
  return candidates[decode_position_index(heatmaps, candidates)];
}

std::vector<Vec3> grid_candidates(int n) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        auto coord = [n](int t) { return n == 1 ? 0.0f : -1.0f + 2.0f * t / (n - 1); };
        out.push_back({coord(i), coord(j), coord(k)});
      }
  return out;
}

Tensor view_tensor(const View& v) {
  Tensor t;
  t.dims = {kViewChannels, v.H, v.W};
  t.data = v.data;
  return t;
}

Tensor viewset_tensor(const ViewSet& vs) {
  Tensor t;
  const View& first = vs.views[0];
  t.dims = {kNumViews, kViewChannels, first.H, first.W};
  for (const View& v : vs.views) t.data.insert(t.data.end(), v.data.begin(), v.data.end());
  return t;
}

ViewSet viewset_from_tensor(const Tensor& t) {
  if (t.dims.size() != 4 || t.dims[0] != kNumViews || t.dims[1] != kViewChannels)
    throw ShapeError("viewset_from_tensor: expected {5,7,H,W}, got " + t.shape_str());
  ViewSet vs;
  int H = t.dims[2], W = t.dims[3];
  std::size_t per_view = static_cast<std::size_t>(kViewChannels) * H * W;
  for (int v = 0; v < kNumViews; ++v) {
    vs.views[v].H = H;
    vs.views[v].W = W;
    vs.views[v].data.assign(t.data.begin() + v * per_view,
                            t.data.begin() + (v + 1) * per_view);
  }
  return vs;
}

Tensor heatmap_tensor(const Heatmap& h) {
  Tensor t;
  t.dims = {h.H, h.W};
  t.data = h.w;
  return t;
}

}  // namespace aim
