#pragma once

// Orthographic multi-view rendering of colored point clouds plus the Gaussian
// heatmap encode/decode used for keypose positions. All functions are pure.
//
// The five views look at the normalized cloud from the top, front (+x),
// behind (-x), left (-y) and right (+y). Each view is H x W x 7 planar
// channels: RGB, world XYZ, depth. Depth is measured from a camera plane at
// coordinate +2 along the view axis (so occupied pixels have depth in [1,3]);
// empty pixels carry the 0 sentinel in every channel.

#include <array>
#include <vector>

#include "aim/sim.hpp"
#include "aim/tensor.hpp"

namespace aim {

inline constexpr int kNumViews = 5;
inline constexpr int kViewChannels = 7;

struct View {
  int H = 0, W = 0;
  std::vector<float> data;  // [channel][row][col], kViewChannels planes

  float& at(int c, int y, int x) { return data[(c * H + y) * W + x]; }
  float at(int c, int y, int x) const { return data[(c * H + y) * W + x]; }
};

struct ViewSet {
  std::array<View, kNumViews> views;
  Vec3 center;
  float scale = 1.0f;
};

struct Heatmap {
  int H = 0, W = 0;
  std::vector<float> w;  // nonnegative, sums to 1

  float at(int y, int x) const { return w[y * W + x]; }
};

struct NormalizeResult {
  ColoredPointCloud cloud;
  Vec3 center;
  float scale = 1.0f;
};

// Shifts the centroid to the origin and scales so the max-abs coordinate is 1.
// Throws NumericError when all points coincide.
NormalizeResult normalize_center(const ColoredPointCloud& cloud);
Vec3 denormalize(Vec3 p, Vec3 center, float scale);

// Applies a previously computed normalization, so before/after observations
// of one scene share a frame and part motion stays visible.
ColoredPointCloud apply_normalization(const ColoredPointCloud& cloud,
                                      Vec3 center, float scale);

// (u,v,depth) of a normalized point in a view; u,v in [-1,1] for in-cube points.
void view_project(int view, Vec3 p, float& u, float& v, float& depth);
// Continuous pixel coordinates and the containing pixel (clamped to bounds).
void view_pixel(int view, Vec3 p, int H, int W, float& px, float& py);

ViewSet project_views(const ColoredPointCloud& cloud, int H, int W);

// Gaussian bump at the projection of p_hat, truncated at 3 sigma and
// renormalized. Throws StateError if the projection falls outside the image.
Heatmap encode_heatmap(Vec3 p_hat, int view, int H, int W, float sigma_px = 1.5f);

// Candidate maximizing the summed log heatmap score over all five views;
// ties break toward the lowest candidate index.
int decode_position_index(const std::array<Heatmap, kNumViews>& heatmaps,
                          const std::vector<Vec3>& candidates);
Vec3 decode_position(const std::array<Heatmap, kNumViews>& heatmaps,
                     const std::vector<Vec3>& candidates);

// Uniform grid over the normalized cube, n points per axis.
std::vector<Vec3> grid_candidates(int n);

// Packing for AIMT tensor files and the featurizer.
Tensor view_tensor(const View& v);            // rank 3: {channels, H, W}
Tensor viewset_tensor(const ViewSet& vs);     // rank 4: {views, channels, H, W}
ViewSet viewset_from_tensor(const Tensor& t);
Tensor heatmap_tensor(const Heatmap& h);      // rank 2: {H, W}

}  // namespace aim
