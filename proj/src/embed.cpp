#include "aim/embed.hpp"

#include <algorithm>
#include <cmath>

#include "aim/graph.hpp"  // fnv1a64
#include "aim/kernels.hpp"
#include "aim/rng.hpp"

namespace aim {

Featurizer::Featurizer(std::uint64_t seed, int d_z) : seed_(seed), d_z_(d_z) {
  int in = kNumViews * kChannels * kPool * kPool;
  projection_ = Tensor::zeros({d_z, in});
  Rng rng(seed);
  float s = 1.0f / std::sqrt(static_cast<float>(in));
  for (float& w : projection_.data) w = s * static_cast<float>(rng.normal());
}

std::uint64_t Featurizer::checksum() const {
  return fnv1a64(projection_.data.data(),
                 projection_.data.size() * sizeof(float));
}

std::vector<float> Featurizer::downsample(const ViewSet& obs) const {
  const int src_channels[kChannels] = {0, 1, 2, 6};  // RGB + depth
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(kNumViews) * kChannels * kPool * kPool);
  for (const View& v : obs.views) {
    if (v.H % kPool != 0 || v.W % kPool != 0)
      throw ShapeError("featurizer: view size not divisible by pool size");
    int by = v.H / kPool, bx = v.W / kPool;
    for (int c : src_channels)
      for (int py = 0; py < kPool; ++py)
        for (int px = 0; px < kPool; ++px) {
          double acc = 0;
          for (int y = py * by; y < (py + 1) * by; ++y)
            for (int x = px * bx; x < (px + 1) * bx; ++x) acc += v.at(c, y, x);
          out.push_back(static_cast<float>(acc / (by * bx)));
        }
  }
  return out;
}

std::vector<float> Featurizer::encode(const ViewSet& obs) const {
  std::vector<float> x = downsample(obs);
  if (static_cast<int>(x.size()) != projection_.cols())
    throw ShapeError("featurizer: input size mismatch");
  const auto& ops = kern::active();
  std::vector<float> v(d_z_);
  for (int i = 0; i < d_z_; ++i)
    v[i] = static_cast<float>(
        ops.dot(&projection_.at(i, 0), x.data(), x.size()));
  return v;
}

TaskEmbedding task_embedding(const Featurizer& f, const ViewSet& o_init,
                             const ViewSet& o_final) {
  TaskEmbedding t;
  std::vector<float> a = f.encode(o_init);
  std::vector<float> b = f.encode(o_final);
  t.z.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) t.z[i] = a[i] - b[i];
  return t;
}

float embedding_norm(const TaskEmbedding& z) {
  double s = 0;
  for (float v : z.z) s += static_cast<double>(v) * v;
  return static_cast<float>(std::sqrt(s));
}

bool success_filter(const TaskEmbedding& z, float z_bar) {
  return embedding_norm(z) > z_bar;
}

float calibrate_threshold(const std::vector<TaskEmbedding>& null_trajectories) {
  if (null_trajectories.size() < 50)
    throw StateError("calibrate_threshold: need at least 50 null trajectories");
  std::vector<float> norms;
  norms.reserve(null_trajectories.size());
  for (const TaskEmbedding& z : null_trajectories) norms.push_back(embedding_norm(z));
  std::sort(norms.begin(), norms.end());
  // nearest-rank 99th percentile
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.99 * static_cast<double>(norms.size())));
  return norms[idx - 1];
}

}  // namespace aim
