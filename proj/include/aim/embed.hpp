#pragma once

// Fixed deterministic featurizer standing in for a pre-trained image encoder,
// the task-embedding difference, and the self-supervised success filter.

#include <cstdint>
#include <vector>

#include "aim/render.hpp"
#include "aim/tensor.hpp"

namespace aim {

// Frozen random linear projection over the average-pooled ViewSet
// (5 views x 16x16 x {RGB, depth} -> d_z floats). Identical seed gives an
// identical projection; nothing ever trains it.
class Featurizer {
 public:
  static constexpr int kPool = 16;
  static constexpr int kChannels = 4;  // RGB + depth

  Featurizer(std::uint64_t seed, int d_z = 32);

  int d_z() const { return d_z_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t checksum() const;

  // Flattened pooled input; exposed for the linearity tests.
  std::vector<float> downsample(const ViewSet& obs) const;
  std::vector<float> encode(const ViewSet& obs) const;

  // Frozen projection matrix {d_z, 5*kChannels*kPool*kPool}; per-view column
  // blocks give per-view tokens whose sum equals encode().
  const Tensor& projection() const { return projection_; }

 private:
  std::uint64_t seed_;
  int d_z_;
  Tensor projection_;  // {d_z, 5*kChannels*kPool*kPool}
};

struct TaskEmbedding {
  std::vector<float> z;
  std::int64_t source_pair = -1;  // trajectory id
};

TaskEmbedding task_embedding(const Featurizer& f, const ViewSet& o_init,
                             const ViewSet& o_final);

float embedding_norm(const TaskEmbedding& z);

// Success iff the embedding magnitude clears the calibrated threshold.
bool success_filter(const TaskEmbedding& z, float z_bar);

// 99th percentile (nearest-rank) of embedding norms over trajectories where
// nothing moved. Throws StateError below 50 samples.
float calibrate_threshold(const std::vector<TaskEmbedding>& null_trajectories);

}  // namespace aim
