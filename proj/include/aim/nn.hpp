#pragma once

#include <string>
#include <vector>

#include "aim/graph.hpp"
#include "aim/rng.hpp"

namespace aim::nn {

struct Linear {
  std::string w, b;
  int in = 0, out = 0;
  static Linear create(ParamStore& ps, const std::string& name, int in, int out,
                       Rng& rng);
  Value apply(Graph& g, Value x) const;
};

struct LayerNorm {
  std::string gain, bias;
  int dim = 0;
  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  Value apply(Graph& g, Value x) const;
};

// Plain MLP with GELU between layers.
struct Mlp {
  std::vector<Linear> layers;
  static Mlp create(ParamStore& ps, const std::string& name,
                    const std::vector<int>& dims, Rng& rng);
  Value apply(Graph& g, Value x) const;
};

// Residual stack: in-projection, then blocks of h += W2 gelu(W1 h).
struct ResMlp {
  Linear in_proj;
  std::vector<std::pair<Linear, Linear>> blocks;
  Linear out_proj;
  static ResMlp create(ParamStore& ps, const std::string& name, int in, int hidden,
                       int depth, int out, Rng& rng);
  Value apply(Graph& g, Value x) const;
};

// Pre-LN transformer encoder block.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear qp, kp, vp, op, m1, m2;
  int heads = 1;
  static TransformerBlock create(ParamStore& ps, const std::string& name, int dim,
                                 int heads, int mlp_dim, Rng& rng);
  Value apply(Graph& g, Value x) const;
};

}  // namespace aim::nn
