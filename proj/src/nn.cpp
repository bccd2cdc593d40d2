#include "aim/nn.hpp"

#include <cmath>

namespace aim::nn {

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out,
                      Rng& rng) {
  Tensor w = Tensor::zeros({in, out});
  float bound = std::sqrt(6.0f / static_cast<float>(in + out));
  for (float& x : w.data) x = static_cast<float>(rng.uniform(-bound, bound));
  ps.create(name + ".w", std::move(w));
  ps.create(name + ".b", Tensor::zeros({1, out}));
  return Linear{name + ".w", name + ".b", in, out};
}

Value Linear::apply(Graph& g, Value x) const {
  return add_bias(matmul(x, g.param(w)), g.param(b));
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  ps.create(name + ".g", Tensor::full({1, dim}, 1.0f));
  ps.create(name + ".b", Tensor::zeros({1, dim}));
  return LayerNorm{name + ".g", name + ".b", dim};
}

Value LayerNorm::apply(Graph& g, Value x) const {
  return layer_norm(x, g.param(gain), g.param(bias));
}

Mlp Mlp::create(ParamStore& ps, const std::string& name,
                const std::vector<int>& dims, Rng& rng) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(Linear::create(ps, name + ".l" + std::to_string(i),
                                      dims[i], dims[i + 1], rng));
  return m;
}

Value Mlp::apply(Graph& g, Value x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].apply(g, x);
    if (i + 1 < layers.size()) x = gelu(x);
  }
  return x;
}

ResMlp ResMlp::create(ParamStore& ps, const std::string& name, int in, int hidden,
                      int depth, int out, Rng& rng) {
  ResMlp m;
  m.in_proj = Linear::create(ps, name + ".in", in, hidden, rng);
  for (int i = 0; i < depth; ++i) {
    auto a = Linear::create(ps, name + ".r" + std::to_string(i) + "a", hidden,
                            hidden, rng);
    auto b = Linear::create(ps, name + ".r" + std::to_string(i) + "b", hidden,
                            hidden, rng);
    m.blocks.emplace_back(std::move(a), std::move(b));
  }
  m.out_proj = Linear::create(ps, name + ".out", hidden, out, rng);
  return m;
}

Value ResMlp::apply(Graph& g, Value x) const {
  Value h = in_proj.apply(g, x);
  for (const auto& [a, b] : blocks)
    h = add(h, b.apply(g, gelu(a.apply(g, h))));
  return out_proj.apply(g, h);
}

TransformerBlock TransformerBlock::create(ParamStore& ps, const std::string& name,
                                          int dim, int heads, int mlp_dim, Rng& rng) {
  TransformerBlock t;
  t.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  t.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  t.qp = Linear::create(ps, name + ".q", dim, dim, rng);
  t.kp = Linear::create(ps, name + ".k", dim, dim, rng);
  t.vp = Linear::create(ps, name + ".v", dim, dim, rng);
  t.op = Linear::create(ps, name + ".o", dim, dim, rng);
  t.m1 = Linear::create(ps, name + ".m1", dim, mlp_dim, rng);
  t.m2 = Linear::create(ps, name + ".m2", mlp_dim, dim, rng);
  t.heads = heads;
  return t;
}

Value TransformerBlock::apply(Graph& g, Value x) const {
  Value h = ln1.apply(g, x);
  Value att = attention(qp.apply(g, h), kp.apply(g, h), vp.apply(g, h), heads);
  x = add(x, op.apply(g, att));
  Value h2 = ln2.apply(g, x);
  return add(x, m2.apply(g, gelu(m1.apply(g, h2))));
}

}  // namespace aim::nn
