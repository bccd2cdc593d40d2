#include "aim/graph.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "aim/error.hpp"
#include "aim/kernels.hpp"

namespace aim {

const Tensor& Value::tensor() const { return g->value(*this); }

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (slots_.count(name)) throw StateError("parameter already exists: " + name);
  Slot s;
  s.grad = Tensor::zeros(init.dims);
  s.adam_m = Tensor::zeros(init.dims);
  s.adam_v = Tensor::zeros(init.dims);
  s.value = std::move(init);
  auto [it, ok] = slots_.emplace(name, std::move(s));
  (void)ok;
  return it->second.value;
}

ParamStore::Slot& ParamStore::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Slot& ParamStore::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return slots_.count(name) > 0; }

void ParamStore::zero_grad() {
  for (auto& [name, s] : slots_) std::fill(s.grad.data.begin(), s.grad.data.end(), 0.0f);
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (auto& [name, s] : slots_) {
    for (std::size_t i = 0; i < s.value.data.size(); ++i) {
      double g = s.grad.data[i];
      double m = beta1 * s.adam_m.data[i] + (1.0 - beta1) * g;
      double v = beta2 * s.adam_v.data[i] + (1.0 - beta2) * g * g;
      s.adam_m.data[i] = static_cast<float>(m);
      s.adam_v.data[i] = static_cast<float>(v);
      s.value.data[i] -=
          static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
  }
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, s] : slots_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(s.value.data.data(), s.value.data.size() * sizeof(float), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Graph

Graph::Graph(ParamStore* params) : params_(params) {
  if (const char* f = std::getenv("AIM_NO_FINITE_CHECK"); f && f[0] == '1')
    check_finite_ = false;
}

int Graph::make(Tensor val, std::vector<int> ins, const char* op,
                std::function<void(Graph&, int)> back) {
  if (check_finite_ && !val.all_finite())
    throw NumericError(std::string("non-finite output of op '") + op +
                       "' at node " + std::to_string(nodes_.size()));
  Node n;
  n.val = std::move(val);
  n.ins = std::move(ins);
  n.op = op;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Graph::input(Tensor t) {
  int id = make(std::move(t), {}, "input", nullptr);
  return {this, id};
}

Value Graph::param(const std::string& name) {
  if (!params_) throw StateError("graph has no parameter store");
  ParamStore::Slot& s = params_->slot(name);
  int id = make(s.value, {}, "param", nullptr);
  nodes_[id].param_name = name;
  return {this, id};
}

Tensor& Graph::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.dims);
  return n.grad;
}

void Graph::backward(Value loss) {
  if (loss.g != this) throw StateError("loss belongs to another graph");
  if (nodes_[loss.id].val.numel() != 1)
    throw ShapeError("backward requires scalar loss, got " +
                     nodes_[loss.id].val.shape_str());
  grad_ref(loss.id).data[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) continue;  // not on any path to the loss
    if (n.back) n.back(*this, id);
  }
  if (params_) {
    for (Node& n : nodes_) {
      if (n.param_name.empty() || n.grad.data.empty()) continue;
      ParamStore::Slot& s = params_->slot(n.param_name);
      kern::active().vadd(s.grad.data.data(), n.grad.data.data(),
                          s.grad.data.data(), s.grad.data.size());
    }
  }
  ran_backward_ = true;
}

const Tensor& Graph::value(Value v) const { return nodes_[v.id].val; }

const Tensor& Graph::grad(Value v) const {
  if (!ran_backward_) throw StateError("gradient requested before backward");
  const Node& n = nodes_[v.id];
  if (n.grad.data.empty())
    throw StateError("node not on the loss path, no gradient");
  return n.grad;
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

void require_same_graph(Value a, Value b) {
  if (a.g != b.g) throw StateError("operands from different graphs");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims != b.dims)
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

void accum(Graph& g, int id, const float* src, std::size_t n) {
  Tensor& t = g.grad_ref(id);
  kern::active().vadd(t.data.data(), src, t.data.data(), n);
}

}  // namespace

Value add(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  require_same_shape(ta, tb, "add");
  Tensor out = Tensor::zeros(ta.dims);
  kern::active().vadd(ta.data.data(), tb.data.data(), out.data.data(), out.data.size());
  int id = g.make(std::move(out), {a.id, b.id}, "add", [](Graph& g, int id) {
    auto& n = g.node(id);
    accum(g, n.ins[0], n.grad.data.data(), n.grad.data.size());
    accum(g, n.ins[1], n.grad.data.data(), n.grad.data.size());
  });
  return {&g, id};
}

Value sub(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  require_same_shape(ta, tb, "sub");
  Tensor out = Tensor::zeros(ta.dims);
  kern::active().vsub(ta.data.data(), tb.data.data(), out.data.data(), out.data.size());
  int id = g.make(std::move(out), {a.id, b.id}, "sub", [](Graph& g, int id) {
    auto& n = g.node(id);
    accum(g, n.ins[0], n.grad.data.data(), n.grad.data.size());
    Tensor& gb = g.grad_ref(n.ins[1]);
    kern::active().vsub(gb.data.data(), n.grad.data.data(), gb.data.data(),
                        gb.data.size());
  });
  return {&g, id};
}

Value mul(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  require_same_shape(ta, tb, "mul");
  Tensor out = Tensor::zeros(ta.dims);
  kern::active().vmul(ta.data.data(), tb.data.data(), out.data.data(), out.data.size());
  int id = g.make(std::move(out), {a.id, b.id}, "mul", [](Graph& g, int id) {
    auto& n = g.node(id);
    const Tensor& ta = g.node(n.ins[0]).val;
    const Tensor& tb = g.node(n.ins[1]).val;
    Tensor tmp = Tensor::zeros(ta.dims);
    kern::active().vmul(n.grad.data.data(), tb.data.data(), tmp.data.data(),
                        tmp.data.size());
    accum(g, n.ins[0], tmp.data.data(), tmp.data.size());
    kern::active().vmul(n.grad.data.data(), ta.data.data(), tmp.data.data(),
                        tmp.data.size());
    accum(g, n.ins[1], tmp.data.data(), tmp.data.size());
  });
  return {&g, id};
}

Value add_bias(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  if (tb.rows() != 1 || tb.cols() != ta.cols())
    throw ShapeError("add_bias: bias " + tb.shape_str() + " vs " + ta.shape_str());
  Tensor out = ta;
  for (int r = 0; r < ta.rows(); ++r)
    kern::active().vadd(out.data.data() + static_cast<std::size_t>(r) * ta.cols(),
                        tb.data.data(),
                        out.data.data() + static_cast<std::size_t>(r) * ta.cols(),
                        ta.cols());
  int id = g.make(std::move(out), {a.id, b.id}, "add_bias", [](Graph& g, int id) {
    auto& n = g.node(id);
    accum(g, n.ins[0], n.grad.data.data(), n.grad.data.size());
    const Tensor& gv = n.grad;
    Tensor& gb = g.grad_ref(n.ins[1]);
    int rows = gv.rows(), cols = gv.cols();
    for (int r = 0; r < rows; ++r)
      kern::active().vadd(gb.data.data(),
                          gv.data.data() + static_cast<std::size_t>(r) * cols,
                          gb.data.data(), cols);
  });
  return {&g, id};
}

Value matmul(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  int m = ta.rows(), k = ta.cols();
  if (tb.rows() != k)
    throw ShapeError("matmul: " + ta.shape_str() + " x " + tb.shape_str());
  int n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  matmul(ta.data.data(), m, k, tb.data.data(), n, out.data.data());
  int id = g.make(std::move(out), {a.id, b.id}, "matmul", [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& ta = g.node(nd.ins[0]).val;
    const Tensor& tb = g.node(nd.ins[1]).val;
    int m = ta.rows(), k = ta.cols(), n = tb.cols();
    // dA += dC * B^T ; dB += A^T * dC
    matmul_abt_acc(nd.grad.data.data(), m, n, tb.data.data(), k,
                   g.grad_ref(nd.ins[0]).data.data());
    matmul_atb_acc(ta.data.data(), m, k, nd.grad.data.data(), n,
                   g.grad_ref(nd.ins[1]).data.data());
  });
  return {&g, id};
}

Value transpose(Value a) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  int m = ta.rows(), n = ta.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  int id = g.make(std::move(out), {a.id}, "transpose", [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& gv = nd.grad;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    int m = ga.rows(), n = ga.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += gv.at(j, i);
  });
  return {&g, id};
}

Value relu(Value a) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  for (float& x : out.data) x = x > 0.0f ? x : 0.0f;
  int id = g.make(std::move(out), {a.id}, "relu", [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& x = g.node(nd.ins[0]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] > 0.0f) ga.data[i] += nd.grad.data[i];
  });
  return {&g, id};
}

Value gelu(Value a) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float aa = 0.044715f;
  for (float& x : out.data) {
    float u = c * (x + aa * x * x * x);
    x = 0.5f * x * (1.0f + std::tanh(u));
  }
  int id = g.make(std::move(out), {a.id}, "gelu", [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& xin = g.node(nd.ins[0]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    constexpr float c = 0.7978845608028654f;
    constexpr float aa = 0.044715f;
    for (std::size_t i = 0; i < xin.data.size(); ++i) {
      float x = xin.data[i];
      float u = c * (x + aa * x * x * x);
      float t = std::tanh(u);
      float sech2 = 1.0f - t * t;
      float d = 0.5f * (1.0f + t) + 0.5f * x * sech2 * c * (1.0f + 3.0f * aa * x * x);
      ga.data[i] += nd.grad.data[i] * d;
    }
  });
  return {&g, id};
}

Value logv(Value a) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  for (float& x : out.data) x = std::log(x);
  int id = g.make(std::move(out), {a.id}, "log", [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& x = g.node(nd.ins[0]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      ga.data[i] += nd.grad.data[i] / x.data[i];
  });
  return {&g, id};
}

Value expv(Value a) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  for (float& x : out.data) x = std::exp(x);
  int id = g.make(std::move(out), {a.id}, "exp", [](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    for (std::size_t i = 0; i < nd.val.data.size(); ++i)
      ga.data[i] += nd.grad.data[i] * nd.val.data[i];
  });
  return {&g, id};
}

Value scale(Value a, float c) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  Tensor out = Tensor::zeros(ta.dims);
  kern::active().vscale(c, ta.data.data(), out.data.data(), out.data.size());
  int id = g.make(std::move(out), {a.id}, "scale", [c](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor tmp = Tensor::zeros(nd.grad.dims);
    kern::active().vscale(c, nd.grad.data.data(), tmp.data.data(), tmp.data.size());
    accum(g, nd.ins[0], tmp.data.data(), tmp.data.size());
  });
  return {&g, id};
}

Value add_scalar(Value a, float c) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  for (float& x : out.data) x += c;
  int id = g.make(std::move(out), {a.id}, "add_scalar", [](Graph& g, int id) {
    auto& nd = g.node(id);
    accum(g, nd.ins[0], nd.grad.data.data(), nd.grad.data.size());
  });
  return {&g, id};
}

Value clamp(Value a, float lo, float hi) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  for (float& x : out.data) x = x < lo ? lo : (x > hi ? hi : x);
  int id = g.make(std::move(out), {a.id}, "clamp", [lo, hi](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& x = g.node(nd.ins[0]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] > lo && x.data[i] < hi) ga.data[i] += nd.grad.data[i];
  });
  return {&g, id};
}

Value reshape(Value a, std::vector<int> dims) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  Tensor out(dims, ta.data);
  if (out.numel() != ta.numel())
    throw ShapeError("reshape: element count mismatch");
  int id = g.make(std::move(out), {a.id}, "reshape", [](Graph& g, int id) {
    auto& nd = g.node(id);
    accum(g, nd.ins[0], nd.grad.data.data(), nd.grad.data.size());
  });
  return {&g, id};
}

Value concat_cols(const std::vector<Value>& vs) {
  if (vs.empty()) throw ShapeError("concat_cols: empty input");
  Graph& g = *vs[0].g;
  int rows = g.node(vs[0].id).val.rows();
  int total = 0;
  std::vector<int> ins;
  for (Value v : vs) {
    require_same_graph(vs[0], v);
    const Tensor& t = g.node(v.id).val;
    if (t.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    total += t.cols();
    ins.push_back(v.id);
  }
  Tensor out = Tensor::zeros({rows, total});
  int off = 0;
  for (Value v : vs) {
    const Tensor& t = g.node(v.id).val;
    for (int r = 0; r < rows; ++r)
      std::memcpy(&out.at(r, off), &t.at(r, 0), sizeof(float) * t.cols());
    off += t.cols();
  }
  int id = g.make(std::move(out), std::move(ins), "concat_cols", [](Graph& g, int id) {
    auto& nd = g.node(id);
    int rows = nd.grad.rows();
    int off = 0;
    for (int in : nd.ins) {
      Tensor& gi = g.grad_ref(in);
      int c = gi.cols();
      for (int r = 0; r < rows; ++r)
        kern::active().vadd(&gi.at(r, 0), &nd.grad.at(r, off), &gi.at(r, 0), c);
      off += c;
    }
  });
  return {&g, id};
}

Value concat_rows(const std::vector<Value>& vs) {
  if (vs.empty()) throw ShapeError("concat_rows: empty input");
  Graph& g = *vs[0].g;
  int cols = g.node(vs[0].id).val.cols();
  int total = 0;
  std::vector<int> ins;
  for (Value v : vs) {
    require_same_graph(vs[0], v);
    const Tensor& t = g.node(v.id).val;
    if (t.cols() != cols) throw ShapeError("concat_rows: col mismatch");
    total += t.rows();
    ins.push_back(v.id);
  }
  Tensor out = Tensor::zeros({total, cols});
  int off = 0;
  for (Value v : vs) {
    const Tensor& t = g.node(v.id).val;
    std::memcpy(&out.at(off, 0), t.data.data(), sizeof(float) * t.data.size());
    off += t.rows();
  }
  int id = g.make(std::move(out), std::move(ins), "concat_rows", [](Graph& g, int id) {
    auto& nd = g.node(id);
    int off = 0;
    for (int in : nd.ins) {
      Tensor& gi = g.grad_ref(in);
      kern::active().vadd(gi.data.data(), &nd.grad.at(off, 0), gi.data.data(),
                          gi.data.size());
      off += gi.rows();
    }
  });
  return {&g, id};
}

Value slice_cols(Value a, int c0, int c1) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  if (c0 < 0 || c1 > ta.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
  int rows = ta.rows();
  Tensor out = Tensor::zeros({rows, c1 - c0});
  for (int r = 0; r < rows; ++r)
    std::memcpy(&out.at(r, 0), &ta.at(r, c0), sizeof(float) * (c1 - c0));
  int id = g.make(std::move(out), {a.id}, "slice_cols", [c0, c1](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    int rows = ga.rows();
    for (int r = 0; r < rows; ++r)
      kern::active().vadd(&ga.at(r, c0), &nd.grad.at(r, 0), &ga.at(r, c0), c1 - c0);
  });
  return {&g, id};
}

Value slice_rows(Value a, int r0, int r1) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  if (r0 < 0 || r1 > ta.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
  int cols = ta.cols();
  Tensor out = Tensor::zeros({r1 - r0, cols});
  std::memcpy(out.data.data(), &ta.at(r0, 0), sizeof(float) * out.data.size());
  int id = g.make(std::move(out), {a.id}, "slice_rows", [r0](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    kern::active().vadd(&ga.at(r0, 0), nd.grad.data.data(), &ga.at(r0, 0),
                        nd.grad.data.size());
  });
  return {&g, id};
}

Value stop_gradient(Value a) {
  Graph& g = *a.g;
  Tensor out = g.node(a.id).val;
  int id = g.make(std::move(out), {a.id}, "stop_gradient", nullptr);
  g.node(id).stop = true;
  return {&g, id};
}

Value layer_norm(Value a, Value gain, Value bias, float eps) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tg = g.node(gain.id).val;
  const Tensor& tb = g.node(bias.id).val;
  int rows = ta.rows(), cols = ta.cols();
  if (tg.cols() != cols || tb.cols() != cols || tg.rows() != 1 || tb.rows() != 1)
    throw ShapeError("layer_norm: gain/bias must be 1 x cols");
  Tensor out = Tensor::zeros(ta.dims);
  Tensor xhat = Tensor::zeros(ta.dims);
  std::vector<float> inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    const float* x = &ta.at(r, 0);
    double mu = kern::active().sum(x, cols) / cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      double d = x[c] - mu;
      var += d * d;
    }
    var /= cols;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      float xh = (x[c] - static_cast<float>(mu)) * is;
      xhat.at(r, c) = xh;
      out.at(r, c) = xh * tg.data[c] + tb.data[c];
    }
  }
  int id = g.make(std::move(out), {a.id, gain.id, bias.id}, "layer_norm",
                  [xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& tg = g.node(nd.ins[1]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    Tensor& gg = g.grad_ref(nd.ins[1]);
    Tensor& gb = g.grad_ref(nd.ins[2]);
    int rows = nd.grad.rows(), cols = nd.grad.cols();
    for (int r = 0; r < rows; ++r) {
      double sum_dy_xhat = 0.0, sum_dy = 0.0;
      for (int c = 0; c < cols; ++c) {
        float dy = nd.grad.at(r, c);
        float dxh = dy * tg.data[c];
        sum_dy += dxh;
        sum_dy_xhat += static_cast<double>(dxh) * xhat.at(r, c);
        gg.data[c] += dy * xhat.at(r, c);
        gb.data[c] += dy;
      }
      for (int c = 0; c < cols; ++c) {
        float dxh = nd.grad.at(r, c) * tg.data[c];
        ga.at(r, c) += inv_std[r] * (dxh - static_cast<float>(sum_dy) / cols -
                                     xhat.at(r, c) * static_cast<float>(sum_dy_xhat) / cols);
      }
    }
  });
  return {&g, id};
}

Value softmax(Value a) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  int rows = ta.rows(), cols = ta.cols();
  Tensor out = Tensor::zeros(ta.dims);
  for (int r = 0; r < rows; ++r) {
    const float* x = &ta.at(r, 0);
    float m = kern::active().maxval(x, cols);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      float e = std::exp(x[c] - m);
      out.at(r, c) = e;
      z += e;
    }
    float iz = static_cast<float>(1.0 / z);
    kern::active().vscale(iz, &out.at(r, 0), &out.at(r, 0), cols);
  }
  int id = g.make(std::move(out), {a.id}, "softmax", [](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    int rows = nd.val.rows(), cols = nd.val.cols();
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c)
        dot += static_cast<double>(nd.grad.at(r, c)) * nd.val.at(r, c);
      for (int c = 0; c < cols; ++c)
        ga.at(r, c) += nd.val.at(r, c) *
                       (nd.grad.at(r, c) - static_cast<float>(dot));
    }
  });
  return {&g, id};
}

Value log_softmax(Value a) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  int rows = ta.rows(), cols = ta.cols();
  Tensor out = Tensor::zeros(ta.dims);
  for (int r = 0; r < rows; ++r) {
    const float* x = &ta.at(r, 0);
    float m = kern::active().maxval(x, cols);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(x[c] - m);
    float lz = m + static_cast<float>(std::log(z));
    for (int c = 0; c < cols; ++c) out.at(r, c) = x[c] - lz;
  }
  int id = g.make(std::move(out), {a.id}, "log_softmax", [](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    int rows = nd.val.rows(), cols = nd.val.cols();
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += nd.grad.at(r, c);
      for (int c = 0; c < cols; ++c)
        ga.at(r, c) += nd.grad.at(r, c) -
                       std::exp(nd.val.at(r, c)) * static_cast<float>(s);
    }
  });
  return {&g, id};
}

Value attention(Value q, Value k, Value v, int heads) {
  Graph& g = *q.g;
  int d = g.node(q.id).val.cols();
  if (heads <= 0 || d % heads != 0)
    throw ShapeError("attention: dim not divisible by head count");
  int dh = d / heads;
  float s = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<Value> outs;
  for (int h = 0; h < heads; ++h) {
    Value qh = slice_cols(q, h * dh, (h + 1) * dh);
    Value kh = slice_cols(k, h * dh, (h + 1) * dh);
    Value vh = slice_cols(v, h * dh, (h + 1) * dh);
    Value scores = scale(matmul(qh, transpose(kh)), s);
    outs.push_back(matmul(softmax(scores), vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

Value gaussian_reparam(Value mu, Value logvar, Value noise) {
  Graph& g = *mu.g;
  const Tensor& tm = g.node(mu.id).val;
  const Tensor& tl = g.node(logvar.id).val;
  const Tensor& tn = g.node(noise.id).val;
  require_same_shape(tm, tl, "gaussian_reparam");
  require_same_shape(tm, tn, "gaussian_reparam");
  Tensor out = Tensor::zeros(tm.dims);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = tm.data[i] + std::exp(0.5f * tl.data[i]) * tn.data[i];
  int id = g.make(std::move(out), {mu.id, logvar.id, noise.id}, "gaussian_reparam",
                  [](Graph& g, int id) {
    auto& nd = g.node(id);
    const Tensor& tl = g.node(nd.ins[1]).val;
    const Tensor& tn = g.node(nd.ins[2]).val;
    Tensor& gm = g.grad_ref(nd.ins[0]);
    Tensor& gl = g.grad_ref(nd.ins[1]);
    for (std::size_t i = 0; i < nd.grad.data.size(); ++i) {
      gm.data[i] += nd.grad.data[i];
      gl.data[i] += nd.grad.data[i] * 0.5f * std::exp(0.5f * tl.data[i]) * tn.data[i];
    }
  });
  return {&g, id};
}

Value gumbel_softmax(Value logits, float tau, Value gumbel_noise) {
  if (tau <= 0.0f) throw NumericError("gumbel_softmax: temperature must be > 0");
  Value shifted = add(logits, gumbel_noise);
  return softmax(scale(shifted, 1.0f / tau));
}

Value sum(Value a) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  double s = kern::active().sum(ta.data.data(), ta.data.size());
  int id = g.make(Tensor({1}, {static_cast<float>(s)}), {a.id}, "sum",
                  [](Graph& g, int id) {
    auto& nd = g.node(id);
    float gv = nd.grad.data[0];
    Tensor& ga = g.grad_ref(nd.ins[0]);
    for (float& x : ga.data) x += gv;
  });
  return {&g, id};
}

Value mean_rows(Value a) {
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  int rows = ta.rows(), cols = ta.cols();
  Tensor out = Tensor::zeros({1, cols});
  for (int r = 0; r < rows; ++r)
    kern::active().vadd(out.data.data(), &ta.at(r, 0), out.data.data(), cols);
  kern::active().vscale(1.0f / rows, out.data.data(), out.data.data(), cols);
  int id = g.make(std::move(out), {a.id}, "mean_rows", [rows](Graph& g, int id) {
    auto& nd = g.node(id);
    Tensor& ga = g.grad_ref(nd.ins[0]);
    int cols = ga.cols();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        ga.at(r, c) += nd.grad.data[c] / rows;
  });
  return {&g, id};
}

Value squared_error(Value a, Value b) {
  require_same_graph(a, b);
  Graph& g = *a.g;
  const Tensor& ta = g.node(a.id).val;
  const Tensor& tb = g.node(b.id).val;
  require_same_shape(ta, tb, "squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) {
    double d = static_cast<double>(ta.data[i]) - tb.data[i];
    s += d * d;
  }
  int id = g.make(Tensor({1}, {static_cast<float>(s)}), {a.id, b.id},
                  "squared_error", [](Graph& g, int id) {
    auto& nd = g.node(id);
    float gv = nd.grad.data[0];
    const Tensor& ta = g.node(nd.ins[0]).val;
    const Tensor& tb = g.node(nd.ins[1]).val;
    Tensor& ga = g.grad_ref(nd.ins[0]);
    Tensor& gb = g.grad_ref(nd.ins[1]);
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      float d = 2.0f * (ta.data[i] - tb.data[i]) * gv;
      ga.data[i] += d;
      gb.data[i] -= d;
    }
  });
  return {&g, id};
}

Value cross_entropy(Value logits, Value target_probs) {
  require_same_graph(logits, target_probs);
  Value ls = log_softmax(logits);
  Value prod = mul(target_probs, ls);
  return scale(sum(prod), -1.0f);
}

Value bce_with_logit(Value logit, float target) {
  Graph& g = *logit.g;
  const Tensor& tl = g.node(logit.id).val;
  if (tl.numel() != 1) throw ShapeError("bce_with_logit: scalar logit expected");
  float x = tl.data[0];
  // log(1+e^x) computed stably
  float softplus = x > 0.0f ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  float loss = softplus - target * x;
  int id = g.make(Tensor({1}, {loss}), {logit.id}, "bce_with_logit",
                  [target](Graph& g, int id) {
    auto& nd = g.node(id);
    float x = g.node(nd.ins[0]).val.data[0];
    float sig = 1.0f / (1.0f + std::exp(-x));
    g.grad_ref(nd.ins[0]).data[0] += nd.grad.data[0] * (sig - target);
  });
  return {&g, id};
}

Value kl_diag_gaussian(Value mu1, Value logvar1, Value mu2, Value logvar2) {
  Graph& g = *mu1.g;
  const Tensor& m1 = g.node(mu1.id).val;
  const Tensor& l1 = g.node(logvar1.id).val;
  const Tensor& m2 = g.node(mu2.id).val;
  const Tensor& l2 = g.node(logvar2.id).val;
  require_same_shape(m1, l1, "kl_diag_gaussian");
  require_same_shape(m1, m2, "kl_diag_gaussian");
  require_same_shape(m1, l2, "kl_diag_gaussian");
  double s = 0.0;
  for (std::size_t i = 0; i < m1.data.size(); ++i) {
    double d = static_cast<double>(m1.data[i]) - m2.data[i];
    s += 0.5 * (static_cast<double>(l2.data[i]) - l1.data[i] +
                (std::exp(l1.data[i]) + d * d) * std::exp(-l2.data[i]) - 1.0);
  }
  int id = g.make(Tensor({1}, {static_cast<float>(s)}),
                  {mu1.id, logvar1.id, mu2.id, logvar2.id}, "kl_diag_gaussian",
                  [](Graph& g, int id) {
    auto& nd = g.node(id);
    float gv = nd.grad.data[0];
    const Tensor& m1 = g.node(nd.ins[0]).val;
    const Tensor& l1 = g.node(nd.ins[1]).val;
    const Tensor& m2 = g.node(nd.ins[2]).val;
    const Tensor& l2 = g.node(nd.ins[3]).val;
    Tensor& gm1 = g.grad_ref(nd.ins[0]);
    Tensor& gl1 = g.grad_ref(nd.ins[1]);
    Tensor& gm2 = g.grad_ref(nd.ins[2]);
    Tensor& gl2 = g.grad_ref(nd.ins[3]);
    for (std::size_t i = 0; i < m1.data.size(); ++i) {
      float d = m1.data[i] - m2.data[i];
      float inv_v2 = std::exp(-l2.data[i]);
      float dm = d * inv_v2 * gv;
      gm1.data[i] += dm;
      gm2.data[i] -= dm;
      gl1.data[i] += 0.5f * (std::exp(l1.data[i]) * inv_v2 - 1.0f) * gv;
      gl2.data[i] += 0.5f * (1.0f - (std::exp(l1.data[i]) + d * d) * inv_v2) * gv;
    }
  });
  return {&g, id};
}

Value kl_categorical_logs(Value log_q, Value log_p) {
  require_same_graph(log_q, log_p);
  Graph& g = *log_q.g;
  const Tensor& lq = g.node(log_q.id).val;
  const Tensor& lp = g.node(log_p.id).val;
  require_same_shape(lq, lp, "kl_categorical");
  double s = 0.0;
  for (std::size_t i = 0; i < lq.data.size(); ++i)
    s += std::exp(lq.data[i]) * (static_cast<double>(lq.data[i]) - lp.data[i]);
  int id = g.make(Tensor({1}, {static_cast<float>(s)}), {log_q.id, log_p.id},
                  "kl_categorical", [](Graph& g, int id) {
    auto& nd = g.node(id);
    float gv = nd.grad.data[0];
    const Tensor& lq = g.node(nd.ins[0]).val;
    const Tensor& lp = g.node(nd.ins[1]).val;
    Tensor& gq = g.grad_ref(nd.ins[0]);
    Tensor& gp = g.grad_ref(nd.ins[1]);
    for (std::size_t i = 0; i < lq.data.size(); ++i) {
      float q = std::exp(lq.data[i]);
      gq.data[i] += gv * q * (lq.data[i] - lp.data[i] + 1.0f);
      gp.data[i] -= gv * q;
    }
  });
  return {&g, id};
}

}  // namespace aim
