#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aim/tensor.hpp"

namespace aim {

class Graph;

// Lightweight handle to a node in a Graph.
struct Value {
  Graph* g = nullptr;
  int id = -1;
  const Tensor& tensor() const;
};

// Named parameter slots with Adam state. Lives across training steps; each
// step builds a fresh Graph over the same store.
class ParamStore {
 public:
  struct Slot {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
  };

  Tensor& create(const std::string& name, Tensor init);
  Slot& slot(const std::string& name);
  const Slot& slot(const std::string& name) const;
  bool has(const std::string& name) const;
  void zero_grad();
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  std::uint64_t checksum() const;
  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }

 private:
  std::map<std::string, Slot> slots_;
  std::int64_t adam_t_ = 0;
};

// Reverse-mode tape. Ops evaluate eagerly and record a backward closure;
// node creation order is the topological order.
class Graph {
 public:
  explicit Graph(ParamStore* params = nullptr);

  Value input(Tensor t);
  Value param(const std::string& name);
  void backward(Value loss);  // loss must be scalar; accumulates into store grads
  const Tensor& value(Value v) const;
  const Tensor& grad(Value v) const;  // valid after backward
  int size() const { return static_cast<int>(nodes_.size()); }

  // Internal: used by op constructors.
  struct Node {
    Tensor val;
    Tensor grad;
    std::vector<int> ins;
    std::function<void(Graph&, int)> back;
    const char* op = "";
    bool stop = false;  // stop-gradient marker
    std::string param_name;
  };
  int make(Tensor val, std::vector<int> ins, const char* op,
           std::function<void(Graph&, int)> back);
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  Tensor& grad_ref(int id);
  ParamStore* params() { return params_; }
  bool ran_backward() const { return ran_backward_; }

 private:
  std::vector<Node> nodes_;
  ParamStore* params_;
  bool ran_backward_ = false;
  bool check_finite_ = true;
};

// Elementwise / structural ops.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value add_bias(Value a, Value b);  // rows of a plus row-vector b
Value matmul(Value a, Value b);
Value transpose(Value a);
Value relu(Value a);
Value gelu(Value a);
Value logv(Value a);
Value expv(Value a);
Value scale(Value a, float c);
Value add_scalar(Value a, float c);
Value clamp(Value a, float lo, float hi);
Value reshape(Value a, std::vector<int> dims);
Value concat_cols(const std::vector<Value>& vs);
Value concat_rows(const std::vector<Value>& vs);
Value slice_cols(Value a, int c0, int c1);
Value slice_rows(Value a, int r0, int r1);
Value stop_gradient(Value a);

// Normalization / attention.
Value layer_norm(Value a, Value gain, Value bias, float eps = 1e-5f);
Value softmax(Value a);
Value log_softmax(Value a);
Value attention(Value q, Value k, Value v, int heads);

// Stochastic reparameterizations (noise passed in as a plain tensor so that
// draws are reproducible and differentiation flows to the distribution
// parameters only).
Value gaussian_reparam(Value mu, Value logvar, Value noise);
Value gumbel_softmax(Value logits, float tau, Value gumbel_noise);

// Reductions / losses (scalar outputs).
Value sum(Value a);
Value mean_rows(Value a);  // 1 x C
Value squared_error(Value a, Value b);
Value cross_entropy(Value logits, Value target_probs);
Value bce_with_logit(Value logit, float target);
Value kl_diag_gaussian(Value mu1, Value logvar1, Value mu2, Value logvar2);
Value kl_categorical_logs(Value log_q, Value log_p);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace aim
