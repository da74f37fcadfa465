#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "softshield/errors.hpp"
#include "softshield/rng.hpp"

namespace softshield {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until the backward pass touches this node
  bool track = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into tracked parents. Must not
  // capture the node it belongs to (that would be a reference cycle).
  std::function<void(TensorNode&)> backward_fn;

  int64_t size() const {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
  }
  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

// Dense row-major float32 tensor participating in a reverse-mode tape.
// Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool track = false);
  static Tensor full(std::vector<int> shape, float value, bool track = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool track = false);
  static Tensor gaussian(std::vector<int> shape, Rng& rng, float stddev,
                         bool track = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  // Row/column extents of a matrix; a 1-D tensor counts as a single row.
  int rows() const;
  int cols() const;

  std::vector<float>& data() { return node_->data; }
  const std::vector<float>& data() const { return node_->data; }
  float at(int r, int c) const { return node_->data[size_t(r) * cols() + c]; }
  float item() const;  // value of a scalar tensor

  bool tracked() const { return node_->track; }
  void set_tracked(bool t) { node_->track = t; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::vector<float>& grad();
  const std::vector<float>& grad() const;
  void zero_grad();  // drops the accumulator

  std::string shape_str() const;

  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_output(std::vector<int> shape,
                               std::vector<Tensor> parents);
};

// ---- forward ops (all build the tape when an input is tracked) ----

// C = A.B with A [p x q], B [q x r].
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A.B^T with A [p x q], B [r x q]; used for attention scores and the
// tied unembedding.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = 1e-5f);
Tensor gelu(const Tensor& x);
// Mean of -log softmax(logits)[t, target_t] over masked rows.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask);
// Gathers rows of `table` by id; gradients scatter back into the table.
Tensor embed_rows(const Tensor& table, std::span<const int> ids);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor sum(const Tensor& x);

// Accumulates d(loss)/d(tensor) into every tracked tensor reachable from
// `loss`. Repeated calls without zero_grad() keep accumulating into leaves.
void backward(const Tensor& loss);

// ---- raw kernels (exposed for benchmarks) ----
namespace kernels {
// C (+)= A.B, A [p x q], B [q x r]
void mm_nn(const float* a, const float* b, float* c, int p, int q, int r,
           bool accumulate);
// C (+)= A.B^T, A [p x q], B [r x q]
void mm_nt(const float* a, const float* b, float* c, int p, int q, int r,
           bool accumulate);
// C (+)= A^T.B, A [p x q], B [p x r], C [q x r]
void mm_tn(const float* a, const float* b, float* c, int p, int q, int r,
           bool accumulate);
}  // namespace kernels

}  // namespace softshield
