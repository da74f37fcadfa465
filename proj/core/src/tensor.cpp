#include "softshield/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace softshield {

namespace {

std::string shape_to_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_positive_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw DimError("tensor shape must have at least one extent");
  for (int e : shape) {
    if (e <= 0) throw DimError("tensor extents must be positive, got " + shape_to_str(shape));
  }
}

bool all_finite(const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

Tensor make_op_output(std::vector<int> shape, std::vector<Tensor> parents) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data.assign(size_t(node->size()), 0.0f);
  for (const Tensor& p : parents) {
    node->track = node->track || p.tracked();
    node->parents.push_back(p.handle());
  }
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool track) {
  check_positive_shape(shape);
  Tensor t = make_op_output(std::move(shape), {});
  t.node_->track = track;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, float value, bool track) {
  Tensor t = zeros(std::move(shape), track);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool track) {
  check_positive_shape(shape);
  Tensor t = make_op_output(std::move(shape), {});
  if (int64_t(data.size()) != t.size()) {
    throw DimError("data length " + std::to_string(data.size()) +
                   " does not match shape " + t.shape_str());
  }
  t.node_->data = std::move(data);
  t.node_->track = track;
  return t;
}

Tensor Tensor::gaussian(std::vector<int> shape, Rng& rng, float stddev, bool track) {
  Tensor t = zeros(std::move(shape), track);
  for (float& x : t.data()) x = stddev * rng.gaussian();
  return t;
}

int Tensor::rows() const {
  return node_->shape.size() >= 2 ? node_->shape[0] : 1;
}

int Tensor::cols() const {
  return node_->shape.size() >= 2 ? node_->shape[1] : node_->shape[0];
}

float Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a scalar tensor, got " + shape_str());
  return node_->data[0];
}

std::vector<float>& Tensor::grad() {
  if (!has_grad()) throw ContractError("tensor has no gradient accumulator");
  return node_->grad;
}

const std::vector<float>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient accumulator");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

std::string Tensor::shape_str() const { return shape_to_str(node_->shape); }

// ---------------------------------------------------------------- kernels

namespace kernels {

void mm_nn(const float* a, const float* b, float* c, int p, int q, int r, bool accumulate) {
  for (int i = 0; i < p; ++i) {
    float* crow = c + size_t(i) * r;
    if (!accumulate) std::fill(crow, crow + r, 0.0f);
    const float* arow = a + size_t(i) * q;
    for (int k = 0; k < q; ++k) {
      const float aik = arow[k];
      const float* brow = b + size_t(k) * r;
      for (int j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

void mm_nt(const float* a, const float* b, float* c, int p, int q, int r, bool accumulate) {
  // Eight independent partial sums keep the dot product vectorizable
  // without changing the summation order between runs.
  for (int i = 0; i < p; ++i) {
    const float* arow = a + size_t(i) * q;
    float* crow = c + size_t(i) * r;
    for (int j = 0; j < r; ++j) {
      const float* brow = b + size_t(j) * q;
      float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      int k = 0;
      for (; k + 8 <= q; k += 8) {
        for (int l = 0; l < 8; ++l) lanes[l] += arow[k + l] * brow[k + l];
      }
      float dot = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                  ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
      for (; k < q; ++k) dot += arow[k] * brow[k];
      if (accumulate) {
        crow[j] += dot;
      } else {
        crow[j] = dot;
      }
    }
  }
}

void mm_tn(const float* a, const float* b, float* c, int p, int q, int r, bool accumulate) {
  if (!accumulate) std::fill(c, c + size_t(q) * r, 0.0f);
  for (int k = 0; k < p; ++k) {
    const float* arow = a + size_t(k) * q;
    const float* brow = b + size_t(k) * r;
    for (int i = 0; i < q; ++i) {
      const float aki = arow[i];
      float* crow = c + size_t(i) * r;
      for (int j = 0; j < r; ++j) crow[j] += aki * brow[j];
    }
  }
}

}  // namespace kernels

// ------------------------------------------------------------------- ops

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimError(std::string(op) + ": expected a 2-D tensor, got " + t.shape_str());
  }
}

// Adds `delta` into the grad accumulator of `parent` if it is tracked.
void accumulate_grad(detail::TensorNode& parent, const float* delta, size_t n) {
  if (!parent.track) return;
  parent.ensure_grad();
  for (size_t i = 0; i < n; ++i) parent.grad[i] += delta[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimError("matmul: inner extents differ for shapes " + a.shape_str() +
                   " and " + b.shape_str());
  }
  const int p = a.rows(), q = a.cols(), r = b.cols();
  Tensor out = make_op_output({p, r}, {a, b});
  kernels::mm_nn(a.data().data(), b.data().data(), out.data().data(), p, q, r, false);
  if (out.tracked()) {
    out.node()->backward_fn = [p, q, r](detail::TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.track) {
        pa.ensure_grad();
        kernels::mm_nt(self.grad.data(), pb.data.data(), pa.grad.data(), p, r, q, true);
      }
      if (pb.track) {
        pb.ensure_grad();
        kernels::mm_tn(pa.data.data(), self.grad.data(), pb.grad.data(), p, q, r, true);
      }
    };
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimError("matmul_nt: inner extents differ for shapes " + a.shape_str() +
                   " and " + b.shape_str());
  }
  const int p = a.rows(), q = a.cols(), r = b.rows();
  Tensor out = make_op_output({p, r}, {a, b});
  kernels::mm_nt(a.data().data(), b.data().data(), out.data().data(), p, q, r, false);
  if (out.tracked()) {
    out.node()->backward_fn = [p, q, r](detail::TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.track) {
        pa.ensure_grad();
        kernels::mm_nn(self.grad.data(), pb.data.data(), pa.grad.data(), p, r, q, true);
      }
      if (pb.track) {
        pb.ensure_grad();
        kernels::mm_tn(self.grad.data(), pa.data.data(), pb.grad.data(), p, r, q, true);
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out = make_op_output(a.shape(), {a, b});
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.tracked()) {
    out.node()->backward_fn = [n](detail::TensorNode& self) {
      accumulate_grad(*self.parents[0], self.grad.data(), n);
      accumulate_grad(*self.parents[1], self.grad.data(), n);
    };
  }
  return out;
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out = make_op_output(a.shape(), {a});
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = factor * a.data()[i];
  if (out.tracked()) {
    out.node()->backward_fn = [n, factor](detail::TensorNode& self) {
      auto& pa = *self.parents[0];
      if (!pa.track) return;
      pa.ensure_grad();
      for (size_t i = 0; i < n; ++i) pa.grad[i] += factor * self.grad[i];
    };
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  if (!all_finite(x.data())) throw NumericError("softmax_rows: non-finite input");
  const int p = x.rows(), q = x.cols();
  Tensor out = make_op_output({p, q}, {x});
  for (int i = 0; i < p; ++i) {
    const float* row = x.data().data() + size_t(i) * q;
    float* orow = out.data().data() + size_t(i) * q;
    float mx = row[0];
    for (int j = 1; j < q; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < q; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    const float inv = float(1.0 / denom);
    for (int j = 0; j < q; ++j) orow[j] *= inv;
  }
  if (out.tracked()) {
    std::vector<float> probs = out.data();
    out.node()->backward_fn = [p, q, probs = std::move(probs)](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      if (!px.track) return;
      px.ensure_grad();
      // dx_ij = y_ij * (dy_ij - sum_k dy_ik y_ik)
      for (int i = 0; i < p; ++i) {
        const float* y = probs.data() + size_t(i) * q;
        const float* dy = self.grad.data() + size_t(i) * q;
        float* dx = px.grad.data() + size_t(i) * q;
        double dot = 0.0;
        for (int j = 0; j < q; ++j) dot += double(dy[j]) * y[j];
        for (int j = 0; j < q; ++j) dx[j] += y[j] * (dy[j] - float(dot));
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (eps <= 0.0f) throw ContractError("layer_norm: eps must be positive");
  const int d = x.cols();
  const int rows = int(x.size() / d);
  if (gain.size() != d || bias.size() != d) {
    throw DimError("layer_norm: gain/bias of shapes " + gain.shape_str() + "/" +
                   bias.shape_str() + " do not match last extent of " + x.shape_str());
  }
  Tensor out = make_op_output(x.shape(), {x, gain, bias});
  std::vector<float> xhat(size_t(rows) * d);
  std::vector<float> inv_std(rows);
  for (int i = 0; i < rows; ++i) {
    const float* row = x.data().data() + size_t(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const float inv = float(1.0 / std::sqrt(var + eps));
    inv_std[i] = inv;
    float* xh = xhat.data() + size_t(i) * d;
    float* orow = out.data().data() + size_t(i) * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (row[j] - float(mean)) * inv;
      orow[j] = xh[j] * gain.data()[j] + bias.data()[j];
    }
  }
  if (out.tracked()) {
    out.node()->backward_fn = [rows, d, xhat = std::move(xhat),
                               inv_std = std::move(inv_std)](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      if (pg.track) pg.ensure_grad();
      if (pb.track) pb.ensure_grad();
      if (px.track) px.ensure_grad();
      for (int i = 0; i < rows; ++i) {
        const float* dy = self.grad.data() + size_t(i) * d;
        const float* xh = xhat.data() + size_t(i) * d;
        if (pg.track || pb.track) {
          for (int j = 0; j < d; ++j) {
            if (pg.track) pg.grad[j] += dy[j] * xh[j];
            if (pb.track) pb.grad[j] += dy[j];
          }
        }
        if (px.track) {
          // dxhat = dy * gain; dx = inv * (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
          double m1 = 0.0, m2 = 0.0;
          const float* g = pg.data.data();
          for (int j = 0; j < d; ++j) {
            const double dxh = double(dy[j]) * g[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= d;
          m2 /= d;
          float* dx = px.grad.data() + size_t(i) * d;
          for (int j = 0; j < d; ++j) {
            const float dxh = dy[j] * g[j];
            dx[j] += inv_std[i] * (dxh - float(m1) - xh[j] * float(m2));
          }
        }
      }
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  // tanh approximation: 0.5*x*(1 + tanh(c*(x + a*x^3)))
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float kA = 0.044715f;
  Tensor out = make_op_output(x.shape(), {x});
  const size_t n = x.data().size();
  for (size_t i = 0; i < n; ++i) {
    const float v = x.data()[i];
    out.data()[i] = 0.5f * v * (1.0f + std::tanh(kC * (v + kA * v * v * v)));
  }
  if (out.tracked()) {
    std::vector<float> saved = x.data();
    out.node()->backward_fn = [n, saved = std::move(saved)](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      if (!px.track) return;
      px.ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        const float v = saved[i];
        const float t = std::tanh(kC * (v + kA * v * v * v));
        const float du = kC * (1.0f + 3.0f * kA * v * v);
        const float dydx = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
        px.grad[i] += dydx * self.grad[i];
      }
    };
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask) {
  require_matrix(logits, "cross_entropy");
  const int t_len = logits.rows(), vocab = logits.cols();
  if (int(targets.size()) != t_len || int(mask.size()) != t_len) {
    throw DimError("cross_entropy: targets/mask length must equal logits rows " +
                   std::to_string(t_len));
  }
  int count = 0;
  for (int t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    ++count;
    if (targets[t] < 0 || targets[t] >= vocab) {
      throw RangeError("cross_entropy: target id " + std::to_string(targets[t]) +
                       " out of range at row " + std::to_string(t));
    }
  }
  if (count == 0) throw ContractError("cross_entropy: mask selects no positions");

  Tensor out = make_op_output({1}, {logits});
  // Softmax probabilities are saved for the backward pass.
  std::vector<float> probs(size_t(t_len) * vocab, 0.0f);
  double total = 0.0;
  for (int t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    const float* row = logits.data().data() + size_t(t) * vocab;
    float mx = row[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    float* prow = probs.data() + size_t(t) * vocab;
    for (int j = 0; j < vocab; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    const float inv = float(1.0 / denom);
    for (int j = 0; j < vocab; ++j) prow[j] *= inv;
    total += std::log(denom) + mx - row[targets[t]];
  }
  out.data()[0] = float(total / count);
  if (out.tracked()) {
    out.node()->backward_fn = [t_len, vocab, count, targets, mask,
                               probs = std::move(probs)](detail::TensorNode& self) {
      auto& pl = *self.parents[0];
      if (!pl.track) return;
      pl.ensure_grad();
      const float g = self.grad[0] / float(count);
      for (int t = 0; t < t_len; ++t) {
        if (!mask[t]) continue;
        const float* prow = probs.data() + size_t(t) * vocab;
        float* drow = pl.grad.data() + size_t(t) * vocab;
        for (int j = 0; j < vocab; ++j) drow[j] += g * prow[j];
        drow[targets[t]] -= g;
      }
    };
  }
  return out;
}

Tensor embed_rows(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embed_rows");
  if (ids.empty()) throw ContractError("embed_rows: empty id list");
  const int d = table.cols(), v = table.rows();
  const int t_len = int(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw RangeError("embed_rows: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(v) + ")");
    }
  }
  Tensor out = make_op_output({t_len, d}, {table});
  for (int t = 0; t < t_len; ++t) {
    const float* src = table.data().data() + size_t(ids[t]) * d;
    std::copy(src, src + d, out.data().data() + size_t(t) * d);
  }
  if (out.tracked()) {
    std::vector<int> saved(ids.begin(), ids.end());
    out.node()->backward_fn = [d, saved = std::move(saved)](detail::TensorNode& self) {
      auto& pt = *self.parents[0];
      if (!pt.track) return;
      pt.ensure_grad();
      for (size_t t = 0; t < saved.size(); ++t) {
        const float* dy = self.grad.data() + t * d;
        float* dst = pt.grad.data() + size_t(saved[t]) * d;
        for (int j = 0; j < d; ++j) dst[j] += dy[j];
      }
    };
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_rows");
  require_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimError("concat_rows: column counts differ, " + a.shape_str() + " vs " +
                   b.shape_str());
  }
  const int d = a.cols();
  Tensor out = make_op_output({a.rows() + b.rows(), d}, {a, b});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.data().size());
  if (out.tracked()) {
    const size_t na = a.data().size(), nb = b.data().size();
    out.node()->backward_fn = [na, nb](detail::TensorNode& self) {
      accumulate_grad(*self.parents[0], self.grad.data(), na);
      accumulate_grad(*self.parents[1], self.grad.data() + na, nb);
    };
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const int p = parts[0].rows();
  int total = 0;
  for (const Tensor& t : parts) {
    require_matrix(t, "concat_cols");
    if (t.rows() != p) {
      throw DimError("concat_cols: row counts differ, " + parts[0].shape_str() +
                     " vs " + t.shape_str());
    }
    total += t.cols();
  }
  Tensor out = make_op_output({p, total}, parts);
  std::vector<int> widths;
  for (const Tensor& t : parts) widths.push_back(t.cols());
  int off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const int w = widths[k];
    for (int i = 0; i < p; ++i) {
      const float* src = parts[k].data().data() + size_t(i) * w;
      std::copy(src, src + w, out.data().data() + size_t(i) * total + off);
    }
    off += w;
  }
  if (out.tracked()) {
    out.node()->backward_fn = [p, total, widths = std::move(widths)](detail::TensorNode& self) {
      int off2 = 0;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        auto& par = *self.parents[k];
        const int w = widths[k];
        if (par.track) {
          par.ensure_grad();
          for (int i = 0; i < p; ++i) {
            const float* dy = self.grad.data() + size_t(i) * total + off2;
            float* dst = par.grad.data() + size_t(i) * w;
            for (int j = 0; j < w; ++j) dst[j] += dy[j];
          }
        }
        off2 += w;
      }
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  require_matrix(x, "slice_rows");
  if (r0 < 0 || r1 > x.rows() || r0 >= r1) {
    throw RangeError("slice_rows: range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") invalid for " + x.shape_str());
  }
  const int d = x.cols();
  Tensor out = make_op_output({r1 - r0, d}, {x});
  std::copy(x.data().begin() + size_t(r0) * d, x.data().begin() + size_t(r1) * d,
            out.data().begin());
  if (out.tracked()) {
    out.node()->backward_fn = [r0, r1, d](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      if (!px.track) return;
      px.ensure_grad();
      const size_t n = size_t(r1 - r0) * d;
      float* dst = px.grad.data() + size_t(r0) * d;
      for (size_t i = 0; i < n; ++i) dst[i] += self.grad[i];
    };
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  require_matrix(x, "slice_cols");
  if (c0 < 0 || c1 > x.cols() || c0 >= c1) {
    throw RangeError("slice_cols: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") invalid for " + x.shape_str());
  }
  const int p = x.rows(), q = x.cols(), w = c1 - c0;
  Tensor out = make_op_output({p, w}, {x});
  for (int i = 0; i < p; ++i) {
    const float* src = x.data().data() + size_t(i) * q + c0;
    std::copy(src, src + w, out.data().data() + size_t(i) * w);
  }
  if (out.tracked()) {
    out.node()->backward_fn = [p, q, c0, w](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      if (!px.track) return;
      px.ensure_grad();
      for (int i = 0; i < p; ++i) {
        const float* dy = self.grad.data() + size_t(i) * w;
        float* dst = px.grad.data() + size_t(i) * q + c0;
        for (int j = 0; j < w; ++j) dst[j] += dy[j];
      }
    };
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_op_output({1}, {x});
  double total = 0.0;
  for (float v : x.data()) total += v;
  out.data()[0] = float(total);
  if (out.tracked()) {
    const size_t n = x.data().size();
    out.node()->backward_fn = [n](detail::TensorNode& self) {
      auto& px = *self.parents[0];
      if (!px.track) return;
      px.ensure_grad();
      const float g = self.grad[0];
      for (size_t i = 0; i < n; ++i) px.grad[i] += g;
    };
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a defined scalar tensor");
  }
  detail::TensorNode* root = loss.node();
  if (!root->track) return;  // nothing reachable is tracked

  // Iterative post-order DFS over tracked nodes.
  std::vector<detail::TensorNode*> topo;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      detail::TensorNode* child = f.node->parents[f.next_child++].get();
      if (child->track && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this invocation; leaf grads persist so
  // that repeated calls accumulate.
  for (detail::TensorNode* n : topo) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0f);
  }
  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace softshield
