#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adattn/common.h"
#include "adattn/rng.h"

namespace adattn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense float64 tensor. Value storage is shared: copying a Tensor aliases the
// same node, which is what lets the tape hold cheap references to every
// operand. Gradient buffers live next to the values and accumulate by sum.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t ndim() const { return n_->shape.size(); }
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;

  double* data() { return n_->value.data(); }
  const double* data() const { return n_->value.data(); }
  double at(std::size_t i) const { return n_->value[i]; }
  double& ref(std::size_t i) { return n_->value[i]; }
  double item() const;  // single-element tensors

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  // Gradient buffer, allocated (zero-filled) on first touch.
  double* grad();
  const std::vector<double>& grad_vec();
  bool grad_allocated() const { return !n_->grad.empty(); }
  void zero_grad();

  bool all_finite() const;

  // Deep copy of values (fresh node, no grad).
  Tensor clone_values() const;
  // Overwrite values from another tensor of identical shape.
  void copy_values_from(const Tensor& src);

  bool same_node(const Tensor& other) const { return n_ == other.n_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> n_;
  static Tensor wrap(std::shared_ptr<Node> n);
};

// Records every differentiable op so backward() can replay the chain rule in
// reverse. One tape per forward/backward pass; cleared (or destroyed) after
// the optimizer step. Single-threaded.
class Tape {
 public:
  // When false, ops compute values only (evaluation mode).
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  // Debug mode: throw NumericError as soon as an op produces a non-finite value.
  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t num_ops() const { return backops_.size(); }
  void clear() { backops_.clear(); }

  // --- ops ---------------------------------------------------------------
  Tensor matmul(const Tensor& a, const Tensor& b);       // [m×k]·[k×n] or [m×k]·[k]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);    // [m×d]·[n×d]ᵀ -> [m×n]
  Tensor transpose(const Tensor& a);                     // [m×n] -> [n×m]
  Tensor add(const Tensor& a, const Tensor& b);          // equal shape or scalar operand
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);          // elementwise / scalar operand
  Tensor scale(const Tensor& a, double s);
  Tensor add_const(const Tensor& a, double c);
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor concat(std::span<const Tensor> parts);          // 1-D
  Tensor concat(std::initializer_list<Tensor> parts);
  Tensor sum(const Tensor& a);                           // -> scalar
  Tensor dot(const Tensor& a, const Tensor& b);          // 1-D·1-D -> scalar
  Tensor sum_squares(const Tensor& a);                   // Σ aᵢ² -> scalar
  Tensor masked_softmax(const Tensor& logits, const Tensor& mask);        // 1-D
  Tensor masked_softmax_rows(const Tensor& logits, const Tensor& mask);   // per row of [m×n]
  Tensor add_rowvec(const Tensor& m, const Tensor& v);   // each row += v
  Tensor scale_rows(const Tensor& m, const Tensor& s);   // row i *= s[i]; s carries no grad
  Tensor rows_weighted_sum(const Tensor& m, const Tensor& w);  // Σᵢ wᵢ·rowᵢ -> [d]
  Tensor concat_cols(const Tensor& a, const Tensor& b);  // [m×p],[m×q] -> [m×(p+q)]
  Tensor cross_entropy(const Tensor& logits, int gold);  // stable -log softmax[gold]
  Tensor dropout(const Tensor& a, double rate, Rng& rng);  // inverted dropout
  Tensor select_output(const Tensor& a, std::size_t i);  // scalar view of one element

  // Reverse pass from a scalar loss. Gradients accumulate (sum) into every
  // requires_grad ancestor. Call once per recorded forward.
  void backward(const Tensor& loss);

 private:
  bool recording_ = true;
  bool check_finite_ = false;
  std::vector<std::function<void()>> backops_;

  Tensor make_result(Shape shape, const Tensor& a);
  Tensor make_result(Shape shape, const Tensor& a, const Tensor& b);
  void record(std::function<void()> fn) { backops_.push_back(std::move(fn)); }
  void finite_check(const Tensor& t, const char* op) const;
};

// Max over coordinates of |autodiff − central difference| / max(1, |central|).
// f must evaluate the same computation on every call given the candidate x.
double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                         double eps = 1e-5);

}  // namespace adattn
