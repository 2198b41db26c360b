#include "adattn/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "adattn/kernels.h"

namespace adattn {

namespace {
const kernels::Ops& K() { return kernels::ops(); }
}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::wrap(std::shared_ptr<Node> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  for (auto d : n->shape)
    if (d == 0) throw DimError("tensor: zero dimension in shape " + shape_str(n->shape));
  n->value.assign(numel(n->shape), 0.0);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw DimError("tensor: shape " + shape_str(shape) + " does not match " +
                   std::to_string(values.size()) + " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (std::size_t i = 0; i < t.size(); ++i) t.ref(i) = rng.uniform(lo, hi);
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw DimError("tensor: rows() on non-matrix " + shape_str(shape()));
  return n_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw DimError("tensor: cols() on non-matrix " + shape_str(shape()));
  return n_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw DimError("tensor: item() on non-scalar " + shape_str(shape()));
  return n_->value[0];
}

double* Tensor::grad() {
  if (n_->grad.empty()) n_->grad.assign(n_->value.size(), 0.0);
  return n_->grad.data();
}

const std::vector<double>& Tensor::grad_vec() {
  grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : n_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::clone_values() const {
  return from(n_->shape, n_->value, false);
}

void Tensor::copy_values_from(const Tensor& src) {
  if (src.shape() != shape())
    throw DimError("tensor: copy between " + shape_str(src.shape()) + " and " +
                   shape_str(shape()));
  n_->value = src.n_->value;
}

// ---------------------------------------------------------------------------
// Tape helpers

Tensor Tape::make_result(Shape shape, const Tensor& a) {
  return Tensor::zeros(std::move(shape), recording_ && a.requires_grad());
}

Tensor Tape::make_result(Shape shape, const Tensor& a, const Tensor& b) {
  return Tensor::zeros(std::move(shape), recording_ && (a.requires_grad() || b.requires_grad()));
}

void Tape::finite_check(const Tensor& t, const char* op) const {
  if (check_finite_ && !t.all_finite())
    throw NumericError(std::string("non-finite value produced by ") + op);
}

namespace {
inline double* row(Tensor& t, std::size_t i) { return t.data() + i * t.cols(); }
inline const double* row(const Tensor& t, std::size_t i) { return t.data() + i * t.cols(); }
}  // namespace

// ---------------------------------------------------------------------------
// matmul family

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() < 1 || b.ndim() > 2)
    throw DimError("matmul: unsupported ranks " + shape_str(a.shape()) + " · " +
                   shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols();
  if (b.ndim() == 1) {
    if (b.size() != k)
      throw DimError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
    Tensor out = make_result({m}, a, b);
    for (std::size_t i = 0; i < m; ++i) out.ref(i) = K().dot(row(a, i), b.data(), k);
    finite_check(out, "matmul");
    if (out.requires_grad()) {
      Tensor A = a, x = b, y = out;
      record([A, x, y, m, k]() mutable {
        const double* gy = y.grad();
        if (A.requires_grad()) {
          double* gA = A.grad();
          for (std::size_t i = 0; i < m; ++i) K().axpy(gA + i * k, gy[i], x.data(), k);
        }
        if (x.requires_grad()) {
          double* gx = x.grad();
          for (std::size_t i = 0; i < m; ++i) K().axpy(gx, gy[i], A.data() + i * k, k);
        }
      });
    }
    return out;
  }
  const std::size_t n = b.cols();
  if (b.rows() != k)
    throw DimError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                   shape_str(b.shape()));
  Tensor out = make_result({m, n}, a, b);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = row(out, i);
    const double* ai = row(a, i);
    for (std::size_t l = 0; l < k; ++l) K().axpy(ci, ai[l], row(b, l), n);
  }
  finite_check(out, "matmul");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C, m, k, n]() mutable {
      const double* gC = C.grad();
      if (A.requires_grad()) {
        double* gA = A.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l)
            gA[i * k + l] += K().dot(gC + i * n, B.data() + l * n, n);
      }
      if (B.requires_grad()) {
        double* gB = B.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* ai = A.data() + i * k;
          for (std::size_t l = 0; l < k; ++l) K().axpy(gB + l * n, ai[l], gC + i * n, n);
        }
      }
    });
  }
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
    throw DimError("matmul_nt: incompatible " + shape_str(a.shape()) + " · " +
                   shape_str(b.shape()) + "ᵀ");
  const std::size_t m = a.rows(), d = a.cols(), n = b.rows();
  Tensor out = make_result({m, n}, a, b);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = row(out, i);
    for (std::size_t j = 0; j < n; ++j) ci[j] = K().dot(row(a, i), row(b, j), d);
  }
  finite_check(out, "matmul_nt");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C, m, d, n]() mutable {
      const double* gC = C.grad();
      if (A.requires_grad()) {
        double* gA = A.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            K().axpy(gA + i * d, gC[i * n + j], B.data() + j * d, d);
      }
      if (B.requires_grad()) {
        double* gB = B.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            K().axpy(gB + j * d, gC[i * n + j], A.data() + i * d, d);
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = make_result({n, m}, a);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.ref(j * m + i) = a.at(i * n + j);
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C, m, n]() mutable {
      double* gA = A.grad();
      const double* gC = C.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gA[i * n + j] += gC[j * m + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

namespace {
enum class Bcast { none, left_scalar, right_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (a.size() == 1) return Bcast::left_scalar;
  if (b.size() == 1) return Bcast::right_scalar;
  throw DimError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                 shape_str(b.shape()));
}
}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  Bcast bc = broadcast_kind(a, b, "add");
  const Tensor& big = bc == Bcast::left_scalar ? b : a;
  Tensor out = make_result(big.shape(), a, b);
  if (bc == Bcast::none) {
    K().add(out.data(), a.data(), b.data(), out.size());
  } else {
    const Tensor& sc = bc == Bcast::left_scalar ? a : b;
    for (std::size_t i = 0; i < out.size(); ++i) out.ref(i) = big.at(i) + sc.at(0);
  }
  finite_check(out, "add");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C]() mutable {
      const double* g = C.grad();
      auto acc = [&](Tensor& t) {
        if (!t.requires_grad()) return;
        if (t.size() == 1 && C.size() != 1)
          t.grad()[0] += K().sum(g, C.size());
        else
          K().axpy(t.grad(), 1.0, g, C.size());
      };
      acc(A);
      acc(B);
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  Bcast bc = broadcast_kind(a, b, "sub");
  const Tensor& big = bc == Bcast::left_scalar ? b : a;
  Tensor out = make_result(big.shape(), a, b);
  if (bc == Bcast::none) {
    K().sub(out.data(), a.data(), b.data(), out.size());
  } else if (bc == Bcast::right_scalar) {
    for (std::size_t i = 0; i < out.size(); ++i) out.ref(i) = a.at(i) - b.at(0);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out.ref(i) = a.at(0) - b.at(i);
  }
  finite_check(out, "sub");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C]() mutable {
      const double* g = C.grad();
      if (A.requires_grad()) {
        if (A.size() == 1 && C.size() != 1)
          A.grad()[0] += K().sum(g, C.size());
        else
          K().axpy(A.grad(), 1.0, g, C.size());
      }
      if (B.requires_grad()) {
        if (B.size() == 1 && C.size() != 1)
          B.grad()[0] -= K().sum(g, C.size());
        else
          K().axpy(B.grad(), -1.0, g, C.size());
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  Bcast bc = broadcast_kind(a, b, "mul");
  const Tensor& big = bc == Bcast::left_scalar ? b : a;
  Tensor out = make_result(big.shape(), a, b);
  if (bc == Bcast::none) {
    K().mul(out.data(), a.data(), b.data(), out.size());
  } else {
    const Tensor& sc = bc == Bcast::left_scalar ? a : b;
    K().scale(out.data(), big.data(), sc.at(0), out.size());
  }
  finite_check(out, "mul");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C, bc]() mutable {
      const double* g = C.grad();
      const std::size_t n = C.size();
      if (bc == Bcast::none) {
        if (A.requires_grad()) {
          double* gA = A.grad();
          for (std::size_t i = 0; i < n; ++i) gA[i] += g[i] * B.at(i);
        }
        if (B.requires_grad()) {
          double* gB = B.grad();
          for (std::size_t i = 0; i < n; ++i) gB[i] += g[i] * A.at(i);
        }
      } else {
        Tensor& sc = bc == Bcast::left_scalar ? A : B;
        Tensor& big = bc == Bcast::left_scalar ? B : A;
        if (big.requires_grad()) K().axpy(big.grad(), sc.at(0), g, n);
        if (sc.requires_grad()) sc.grad()[0] += K().dot(g, big.data(), n);
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
  Tensor out = make_result(a.shape(), a);
  K().scale(out.data(), a.data(), s, out.size());
  finite_check(out, "scale");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C, s]() mutable { K().axpy(A.grad(), s, C.grad(), C.size()); });
  }
  return out;
}

Tensor Tape::add_const(const Tensor& a, double c) {
  Tensor out = make_result(a.shape(), a);
  for (std::size_t i = 0; i < out.size(); ++i) out.ref(i) = a.at(i) + c;
  finite_check(out, "add_const");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable { K().axpy(A.grad(), 1.0, C.grad(), C.size()); });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out = make_result(a.shape(), a);
  K().sigmoid(out.data(), a.data(), out.size());
  finite_check(out, "sigmoid");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable {
      double* gA = A.grad();
      const double* g = C.grad();
      for (std::size_t i = 0; i < C.size(); ++i) {
        double y = C.at(i);
        gA[i] += g[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out = make_result(a.shape(), a);
  K().vtanh(out.data(), a.data(), out.size());
  finite_check(out, "tanh");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable {
      double* gA = A.grad();
      const double* g = C.grad();
      for (std::size_t i = 0; i < C.size(); ++i) {
        double y = C.at(i);
        gA[i] += g[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out = make_result(a.shape(), a);
  K().relu(out.data(), a.data(), out.size());
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable {
      double* gA = A.grad();
      const double* g = C.grad();
      for (std::size_t i = 0; i < C.size(); ++i)
        if (A.at(i) > 0.0) gA[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape assembly

Tensor Tape::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimError("concat: no inputs");
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.ndim() != 1) throw DimError("concat: expects vectors, got " + shape_str(p.shape()));
    total += p.size();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total}, recording_ && rg);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.data() + off, p.data(), p.size() * sizeof(double));
    off += p.size();
  }
  if (out.requires_grad()) {
    std::vector<Tensor> ps(parts.begin(), parts.end());
    Tensor C = out;
    record([ps, C]() mutable {
      const double* g = C.grad();
      std::size_t off = 0;
      for (Tensor& p : ps) {
        if (p.requires_grad()) K().axpy(p.grad(), 1.0, g + off, p.size());
        off += p.size();
      }
    });
  }
  return out;
}

Tensor Tape::concat(std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v));
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows())
    throw DimError("concat_cols: incompatible " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = make_result({m, p + q}, a, b);
  for (std::size_t i = 0; i < m; ++i) {
    std::memcpy(row(out, i), row(a, i), p * sizeof(double));
    std::memcpy(row(out, i) + p, row(b, i), q * sizeof(double));
  }
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C, m, p, q]() mutable {
      const double* g = C.grad();
      for (std::size_t i = 0; i < m; ++i) {
        if (A.requires_grad()) K().axpy(A.grad() + i * p, 1.0, g + i * (p + q), p);
        if (B.requires_grad()) K().axpy(B.grad() + i * q, 1.0, g + i * (p + q) + p, q);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor Tape::sum(const Tensor& a) {
  Tensor out = make_result({1}, a);
  out.ref(0) = K().sum(a.data(), a.size());
  finite_check(out, "sum");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable {
      double g = C.grad()[0];
      double* gA = A.grad();
      for (std::size_t i = 0; i < A.size(); ++i) gA[i] += g;
    });
  }
  return out;
}

Tensor Tape::dot(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size())
    throw DimError("dot: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor out = make_result({1}, a, b);
  out.ref(0) = K().dot(a.data(), b.data(), a.size());
  finite_check(out, "dot");
  if (out.requires_grad()) {
    Tensor A = a, B = b, C = out;
    record([A, B, C]() mutable {
      double g = C.grad()[0];
      if (A.requires_grad()) K().axpy(A.grad(), g, B.data(), A.size());
      if (B.requires_grad()) K().axpy(B.grad(), g, A.data(), B.size());
    });
  }
  return out;
}

Tensor Tape::sum_squares(const Tensor& a) {
  Tensor out = make_result({1}, a);
  out.ref(0) = K().dot(a.data(), a.data(), a.size());
  finite_check(out, "sum_squares");
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C]() mutable { K().axpy(A.grad(), 2.0 * C.grad()[0], A.data(), A.size()); });
  }
  return out;
}

Tensor Tape::select_output(const Tensor& a, std::size_t i) {
  if (i >= a.size()) throw DimError("select_output: index out of range");
  Tensor out = make_result({1}, a);
  out.ref(0) = a.at(i);
  if (out.requires_grad()) {
    Tensor A = a, C = out;
    record([A, C, i]() mutable { A.grad()[i] += C.grad()[0]; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax family

namespace {
// One masked softmax row; returns normalizer validity. Writes exact zeros at
// masked positions, max-subtraction on the support for stability.
void masked_softmax_row(double* out, const double* x, const double* mask, std::size_t n) {
  double mx = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] != 0.0 && (!any || x[i] > mx)) {
      mx = x[i];
      any = true;
    }
  }
  if (!any) throw InputError("masked_softmax: all-zero mask");
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] != 0.0) {
      out[i] = std::exp(x[i] - mx);
      z += out[i];
    } else {
      out[i] = 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) out[i] /= z;
}

void masked_softmax_row_backward(double* gx, const double* p, const double* g,
                                 const double* mask, std::size_t n) {
  double dotgp = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) dotgp += g[i] * p[i];
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) gx[i] += p[i] * (g[i] - dotgp);
}
}  // namespace

Tensor Tape::masked_softmax(const Tensor& logits, const Tensor& mask) {
  if (logits.ndim() != 1 || mask.shape() != logits.shape())
    throw DimError("masked_softmax: logits " + shape_str(logits.shape()) + " vs mask " +
                   shape_str(mask.shape()));
  Tensor out = make_result(logits.shape(), logits);
  masked_softmax_row(out.data(), logits.data(), mask.data(), logits.size());
  finite_check(out, "masked_softmax");
  if (out.requires_grad()) {
    Tensor X = logits, M = mask, P = out;
    record([X, M, P]() mutable {
      masked_softmax_row_backward(X.grad(), P.data(), P.grad(), M.data(), P.size());
    });
  }
  return out;
}

Tensor Tape::masked_softmax_rows(const Tensor& logits, const Tensor& mask) {
  if (logits.ndim() != 2 || mask.ndim() != 1 || mask.size() != logits.cols())
    throw DimError("masked_softmax_rows: logits " + shape_str(logits.shape()) + " vs mask " +
                   shape_str(mask.shape()));
  const std::size_t m = logits.rows(), n = logits.cols();
  Tensor out = make_result(logits.shape(), logits);
  for (std::size_t i = 0; i < m; ++i)
    masked_softmax_row(row(out, i), row(logits, i), mask.data(), n);
  finite_check(out, "masked_softmax_rows");
  if (out.requires_grad()) {
    Tensor X = logits, M = mask, P = out;
    record([X, M, P, m, n]() mutable {
      for (std::size_t i = 0; i < m; ++i)
        masked_softmax_row_backward(X.grad() + i * n, P.data() + i * n, P.grad() + i * n,
                                    M.data(), n);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// row-structured ops

Tensor Tape::add_rowvec(const Tensor& mat, const Tensor& v) {
  if (mat.ndim() != 2 || v.ndim() != 1 || v.size() != mat.cols())
    throw DimError("add_rowvec: " + shape_str(mat.shape()) + " + " + shape_str(v.shape()));
  const std::size_t m = mat.rows(), d = mat.cols();
  Tensor out = make_result(mat.shape(), mat, v);
  for (std::size_t i = 0; i < m; ++i) K().add(row(out, i), row(mat, i), v.data(), d);
  finite_check(out, "add_rowvec");
  if (out.requires_grad()) {
    Tensor M = mat, V = v, C = out;
    record([M, V, C, m, d]() mutable {
      const double* g = C.grad();
      if (M.requires_grad()) K().axpy(M.grad(), 1.0, g, m * d);
      if (V.requires_grad())
        for (std::size_t i = 0; i < m; ++i) K().axpy(V.grad(), 1.0, g + i * d, d);
    });
  }
  return out;
}

Tensor Tape::scale_rows(const Tensor& mat, const Tensor& s) {
  if (mat.ndim() != 2 || s.ndim() != 1 || s.size() != mat.rows())
    throw DimError("scale_rows: " + shape_str(mat.shape()) + " by " + shape_str(s.shape()));
  if (s.requires_grad()) throw DimError("scale_rows: scale vector must not require grad");
  const std::size_t m = mat.rows(), d = mat.cols();
  Tensor out = make_result(mat.shape(), mat);
  for (std::size_t i = 0; i < m; ++i) K().scale(row(out, i), row(mat, i), s.at(i), d);
  finite_check(out, "scale_rows");
  if (out.requires_grad()) {
    Tensor M = mat, S = s, C = out;
    record([M, S, C, m, d]() mutable {
      const double* g = C.grad();
      for (std::size_t i = 0; i < m; ++i) K().axpy(M.grad() + i * d, S.at(i), g + i * d, d);
    });
  }
  return out;
}

Tensor Tape::rows_weighted_sum(const Tensor& mat, const Tensor& w) {
  if (mat.ndim() != 2 || w.ndim() != 1 || w.size() != mat.rows())
    throw DimError("rows_weighted_sum: " + shape_str(mat.shape()) + " with " +
                   shape_str(w.shape()));
  const std::size_t m = mat.rows(), d = mat.cols();
  Tensor out = make_result({d}, mat, w);
  for (std::size_t i = 0; i < m; ++i) K().axpy(out.data(), w.at(i), row(mat, i), d);
  finite_check(out, "rows_weighted_sum");
  if (out.requires_grad()) {
    Tensor M = mat, W = w, C = out;
    record([M, W, C, m, d]() mutable {
      const double* g = C.grad();
      if (M.requires_grad())
        for (std::size_t i = 0; i < m; ++i) K().axpy(M.grad() + i * d, W.at(i), g, d);
      if (W.requires_grad()) {
        double* gW = W.grad();
        for (std::size_t i = 0; i < m; ++i) gW[i] += K().dot(g, M.data() + i * d, d);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// loss / regularization helpers

Tensor Tape::cross_entropy(const Tensor& logits, int gold) {
  if (logits.ndim() != 1) throw DimError("cross_entropy: logits must be a vector");
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.size())
    throw InputError("cross_entropy: label " + std::to_string(gold) + " out of range");
  const std::size_t n = logits.size();
  double mx = K().vmax(logits.data(), n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(logits.at(i) - mx);
  Tensor out = make_result({1}, logits);
  out.ref(0) = std::log(z) + mx - logits.at(gold);
  finite_check(out, "cross_entropy");
  if (out.requires_grad()) {
    Tensor X = logits, C = out;
    record([X, C, gold, mx, z, n]() mutable {
      double g = C.grad()[0];
      double* gX = X.grad();
      for (std::size_t i = 0; i < n; ++i) {
        double p = std::exp(X.at(i) - mx) / z;
        gX[i] += g * (p - (static_cast<int>(i) == gold ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor Tape::dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw InputError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  Tensor keep = Tensor::zeros(a.shape());
  const double inv = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < keep.size(); ++i)
    keep.ref(i) = rng.uniform() >= rate ? inv : 0.0;
  Tensor out = make_result(a.shape(), a);
  K().mul(out.data(), a.data(), keep.data(), out.size());
  if (out.requires_grad()) {
    Tensor A = a, M = keep, C = out;
    record([A, M, C]() mutable {
      double* gA = A.grad();
      const double* g = C.grad();
      for (std::size_t i = 0; i < C.size(); ++i) gA[i] += g[i] * M.at(i);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reverse pass

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw DimError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = backops_.rbegin(); it != backops_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// finite differences

double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                         double eps) {
  if (eps <= 0.0) throw InputError("finite_diff_check: eps must be positive");
  x.set_requires_grad(true);
  x.zero_grad();
  Tape tape;
  Tensor out = f(tape, x);
  if (out.size() != 1) throw DimError("finite_diff_check: f must return a scalar");
  tape.backward(out);
  std::vector<double> autograd(x.grad(), x.grad() + x.size());

  Tape probe;
  probe.set_recording(false);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.at(i);
    x.ref(i) = v + eps;
    double fp = f(probe, x).item();
    x.ref(i) = v - eps;
    double fm = f(probe, x).item();
    x.ref(i) = v;
    double central = (fp - fm) / (2.0 * eps);
    double err = std::abs(autograd[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace adattn
