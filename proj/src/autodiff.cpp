#include "sceneprior/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace sceneprior::ad {

namespace {

[[noreturn]] void shape_error(const char* op, Var a, Var b) {
  std::ostringstream os;
  os << op << ": incompatible shapes [" << a.rows() << "x" << a.cols() << "] and ["
     << b.rows() << "x" << b.cols() << "]";
  throw Error("shape-mismatch", os.str());
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_kind(const char* op, Var a, Var b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_error(op, a, b);
}

inline std::size_t bindex(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return r * cols + c;
    case Broadcast::kRow: return c;
    case Broadcast::kCol: return r;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

// Elementwise binary op with broadcasting. `df` returns (d/da, d/db).
template <typename F, typename DF>
Var binary_op(const char* name, Var a, Var b, F f, DF df) {
  const Broadcast kind = broadcast_kind(name, a, b);
  const std::size_t rows = a.rows(), cols = a.cols();
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = f(av[r * cols + c], bv[bindex(kind, r, c, cols)]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(rows, cols, std::move(out), {a, b},
                       [ia, ib, kind, rows, cols, df](Tape& t, std::size_t self) {
                         auto g = t.grad(self);
                         auto av = t.value(ia);
                         auto bv = t.value(ib);
                         auto ga = t.grad_accum(ia);
                         auto gb = t.grad_accum(ib);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) {
                             const std::size_t i = r * cols + c;
                             const std::size_t j = bindex(kind, r, c, cols);
                             const auto [da, db] = df(av[i], bv[j]);
                             if (!ga.empty()) ga[i] += g[i] * da;
                             if (!gb.empty()) gb[j] += g[i] * db;
                           }
                       });
}

// Elementwise unary op; `df(x, y)` is the derivative given input and output.
template <typename F, typename DF>
Var unary_op(Var a, F f, DF df) {
  auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  return a.tape().push(a.rows(), a.cols(), std::move(out), {a},
                       [ia, df](Tape& t, std::size_t self) {
                         auto ga = t.grad_accum(ia);
                         if (ga.empty()) return;
                         auto g = t.grad(self);
                         auto x = t.value(ia);
                         auto y = t.value(self);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
                       });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---- shapes / params --------------------------------------------------------

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

ParamTensor::ParamTensor(std::string name_, Shape shape_, bool requires_grad_)
    : name(std::move(name_)), shape(std::move(shape_)), requires_grad(requires_grad_) {
  if (shape.empty() || shape.size() > 2)
    throw Error("bad-shape", "parameter " + name + " must have rank 1 or 2");
  for (auto e : shape)
    if (e == 0) throw Error("bad-shape", "parameter " + name + " has a zero extent");
  values.assign(shape_size(shape), 0.0);
  grad.assign(values.size(), 0.0);
}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---- Var ---------------------------------------------------------------------

std::size_t Var::rows() const { return tape_->rows(id_); }
std::size_t Var::cols() const { return tape_->cols(id_); }
std::span<const double> Var::value() const { return tape_->value(id_); }

double Var::item() const {
  if (size() != 1) throw Error("not-scalar", "item() on a " + std::to_string(rows()) + "x" +
                                                 std::to_string(cols()) + " value");
  return value()[0];
}

std::vector<double> Var::to_vector() const {
  auto v = value();
  return {v.begin(), v.end()};
}

// ---- Tape --------------------------------------------------------------------

Var Tape::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols)
    throw Error("shape-mismatch", "constant: " + std::to_string(values.size()) +
                                      " values for shape [" + std::to_string(rows) + "x" +
                                      std::to_string(cols) + "]");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(ParamTensor& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.rows = p.rows();
  n.cols = p.cols();
  n.value = p.values;
  n.needs_grad = p.requires_grad;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(&p, id);
  leaf_order_.push_back(id);
  return {this, id};
}

Var Tape::push(std::size_t rows, std::size_t cols, std::vector<double> value,
               std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  for (const Var& v : inputs) n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::push(std::size_t rows, std::size_t cols, std::vector<double> value,
               const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  for (const Var& v : inputs) n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::span<double> Tape::grad_accum(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss, bool flush) {
  if (loss.size() != 1)
    throw Error("not-scalar", "backward from a non-scalar [" + std::to_string(loss.rows()) +
                                  "x" + std::to_string(loss.cols()) + "] value");
  auto g = grad_accum(loss.id());
  if (g.empty()) return;
  g[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  if (flush) flush_param_grads();
}

void Tape::flush_param_grads() {
  for (std::size_t id : leaf_order_) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.param->requires_grad) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(n, m, std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_accum(ia);
    auto gb = t.grad_accum(ib);
    auto av = t.value(ia);
    auto bv = t.value(ib);
    if (!ga.empty())
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bv[p * m + j];
          ga[i * k + p] += s;
        }
    if (!gb.empty())
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
        }
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      out[i * m + j] = s;
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(n, m, std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad_accum(ia);
    auto gb = t.grad_accum(ib);
    auto av = t.value(ia);
    auto bv = t.value(ib);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g[i * m + j];
        if (gij == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          if (!ga.empty()) ga[i * k + p] += gij * bv[j * k + p];
          if (!gb.empty()) gb[j * k + p] += gij * av[i * k + p];
        }
      }
  });
}

Var transpose(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  auto av = a.value();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  const std::size_t ia = a.id();
  return a.tape().push(m, n, std::move(out), {a}, [ia, n, m](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    auto g = t.grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double x, double y) { return std::pair{y, x}; });
}

Var div(Var a, Var b) {
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var scale(Var a, double s) {
  return unary_op(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Var gelu(Var a) {
  return unary_op(a, gelu_value, [](double x, double) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
  });
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Var softplus(Var a) {
  return unary_op(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Var sigmoid(Var a) {
  return unary_op(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary_op(a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---- softmax -----------------------------------------------------------------

Var softmax_rows(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  auto av = a.value();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &av[i * m];
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      s += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= s;
  }
  const std::size_t ia = a.id();
  return a.tape().push(n, m, std::move(out), {a}, [ia, n, m](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    auto g = t.grad(self);
    auto y = t.value(self);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * y[i * m + j];
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += y[i * m + j] * (g[i * m + j] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  auto av = a.value();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &av[i * m];
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape().push(n, m, std::move(out), {a}, [ia, n, m](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    auto g = t.grad(self);
    auto y = t.value(self);
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        ga[i * m + j] += g[i * m + j] - std::exp(y[i * m + j]) * gs;
    }
  });
}

// ---- reductions --------------------------------------------------------------

Var sum(Var a) {
  auto av = a.value();
  double s = 0.0;
  for (double v : av) s += v;
  const std::size_t ia = a.id();
  return a.tape().push(1, 1, {s}, {a}, [ia](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    const double g = t.grad(self)[0];
    for (double& v : ga) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var sum_rows(Var a) {
  const std::size_t n = a.rows(), m = a.cols();
  auto av = a.value();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += av[i * m + j];
  const std::size_t ia = a.id();
  return a.tape().push(1, m, std::move(out), {a}, [ia, n, m](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    auto g = t.grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j];
  });
}

// ---- structural --------------------------------------------------------------

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("empty-input", "concat_cols of nothing");
  const std::size_t n = parts[0].rows();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts[0], p);
    m += p.cols();
  }
  std::vector<double> out(n * m);
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t off = 0;
  for (const Var& p : parts) {
    auto pv = p.value();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(pv.begin() + i * w, pv.begin() + (i + 1) * w, out.begin() + i * m + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    widths.push_back(w);
    off += w;
  }
  return parts[0].tape().push(n, m, std::move(out), parts,
                              [ids, offsets, widths, n, m](Tape& t, std::size_t self) {
                                auto g = t.grad(self);
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  auto gp = t.grad_accum(ids[k]);
                                  if (gp.empty()) continue;
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t j = 0; j < widths[k]; ++j)
                                      gp[i * widths[k] + j] += g[i * m + offsets[k] + j];
                                }
                              });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("empty-input", "concat_rows of nothing");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.cols() != m) shape_error("concat_rows", parts[0], p);
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * m);
  std::vector<std::size_t> ids, offsets, sizes;
  for (const Var& p : parts) {
    auto pv = p.value();
    ids.push_back(p.id());
    offsets.push_back(out.size());
    sizes.push_back(pv.size());
    out.insert(out.end(), pv.begin(), pv.end());
  }
  return parts[0].tape().push(n, m, std::move(out), parts,
                              [ids, offsets, sizes](Tape& t, std::size_t self) {
                                auto g = t.grad(self);
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  auto gp = t.grad_accum(ids[k]);
                                  if (gp.empty()) continue;
                                  for (std::size_t i = 0; i < sizes[k]; ++i)
                                    gp[i] += g[offsets[k] + i];
                                }
                              });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const std::size_t n = a.rows(), m = a.cols();
  if (count == 0 || start + count > m)
    throw Error("shape-mismatch", "slice_cols [" + std::to_string(start) + "," +
                                      std::to_string(start + count) + ") of " +
                                      std::to_string(m) + " columns");
  auto av = a.value();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = av[i * m + start + j];
  const std::size_t ia = a.id();
  return a.tape().push(n, count, std::move(out), {a},
                       [ia, n, m, start, count](Tape& t, std::size_t self) {
                         auto ga = t.grad_accum(ia);
                         auto g = t.grad(self);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < count; ++j)
                             ga[i * m + start + j] += g[i * count + j];
                       });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const std::size_t n = a.rows(), m = a.cols();
  if (count == 0 || start + count > n)
    throw Error("shape-mismatch", "slice_rows [" + std::to_string(start) + "," +
                                      std::to_string(start + count) + ") of " +
                                      std::to_string(n) + " rows");
  auto av = a.value();
  std::vector<double> out(av.begin() + start * m, av.begin() + (start + count) * m);
  const std::size_t ia = a.id();
  return a.tape().push(count, m, std::move(out), {a},
                       [ia, m, start](Tape& t, std::size_t self) {
                         auto ga = t.grad_accum(ia);
                         auto g = t.grad(self);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[start * m + i] += g[i];
                       });
}

Var tile_rows(Var row, std::size_t count) {
  if (row.rows() != 1) throw Error("shape-mismatch", "tile_rows expects a single row");
  const std::size_t m = row.cols();
  auto rv = row.value();
  std::vector<double> out(count * m);
  for (std::size_t i = 0; i < count; ++i) std::copy(rv.begin(), rv.end(), out.begin() + i * m);
  const std::size_t ia = row.id();
  return row.tape().push(count, m, std::move(out), {row},
                         [ia, count, m](Tape& t, std::size_t self) {
                           auto ga = t.grad_accum(ia);
                           auto g = t.grad(self);
                           for (std::size_t i = 0; i < count; ++i)
                             for (std::size_t j = 0; j < m; ++j) ga[j] += g[i * m + j];
                         });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m || beta.size() != m) shape_error("layer_norm_rows", x, gamma);
  auto xv = x.value();
  auto gv = gamma.value();
  auto bv = beta.value();
  std::vector<double> out(n * m), xhat(n * m), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += xv[i * m + j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xv[i * m + j] - mu) * (xv[i * m + j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat[i * m + j] = (xv[i * m + j] - mu) * inv_std[i];
      out[i * m + j] = xhat[i * m + j] * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().push(
      n, m, std::move(out), {x, gamma, beta},
      [ix, ig, ib, n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                               std::size_t self) {
        auto g = t.grad(self);
        auto gv = t.value(ig);
        auto gx = t.grad_accum(ix);
        auto gg = t.grad_accum(ig);
        auto gb = t.grad_accum(ib);
        for (std::size_t i = 0; i < n; ++i) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            const double dy = g[i * m + j] * gv[j];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat[i * m + j];
            if (!gg.empty()) gg[j] += g[i * m + j] * xhat[i * m + j];
            if (!gb.empty()) gb[j] += g[i * m + j];
          }
          if (gx.empty()) continue;
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t j = 0; j < m; ++j) {
            const double dy = g[i * m + j] * gv[j];
            gx[i * m + j] +=
                inv_std[i] * (dy - inv_m * sum_dy - xhat[i * m + j] * inv_m * sum_dy_xhat);
          }
        }
      });
}

// ---- losses ------------------------------------------------------------------

Var l1_distance(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("l1_distance", a, b);
  return mean(abs(sub(a, b)));
}

Var cross_entropy_logits(Var logits, std::size_t target) {
  if (logits.rows() != 1 || target >= logits.cols())
    throw Error("shape-mismatch", "cross_entropy_logits: target " + std::to_string(target) +
                                      " for [" + std::to_string(logits.rows()) + "x" +
                                      std::to_string(logits.cols()) + "] logits");
  auto lv = logits.value();
  const std::size_t m = lv.size();
  const double mx = *std::max_element(lv.begin(), lv.end());
  double s = 0.0;
  for (double v : lv) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  const std::size_t il = logits.id();
  return logits.tape().push(1, 1, {lse - lv[target]}, {logits},
                            [il, m, target, lse](Tape& t, std::size_t self) {
                              auto gl = t.grad_accum(il);
                              auto lv = t.value(il);
                              const double g = t.grad(self)[0];
                              for (std::size_t j = 0; j < m; ++j)
                                gl[j] += g * (std::exp(lv[j] - lse) - (j == target ? 1.0 : 0.0));
                            });
}

Var bce(Var prob, std::span<const double> target, double clamp) {
  if (target.size() != prob.size())
    throw Error("shape-mismatch", "bce: " + std::to_string(prob.size()) + " probabilities vs " +
                                      std::to_string(target.size()) + " targets");
  auto pv = prob.value();
  const double inv_n = 1.0 / static_cast<double>(pv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], clamp, 1.0 - clamp);
    s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  const std::size_t ip = prob.id();
  std::vector<double> tgt(target.begin(), target.end());
  return prob.tape().push(1, 1, {s * inv_n}, {prob},
                          [ip, inv_n, clamp, tgt = std::move(tgt)](Tape& t, std::size_t self) {
                            auto gp = t.grad_accum(ip);
                            auto pv = t.value(ip);
                            const double g = t.grad(self)[0] * inv_n;
                            for (std::size_t i = 0; i < pv.size(); ++i) {
                              const double p = pv[i];
                              if (p <= clamp || p >= 1.0 - clamp) continue;
                              gp[i] += g * (p - tgt[i]) / (p * (1.0 - p));
                            }
                          });
}

Var bce_with_logits(Var logits, std::span<const double> target) {
  if (target.size() != logits.size())
    throw Error("shape-mismatch", "bce_with_logits: " + std::to_string(logits.size()) +
                                      " logits vs " + std::to_string(target.size()) + " targets");
  auto xv = logits.value();
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double x = xv[i];
    s += std::max(x, 0.0) - x * target[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const std::size_t ix = logits.id();
  std::vector<double> tgt(target.begin(), target.end());
  return logits.tape().push(1, 1, {s * inv_n}, {logits},
                            [ix, inv_n, tgt = std::move(tgt)](Tape& t, std::size_t self) {
                              auto gx = t.grad_accum(ix);
                              auto xv = t.value(ix);
                              const double g = t.grad(self)[0] * inv_n;
                              for (std::size_t i = 0; i < xv.size(); ++i)
                                gx[i] += g * (sigmoid_value(xv[i]) - tgt[i]);
                            });
}

Var normalize(Var a) {
  auto av = a.value();
  double ss = 0.0;
  for (double v : av) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm == 0.0) throw Error("degenerate", "normalize of a zero vector");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / norm;
  const std::size_t ia = a.id();
  return a.tape().push(a.rows(), a.cols(), std::move(out), {a}, [ia, norm](Tape& t, std::size_t self) {
    auto ga = t.grad_accum(ia);
    auto g = t.grad(self);
    auto y = t.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (g[i] - y[i] * dot) / norm;
  });
}

Var cosine_similarity(Var a, Var b) {
  if (a.size() != b.size()) shape_error("cosine_similarity", a, b);
  auto av = a.value();
  auto bv = b.value();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na == 0.0 || nb == 0.0) throw Error("degenerate", "cosine similarity with a zero vector");
  const double cosv = ab / (na * nb);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(1, 1, {cosv}, {a, b}, [ia, ib, na, nb, cosv](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    auto av = t.value(ia);
    auto bv = t.value(ib);
    auto ga = t.grad_accum(ia);
    auto gb = t.grad_accum(ib);
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (!ga.empty()) ga[i] += g * (bv[i] / (na * nb) - cosv * av[i] / (na * na));
      if (!gb.empty()) gb[i] += g * (av[i] / (na * nb) - cosv * bv[i] / (nb * nb));
    }
  });
}

// ---- gradient check ------------------------------------------------------------

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

double gradient_check(const ScalarFn& f, ParamTensor& x, double eps) {
  return gradient_check(f, std::vector<ParamTensor*>{&x}, eps);
}

double gradient_check(const ScalarFn& f, const std::vector<ParamTensor*>& xs, double eps,
                      std::size_t max_coords_per_tensor, std::uint64_t seed, double floor,
                      Stencil stencil) {
  std::vector<std::vector<double>> saved_grads;
  for (ParamTensor* p : xs) {
    saved_grads.push_back(p->grad);
    p->zero_grad();
  }
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    ParamTensor& p = *xs[k];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = p.values[i];
      auto at = [&](double step) {
        p.values[i] = orig + step;
        Tape t;
        return f(t).item();
      };
      double fd;
      if (stencil == Stencil::Central) {
        fd = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        const double m2 = at(-2 * eps), m1 = at(-eps), p1 = at(eps), p2 = at(2 * eps);
        // Differences first: exact zero when f ignores the coordinate.
        fd = ((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * eps);
      }
      p.values[i] = orig;
      worst = std::max(worst, relative_error(p.grad[i], fd, floor));
    }
  }
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k]->grad = std::move(saved_grads[k]);
  return worst;
}

}  // namespace sceneprior::ad
