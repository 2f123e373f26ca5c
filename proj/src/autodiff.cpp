#include "ignn/autodiff.hpp"

#include <cmath>
#include <string>

#include "ignn/error.hpp"

namespace ignn::ad {

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw DomainError("Tape: invalid variable handle");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw DomainError("Tape: invalid variable handle");
  return nodes_[v.id];
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix{}, nullptr, requires_grad});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || node(p).requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix{}, needs ? std::move(backward) : nullptr, needs});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || node(p).requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix{}, needs ? std::move(backward) : nullptr, needs});
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "Tape::accumulate");
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate(Var v, Matrix&& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "Tape::accumulate");
  if (n.grad.empty()) {
    n.grad = std::move(g);
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var output) {
  const Node& out = node(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ShapeError("Tape::backward: output must be 1x1, got " + out.value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Matrix{};
  if (!out.requires_grad) return;
  nodes_[output.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, Var{i}, n.grad);
  }
}

Var matmul(Tape& t, Var a, Var b) {
  return t.record(ignn::matmul(t.value(a), t.value(b)), {a, b},
                  [a, b](Tape& tp, Var, const Matrix& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
                    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
                  });
}

Var affine(Tape& t, Var x, Var w, Var b) {
  return t.record(ignn::affine(t.value(x), t.value(w), t.value(b)), {x, w, b},
                  [x, w, b](Tape& tp, Var, const Matrix& g) {
                    if (tp.requires_grad(x)) tp.accumulate(x, matmul_nt(g, tp.value(w)));
                    if (tp.requires_grad(w)) tp.accumulate(w, matmul_tn(tp.value(x), g));
                    if (tp.requires_grad(b)) tp.accumulate(b, column_sums(g));
                  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "ad::add");
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "ad::sub");
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, Var, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, g * -1.0);
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a},
                  [a, s](Tape& tp, Var, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var scale_by(Tape& t, Var a, Var s) {
  const Matrix& sv = t.value(s);
  if (sv.rows() != 1 || sv.cols() != 1) throw ShapeError("ad::scale_by: scale must be 1x1");
  return t.record(t.value(a) * sv[0], {a, s}, [a, s](Tape& tp, Var, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(s)[0]);
    if (tp.requires_grad(s)) tp.accumulate(s, Matrix(1, 1, dot(g, tp.value(a))));
  });
}

Var tanh(Tape& t, Var a) {
  return t.record(ignn::tanh(t.value(a)), {a}, [a](Tape& tp, Var self, const Matrix& g) {
    const Matrix& y = tp.value(self);
    Matrix d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
    tp.accumulate(a, std::move(d));
  });
}

Var relu(Tape& t, Var a) {
  return t.record(ignn::relu(t.value(a)), {a}, [a](Tape& tp, Var, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? d[i] : 0.0;
    tp.accumulate(a, std::move(d));
  });
}

Var sigmoid(Tape& t, Var a) {
  return t.record(ignn::sigmoid(t.value(a)), {a}, [a](Tape& tp, Var self, const Matrix& g) {
    const Matrix& y = tp.value(self);
    Matrix d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    tp.accumulate(a, std::move(d));
  });
}

Var softmax(Tape& t, Var logits, std::size_t count) {
  const Matrix& l = t.value(logits);
  if (l.rows() != 1) throw ShapeError("ad::softmax: expects a row vector, got " + l.shape_string());
  if (count == 0 || count > l.cols()) throw DomainError("ad::softmax: bad active count");
  const std::vector<double> p = ignn::softmax(l.values().first(count));
  return t.record(Matrix::row_vector(p), {logits}, [logits](Tape& tp, Var self, const Matrix& g) {
    const Matrix& y = tp.value(self);
    const double gy = dot(g, y);
    Matrix d(1, tp.value(logits).cols());
    for (std::size_t i = 0; i < y.cols(); ++i) d[i] = y[i] * (g[i] - gy);
    tp.accumulate(logits, std::move(d));
  });
}

Var softmax(Tape& t, Var logits) { return softmax(t, logits, t.value(logits).cols()); }

Var sum(Tape& t, Var a) {
  return t.record(Matrix(1, 1, ignn::sum(t.value(a))), {a}, [a](Tape& tp, Var, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix(x.rows(), x.cols(), g[0]));
  });
}

Var frobenius_norm(Tape& t, Var a) {
  return t.record(Matrix(1, 1, ignn::frobenius_norm(t.value(a))), {a},
                  [a](Tape& tp, Var self, const Matrix& g) {
                    const double nrm = tp.value(self)[0];
                    const Matrix& x = tp.value(a);
                    if (nrm == 0.0) return;
                    tp.accumulate(a, x * (g[0] / nrm));
                  });
}

Var mean_rows(Tape& t, Var a) {
  return t.record(column_means(t.value(a)), {a}, [a](Tape& tp, Var, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix d(x.rows(), x.cols());
    const double inv = x.rows() ? 1.0 / static_cast<double>(x.rows()) : 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g[j] * inv;
    tp.accumulate(a, std::move(d));
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw DomainError("ad::concat_cols: nothing to concatenate");
  const std::size_t rows = t.value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ShapeError("ad::concat_cols: row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, Var, const Matrix& g) {
    std::size_t off = 0;
    for (Var p : parts) {
      const Matrix& v = tp.value(p);
      if (tp.requires_grad(p)) {
        Matrix d(v.rows(), v.cols());
        for (std::size_t i = 0; i < v.rows(); ++i)
          for (std::size_t j = 0; j < v.cols(); ++j) d(i, j) = g(i, off + j);
        tp.accumulate(p, std::move(d));
      }
      off += v.cols();
    }
  });
}

Var weighted_sum(Tape& t, Var weights, const std::vector<Var>& mats) {
  const Matrix& w = t.value(weights);
  if (mats.empty()) throw DomainError("ad::weighted_sum: empty operand list");
  if (w.rows() != 1 || w.cols() != mats.size()) {
    throw ShapeError("ad::weighted_sum: weights " + w.shape_string() + " for " +
                     std::to_string(mats.size()) + " operands");
  }
  Matrix out(t.value(mats[0]).rows(), t.value(mats[0]).cols());
  for (std::size_t i = 0; i < mats.size(); ++i) axpy(w[i], t.value(mats[i]), out);
  std::vector<Var> parents = mats;
  parents.push_back(weights);
  return t.record(std::move(out), parents, [weights, mats](Tape& tp, Var, const Matrix& g) {
    const Matrix& wv = tp.value(weights);
    Matrix dw(1, mats.size());
    for (std::size_t i = 0; i < mats.size(); ++i) {
      if (tp.requires_grad(mats[i])) tp.accumulate(mats[i], g * wv[i]);
      dw[i] = dot(g, tp.value(mats[i]));
    }
    tp.accumulate(weights, std::move(dw));
  });
}

Var element(Tape& t, Var a, std::size_t r, std::size_t c) {
  const Matrix& v = t.value(a);
  if (r >= v.rows() || c >= v.cols()) throw ShapeError("ad::element: index out of range");
  return t.record(Matrix(1, 1, v(r, c)), {a}, [a, r, c](Tape& tp, Var, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix d(x.rows(), x.cols());
    d(r, c) = g[0];
    tp.accumulate(a, std::move(d));
  });
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps) {
  if (!(eps >= 1e-8 && eps <= 1e-3)) throw DomainError("grad_check: eps outside [1e-8, 1e-3]");
  auto evaluate = [&f](const Matrix& at) {
    Tape tape;
    const Var in = tape.leaf(at, false);
    const double v = tape.value(f(tape, in))[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  Tape tape;
  const Var in = tape.leaf(x);
  const Var out = f(tape, in);
  if (!std::isfinite(tape.value(out)[0])) throw NumericError("grad_check: non-finite function value");
  tape.backward(out);
  const Matrix analytic = tape.grad(in);

  double worst = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = evaluate(probe);
    probe[i] = x[i] - eps;
    const double down = evaluate(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ignn::ad
