#include "ignn/neural_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>

#include "ignn/checkpoint.hpp"
#include "ignn/error.hpp"
#include "ignn/rng.hpp"

namespace ignn {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t graph_key(const SparseGraph& g) {
  Matrix vals(1, g.values().size(), g.values());
  std::uint64_t h = fingerprint(vals, 1469598103934665603ULL ^ g.n());
  for (std::size_t c : g.col_idx()) h = (h ^ c) * 1099511628211ULL;
  return h;
}

/// X W + b with X held outside the tape (it is large and never differentiated).
ad::Var affine_fixed_input(ad::Tape& t, const Matrix& x, ad::Var w, ad::Var b) {
  const Matrix* xp = &x;
  return t.record(affine(x, t.value(w), t.value(b)), {w, b}, [xp, w, b](ad::Tape& tp, ad::Var, const Matrix& g) {
    tp.accumulate(w, matmul_tn(*xp, g));
    tp.accumulate(b, column_sums(g));
  });
}

/// x + 1 b for a 1 x cols row b.
ad::Var add_bias(ad::Tape& t, ad::Var x, ad::Var b) {
  Matrix out = t.value(x);
  const Matrix& bv = t.value(b);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  return t.record(std::move(out), {x, b}, [x, b](ad::Tape& tp, ad::Var, const Matrix& g) {
    tp.accumulate(x, g);
    tp.accumulate(b, column_sums(g));
  });
}

/// 1 / residual_scale(g) as a 1 x 1 tape value.
ad::Var inverse_rms(ad::Tape& t, ad::Var g) {
  const Matrix& gv = t.value(g);
  const double n = static_cast<double>(std::max<std::size_t>(gv.size(), 1));
  const double norm = frobenius_norm(gv);
  if (norm == 0.0) return t.record(Matrix(1, 1, 1.0), {g}, [](ad::Tape&, ad::Var, const Matrix&) {});
  const double inv = std::sqrt(n) / norm;
  // d(sqrt(n) / ||g||) / dg = -sqrt(n) g / ||g||^3
  return t.record(Matrix(1, 1, inv), {g}, [g, inv, norm](ad::Tape& tp, ad::Var, const Matrix& up) {
    tp.accumulate(g, tp.value(g) * (-up(0, 0) * inv / (norm * norm)));
  });
}

/// tanh(P / scale + 1 c) for a projected residual P = G C.
Matrix squash_projected(const Matrix& projected, double scale, const Matrix& bias) {
  Matrix out = projected * (1.0 / scale);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
  return tanh(out);
}

}  // namespace

UpdateRule parse_update_rule(const std::string& name) {
  if (name == "classic_aa" || name == "ClassicAA") return UpdateRule::ClassicAA;
  if (name == "literal_alg2" || name == "LiteralAlg2") return UpdateRule::LiteralAlg2;
  throw ConfigError("unknown update_rule '" + name + "' (expected classic_aa or literal_alg2)");
}

const char* update_rule_name(UpdateRule r) {
  return r == UpdateRule::ClassicAA ? "classic_aa" : "literal_alg2";
}

NeuralSolver NeuralSolver::random(std::size_t d, std::size_t hidden, const NeuralSolverOptions& options,
                                  std::uint64_t seed) {
  if (options.m < 1) throw DomainError("NeuralSolver: window m must be >= 1");
  if (options.p == 0 || options.init_hidden == 0 || options.predictor_hidden == 0) {
    throw DomainError("NeuralSolver: zero layer width");
  }
  if (!(options.beta_max > 0.0)) throw DomainError("NeuralSolver: beta_max must be positive");
  if (!(options.keep_fraction > 0.0 && options.keep_fraction <= 1.0)) {
    throw DomainError("NeuralSolver: keep_fraction must lie in (0, 1]");
  }
  Rng rng(seed);
  NeuralSolver s;
  s.options_ = options;
  const std::size_t slots = options.m + 1;
  const std::size_t q = options.predictor_hidden;
  s.init_w1_ = rng.glorot(d, options.init_hidden);
  s.init_b1_ = Matrix(1, options.init_hidden);
  s.init_w2_ = rng.glorot(options.init_hidden, hidden);
  s.init_b2_ = Matrix(1, hidden);
  s.comp_w_ = rng.glorot(hidden, options.p);
  s.comp_b_ = Matrix(1, options.p);
  s.gcn_w_ = rng.glorot(slots * options.p, q);
  s.gcn_b_ = Matrix(1, q);
  s.alpha_w_ = rng.glorot(q, slots);
  s.alpha_b_ = Matrix(1, slots);
  s.beta_w_ = rng.glorot(q, 1);
  // Start near beta = 1.
  s.beta_b_ = Matrix(1, 1, -std::log(options.beta_max - 1.0 > 0.0 ? options.beta_max - 1.0 : 1.0));
  return s;
}

std::vector<std::pair<std::string, Matrix*>> NeuralSolver::parameters() {
  return {{"init.w1", &init_w1_},  {"init.b1", &init_b1_},  {"init.w2", &init_w2_},
          {"init.b2", &init_b2_},  {"compress.w", &comp_w_}, {"compress.b", &comp_b_},
          {"gcn.w", &gcn_w_},      {"gcn.b", &gcn_b_},       {"alpha.w", &alpha_w_},
          {"alpha.b", &alpha_b_},  {"beta.w", &beta_w_},     {"beta.b", &beta_b_}};
}

std::vector<std::pair<std::string, const Matrix*>> NeuralSolver::parameters() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<NeuralSolver*>(this)->parameters()) out.emplace_back(name, m);
  return out;
}

std::size_t NeuralSolver::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : parameters()) n += m->size();
  return n;
}

std::uint64_t NeuralSolver::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [name, m] : parameters()) h = ignn::fingerprint(*m, h);
  return h;
}

Matrix NeuralSolver::init_estimate(const Matrix& x) const {
  if (x.cols() != init_w1_.rows()) {
    throw ShapeError("init_estimate: X " + x.shape_string() + " vs initializer input " +
                     std::to_string(init_w1_.rows()));
  }
  return affine(tanh(affine(x, init_w1_, init_b1_)), init_w2_, init_b2_);
}

double residual_scale(const Matrix& g) {
  const double rms = frobenius_norm(g) / std::sqrt(static_cast<double>(std::max<std::size_t>(g.size(), 1)));
  return rms > 0.0 ? rms : 1.0;
}

Matrix NeuralSolver::compress(const Matrix& g, double scale) const {
  return tanh(affine(g * (1.0 / scale), comp_w_, comp_b_));
}

Coefficients NeuralSolver::predict_compressed(const std::vector<Matrix>& compressed,
                                              const SparseGraph& a_s) const {
  const std::size_t slots = options_.m + 1;
  const std::size_t p = options_.p;
  if (compressed.empty()) throw DomainError("predict_coeffs: empty window");
  if (compressed.size() > slots) throw DomainError("predict_coeffs: window larger than m + 1");
  const std::size_t n = compressed.front().rows();
  if (a_s.n() != n) throw ShapeError("predict_coeffs: graph size does not match window");
  Matrix c(n, slots * p);
  for (std::size_t s = 0; s < compressed.size(); ++s) {
    const Matrix& gc = compressed[s];
    if (gc.rows() != n || gc.cols() != p) throw ShapeError("predict_coeffs: compressed slot " + gc.shape_string());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) c(i, s * p + j) = gc(i, j);
  }
  const Matrix pooled = column_means(tanh(affine(spmm(a_s, c), gcn_w_, gcn_b_)));
  const Matrix logits = affine(pooled, alpha_w_, alpha_b_);
  const Matrix beta_logit = affine(pooled, beta_w_, beta_b_);
  Coefficients out;
  out.alpha = softmax(logits.values().first(compressed.size()));
  out.beta = options_.beta_max * sigmoid(beta_logit)[0];
  return out;
}

Coefficients NeuralSolver::predict_coeffs(const std::vector<Matrix>& window, const SparseGraph& a_s,
                                          std::size_t m_k) const {
  if (window.empty()) throw DomainError("predict_coeffs: empty window");
  if (window.size() != m_k + 1) throw DomainError("predict_coeffs: window size is not m_k + 1");
  const double scale = residual_scale(window.back());
  std::vector<Matrix> compressed;
  compressed.reserve(window.size());
  for (const Matrix& g : window) compressed.push_back(compress(g, scale));
  return predict_compressed(compressed, a_s);
}

SparseGraph NeuralSolver::predictor_graph(const SparseGraph& a_hat) const {
  return row_normalize(sparsify(a_hat, options_.keep_fraction));
}

const SparseGraph& NeuralSolver::cached_predictor_graph(const SparseGraph& a_hat) const {
  const std::uint64_t key = graph_key(a_hat);
  auto cache = graph_cache_;
  if (!cache || cache->source != &a_hat || cache->key != key) {
    cache = std::make_shared<GraphCache>(GraphCache{&a_hat, key, predictor_graph(a_hat)});
    graph_cache_ = cache;
  }
  return graph_cache_->graph;
}

SolveTrace NeuralSolver::solve(const FixedPointProblem& problem, const Matrix& z0, double tol,
                               std::size_t max_iter) const {
  const auto start = Clock::now();
  problem.sync();
  const SparseGraph& a_s = cached_predictor_graph(problem.graph());
  SolveTrace trace;
  Matrix z = z0.empty() ? init_estimate(problem.features()) : z0;
  if (z.rows() != problem.rows() || z.cols() != problem.cols()) {
    throw ShapeError("neural_solve: initial iterate " + z.shape_string());
  }
  if (!z.all_finite()) throw NumericError("neural_solve: non-finite iterate at step 0");

  // G C is linear in G, so each slot is projected once and only rescaled later.
  struct Slot {
    Matrix z, g, projected;
  };
  std::deque<Slot> window;
  const std::size_t slots = options_.m + 1;
  for (std::size_t k = 0;; ++k) {
    Matrix fz = problem.evaluate(z);
    ++trace.f_evals;
    TraceStep step;
    step.k = k;
    step.residual = relative_residual(fz, z);
    step.f_evals = trace.f_evals;
    if (!std::isfinite(step.residual)) {
      throw NumericError("neural_solve: non-finite residual at step " + std::to_string(k));
    }
    if (step.residual <= tol || k == max_iter) {
      trace.converged = step.residual <= tol;
      step.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
      trace.steps.push_back(std::move(step));
      break;
    }
    Matrix g = fz - z;
    if (window.size() == slots) window.pop_front();
    Matrix projected = override_ ? Matrix{} : matmul(g, comp_w_);
    window.push_back(Slot{std::move(z), std::move(g), std::move(projected)});
    const std::size_t m_k = window.size() - 1;

    Coefficients coeffs;
    if (override_) {
      coeffs = override_(k, m_k);
      if (coeffs.alpha.size() != m_k + 1) throw DomainError("coefficient override: alpha has wrong length");
    } else {
      const double scale = residual_scale(window.back().g);
      std::vector<Matrix> compressed;
      compressed.reserve(window.size());
      for (const Slot& s : window) compressed.push_back(squash_projected(s.projected, scale, comp_b_));
      coeffs = predict_compressed(compressed, a_s);
    }

    Matrix next(problem.rows(), problem.cols());
    if (options_.update_rule == UpdateRule::ClassicAA) {
      for (std::size_t i = 0; i < window.size(); ++i) {
        axpy(coeffs.alpha[i], window[i].z, next);
        axpy(coeffs.alpha[i] * coeffs.beta, window[i].g, next);
      }
    } else {
      for (std::size_t i = 0; i < window.size(); ++i) {
        axpy(coeffs.alpha[i], window[i].z, next);
        axpy(coeffs.beta, window[i].g, next);
      }
    }
    if (!next.all_finite()) throw NumericError("neural_solve: non-finite iterate at step " + std::to_string(k + 1));
    step.alpha = std::move(coeffs.alpha);
    step.beta = coeffs.beta;
    step.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    trace.steps.push_back(std::move(step));
    z = std::move(next);
  }
  trace.final_z = std::move(z);
  return trace;
}

Unrolled NeuralSolver::unroll(ad::Tape& t, const std::vector<ad::Var>& params,
                              const FixedPointProblem& problem, const SparseGraph& a_s,
                              std::size_t steps) const {
  if (params.size() != 12) throw DomainError("unroll: expected 12 parameter variables");
  const ad::Var w1 = params[0], b1 = params[1], w2 = params[2], b2 = params[3];
  const ad::Var cw = params[4], cb = params[5], gw = params[6], gb = params[7];
  const ad::Var aw = params[8], ab = params[9], bw = params[10], bb = params[11];
  problem.sync();

  Unrolled out;
  const ad::Var hidden = ad::tanh(t, affine_fixed_input(t, problem.features(), w1, b1));
  out.z0 = ad::affine(t, hidden, w2, b2);
  const std::size_t slots = options_.m + 1;
  const ad::Var pad = t.constant(Matrix(problem.rows(), options_.p));

  std::deque<ad::Var> zs, gs, projected;
  ad::Var z = out.z0;
  for (std::size_t k = 0; k < steps; ++k) {
    const ad::Var fz = ad::layer(t, problem, z);
    const ad::Var g = ad::sub(t, fz, z);
    if (zs.size() == slots) {
      zs.pop_front();
      gs.pop_front();
      projected.pop_front();
    }
    zs.push_back(z);
    gs.push_back(g);
    projected.push_back(ad::matmul(t, g, cw));
    const std::size_t r = zs.size();

    const ad::Var inv_scale = inverse_rms(t, g);
    std::vector<ad::Var> parts;
    for (const ad::Var pi : projected) parts.push_back(ad::tanh(t, add_bias(t, ad::scale_by(t, pi, inv_scale), cb)));
    while (parts.size() < slots) parts.push_back(pad);
    const ad::Var c = ad::concat_cols(t, parts);
    const ad::Var h = ad::tanh(t, ad::affine(t, ad::spmm(t, a_s, c), gw, gb));
    const ad::Var pooled = ad::mean_rows(t, h);
    const ad::Var alpha = ad::softmax(t, ad::affine(t, pooled, aw, ab), r);
    const ad::Var beta = ad::scale(t, ad::sigmoid(t, ad::affine(t, pooled, bw, bb)), options_.beta_max);

    const std::vector<ad::Var> zv(zs.begin(), zs.end()), gv(gs.begin(), gs.end());
    const ad::Var mixed = ad::weighted_sum(t, alpha, gv);
    ad::Var next;
    if (options_.update_rule == UpdateRule::ClassicAA) {
      next = ad::add(t, ad::weighted_sum(t, alpha, zv), ad::scale_by(t, mixed, beta));
    } else {
      const ad::Var ones = t.constant(Matrix(1, r, 1.0));
      next = ad::add(t, ad::scale_by(t, ad::weighted_sum(t, ones, gv), beta), ad::weighted_sum(t, alpha, zv));
    }
    if (!t.value(next).all_finite()) {
      throw NumericError("neural_solve: non-finite iterate at step " + std::to_string(k + 1));
    }
    out.iterates.push_back(next);
    out.mixed_residuals.push_back(mixed);
    out.alphas.push_back(alpha);
    out.betas.push_back(beta);
    z = next;
  }
  return out;
}

void NeuralSolver::save(const std::string& path) const {
  std::vector<NamedTensor> tensors{
      scalar_tensor("meta.kind", 1.0),
      scalar_tensor("meta.m", static_cast<double>(options_.m)),
      scalar_tensor("meta.K", static_cast<double>(options_.K)),
      scalar_tensor("meta.p", static_cast<double>(options_.p)),
      scalar_tensor("meta.beta_max", options_.beta_max),
      scalar_tensor("meta.keep_fraction", options_.keep_fraction),
      scalar_tensor("meta.update_rule", options_.update_rule == UpdateRule::ClassicAA ? 0.0 : 1.0),
  };
  for (const auto& [name, m] : parameters()) tensors.push_back(tensor_from(name, *m));
  write_checkpoint(path, tensors);
}

NeuralSolver NeuralSolver::load(const std::string& path) {
  const auto t = read_checkpoint(path);
  if (scalar_from(t, "meta.kind") != 1.0) throw ParseError(path + ": not a solver checkpoint");
  NeuralSolver s;
  s.options_.m = static_cast<std::size_t>(scalar_from(t, "meta.m"));
  s.options_.K = static_cast<std::size_t>(scalar_from(t, "meta.K"));
  s.options_.p = static_cast<std::size_t>(scalar_from(t, "meta.p"));
  s.options_.beta_max = scalar_from(t, "meta.beta_max");
  s.options_.keep_fraction = scalar_from(t, "meta.keep_fraction");
  s.options_.update_rule = scalar_from(t, "meta.update_rule") == 0.0 ? UpdateRule::ClassicAA : UpdateRule::LiteralAlg2;
  for (auto& [name, m] : s.parameters()) *m = matrix_from(t, name);
  s.options_.init_hidden = s.init_w1_.cols();
  s.options_.predictor_hidden = s.gcn_w_.cols();
  const std::size_t slots = s.options_.m + 1;
  if (s.init_w2_.rows() != s.init_w1_.cols() || s.comp_w_.rows() != s.init_w2_.cols() ||
      s.comp_w_.cols() != s.options_.p || s.gcn_w_.rows() != slots * s.options_.p ||
      s.alpha_w_.cols() != slots || s.beta_w_.cols() != 1) {
    throw ParseError(path + ": inconsistent solver tensor shapes");
  }
  return s;
}

}  // namespace ignn
