#include "rng/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rng/numerics.hpp"

namespace rng::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on a " + v.shape_str() + " node");
  return v[0];
}

Var Tape::constant(Matrix m) {
  nodes_.push_back(Node{std::move(m), {}, {}, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix m) {
  nodes_.push_back(Node{std::move(m), {}, {}, true, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Param& p) {
  if (auto it = bound_ids_.find(&p); it != bound_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, true, &p});
  const int id = static_cast<int>(nodes_.size() - 1);
  bound_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackFn back) {
  bool req = false;
  for (const Var& p : parents) req = req || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, req ? std::move(back) : BackFn{}, req, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, const std::vector<Var>& parents, BackFn back) {
  bool req = false;
  for (const Var& p : parents) req = req || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, req ? std::move(back) : BackFn{}, req, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  grad_slot(id) += g;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (value(root.id()).size() != 1) {
    throw ShapeError("backward: root must be 1x1, got " + value(root.id()).shape_str());
  }
  for (auto& n : nodes_) n.grad = Matrix();
  grad_slot(root.id()).fill(1.0);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.bound) n.bound->grad += n.grad;
  }
}

Var Binder::operator()(const std::string& name) {
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  Var v = mutable_ ? tape_->param(mutable_->at(name)) : tape_->constant(store_->at(name).value);
  cache_.emplace(name, v);
  return v;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("ops on Vars from different tapes");
  return a.tape();
}

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  return t.push(std::move(y), {a}, [ia, df](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(ia);
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const int ia = a.id(), ib = b.id();
  return t.push(rng::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_slot(ia) += rng::matmul_nt(g, tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad_slot(ib) += rng::matmul_tn(tp.value(ia), g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const int ia = a.id(), ib = b.id();
  return t.push(rng::matmul_nt(a.value(), b.value()), {a, b},
                [ia, ib](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) tp.grad_slot(ia) += rng::matmul(g, tp.value(ib));
                  if (tp.requires_grad(ib)) tp.grad_slot(ib) += rng::matmul_tn(g, tp.value(ia));
                });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "ad::add");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "ad::sub");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.grad_slot(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const int ia = a.id(), ib = b.id();
  return t.push(hadamard(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_slot(ia) += hadamard(g, tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad_slot(ib) += hadamard(g, tp.value(ia));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("ad::add_row: row " + r.shape_str() + " vs matrix " + x.shape_str());
  }
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += r[j];
  const int ia = a.id(), ir = row.id();
  return t.push(std::move(y), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) {
      Matrix& gr = tp.grad_slot(ir);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("ad::mul_row: row " + r.shape_str() + " vs matrix " + x.shape_str());
  }
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) *= r[j];
  const int ia = a.id(), ir = row.id();
  return t.push(std::move(y), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(ia);
    const Matrix& rv = tp.value(ir);
    if (tp.requires_grad(ia)) {
      Matrix& ga = tp.grad_slot(ia);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * rv[j];
    }
    if (tp.requires_grad(ir)) {
      Matrix& gr = tp.grad_slot(ir);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * xv(i, j);
    }
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape().push(a.value() * s, {a},
                       [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var scale_by(Var a, Var s) {
  Tape& t = same_tape(a, s);
  if (s.value().size() != 1) throw ShapeError("ad::scale_by: factor must be 1x1");
  const int ia = a.id(), is = s.id();
  return t.push(a.value() * s.value()[0], {a, s}, [ia, is](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_slot(ia) += g * tp.value(is)[0];
    if (tp.requires_grad(is)) {
      const Matrix& xv = tp.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      tp.grad_slot(is)[0] += acc;
    }
  });
}

Var add_scalar(Var a, double s) {
  Matrix y = a.value();
  for (double& v : y.data()) v += s;
  const int ia = a.id();
  return a.tape().push(std::move(y), {a},
                       [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return rng::silu(x); },
      [](double x) {
        const double s = rng::sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return rng::sigmoid(x); },
      [](double x) {
        const double s = rng::sigmoid(x);
        return s * (1.0 - s);
      });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return rng::softplus(x); }, [](double x) { return rng::sigmoid(x); });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape().push(a.value().transposed(), {a}, [ia](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_slot(ia) += g.transposed();
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const int ia = a.id();
  return a.tape().push(Matrix(1, 1, s), {a}, [ia](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ia)) return;
    Matrix& ga = tp.grad_slot(ia);
    for (double& v : ga.data()) v += g[0];
  });
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var logsumexp(Var a) {
  const Matrix& x = a.value();
  const double lse = log_sum_exp(x.data());
  const int ia = a.id();
  return a.tape().push(Matrix(1, 1, lse), {a}, [ia, lse](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ia)) return;
    const Matrix& xv = tp.value(ia);
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g[0] * std::exp(xv[i] - lse);
  });
}

Var masked_softmax(Var a, const Mask* mask) {
  const Matrix& x = a.value();
  if (mask && (mask->rows != x.rows() || mask->cols != x.cols())) {
    throw ShapeError("ad::masked_softmax: mask does not match " + x.shape_str());
  }
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!mask || (*mask)(r, c)) mx = std::max(mx, x(r, c));
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      total += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= total;
  }
  const int ia = a.id();
  Matrix ycopy = y;
  return a.tape().push(std::move(y), {a}, [ia, yv = std::move(ycopy)](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      double inner = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) inner += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) ga(r, c) += yv(r, c) * (g(r, c) - inner);
    }
  });
}

Var slice(Var a, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) {
  const Matrix& x = a.value();
  if (r0 + nr > x.rows() || c0 + nc > x.cols()) {
    throw ShapeError("ad::slice: window exceeds " + x.shape_str());
  }
  Matrix y(nr, nc);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) y(i, j) = x(r0 + i, c0 + j);
  const int ia = a.id();
  return a.tape().push(std::move(y), {a}, [ia, r0, c0](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ia)) return;
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(r0 + i, c0 + j) += g(i, j);
  });
}

Var rows(Var a, std::size_t r0, std::size_t n) { return slice(a, r0, 0, n, a.cols()); }

Var select_rows(Var a, const std::vector<std::size_t>& idx) {
  const Matrix& x = a.value();
  Matrix y(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) {
      throw std::out_of_range("ad::select_rows: index " + std::to_string(idx[i]) +
                              " out of range for " + x.shape_str());
    }
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  const int ia = a.id();
  return a.tape().push(std::move(y), {a}, [ia, idx](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(ia)) return;
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(idx[i], j) += g(i, j);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad::concat_rows: nothing to concatenate");
  Tape& t = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("ad::concat_rows: column counts differ");
    total += p.rows();
  }
  Matrix y(total, cols);
  std::vector<int> ids;
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + at * cols);
    at += p.rows();
    ids.push_back(p.id());
  }
  return t.push(std::move(y), parts, [ids](Tape& tp, const Matrix& g) {
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = tp.value(id).rows();
      if (tp.requires_grad(id)) {
        Matrix& gp = tp.grad_slot(id);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off * g.cols() + i];
      }
      off += n;
    }
  });
}

Var stack_scalars(const std::vector<Var>& scalars, std::size_t rows, std::size_t cols) {
  if (scalars.size() != rows * cols) throw ShapeError("ad::stack_scalars: count mismatch");
  Tape& t = scalars.front().tape();
  Matrix y(rows, cols);
  std::vector<int> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    y[i] = scalars[i].scalar();
    ids.push_back(scalars[i].id());
  }
  return t.push(std::move(y), scalars, [ids](Tape& tp, const Matrix& g) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (tp.requires_grad(ids[i])) tp.grad_slot(ids[i])[0] += g[i];
  });
}

Var l2_normalize_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v * v;
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / norms[r];
  }
  const int ia = a.id();
  Matrix ycopy = y;
  return a.tape().push(std::move(y), {a},
                       [ia, norms, ycopy = std::move(ycopy)](Tape& tp, const Matrix& g) {
                         Matrix& ga = tp.grad_slot(ia);
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           double inner = 0.0;
                           for (std::size_t c = 0; c < g.cols(); ++c)
                             inner += g(r, c) * ycopy(r, c);
                           for (std::size_t c = 0; c < g.cols(); ++c)
                             ga(r, c) += (g(r, c) - inner * ycopy(r, c)) / norms[r];
                         }
                       });
}

Var row_max_mean(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0 || x.cols() == 0) throw ShapeError("ad::row_max_mean: empty input");
  std::vector<std::size_t> arg(x.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < x.cols(); ++c)
      if (x(r, c) > x(r, best)) best = c;
    arg[r] = best;
    total += x(r, best);
  }
  const double n = static_cast<double>(x.rows());
  const int ia = a.id();
  return a.tape().push(Matrix(1, 1, total / n), {a}, [ia, arg, n](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_slot(ia);
    for (std::size_t r = 0; r < arg.size(); ++r) ga(r, arg[r]) += g[0] / n;
  });
}

Var lse_matvec(Var prev, Var trans) {
  Tape& t = same_tape(prev, trans);
  const Matrix& p = prev.value();
  const Matrix& tr = trans.value();
  if (p.rows() != 1 || p.cols() != tr.rows()) {
    throw ShapeError("ad::lse_matvec: " + p.shape_str() + " against " + tr.shape_str());
  }
  const std::size_t n = tr.rows(), m = tr.cols();
  Matrix out(1, m);
  std::vector<double> buf(n);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = p[i] + tr(i, j);
    out[j] = log_sum_exp(buf);
  }
  const int ip = prev.id(), it = trans.id();
  Matrix outc = out;
  return t.push(std::move(out), {prev, trans},
                [ip, it, outc = std::move(outc)](Tape& tp, const Matrix& g) {
                  const Matrix& pv = tp.value(ip);
                  const Matrix& tv = tp.value(it);
                  const bool gp = tp.requires_grad(ip), gt = tp.requires_grad(it);
                  for (std::size_t i = 0; i < tv.rows(); ++i) {
                    for (std::size_t j = 0; j < tv.cols(); ++j) {
                      const double w = std::exp(pv[i] + tv(i, j) - outc[j]) * g[j];
                      if (gp) tp.grad_slot(ip)[i] += w;
                      if (gt) tp.grad_slot(it)(i, j) += w;
                    }
                  }
                });
}

Var relative_bias(Var table, std::size_t rows, std::size_t cols, std::size_t max_offset) {
  const Matrix& tb = table.value();
  if (tb.rows() != 1 || tb.cols() != 2 * max_offset + 1) {
    throw ShapeError("ad::relative_bias: table " + tb.shape_str() + " needs 1x" +
                     std::to_string(2 * max_offset + 1));
  }
  const auto k = static_cast<long>(max_offset);
  auto bucket = [k](std::size_t i, std::size_t j) {
    const long off = std::clamp(static_cast<long>(i) - static_cast<long>(j), -k, k);
    return static_cast<std::size_t>(off + k);
  };
  Matrix b(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) b(i, j) = tb[bucket(i, j)];
  const int itb = table.id();
  return table.tape().push(std::move(b), {table}, [itb, bucket](Tape& tp, const Matrix& g) {
    Matrix& gt = tp.grad_slot(itb);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gt[bucket(i, j)] += g(i, j);
  });
}

Var softmax_cross_entropy(Var scores, const std::vector<std::size_t>& targets, double tau) {
  const Matrix& s = scores.value();
  if (targets.size() != s.rows()) throw ShapeError("ad::softmax_cross_entropy: target count");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_cross_entropy: tau must be > 0");
  Matrix probs(s.rows(), s.cols());
  double loss = 0.0;
  std::vector<double> buf(s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    if (targets[r] >= s.cols()) throw std::out_of_range("softmax_cross_entropy: target index");
    for (std::size_t c = 0; c < s.cols(); ++c) buf[c] = s(r, c) / tau;
    const double lse = log_sum_exp(buf);
    loss += lse - buf[targets[r]];
    for (std::size_t c = 0; c < s.cols(); ++c) probs(r, c) = std::exp(buf[c] - lse);
  }
  const double n = static_cast<double>(s.rows());
  const int is = scores.id();
  return scores.tape().push(
      Matrix(1, 1, loss / n), {scores},
      [is, probs = std::move(probs), targets, tau, n](Tape& tp, const Matrix& g) {
        Matrix& gs = tp.grad_slot(is);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double ind = c == targets[r] ? 1.0 : 0.0;
            gs(r, c) += g[0] * (probs(r, c) - ind) / (tau * n);
          }
        }
      });
}

}  // namespace rng::ad
