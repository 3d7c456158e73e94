#include "laneattn/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "laneattn/errors.hpp"

namespace laneattn::diff {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

void check_rank1(const Var& a, const char* op) {
  if (a.value().ndim() != 1) {
    throw DimensionError(std::string(op) + ": expected rank-1 tensor, got " +
                         a.value().shape_string());
  }
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape != b.tape) {
    throw UsageError(std::string(op) + ": operands belong to different tapes");
  }
}

}  // namespace

Var Tape::make(Tensor v) {
  auto n = std::make_unique<Node>();
  n->value = std::move(v);
  n->grad = Tensor(n->value.shape());
  Node* raw = n.get();
  nodes_.push_back(std::move(n));
  return Var{raw, this};
}

Var Tape::constant(Tensor v) { return make(std::move(v)); }

Var Tape::param(const std::string& name, const Tensor& v) {
  if (name.empty()) throw UsageError("parameter leaf requires a name");
  if (params_.count(name)) throw UsageError("parameter registered twice: " + name);
  Var var = make(v);
  var.node->param_name = name;
  params_[name] = var.node;
  return var;
}

void Tape::backward(const Var& out) {
  if (out.tape != this) throw UsageError("backward: output belongs to a different tape");
  if (out.value().numel() != 1) {
    throw UsageError("backward: output must be scalar, got shape " + out.value().shape_string());
  }
  out.node->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

const Tensor& Tape::grad_of(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter: " + name);
  return it->second->grad;
}

std::map<std::string, Tensor> Tape::gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, node] : params_) out.emplace(name, node->grad);
  return out;
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().dim(1) != b.value().dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + a.value().shape_string() + " and " +
                         b.value().shape_string());
  }
  const int m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  Tensor out({m, n});
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const size_t brow = static_cast<size_t>(p) * n;
      const size_t orow = static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ov[orow + j] += aip * bv[brow + j];
    }
  }
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* pb = b.node;
  r.node->backprop = [pa, pb, m, k, n](const Node& self) {
    const auto& g = self.grad.data();
    const auto& av = pa->value.data();
    const auto& bv = pb->value.data();
    auto& ga = pa->grad.data();
    auto& gb = pb->grad.data();
    // dA += G * B^T ; dB += A^T * G
    for (int i = 0; i < m; ++i) {
      const size_t grow = static_cast<size_t>(i) * n;
      const size_t arow = static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const size_t brow = static_cast<size_t>(p) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += g[grow + j] * bv[brow + j];
        ga[arow + p] += acc;
        const double aip = av[arow + p];
        if (aip != 0.0) {
          for (int j = 0; j < n; ++j) gb[brow + j] += aip * g[grow + j];
        }
      }
    }
  };
  return r;
}

Var matvec(Var a, Var x) {
  check_same_tape(a, x, "matvec");
  if (a.value().ndim() != 2 || x.value().ndim() != 1 || a.value().dim(1) != x.value().dim(0)) {
    throw DimensionError("matvec: incompatible shapes " + a.value().shape_string() + " and " +
                         x.value().shape_string());
  }
  const int m = a.value().dim(0), k = a.value().dim(1);
  Tensor out({m});
  const auto& av = a.value().data();
  const auto& xv = x.value().data();
  for (int i = 0; i < m; ++i) {
    const size_t arow = static_cast<size_t>(i) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += av[arow + p] * xv[p];
    out[i] = acc;
  }
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* px = x.node;
  r.node->backprop = [pa, px, m, k](const Node& self) {
    const auto& g = self.grad.data();
    const auto& av = pa->value.data();
    const auto& xv = px->value.data();
    auto& ga = pa->grad.data();
    auto& gx = px->grad.data();
    for (int i = 0; i < m; ++i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      const size_t arow = static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        ga[arow + p] += gi * xv[p];
        gx[p] += gi * av[arow + p];
      }
    }
  };
  return r;
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* pb = b.node;
  r.node->backprop = [pa, pb](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pa->grad[i] += self.grad[i];
      pb->grad[i] += self.grad[i];
    }
  };
  return r;
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* pb = b.node;
  r.node->backprop = [pa, pb](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pa->grad[i] += self.grad[i];
      pb->grad[i] -= self.grad[i];
    }
  };
  return r;
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* pb = b.node;
  r.node->backprop = [pa, pb](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pa->grad[i] += self.grad[i] * pb->value[i];
      pb->grad[i] += self.grad[i] * pa->value[i];
    }
  };
  return r;
}

Var div(Var a, Var b) {
  check_same_tape(a, b, "div");
  check_same_shape(a, b, "div");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b.value()[i];
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  Node* pb = b.node;
  r.node->backprop = [pa, pb](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const double inv = 1.0 / pb->value[i];
      pa->grad[i] += self.grad[i] * inv;
      pb->grad[i] -= self.grad[i] * pa->value[i] * inv * inv;
    }
  };
  return r;
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i];
  };
  return r;
}

Var mul_scalar(Var a, double c) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, c](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += c * self.grad[i];
  };
  return r;
}

Var smul(Var s, Var v) {
  check_same_tape(s, v, "smul");
  if (s.value().numel() != 1) {
    throw DimensionError("smul: scalar operand has shape " + s.value().shape_string());
  }
  const double sv = s.value()[0];
  Tensor out = v.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
  Var r = v.tape->make(std::move(out));
  Node* ps = s.node;
  Node* pv = v.node;
  r.node->backprop = [ps, pv](const Node& self) {
    const double sv = ps->value[0];
    double acc = 0.0;
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pv->grad[i] += sv * self.grad[i];
      acc += self.grad[i] * pv->value[i];
    }
    ps->grad[0] += acc;
  };
  return r;
}

namespace {

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, df](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pa->grad[i] += self.grad[i] * df(pa->value[i], self.value[i]);
    }
  };
  return r;
}

}  // namespace

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, lo, hi](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const double x = pa->value[i];
      if (x >= lo && x <= hi) pa->grad[i] += self.grad[i];
    }
  };
  return r;
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  int total = 0;
  for (const auto& p : parts) {
    check_rank1(p, "concat");
    total += p.value().dim(0);
  }
  Tensor out({total});
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.value().dim(0); ++i) out[off + i] = p.value()[i];
    off += p.value().dim(0);
  }
  Var r = parts[0].tape->make(std::move(out));
  std::vector<Node*> srcs;
  for (const auto& p : parts) srcs.push_back(p.node);
  r.node->backprop = [srcs](const Node& self) {
    int off = 0;
    for (Node* s : srcs) {
      for (int64_t i = 0; i < s->grad.numel(); ++i) s->grad[i] += self.grad[off + i];
      off += static_cast<int>(s->grad.numel());
    }
  };
  return r;
}

Var slice(Var a, int offset, int len) {
  check_rank1(a, "slice");
  if (offset < 0 || len < 1 || offset + len > a.value().dim(0)) {
    throw DimensionError("slice: range [" + std::to_string(offset) + "," +
                         std::to_string(offset + len) + ") out of bounds for " +
                         a.value().shape_string());
  }
  Tensor out({len});
  for (int i = 0; i < len; ++i) out[i] = a.value()[offset + i];
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, offset, len](const Node& self) {
    for (int i = 0; i < len; ++i) pa->grad[offset + i] += self.grad[i];
  };
  return r;
}

Var sum(Var a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
  Var r = a.tape->make(Tensor::scalar(acc));
  Node* pa = a.node;
  r.node->backprop = [pa](const Node& self) {
    for (int64_t i = 0; i < pa->grad.numel(); ++i) pa->grad[i] += self.grad[0];
  };
  return r;
}

Var dot(Var a, Var b) {
  check_rank1(a, "dot");
  check_rank1(b, "dot");
  return sum(mul(a, b));
}

Var softmax(Var logits) {
  check_rank1(logits, "softmax");
  const int n = logits.value().dim(0);
  if (n < 1) throw DimensionError("softmax: empty input");
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(logits.value()[i])) throw NumericError("softmax: non-finite logit");
  }
  double mx = logits.value()[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits.value()[i]);
  Tensor out({n});
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits.value()[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
  Var r = logits.tape->make(std::move(out));
  Node* pa = logits.node;
  r.node->backprop = [pa, n](const Node& self) {
    double gy = 0.0;
    for (int i = 0; i < n; ++i) gy += self.grad[i] * self.value[i];
    for (int i = 0; i < n; ++i) pa->grad[i] += self.value[i] * (self.grad[i] - gy);
  };
  return r;
}

Var max_pool_rows(Var a) {
  if (a.value().ndim() != 2) {
    throw DimensionError("max_pool_rows: expected rank-2 tensor, got " + a.value().shape_string());
  }
  const int c = a.value().dim(0), L = a.value().dim(1);
  Tensor out({c});
  std::vector<int> arg(static_cast<size_t>(c), 0);
  for (int i = 0; i < c; ++i) {
    double best = a.value().at(i, 0);
    int bj = 0;
    for (int j = 1; j < L; ++j) {
      if (a.value().at(i, j) > best) {  // strict: ties keep the lowest index
        best = a.value().at(i, j);
        bj = j;
      }
    }
    out[i] = best;
    arg[static_cast<size_t>(i)] = bj;
  }
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, arg, L](const Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      pa->grad[i * L + arg[static_cast<size_t>(i)]] += self.grad[i];
    }
  };
  return r;
}

Var mean_pool_rows(Var a) {
  if (a.value().ndim() != 2) {
    throw DimensionError("mean_pool_rows: expected rank-2 tensor, got " +
                         a.value().shape_string());
  }
  const int c = a.value().dim(0), L = a.value().dim(1);
  Tensor out({c});
  for (int i = 0; i < c; ++i) {
    double acc = 0.0;
    for (int j = 0; j < L; ++j) acc += a.value().at(i, j);
    out[i] = acc / L;
  }
  Var r = a.tape->make(std::move(out));
  Node* pa = a.node;
  r.node->backprop = [pa, L](const Node& self) {
    const double inv = 1.0 / L;
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      for (int j = 0; j < L; ++j) pa->grad[i * L + j] += self.grad[i] * inv;
    }
  };
  return r;
}

Var conv1d(Var input, Var kernels, Var bias) {
  check_same_tape(input, kernels, "conv1d");
  check_same_tape(input, bias, "conv1d");
  if (input.value().ndim() != 2 || kernels.value().ndim() != 3 || bias.value().ndim() != 1) {
    throw DimensionError("conv1d: expected input [ci,L], kernels [co,ci,k], bias [co]");
  }
  const int ci = input.value().dim(0), L = input.value().dim(1);
  const int co = kernels.value().dim(0), k = kernels.value().dim(2);
  if (kernels.value().dim(1) != ci || bias.value().dim(0) != co) {
    throw DimensionError("conv1d: channel mismatch between " + input.value().shape_string() +
                         ", " + kernels.value().shape_string() + ", " +
                         bias.value().shape_string());
  }
  if (L < k) {
    throw DimensionError("conv1d: input length " + std::to_string(L) + " shorter than kernel " +
                         std::to_string(k));
  }
  const int Lo = L - k + 1;
  Tensor out({co, Lo});
  const auto& xv = input.value().data();
  const auto& kv = kernels.value().data();
  for (int o = 0; o < co; ++o) {
    for (int t = 0; t < Lo; ++t) {
      double acc = bias.value()[o];
      for (int i = 0; i < ci; ++i) {
        const size_t krow = (static_cast<size_t>(o) * ci + i) * k;
        const size_t xrow = static_cast<size_t>(i) * L + t;
        for (int j = 0; j < k; ++j) acc += kv[krow + j] * xv[xrow + j];
      }
      out.at(o, t) = acc;
    }
  }
  Var r = input.tape->make(std::move(out));
  Node* px = input.node;
  Node* pk = kernels.node;
  Node* pb = bias.node;
  r.node->backprop = [px, pk, pb, ci, L, co, k, Lo](const Node& self) {
    const auto& g = self.grad.data();
    const auto& xv = px->value.data();
    const auto& kv = pk->value.data();
    for (int o = 0; o < co; ++o) {
      for (int t = 0; t < Lo; ++t) {
        const double go = g[static_cast<size_t>(o) * Lo + t];
        if (go == 0.0) continue;
        pb->grad[o] += go;
        for (int i = 0; i < ci; ++i) {
          const size_t krow = (static_cast<size_t>(o) * ci + i) * k;
          const size_t xrow = static_cast<size_t>(i) * L + t;
          for (int j = 0; j < k; ++j) {
            pk->grad[krow + j] += go * xv[xrow + j];
            px->grad[xrow + j] += go * kv[krow + j];
          }
        }
      }
    }
  };
  return r;
}

std::pair<Var, Var> lstm_step(Var x, Var hidden, Var cell, Var wx, Var wh, Var b) {
  check_rank1(x, "lstm_step");
  check_rank1(hidden, "lstm_step");
  check_rank1(cell, "lstm_step");
  const int h = hidden.value().dim(0);
  if (cell.value().dim(0) != h || wx.value().ndim() != 2 || wh.value().ndim() != 2 ||
      wx.value().dim(0) != 4 * h || wh.value().dim(0) != 4 * h || wh.value().dim(1) != h ||
      wx.value().dim(1) != x.value().dim(0) || b.value().dim(0) != 4 * h) {
    throw DimensionError("lstm_step: inconsistent shapes (x " + x.value().shape_string() +
                         ", h " + hidden.value().shape_string() + ", wx " +
                         wx.value().shape_string() + ", wh " + wh.value().shape_string() +
                         ", b " + b.value().shape_string() + ")");
  }
  Var z = add(add(matvec(wx, x), matvec(wh, hidden)), b);
  Var gi = sigmoid(slice(z, 0, h));
  Var gf = sigmoid(slice(z, h, h));
  Var gc = tanh(slice(z, 2 * h, h));
  Var go = sigmoid(slice(z, 3 * h, h));
  Var c_new = add(mul(gf, cell), mul(gi, gc));
  Var h_new = mul(go, tanh(c_new));
  return {h_new, c_new};
}

}  // namespace laneattn::diff
