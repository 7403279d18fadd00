#include "vgpl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vgpl/errors.hpp"

namespace vgpl::ag {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw validation_error(msg);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  require(v.valid() && v.id < static_cast<int>(nodes_.size()), "tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Vec& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Vec& val = value(v);
  require(val.size() == 1, "tape: scalar() on non-scalar var");
  return val[0];
}

const Vec& Tape::adjoint(Var v) const { return node(v).adjoint; }

Var Tape::leaf(std::span<const double> value, double* grad_sink) {
  Node n;
  n.op = Op::kLeaf;
  n.value.assign(value.begin(), value.end());
  n.sink = grad_sink;
  return push(std::move(n));
}

Var Tape::constant(Vec value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_scalar(double v) { return constant(Vec{v}); }

Var Tape::add(Var a, Var b) { return lincomb(a, 1.0, b, 1.0); }

Var Tape::sub(Var a, Var b) { return lincomb(a, 1.0, b, -1.0); }

Var Tape::scale(Var a, double c) {
  const Vec& av = value(a);
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.d0 = c;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = c * av[i];
  return push(std::move(n));
}

Var Tape::lincomb(Var a, double ca, Var b, double cb) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  require(av.size() == bv.size(), "tape: lincomb length mismatch");
  Node n;
  n.op = Op::kLincomb;
  n.inputs = {a.id, b.id};
  n.d0 = ca;
  n.d1 = cb;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = ca * av[i] + cb * bv[i];
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "tape: concat of nothing");
  Node n;
  n.op = Op::kConcat;
  std::size_t total = 0;
  for (Var p : parts) {
    n.inputs.push_back(p.id);
    total += value(p).size();
  }
  n.value.reserve(total);
  for (Var p : parts) {
    const Vec& pv = value(p);
    n.value.insert(n.value.end(), pv.begin(), pv.end());
  }
  return push(std::move(n));
}

Var Tape::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Tape::concat(Var a, Var b) { return concat({a, b}); }

Var Tape::slice(Var a, int offset, int len) {
  const Vec& av = value(a);
  require(offset >= 0 && len >= 0 && static_cast<std::size_t>(offset) + static_cast<std::size_t>(len) <= av.size(),
          "tape: slice out of range");
  Node n;
  n.op = Op::kSlice;
  n.inputs = {a.id};
  n.i0 = offset;
  n.value.assign(av.begin() + offset, av.begin() + offset + len);
  return push(std::move(n));
}

Var Tape::affine(Var params, int offset, int rows, int cols, Var x) {
  const Vec& pv = value(params);
  const Vec& xv = value(x);
  require(rows > 0 && cols > 0, "tape: affine with empty shape");
  require(xv.size() == static_cast<std::size_t>(cols), "tape: affine input length mismatch");
  std::size_t need = static_cast<std::size_t>(offset) + static_cast<std::size_t>(rows) * cols + rows;
  require(offset >= 0 && need <= pv.size(), "tape: affine params out of range");
  Node n;
  n.op = Op::kAffine;
  n.inputs = {params.id, x.id};
  n.i0 = offset;
  n.i1 = rows;
  n.i2 = cols;
  n.value.resize(static_cast<std::size_t>(rows));
  const double* W = pv.data() + offset;
  const double* b = W + static_cast<std::size_t>(rows) * cols;
  for (int r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = W + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * xv[static_cast<std::size_t>(c)];
    n.value[static_cast<std::size_t>(r)] = acc;
  }
  return push(std::move(n));
}

Var Tape::silu(Var a) {
  const Vec& av = value(a);
  Node n;
  n.op = Op::kSilu;
  n.inputs = {a.id};
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * sigmoid(av[i]);
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  require(av.size() == bv.size(), "tape: dot length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Node n;
  n.op = Op::kDot;
  n.inputs = {a.id, b.id};
  n.value = {acc};
  return push(std::move(n));
}

Var Tape::cosine(Var a, Var b) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  require(av.size() == bv.size(), "tape: cosine length mismatch");
  double na = 0.0, nb = 0.0, d = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    na += av[i] * av[i];
    nb += bv[i] * bv[i];
    d += av[i] * bv[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  require(na > 0.0 && nb > 0.0, "cosine: zero-norm input");
  Node n;
  n.op = Op::kCosine;
  n.inputs = {a.id, b.id};
  n.d0 = na;
  n.d1 = nb;
  n.value = {d / (na * nb)};
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  const Vec& av = value(a);
  require(!av.empty(), "tape: softmax of empty vector");
  double mx = *std::max_element(av.begin(), av.end());
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a.id};
  n.value.resize(av.size());
  double z = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    n.value[i] = std::exp(av[i] - mx);
    z += n.value[i];
  }
  for (auto& v : n.value) v /= z;
  return push(std::move(n));
}

Var Tape::log(Var a) {
  const Vec& av = value(a);
  Node n;
  n.op = Op::kLog;
  n.inputs = {a.id};
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    require(av[i] > 0.0, "tape: log of non-positive value");
    n.value[i] = std::log(av[i]);
  }
  return push(std::move(n));
}

Var Tape::pick(Var a, int index) {
  const Vec& av = value(a);
  require(index >= 0 && static_cast<std::size_t>(index) < av.size(), "tape: pick index out of range");
  Node n;
  n.op = Op::kPick;
  n.inputs = {a.id};
  n.i0 = index;
  n.value = {av[static_cast<std::size_t>(index)]};
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Vec& av = value(a);
  double acc = 0.0;
  for (double v : av) acc += v;
  Node n;
  n.op = Op::kSum;
  n.inputs = {a.id};
  n.value = {acc};
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Vec& av = value(a);
  require(!av.empty(), "tape: mean of empty vector");
  return scale(sum(a), 1.0 / static_cast<double>(av.size()));
}

Var Tape::sqdist(Var a, Var b) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  require(av.size() == bv.size(), "tape: sqdist length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    double diff = av[i] - bv[i];
    acc += diff * diff;
  }
  Node n;
  n.op = Op::kSqDist;
  n.inputs = {a.id, b.id};
  n.value = {acc};
  return push(std::move(n));
}

Var Tape::stack(std::span<const Var> scalars) {
  require(!scalars.empty(), "tape: stack of nothing");
  Node n;
  n.op = Op::kStack;
  n.value.resize(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Vec& sv = value(scalars[i]);
    require(sv.size() == 1, "tape: stack expects scalars");
    n.inputs.push_back(scalars[i].id);
    n.value[i] = sv[0];
  }
  return push(std::move(n));
}

Var Tape::token_scores(Var rep, Var q, int tokens, int width, double scale) {
  const Vec& rv = value(rep);
  const Vec& qv = value(q);
  require(tokens > 0 && width > 0, "tape: token_scores with empty shape");
  require(rv.size() == static_cast<std::size_t>(tokens) * width, "tape: token_scores rep length mismatch");
  require(qv.size() == static_cast<std::size_t>(width), "tape: token_scores query length mismatch");
  Node n;
  n.op = Op::kTokScores;
  n.inputs = {rep.id, q.id};
  n.i0 = tokens;
  n.i1 = width;
  n.d0 = scale;
  n.value.resize(static_cast<std::size_t>(tokens));
  for (int l = 0; l < tokens; ++l) {
    double acc = 0.0;
    const double* tok = rv.data() + static_cast<std::size_t>(l) * width;
    for (int j = 0; j < width; ++j) acc += qv[static_cast<std::size_t>(j)] * tok[j];
    n.value[static_cast<std::size_t>(l)] = scale * acc;
  }
  return push(std::move(n));
}

Var Tape::token_scale(Var rep, Var alpha, int tokens, int width) {
  const Vec& rv = value(rep);
  const Vec& av = value(alpha);
  require(tokens > 0 && width > 0, "tape: token_scale with empty shape");
  require(rv.size() == static_cast<std::size_t>(tokens) * width, "tape: token_scale rep length mismatch");
  require(av.size() == static_cast<std::size_t>(tokens), "tape: token_scale weight length mismatch");
  Node n;
  n.op = Op::kTokScale;
  n.inputs = {rep.id, alpha.id};
  n.i0 = tokens;
  n.i1 = width;
  n.value.resize(rv.size());
  for (int l = 0; l < tokens; ++l)
    for (int j = 0; j < width; ++j) {
      std::size_t idx = static_cast<std::size_t>(l) * width + j;
      n.value[idx] = av[static_cast<std::size_t>(l)] * rv[idx];
    }
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  require(ln.value.size() == 1, "tape: backward requires a scalar loss");
  for (auto& n : nodes_) {
    n.adjoint.assign(n.value.size(), 0.0);
  }
  nodes_[static_cast<std::size_t>(loss.id)].adjoint[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    backprop(nodes_[i]);
  }
  for (auto& n : nodes_) {
    if (n.op == Op::kLeaf && n.sink != nullptr) {
      for (std::size_t i = 0; i < n.adjoint.size(); ++i) n.sink[i] += n.adjoint[i];
    }
  }
}

void Tape::backprop(Node& n) {
  auto in = [&](int k) -> Node& { return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(k)])]; };
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kAdd:
    case Op::kSub:
      break;  // folded into kLincomb
    case Op::kLincomb: {
      Node& a = in(0);
      Node& b = in(1);
      for (std::size_t i = 0; i < n.adjoint.size(); ++i) {
        a.adjoint[i] += n.d0 * n.adjoint[i];
        b.adjoint[i] += n.d1 * n.adjoint[i];
      }
      break;
    }
    case Op::kScale: {
      Node& a = in(0);
      for (std::size_t i = 0; i < n.adjoint.size(); ++i) a.adjoint[i] += n.d0 * n.adjoint[i];
      break;
    }
    case Op::kConcat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& a = in(static_cast<int>(k));
        for (std::size_t i = 0; i < a.value.size(); ++i) a.adjoint[i] += n.adjoint[off + i];
        off += a.value.size();
      }
      break;
    }
    case Op::kSlice: {
      Node& a = in(0);
      for (std::size_t i = 0; i < n.adjoint.size(); ++i)
        a.adjoint[static_cast<std::size_t>(n.i0) + i] += n.adjoint[i];
      break;
    }
    case Op::kAffine: {
      Node& p = in(0);
      Node& x = in(1);
      int rows = n.i1, cols = n.i2;
      const double* W = p.value.data() + n.i0;
      double* gW = p.adjoint.data() + n.i0;
      double* gb = gW + static_cast<std::size_t>(rows) * cols;
      for (int r = 0; r < rows; ++r) {
        double gy = n.adjoint[static_cast<std::size_t>(r)];
        if (gy == 0.0) continue;
        gb[r] += gy;
        const double* wr = W + static_cast<std::size_t>(r) * cols;
        double* gwr = gW + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          gwr[c] += gy * x.value[static_cast<std::size_t>(c)];
          x.adjoint[static_cast<std::size_t>(c)] += gy * wr[c];
        }
      }
      break;
    }
    case Op::kSilu: {
      Node& a = in(0);
      for (std::size_t i = 0; i < n.adjoint.size(); ++i) {
        double s = sigmoid(a.value[i]);
        a.adjoint[i] += n.adjoint[i] * s * (1.0 + a.value[i] * (1.0 - s));
      }
      break;
    }
    case Op::kDot: {
      Node& a = in(0);
      Node& b = in(1);
      double g = n.adjoint[0];
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        a.adjoint[i] += g * b.value[i];
        b.adjoint[i] += g * a.value[i];
      }
      break;
    }
    case Op::kCosine: {
      Node& a = in(0);
      Node& b = in(1);
      double g = n.adjoint[0];
      double na = n.d0, nb = n.d1, cosab = n.value[0];
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        a.adjoint[i] += g * (b.value[i] / (na * nb) - cosab * a.value[i] / (na * na));
        b.adjoint[i] += g * (a.value[i] / (na * nb) - cosab * b.value[i] / (nb * nb));
      }
      break;
    }
    case Op::kSoftmax: {
      Node& a = in(0);
      double s = 0.0;
      for (std::size_t i = 0; i < n.value.size(); ++i) s += n.adjoint[i] * n.value[i];
      for (std::size_t i = 0; i < n.value.size(); ++i)
        a.adjoint[i] += n.value[i] * (n.adjoint[i] - s);
      break;
    }
    case Op::kLog: {
      Node& a = in(0);
      for (std::size_t i = 0; i < n.adjoint.size(); ++i) a.adjoint[i] += n.adjoint[i] / a.value[i];
      break;
    }
    case Op::kPick: {
      Node& a = in(0);
      a.adjoint[static_cast<std::size_t>(n.i0)] += n.adjoint[0];
      break;
    }
    case Op::kSum: {
      Node& a = in(0);
      for (std::size_t i = 0; i < a.value.size(); ++i) a.adjoint[i] += n.adjoint[0];
      break;
    }
    case Op::kSqDist: {
      Node& a = in(0);
      Node& b = in(1);
      double g = n.adjoint[0];
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        double diff = a.value[i] - b.value[i];
        a.adjoint[i] += 2.0 * g * diff;
        b.adjoint[i] -= 2.0 * g * diff;
      }
      break;
    }
    case Op::kStack: {
      for (std::size_t k = 0; k < n.inputs.size(); ++k) in(static_cast<int>(k)).adjoint[0] += n.adjoint[k];
      break;
    }
    case Op::kTokScores: {
      Node& rep = in(0);
      Node& q = in(1);
      int tokens = n.i0, width = n.i1;
      for (int l = 0; l < tokens; ++l) {
        double g = n.d0 * n.adjoint[static_cast<std::size_t>(l)];
        if (g == 0.0) continue;
        const double* tok = rep.value.data() + static_cast<std::size_t>(l) * width;
        double* gtok = rep.adjoint.data() + static_cast<std::size_t>(l) * width;
        for (int j = 0; j < width; ++j) {
          gtok[j] += g * q.value[static_cast<std::size_t>(j)];
          q.adjoint[static_cast<std::size_t>(j)] += g * tok[j];
        }
      }
      break;
    }
    case Op::kTokScale: {
      Node& rep = in(0);
      Node& alpha = in(1);
      int tokens = n.i0, width = n.i1;
      for (int l = 0; l < tokens; ++l) {
        double ga = 0.0;
        double al = alpha.value[static_cast<std::size_t>(l)];
        for (int j = 0; j < width; ++j) {
          std::size_t idx = static_cast<std::size_t>(l) * width + j;
          rep.adjoint[idx] += al * n.adjoint[idx];
          ga += rep.value[idx] * n.adjoint[idx];
        }
        alpha.adjoint[static_cast<std::size_t>(l)] += ga;
      }
      break;
    }
  }
}

}  // namespace vgpl::ag
