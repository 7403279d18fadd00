#include "vgpl/nets.hpp"

#include <cmath>

#include "vgpl/errors.hpp"

namespace vgpl {

namespace {

std::size_t affine_count(int in, int out) {
  return static_cast<std::size_t>(out) * in + static_cast<std::size_t>(out);
}

void affine_init(std::span<double> slot, int in, int out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::size_t w = static_cast<std::size_t>(out) * in;
  for (std::size_t i = 0; i < w; ++i) slot[i] = rng.uniform(-bound, bound);
  for (std::size_t i = w; i < w + static_cast<std::size_t>(out); ++i) slot[i] = 0.0;
}

void affine_forward(std::span<const double> p, int in, int out, const double* x, double* y) {
  const double* W = p.data();
  const double* b = W + static_cast<std::size_t>(out) * in;
  for (int r = 0; r < out; ++r) {
    double acc = b[r];
    const double* wr = W + static_cast<std::size_t>(r) * in;
    for (int c = 0; c < in; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void silu_inplace(double* x, int n) {
  for (int i = 0; i < n; ++i) x[i] = x[i] / (1.0 + std::exp(-x[i]));
}

}  // namespace

std::size_t mlp2_param_count(int in, int hidden, int out) {
  return affine_count(in, hidden) + affine_count(hidden, out);
}

std::size_t mlp3_param_count(int in, int hidden, int out) {
  return affine_count(in, hidden) + affine_count(hidden, hidden) + affine_count(hidden, out);
}

void mlp2_init(std::span<double> params, int in, int hidden, int out, Rng& rng) {
  if (params.size() != mlp2_param_count(in, hidden, out))
    throw validation_error("mlp2_init: parameter buffer size mismatch");
  std::size_t c1 = affine_count(in, hidden);
  affine_init(params.subspan(0, c1), in, hidden, rng);
  affine_init(params.subspan(c1), hidden, out, rng);
}

void mlp3_init(std::span<double> params, int in, int hidden, int out, Rng& rng) {
  if (params.size() != mlp3_param_count(in, hidden, out))
    throw validation_error("mlp3_init: parameter buffer size mismatch");
  std::size_t c1 = affine_count(in, hidden);
  std::size_t c2 = affine_count(hidden, hidden);
  affine_init(params.subspan(0, c1), in, hidden, rng);
  affine_init(params.subspan(c1, c2), hidden, hidden, rng);
  affine_init(params.subspan(c1 + c2), hidden, out, rng);
}

ag::Var mlp2_apply(ag::Tape& tape, ag::Var params, int offset, int in, int hidden, int out, ag::Var x) {
  ag::Var h = tape.silu(tape.affine(params, offset, hidden, in, x));
  int off2 = offset + static_cast<int>(affine_count(in, hidden));
  return tape.affine(params, off2, out, hidden, h);
}

ag::Var mlp3_apply(ag::Tape& tape, ag::Var params, int offset, int in, int hidden, int out, ag::Var x) {
  ag::Var h1 = tape.silu(tape.affine(params, offset, hidden, in, x));
  int off2 = offset + static_cast<int>(affine_count(in, hidden));
  ag::Var h2 = tape.silu(tape.affine(params, off2, hidden, hidden, h1));
  int off3 = off2 + static_cast<int>(affine_count(hidden, hidden));
  return tape.affine(params, off3, out, hidden, h2);
}

Vec mlp2_forward(std::span<const double> params, int in, int hidden, int out, std::span<const double> x) {
  if (params.size() != mlp2_param_count(in, hidden, out))
    throw validation_error("mlp2_forward: parameter buffer size mismatch");
  if (x.size() != static_cast<std::size_t>(in)) throw validation_error("mlp2_forward: input length mismatch");
  Vec h(static_cast<std::size_t>(hidden));
  Vec y(static_cast<std::size_t>(out));
  std::size_t c1 = affine_count(in, hidden);
  affine_forward(params.subspan(0, c1), in, hidden, x.data(), h.data());
  silu_inplace(h.data(), hidden);
  affine_forward(params.subspan(c1), hidden, out, h.data(), y.data());
  return y;
}

Vec mlp3_forward(std::span<const double> params, int in, int hidden, int out, std::span<const double> x) {
  if (params.size() != mlp3_param_count(in, hidden, out))
    throw validation_error("mlp3_forward: parameter buffer size mismatch");
  if (x.size() != static_cast<std::size_t>(in)) throw validation_error("mlp3_forward: input length mismatch");
  Vec h1(static_cast<std::size_t>(hidden));
  Vec h2(static_cast<std::size_t>(hidden));
  Vec y(static_cast<std::size_t>(out));
  std::size_t c1 = affine_count(in, hidden);
  std::size_t c2 = affine_count(hidden, hidden);
  affine_forward(params.subspan(0, c1), in, hidden, x.data(), h1.data());
  silu_inplace(h1.data(), hidden);
  affine_forward(params.subspan(c1, c2), hidden, hidden, h1.data(), h2.data());
  silu_inplace(h2.data(), hidden);
  affine_forward(params.subspan(c1 + c2), hidden, out, h2.data(), y.data());
  return y;
}

Vec time_embedding(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw validation_error("time_embedding: dim must be positive and even");
  Vec emb(static_cast<std::size_t>(dim));
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    emb[static_cast<std::size_t>(2 * i)] = std::sin(t * freq);
    emb[static_cast<std::size_t>(2 * i + 1)] = std::cos(t * freq);
  }
  return emb;
}

}  // namespace vgpl
