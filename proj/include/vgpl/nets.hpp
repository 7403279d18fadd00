#ifndef VGPL_NETS_HPP
#define VGPL_NETS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "vgpl/autodiff.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

using Vec = std::vector<double>;

// Shared plumbing for the small perceptrons used across the pipeline. A
// two-layer block is affine -> silu -> affine; the three-layer block adds one
// more hidden affine/silu pair. Parameter layout per affine layer is
// [W row-major | b], layers in order.

std::size_t mlp2_param_count(int in, int hidden, int out);
std::size_t mlp3_param_count(int in, int hidden, int out);

// Weights uniform in +-1/sqrt(fan_in), biases zero.
void mlp2_init(std::span<double> params, int in, int hidden, int out, Rng& rng);
void mlp3_init(std::span<double> params, int in, int hidden, int out, Rng& rng);

ag::Var mlp2_apply(ag::Tape& tape, ag::Var params, int offset, int in, int hidden, int out, ag::Var x);
ag::Var mlp3_apply(ag::Tape& tape, ag::Var params, int offset, int in, int hidden, int out, ag::Var x);

Vec mlp2_forward(std::span<const double> params, int in, int hidden, int out, std::span<const double> x);
Vec mlp3_forward(std::span<const double> params, int in, int hidden, int out, std::span<const double> x);

// Sinusoidal step embedding; dim must be even and positive.
Vec time_embedding(int t, int dim);

}  // namespace vgpl

#endif
