#ifndef VGPL_AUTODIFF_HPP
#define VGPL_AUTODIFF_HPP

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace vgpl::ag {

using Vec = std::vector<double>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over vector-valued nodes.
//
// Usage: build a fresh Tape per evaluation, record the computation through
// the op methods, then call backward() on a scalar result. Leaf nodes may
// carry a gradient sink; after backward() each sink has the leaf's adjoint
// added into it, so callers can accumulate directly into parameter gradient
// buffers. Tapes are single-use and not thread safe; concurrent tapes over
// shared read-only inputs are fine.
class Tape {
 public:
  // value is copied; grad_sink (optional) must outlive backward().
  Var leaf(std::span<const double> value, double* grad_sink = nullptr);
  Var constant(Vec value);
  Var constant_scalar(double v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  // ca * a + cb * b
  Var lincomb(Var a, double ca, Var b, double cb);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);
  Var concat(Var a, Var b);
  Var slice(Var a, int offset, int len);
  // y = W x + b with W (rows x cols, row major) at params[offset] and b
  // immediately after W. params is typically a shared flat leaf.
  Var affine(Var params, int offset, int rows, int cols, Var x);
  Var silu(Var a);
  Var dot(Var a, Var b);
  // cos(a, b); rejects zero-norm inputs.
  Var cosine(Var a, Var b);
  Var softmax(Var a);
  Var log(Var a);
  Var pick(Var a, int index);
  Var sum(Var a);
  Var mean(Var a);
  // squared euclidean distance, scalar
  Var sqdist(Var a, Var b);
  // gathers scalar vars into one vector
  Var stack(std::span<const Var> scalars);
  // scores[l] = scale * dot(q, rep[l*width .. l*width+width))
  Var token_scores(Var rep, Var q, int tokens, int width, double scale);
  // out[l*width + j] = alpha[l] * rep[l*width + j]
  Var token_scale(Var rep, Var alpha, int tokens, int width);

  const Vec& value(Var v) const;
  double scalar(Var v) const;
  // Leaf adjoints are also available here after backward().
  const Vec& adjoint(Var v) const;

  // loss must be scalar; finite-ness is the caller's concern.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kLeaf,
    kConst,
    kAdd,
    kSub,
    kLincomb,
    kScale,
    kConcat,
    kSlice,
    kAffine,
    kSilu,
    kDot,
    kCosine,
    kSoftmax,
    kLog,
    kPick,
    kSum,
    kSqDist,
    kStack,
    kTokScores,
    kTokScale,
  };

  struct Node {
    Op op;
    Vec value;
    Vec adjoint;
    std::vector<int> inputs;
    int i0 = 0, i1 = 0, i2 = 0;
    double d0 = 0.0, d1 = 0.0;
    double* sink = nullptr;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  void backprop(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace vgpl::ag

#endif
