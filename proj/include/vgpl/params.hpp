#ifndef VGPL_PARAMS_HPP
#define VGPL_PARAMS_HPP

#include <string>
#include <vector>

namespace vgpl {

// One named, flat block of learnable state. grad always has the same length
// as values; frozen groups keep an all-zero grad.
struct ParamGroup {
  std::string name;
  std::vector<double> values;
  std::vector<double> grad;
  bool trainable = true;

  ParamGroup() = default;
  ParamGroup(std::string n, std::size_t count, bool train = true)
      : name(std::move(n)), values(count, 0.0), grad(count, 0.0), trainable(train) {}

  std::size_t size() const { return values.size(); }
  void zero_grad() { grad.assign(values.size(), 0.0); }
  // gradient sink for tape leaves; nullptr when frozen
  double* grad_sink() { return trainable ? grad.data() : nullptr; }
};

}  // namespace vgpl

#endif
