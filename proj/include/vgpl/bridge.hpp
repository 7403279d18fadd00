#ifndef VGPL_BRIDGE_HPP
#define VGPL_BRIDGE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "vgpl/autodiff.hpp"
#include "vgpl/nets.hpp"
#include "vgpl/params.hpp"

namespace vgpl {

// Brownian-bridge diffusion between a sample z0 and an endpoint zT, pinned at
// both ends. m[t] = t/T; delta[t] = 2 m[t] (1 - m[t]) is the marginal
// variance of z_t given both endpoints. sigma2[t] is the per-coordinate
// variance of q(z_{t-1} | z_t, z0, zT); it vanishes at t = 1 and equals
// delta[T-1] at t = T (the endpoint contributes nothing on the last step).
struct BridgeSchedule {
  int steps = 0;  // T
  std::vector<double> m;       // length T + 1
  std::vector<double> delta;   // length T + 1
  std::vector<double> sigma2;  // length T + 1, sigma2[0] = 0 by convention
};

// steps >= 2
BridgeSchedule make_schedule(int steps);

double posterior_sigma2(int t, const BridgeSchedule& sched);

// z_t = (1 - m_t) z0 + m_t zT + sqrt(delta_t) * noise, for t in [0, T].
Vec forward_sample(const Vec& z0, const Vec& zT, int t, const Vec& noise, const BridgeSchedule& sched);
ag::Var forward_sample(ag::Tape& tape, ag::Var z0, ag::Var zT, int t, const Vec& noise,
                       const BridgeSchedule& sched);

// Difference predictor: a conditioned perceptron with two hidden layers
// mapping (z_t (+) zT (+) cond (+) time_embedding(t)) to the predicted
// offset zT - z0.
struct TransferModel {
  int dim = 0;
  int hidden_width = 0;
  int time_embed_dim = 0;
  ParamGroup params;

  static TransferModel init(int dim, int hidden_width, int time_embed_dim, uint64_t seed);
  int input_width() const { return 3 * dim + time_embed_dim; }

  ag::Var predict_delta(ag::Tape& tape, ag::Var params_leaf, ag::Var z_t, ag::Var z_T, ag::Var cond,
                        int t) const;
  Vec predict_delta(const Vec& z_t, const Vec& z_T, const Vec& cond, int t) const;
};

// Single-shot restoration: zT minus the predicted difference.
ag::Var restore_z0(ag::Tape& tape, ag::Var params_leaf, ag::Var z_t, ag::Var z_T, ag::Var cond, int t,
                   const TransferModel& model);
Vec restore_z0(const Vec& z_t, const Vec& z_T, const Vec& cond, int t, const TransferModel& model);

// Squared restoration error.
double restoration_loss(const Vec& restored, const Vec& x);
ag::Var restoration_loss(ag::Tape& tape, ag::Var restored, ag::Var x);

// Per-step record of the reverse chain, for analysis and tests.
struct ReverseStep {
  int t = 0;
  double sigma2 = 0.0;
  Vec restored;
  Vec mean;
};

// Ancestral sampling from t = T down to 1. Restores z0 with the model at each
// step, then draws z_{t-1} from the bridge posterior around the restored
// value. noise must supply at least T vectors of length dim; exactly T are
// consumed. The draw at t = 1 is scaled by sigma = 0.
Vec reverse_sample(const Vec& zT, const Vec& cond, const TransferModel& model, const BridgeSchedule& sched,
                   std::span<const Vec> noise, std::vector<ReverseStep>* trace = nullptr);

}  // namespace vgpl

#endif
