#include "vgpl/bridge.hpp"

#include <cmath>
#include <string>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

namespace {

void check_step(int t, int lo, int hi, const char* who) {
  if (t < lo || t > hi)
    throw validation_error(std::string(who) + ": step " + std::to_string(t) + " outside [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

void check_dim(std::size_t got, std::size_t want, const char* who) {
  if (got != want) throw validation_error(std::string(who) + ": vector length mismatch");
}

}  // namespace

BridgeSchedule make_schedule(int steps) {
  if (steps < 2) throw validation_error("make_schedule: steps must be at least 2");
  BridgeSchedule s;
  s.steps = steps;
  std::size_t n = static_cast<std::size_t>(steps) + 1;
  s.m.resize(n);
  s.delta.resize(n);
  s.sigma2.resize(n);
  double T = static_cast<double>(steps);
  for (int t = 0; t <= steps; ++t) {
    double mt = static_cast<double>(t) / T;
    double one_minus = static_cast<double>(steps - t) / T;
    s.m[static_cast<std::size_t>(t)] = mt;
    // product form keeps delta[t] == delta[T - t] bit-exact
    s.delta[static_cast<std::size_t>(t)] = 2.0 * mt * one_minus;
  }
  s.sigma2[0] = 0.0;
  for (int t = 1; t <= steps; ++t) s.sigma2[static_cast<std::size_t>(t)] = posterior_sigma2(t, s);
  return s;
}

double posterior_sigma2(int t, const BridgeSchedule& sched) {
  check_step(t, 1, sched.steps, "posterior_sigma2");
  if (t == 1) return 0.0;  // delta[0] = 0 wipes out the first reverse step's variance
  if (t == sched.steps) return sched.delta[static_cast<std::size_t>(t - 1)];
  double d_prev = sched.delta[static_cast<std::size_t>(t - 1)];
  double d_t = sched.delta[static_cast<std::size_t>(t)];
  double T = static_cast<double>(sched.steps);
  double ratio = (static_cast<double>(sched.steps - t) / T) / (static_cast<double>(sched.steps - t + 1) / T);
  return (d_prev / d_t) * (d_t - d_prev * ratio * ratio);
}

Vec forward_sample(const Vec& z0, const Vec& zT, int t, const Vec& noise, const BridgeSchedule& sched) {
  check_step(t, 0, sched.steps, "forward_sample");
  check_dim(zT.size(), z0.size(), "forward_sample");
  check_dim(noise.size(), z0.size(), "forward_sample");
  double mt = sched.m[static_cast<std::size_t>(t)];
  double sd = std::sqrt(sched.delta[static_cast<std::size_t>(t)]);
  Vec out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = (1.0 - mt) * z0[i] + mt * zT[i] + sd * noise[i];
  return out;
}

ag::Var forward_sample(ag::Tape& tape, ag::Var z0, ag::Var zT, int t, const Vec& noise,
                       const BridgeSchedule& sched) {
  check_step(t, 0, sched.steps, "forward_sample");
  check_dim(tape.value(zT).size(), tape.value(z0).size(), "forward_sample");
  check_dim(noise.size(), tape.value(z0).size(), "forward_sample");
  double mt = sched.m[static_cast<std::size_t>(t)];
  double sd = std::sqrt(sched.delta[static_cast<std::size_t>(t)]);
  Vec scaled(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i) scaled[i] = sd * noise[i];
  return tape.add(tape.lincomb(z0, 1.0 - mt, zT, mt), tape.constant(std::move(scaled)));
}

TransferModel TransferModel::init(int dim, int hidden_width, int time_embed_dim, uint64_t seed) {
  if (dim <= 0) throw validation_error("transfer: dim must be positive");
  if (hidden_width <= 0) throw validation_error("transfer: hidden_width must be positive");
  if (time_embed_dim <= 0 || time_embed_dim % 2 != 0)
    throw validation_error("transfer: time_embed_dim must be positive and even");
  TransferModel m;
  m.dim = dim;
  m.hidden_width = hidden_width;
  m.time_embed_dim = time_embed_dim;
  m.params = ParamGroup("transfer", mlp3_param_count(m.input_width(), hidden_width, dim));
  Rng rng(derive_seed(seed, "transfer.init"));
  mlp3_init(m.params.values, m.input_width(), hidden_width, dim, rng);
  return m;
}

ag::Var TransferModel::predict_delta(ag::Tape& tape, ag::Var params_leaf, ag::Var z_t, ag::Var z_T,
                                     ag::Var cond, int t) const {
  check_dim(tape.value(z_t).size(), static_cast<std::size_t>(dim), "transfer");
  check_dim(tape.value(z_T).size(), static_cast<std::size_t>(dim), "transfer");
  check_dim(tape.value(cond).size(), static_cast<std::size_t>(dim), "transfer");
  ag::Var emb = tape.constant(time_embedding(t, time_embed_dim));
  ag::Var input = tape.concat({z_t, z_T, cond, emb});
  return mlp3_apply(tape, params_leaf, 0, input_width(), hidden_width, dim, input);
}

Vec TransferModel::predict_delta(const Vec& z_t, const Vec& z_T, const Vec& cond, int t) const {
  check_dim(z_t.size(), static_cast<std::size_t>(dim), "transfer");
  check_dim(z_T.size(), static_cast<std::size_t>(dim), "transfer");
  check_dim(cond.size(), static_cast<std::size_t>(dim), "transfer");
  Vec input;
  input.reserve(static_cast<std::size_t>(input_width()));
  input.insert(input.end(), z_t.begin(), z_t.end());
  input.insert(input.end(), z_T.begin(), z_T.end());
  input.insert(input.end(), cond.begin(), cond.end());
  Vec emb = time_embedding(t, time_embed_dim);
  input.insert(input.end(), emb.begin(), emb.end());
  return mlp3_forward(params.values, input_width(), hidden_width, dim, input);
}

ag::Var restore_z0(ag::Tape& tape, ag::Var params_leaf, ag::Var z_t, ag::Var z_T, ag::Var cond, int t,
                   const TransferModel& model) {
  if (t < 1) throw validation_error("restore_z0: step must be at least 1");
  ag::Var delta = model.predict_delta(tape, params_leaf, z_t, z_T, cond, t);
  return tape.sub(z_T, delta);
}

Vec restore_z0(const Vec& z_t, const Vec& z_T, const Vec& cond, int t, const TransferModel& model) {
  if (t < 1) throw validation_error("restore_z0: step must be at least 1");
  Vec delta = model.predict_delta(z_t, z_T, cond, t);
  Vec out(z_T.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_T[i] - delta[i];
  return out;
}

double restoration_loss(const Vec& restored, const Vec& x) {
  check_dim(x.size(), restored.size(), "restoration_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double diff = restored[i] - x[i];
    acc += diff * diff;
  }
  return acc;
}

ag::Var restoration_loss(ag::Tape& tape, ag::Var restored, ag::Var x) {
  return tape.sqdist(restored, x);
}

Vec reverse_sample(const Vec& zT, const Vec& cond, const TransferModel& model, const BridgeSchedule& sched,
                   std::span<const Vec> noise, std::vector<ReverseStep>* trace) {
  if (noise.size() < static_cast<std::size_t>(sched.steps))
    throw validation_error("reverse_sample: noise stream exhausted (need one draw per step)");
  check_dim(cond.size(), zT.size(), "reverse_sample");
  Vec z = zT;
  for (int t = sched.steps; t >= 1; --t) {
    const Vec& n = noise[static_cast<std::size_t>(sched.steps - t)];
    check_dim(n.size(), zT.size(), "reverse_sample");
    Vec restored = restore_z0(z, zT, cond, t, model);
    // Gaussian bridge posterior mean of z_{t-1} given (z_t, restored, zT);
    // the zT terms cancel, leaving c0 * restored + cp * z_t.
    double m_prev = sched.m[static_cast<std::size_t>(t - 1)];
    double m_t = sched.m[static_cast<std::size_t>(t)];
    double cp = m_prev / m_t;
    double c0 = (1.0 - m_prev) - cp * (1.0 - m_t);
    double s2 = posterior_sigma2(t, sched);
    double sd = std::sqrt(s2);
    Vec mean(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] = c0 * restored[i] + cp * z[i];
    if (trace) trace->push_back(ReverseStep{t, s2, restored, mean});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mean[i] + sd * n[i];
  }
  return z;
}

}  // namespace vgpl
