#include "vgpl/disentangle.hpp"

#include <string>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

Encoder Encoder::init(const char* name, int dim, int hidden, uint64_t seed) {
  if (dim <= 0) throw validation_error("encoder: dim must be positive");
  if (hidden <= 0) throw validation_error("encoder: hidden must be positive");
  Encoder e;
  e.dim = dim;
  e.hidden = hidden;
  e.params = ParamGroup(name, mlp2_param_count(dim, hidden, dim));
  Rng rng(derive_seed(seed, std::string(name) + ".init"));
  mlp2_init(e.params.values, dim, hidden, dim, rng);
  return e;
}

Vec Encoder::apply(const Vec& x) const {
  return mlp2_forward(params.values, dim, hidden, dim, x);
}

ag::Var Encoder::apply(ag::Tape& tape, ag::Var params_leaf, ag::Var x) const {
  return mlp2_apply(tape, params_leaf, 0, dim, hidden, dim, x);
}

AttributePair disentangle(const Vec& x, const Encoder& shared_enc, const Encoder& indiv_enc,
                          int class_id) {
  AttributePair pair;
  pair.shared_rep = shared_enc.apply(x);
  pair.indiv_rep = indiv_enc.apply(x);
  pair.class_id = class_id;
  return pair;
}

PairVars disentangle(ag::Tape& tape, ag::Var shared_leaf, ag::Var indiv_leaf, ag::Var x,
                     const Encoder& shared_enc, const Encoder& indiv_enc) {
  return PairVars{shared_enc.apply(tape, shared_leaf, x), indiv_enc.apply(tape, indiv_leaf, x)};
}

BridgeVariant parse_variant(const std::string& s) {
  if (s == "standard") return BridgeVariant::standard;
  if (s == "swapped") return BridgeVariant::swapped;
  throw validation_error("variant must be 'standard' or 'swapped', got '" + s + "'");
}

const char* variant_name(BridgeVariant v) {
  return v == BridgeVariant::standard ? "standard" : "swapped";
}

ag::Var stage_a_loss(ag::Tape& tape, ag::Var transfer_leaf, ag::Var x, const PairVars& pair, int t,
                     const Vec& noise, const TransferModel& model, const BridgeSchedule& sched,
                     BridgeVariant variant) {
  ag::Var endpoint = variant == BridgeVariant::standard ? pair.shared_rep : pair.indiv_rep;
  ag::Var cond = variant == BridgeVariant::standard ? pair.indiv_rep : pair.shared_rep;
  ag::Var z_t = forward_sample(tape, x, endpoint, t, noise, sched);
  ag::Var restored = restore_z0(tape, transfer_leaf, z_t, endpoint, cond, t, model);
  return restoration_loss(tape, restored, x);
}

double stage_a_loss(const Vec& x, const AttributePair& pair, int t, const Vec& noise,
                    const TransferModel& model, const BridgeSchedule& sched, BridgeVariant variant) {
  ag::Tape tape;
  ag::Var xv = tape.constant(x);
  PairVars pv{tape.constant(pair.shared_rep), tape.constant(pair.indiv_rep)};
  ag::Var leaf = tape.leaf(model.params.values);
  return tape.scalar(stage_a_loss(tape, leaf, xv, pv, t, noise, model, sched, variant));
}

}  // namespace vgpl
