#ifndef VGPL_DISENTANGLE_HPP
#define VGPL_DISENTANGLE_HPP

#include <cstdint>

#include "vgpl/bridge.hpp"

namespace vgpl {

// Two-layer encoder from a visual feature to an attribute representation of
// the same width.
struct Encoder {
  int dim = 0;
  int hidden = 0;
  ParamGroup params;

  static Encoder init(const char* name, int dim, int hidden, uint64_t seed);
  Vec apply(const Vec& x) const;
  ag::Var apply(ag::Tape& tape, ag::Var params_leaf, ag::Var x) const;
};

// Non-individualized (shared across a group) and individualized halves of one
// sample's attributes.
struct AttributePair {
  Vec shared_rep;
  Vec indiv_rep;
  int class_id = -1;
};

struct PairVars {
  ag::Var shared_rep;
  ag::Var indiv_rep;
};

AttributePair disentangle(const Vec& x, const Encoder& shared_enc, const Encoder& indiv_enc,
                          int class_id = -1);
PairVars disentangle(ag::Tape& tape, ag::Var shared_leaf, ag::Var indiv_leaf, ag::Var x,
                     const Encoder& shared_enc, const Encoder& indiv_enc);

// Which attribute half plays the bridge endpoint and which conditions the
// difference predictor. standard: endpoint = shared, condition = indiv.
// swapped exchanges the two roles.
enum class BridgeVariant { standard, swapped };

BridgeVariant parse_variant(const std::string& s);
const char* variant_name(BridgeVariant v);

// Single-sample restoration loss for one random step: embed x at step t of
// the bridge toward the chosen endpoint, restore, compare with x.
ag::Var stage_a_loss(ag::Tape& tape, ag::Var transfer_leaf, ag::Var x, const PairVars& pair, int t,
                     const Vec& noise, const TransferModel& model, const BridgeSchedule& sched,
                     BridgeVariant variant);
double stage_a_loss(const Vec& x, const AttributePair& pair, int t, const Vec& noise,
                    const TransferModel& model, const BridgeSchedule& sched, BridgeVariant variant);

}  // namespace vgpl

#endif
