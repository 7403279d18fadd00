#ifndef VGPL_GRANULE_HPP
#define VGPL_GRANULE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "vgpl/autodiff.hpp"
#include "vgpl/nets.hpp"
#include "vgpl/params.hpp"

namespace vgpl {

struct Temperature {
  double tau;
  explicit Temperature(double t);
};

// K learnable query vectors of width token_width. A representation of length
// token_count * token_width is read as token_count tokens; each query scores
// the tokens (scaled dot product), softmaxes the scores and reweights the
// tokens in place. The result keeps the input's length.
struct AttributeQueries {
  int count = 0;        // K
  int token_count = 0;  // L
  int token_width = 0;  // d_h
  ParamGroup params;    // K x token_width

  static AttributeQueries init(int count, int token_count, int token_width, uint64_t seed);
};

// Single-query attention over tokens; token width is q's length and must
// divide rep's length.
Vec query(const Vec& rep, const Vec& q);
ag::Var query(ag::Tape& tape, ag::Var rep, ag::Var q);

// All K outputs for one representation.
std::vector<ag::Var> query_bank(ag::Tape& tape, ag::Var queries_leaf, const AttributeQueries& queries,
                                ag::Var rep);

// Two-layer map from a (shared, other) attribute pair back to feature space.
struct Decoder {
  int dim = 0;
  int hidden = 0;
  ParamGroup params;

  static Decoder init(int dim, int hidden, uint64_t seed);
  ag::Var apply(ag::Tape& tape, ag::Var params_leaf, ag::Var shared, ag::Var other) const;
  Vec apply(const Vec& shared, const Vec& other) const;
};

// Factual: decode the shared half with one queried slice of the sample's own
// individualized half. Counterfactual: decode sample i's shared half with
// sample j's full individualized half.
ag::Var factual_granule(ag::Tape& tape, ag::Var decoder_leaf, const Decoder& dec, ag::Var shared,
                        ag::Var queried_attr);
ag::Var counterfactual_granule(ag::Tape& tape, ag::Var decoder_leaf, const Decoder& dec, ag::Var shared_i,
                               ag::Var indiv_j);

// p(attribute = k' | granule) over the true class's K textual attributes.
Vec attr_probs(const Vec& granule, const std::vector<Vec>& attrs_true_class, Temperature tau);
ag::Var attr_probs(ag::Tape& tape, ag::Var granule, std::span<const ag::Var> attrs_true_class,
                   Temperature tau);

// p(class = true_class | all K factual granules): the true class's exp-sum
// over the exp-sum across every class.
double factual_class_prob(const std::vector<Vec>& granules, const std::vector<std::vector<Vec>>& attrs,
                          int true_class, Temperature tau);
ag::Var factual_class_prob(ag::Tape& tape, std::span<const ag::Var> granules,
                           const std::vector<std::vector<ag::Var>>& attrs, int true_class, Temperature tau);

// Softmax over classes of cos(granule, prompted[c]) / tau.
Vec counterfactual_class_probs(const Vec& granule, const std::vector<Vec>& prompted, Temperature tau);
ag::Var counterfactual_class_probs(ag::Tape& tape, ag::Var granule, std::span<const ag::Var> prompted,
                                   Temperature tau);

// Attribute cross-entropy averaged over the K granules plus lambda_f times
// the class cross-entropy.
ag::Var factual_loss(ag::Tape& tape, std::span<const ag::Var> granules,
                     const std::vector<std::vector<ag::Var>>& attrs, int true_class, Temperature tau,
                     double lambda_f);
double factual_loss(const std::vector<Vec>& granules, const std::vector<std::vector<Vec>>& attrs,
                    int true_class, Temperature tau, double lambda_f);

// Class cross-entropy of one counterfactual granule toward the donor class
// plus lambda_r times the diagonal reconstruction error of the row.
ag::Var counterfactual_loss(ag::Tape& tape, ag::Var granule_ij, int class_j,
                            std::span<const ag::Var> prompted, ag::Var x_i, ag::Var granule_ii,
                            Temperature tau, double lambda_r);
double counterfactual_loss(const Vec& granule_ij, int class_j, const std::vector<Vec>& prompted,
                           const Vec& x_i, const Vec& granule_ii, Temperature tau, double lambda_r);

// All granules of one batch. labels hold candidate-local class indices.
struct GranuleBatch {
  int batch_size = 0;  // N
  int attr_count = 0;  // K
  std::vector<ag::Var> factual;         // N x K, row major
  std::vector<ag::Var> counterfactual;  // N x N, row major
  std::vector<int> labels;
};

GranuleBatch build_granules(ag::Tape& tape, ag::Var queries_leaf, const AttributeQueries& queries,
                            ag::Var decoder_leaf, const Decoder& dec, const std::vector<Vec>& shared,
                            const std::vector<Vec>& indiv, const std::vector<int>& labels);

// Mean factual loss over samples plus mean counterfactual loss over all
// batch_size^2 pairs. For a single-sample batch this is exactly
// factual_loss + counterfactual_loss of that sample.
ag::Var granule_loss(ag::Tape& tape, const GranuleBatch& batch, const std::vector<Vec>& x,
                     const std::vector<std::vector<ag::Var>>& attrs, std::span<const ag::Var> prompted,
                     Temperature tau, double lambda_f, double lambda_r);

}  // namespace vgpl

#endif
