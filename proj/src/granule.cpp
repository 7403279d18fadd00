#include "vgpl/granule.hpp"

#include <cmath>
#include <string>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

Temperature::Temperature(double t) : tau(t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw validation_error("temperature must be positive and finite");
}

AttributeQueries AttributeQueries::init(int count, int token_count, int token_width, uint64_t seed) {
  if (count <= 0) throw validation_error("queries: count must be positive");
  if (token_count <= 0 || token_width <= 0)
    throw validation_error("queries: token shape must be positive");
  AttributeQueries q;
  q.count = count;
  q.token_count = token_count;
  q.token_width = token_width;
  q.params = ParamGroup("queries", static_cast<std::size_t>(count) * token_width);
  Rng rng(derive_seed(seed, "queries.init"));
  double bound = 1.0 / std::sqrt(static_cast<double>(token_width));
  for (auto& v : q.params.values) v = rng.uniform(-bound, bound);
  return q;
}

ag::Var query(ag::Tape& tape, ag::Var rep, ag::Var q) {
  std::size_t d = tape.value(rep).size();
  std::size_t width = tape.value(q).size();
  if (width == 0 || d % width != 0)
    throw validation_error("query: token width must divide representation length");
  int tokens = static_cast<int>(d / width);
  double scale = 1.0 / std::sqrt(static_cast<double>(width));
  ag::Var scores = tape.token_scores(rep, q, tokens, static_cast<int>(width), scale);
  ag::Var alpha = tape.softmax(scores);
  return tape.token_scale(rep, alpha, tokens, static_cast<int>(width));
}

Vec query(const Vec& rep, const Vec& q) {
  ag::Tape tape;
  return tape.value(query(tape, tape.constant(rep), tape.constant(q)));
}

std::vector<ag::Var> query_bank(ag::Tape& tape, ag::Var queries_leaf, const AttributeQueries& queries,
                                ag::Var rep) {
  if (tape.value(rep).size() != static_cast<std::size_t>(queries.token_count) * queries.token_width)
    throw validation_error("query_bank: representation length != token_count * token_width");
  std::vector<ag::Var> out;
  out.reserve(static_cast<std::size_t>(queries.count));
  for (int k = 0; k < queries.count; ++k) {
    ag::Var qk = tape.slice(queries_leaf, k * queries.token_width, queries.token_width);
    out.push_back(query(tape, rep, qk));
  }
  return out;
}

Decoder Decoder::init(int dim, int hidden, uint64_t seed) {
  if (dim <= 0) throw validation_error("decoder: dim must be positive");
  if (hidden <= 0) throw validation_error("decoder: hidden must be positive");
  Decoder d;
  d.dim = dim;
  d.hidden = hidden;
  d.params = ParamGroup("decoder", mlp2_param_count(2 * dim, hidden, dim));
  Rng rng(derive_seed(seed, "decoder.init"));
  mlp2_init(d.params.values, 2 * dim, hidden, dim, rng);
  return d;
}

ag::Var Decoder::apply(ag::Tape& tape, ag::Var params_leaf, ag::Var shared, ag::Var other) const {
  if (tape.value(shared).size() != static_cast<std::size_t>(dim) ||
      tape.value(other).size() != static_cast<std::size_t>(dim))
    throw validation_error("decoder: input length mismatch");
  return mlp2_apply(tape, params_leaf, 0, 2 * dim, hidden, dim, tape.concat(shared, other));
}

Vec Decoder::apply(const Vec& shared, const Vec& other) const {
  ag::Tape tape;
  ag::Var leaf = tape.leaf(params.values);
  return tape.value(apply(tape, leaf, tape.constant(shared), tape.constant(other)));
}

ag::Var factual_granule(ag::Tape& tape, ag::Var decoder_leaf, const Decoder& dec, ag::Var shared,
                        ag::Var queried_attr) {
  return dec.apply(tape, decoder_leaf, shared, queried_attr);
}

ag::Var counterfactual_granule(ag::Tape& tape, ag::Var decoder_leaf, const Decoder& dec, ag::Var shared_i,
                               ag::Var indiv_j) {
  return dec.apply(tape, decoder_leaf, shared_i, indiv_j);
}

namespace {

// cos(a, b) / tau for each b, stacked into one score vector
ag::Var scaled_cosines(ag::Tape& tape, ag::Var a, std::span<const ag::Var> bs, Temperature tau) {
  if (bs.empty()) throw validation_error("granule: empty comparison set");
  std::vector<ag::Var> cos;
  cos.reserve(bs.size());
  for (ag::Var b : bs) cos.push_back(tape.cosine(a, b));
  return tape.scale(tape.stack(cos), 1.0 / tau.tau);
}

ag::Var cross_entropy(ag::Tape& tape, ag::Var probs, int index) {
  return tape.scale(tape.log(tape.pick(probs, index)), -1.0);
}

std::vector<std::vector<ag::Var>> lift(ag::Tape& tape, const std::vector<std::vector<Vec>>& vecs) {
  std::vector<std::vector<ag::Var>> out(vecs.size());
  for (std::size_t c = 0; c < vecs.size(); ++c) {
    out[c].reserve(vecs[c].size());
    for (const auto& v : vecs[c]) out[c].push_back(tape.constant(v));
  }
  return out;
}

std::vector<ag::Var> lift(ag::Tape& tape, const std::vector<Vec>& vecs) {
  std::vector<ag::Var> out;
  out.reserve(vecs.size());
  for (const auto& v : vecs) out.push_back(tape.constant(v));
  return out;
}

}  // namespace

ag::Var attr_probs(ag::Tape& tape, ag::Var granule, std::span<const ag::Var> attrs_true_class,
                   Temperature tau) {
  return tape.softmax(scaled_cosines(tape, granule, attrs_true_class, tau));
}

Vec attr_probs(const Vec& granule, const std::vector<Vec>& attrs_true_class, Temperature tau) {
  ag::Tape tape;
  auto attrs = lift(tape, attrs_true_class);
  return tape.value(attr_probs(tape, tape.constant(granule), attrs, tau));
}

ag::Var factual_class_prob(ag::Tape& tape, std::span<const ag::Var> granules,
                           const std::vector<std::vector<ag::Var>>& attrs, int true_class,
                           Temperature tau) {
  std::size_t num_classes = attrs.size();
  if (num_classes == 0) throw validation_error("factual_class_prob: no classes");
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= num_classes)
    throw validation_error("factual_class_prob: class index out of range");
  std::size_t k_count = granules.size();
  if (k_count == 0) throw validation_error("factual_class_prob: no granules");
  std::vector<ag::Var> cos;
  cos.reserve(num_classes * k_count);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (attrs[c].size() != k_count)
      throw validation_error("factual_class_prob: attrs per class must match granule count");
    for (std::size_t k = 0; k < k_count; ++k) cos.push_back(tape.cosine(granules[k], attrs[c][k]));
  }
  ag::Var probs = tape.softmax(tape.scale(tape.stack(cos), 1.0 / tau.tau));
  return tape.sum(tape.slice(probs, true_class * static_cast<int>(k_count), static_cast<int>(k_count)));
}

double factual_class_prob(const std::vector<Vec>& granules, const std::vector<std::vector<Vec>>& attrs,
                          int true_class, Temperature tau) {
  ag::Tape tape;
  auto g = lift(tape, granules);
  auto a = lift(tape, attrs);
  return tape.scalar(factual_class_prob(tape, g, a, true_class, tau));
}

ag::Var counterfactual_class_probs(ag::Tape& tape, ag::Var granule, std::span<const ag::Var> prompted,
                                   Temperature tau) {
  return tape.softmax(scaled_cosines(tape, granule, prompted, tau));
}

Vec counterfactual_class_probs(const Vec& granule, const std::vector<Vec>& prompted, Temperature tau) {
  ag::Tape tape;
  auto p = lift(tape, prompted);
  return tape.value(counterfactual_class_probs(tape, tape.constant(granule), p, tau));
}

ag::Var factual_loss(ag::Tape& tape, std::span<const ag::Var> granules,
                     const std::vector<std::vector<ag::Var>>& attrs, int true_class, Temperature tau,
                     double lambda_f) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= attrs.size())
    throw validation_error("factual_loss: class index out of range");
  const auto& own = attrs[static_cast<std::size_t>(true_class)];
  if (own.size() != granules.size())
    throw validation_error("factual_loss: need one attribute per granule");
  std::vector<ag::Var> ce;
  ce.reserve(granules.size());
  for (std::size_t k = 0; k < granules.size(); ++k) {
    ag::Var probs = attr_probs(tape, granules[k], own, tau);
    ce.push_back(cross_entropy(tape, probs, static_cast<int>(k)));
  }
  ag::Var attr_term = tape.mean(tape.stack(ce));
  ag::Var class_ce =
      tape.scale(tape.log(factual_class_prob(tape, granules, attrs, true_class, tau)), -1.0);
  return tape.lincomb(attr_term, 1.0, class_ce, lambda_f);
}

double factual_loss(const std::vector<Vec>& granules, const std::vector<std::vector<Vec>>& attrs,
                    int true_class, Temperature tau, double lambda_f) {
  ag::Tape tape;
  auto g = lift(tape, granules);
  auto a = lift(tape, attrs);
  return tape.scalar(factual_loss(tape, g, a, true_class, tau, lambda_f));
}

ag::Var counterfactual_loss(ag::Tape& tape, ag::Var granule_ij, int class_j,
                            std::span<const ag::Var> prompted, ag::Var x_i, ag::Var granule_ii,
                            Temperature tau, double lambda_r) {
  if (class_j < 0 || static_cast<std::size_t>(class_j) >= prompted.size())
    throw validation_error("counterfactual_loss: class index out of range");
  ag::Var probs = counterfactual_class_probs(tape, granule_ij, prompted, tau);
  ag::Var ce = cross_entropy(tape, probs, class_j);
  ag::Var recon = tape.sqdist(x_i, granule_ii);
  return tape.lincomb(ce, 1.0, recon, lambda_r);
}

double counterfactual_loss(const Vec& granule_ij, int class_j, const std::vector<Vec>& prompted,
                           const Vec& x_i, const Vec& granule_ii, Temperature tau, double lambda_r) {
  ag::Tape tape;
  auto p = lift(tape, prompted);
  return tape.scalar(counterfactual_loss(tape, tape.constant(granule_ij), class_j, p,
                                         tape.constant(x_i), tape.constant(granule_ii), tau, lambda_r));
}

GranuleBatch build_granules(ag::Tape& tape, ag::Var queries_leaf, const AttributeQueries& queries,
                            ag::Var decoder_leaf, const Decoder& dec, const std::vector<Vec>& shared,
                            const std::vector<Vec>& indiv, const std::vector<int>& labels) {
  std::size_t n = shared.size();
  if (n == 0) throw validation_error("build_granules: empty batch");
  if (indiv.size() != n || labels.size() != n)
    throw validation_error("build_granules: shared/indiv/labels size mismatch");
  GranuleBatch batch;
  batch.batch_size = static_cast<int>(n);
  batch.attr_count = queries.count;
  batch.labels = labels;
  std::vector<ag::Var> shared_v(n), indiv_v(n);
  for (std::size_t i = 0; i < n; ++i) {
    shared_v[i] = tape.constant(shared[i]);
    indiv_v[i] = tape.constant(indiv[i]);
  }
  batch.factual.reserve(n * static_cast<std::size_t>(queries.count));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<ag::Var> own_attrs = query_bank(tape, queries_leaf, queries, indiv_v[i]);
    for (ag::Var attr : own_attrs)
      batch.factual.push_back(factual_granule(tape, decoder_leaf, dec, shared_v[i], attr));
  }
  batch.counterfactual.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      batch.counterfactual.push_back(
          counterfactual_granule(tape, decoder_leaf, dec, shared_v[i], indiv_v[j]));
  return batch;
}

ag::Var granule_loss(ag::Tape& tape, const GranuleBatch& batch, const std::vector<Vec>& x,
                     const std::vector<std::vector<ag::Var>>& attrs, std::span<const ag::Var> prompted,
                     Temperature tau, double lambda_f, double lambda_r) {
  std::size_t n = static_cast<std::size_t>(batch.batch_size);
  std::size_t k_count = static_cast<std::size_t>(batch.attr_count);
  if (x.size() != n) throw validation_error("granule_loss: features size mismatch");
  if (attrs.size() != prompted.size()) throw validation_error("granule_loss: attrs/prompted size mismatch");
  for (int label : batch.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= prompted.size())
      throw validation_error("granule_loss: label outside candidate set");
  }

  std::vector<ag::Var> fac_terms;
  fac_terms.reserve(n);
  std::vector<ag::Var> x_v(n);
  for (std::size_t i = 0; i < n; ++i) x_v[i] = tape.constant(x[i]);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const ag::Var> row(batch.factual.data() + i * k_count, k_count);
    fac_terms.push_back(factual_loss(tape, row, attrs, batch.labels[i], tau, lambda_f));
  }

  std::vector<ag::Var> con_terms;
  con_terms.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    ag::Var diag = batch.counterfactual[i * n + i];
    for (std::size_t j = 0; j < n; ++j) {
      con_terms.push_back(counterfactual_loss(tape, batch.counterfactual[i * n + j],
                                              batch.labels[j], prompted, x_v[i], diag, tau, lambda_r));
    }
  }

  ag::Var fac = tape.mean(tape.stack(fac_terms));
  ag::Var con = tape.mean(tape.stack(con_terms));
  return tape.add(fac, con);
}

}  // namespace vgpl
