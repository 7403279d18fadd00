#include "vgpl/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw validation_error(msg);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// batches of indices, fixed batch size, trailing remainder kept
std::vector<std::vector<int>> make_batches(std::vector<int> order, int batch_size) {
  std::vector<std::vector<int>> batches;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace

void TrainConfig::validate() const {
  require(transfer_steps >= 2, "config: transfer_steps must be at least 2");
  require(attr_count > 0, "config: attr_count must be positive");
  require(batch_size > 0, "config: batch_size must be positive");
  require(lambda_f >= 0.0 && lambda_r >= 0.0, "config: loss weights must be non-negative");
  require(tau > 0.0, "config: tau must be positive");
  require(context_len > 0, "config: context_len must be positive");
  require(iterations > 0, "config: iterations must be positive");
  require(stage_a_epochs > 0, "config: stage_a_epochs must be positive");
  require(stage_b_base > 0, "config: stage_b_base must be positive");
  require(lr_a > 0.0 && lr_b > 0.0, "config: learning rates must be positive");
  require(shots >= 0, "config: shots must be non-negative");
  require(token_count > 0, "config: token_count must be positive");
  require(transfer_hidden > 0, "config: transfer_hidden must be positive");
  require(time_embed_dim > 0 && time_embed_dim % 2 == 0,
          "config: time_embed_dim must be positive and even");
}

ModelState ModelState::init(const TrainConfig& config, int dim,
                            const std::vector<std::string>& class_names) {
  config.validate();
  require(dim > 0, "model: dim must be positive");
  require(dim % config.token_count == 0, "model: token_count must divide the feature width");
  ModelState st;
  st.dim = dim;
  int enc_hidden = config.resolve(config.enc_hidden, dim);
  int dec_hidden = config.resolve(config.dec_hidden, dim);
  int stub_hidden = config.resolve(config.stub_hidden, dim);
  int embed_dim = config.resolve(config.embed_dim, dim);
  st.enc_shared = Encoder::init("enc_shared", dim, enc_hidden, config.seed);
  st.enc_indiv = Encoder::init("enc_indiv", dim, enc_hidden, config.seed);
  st.transfer = TransferModel::init(dim, config.transfer_hidden, config.time_embed_dim, config.seed);
  st.queries = AttributeQueries::init(config.attr_count, config.token_count, dim / config.token_count,
                                      config.seed);
  st.decoder = Decoder::init(dim, dec_hidden, config.seed);
  st.prompt = PromptState::init(config.context_len, embed_dim, dim, stub_hidden, class_names, config.seed);
  return st;
}

std::vector<ParamGroup*> ModelState::all_groups() {
  return {&enc_shared.params, &enc_indiv.params, &transfer.params,
          &queries.params,    &decoder.params,   &prompt.ctx,      &prompt.stub};
}

std::vector<const ParamGroup*> ModelState::all_groups() const {
  return {&enc_shared.params, &enc_indiv.params, &transfer.params,
          &queries.params,    &decoder.params,   &prompt.ctx,      &prompt.stub};
}

TrainSet make_train_set(const EmbeddingBank& bank, const std::vector<int>& classes, int shots,
                        uint64_t seed) {
  require(!classes.empty(), "train set: empty class list");
  require(shots >= 0, "train set: shots must be non-negative");
  TrainSet set;
  set.dim = static_cast<int>(bank.dim);
  for (std::size_t local = 0; local < classes.size(); ++local) {
    int cid = classes[local];
    require(cid >= 0 && static_cast<std::size_t>(cid) < bank.class_names.size(),
            "train set: class id out of range");
    set.class_ids.push_back(cid);
    set.class_names.push_back(bank.class_names[static_cast<std::size_t>(cid)]);
    std::vector<int> members;
    for (std::size_t r = 0; r < bank.records.size(); ++r) {
      if (bank.records[r].class_id == static_cast<uint32_t>(cid)) members.push_back(static_cast<int>(r));
    }
    require(!members.empty(), "train set: class without records: " + set.class_names.back());
    if (shots > 0 && shots < static_cast<int>(members.size())) {
      Rng rng(derive_seed(seed, "shots", static_cast<uint64_t>(cid)));
      rng.shuffle(members);
      members.resize(static_cast<std::size_t>(shots));
      std::sort(members.begin(), members.end());
    }
    for (int r : members) {
      const auto& feat = bank.records[static_cast<std::size_t>(r)].feature;
      set.features.emplace_back(feat.begin(), feat.end());
      set.labels.push_back(static_cast<int>(local));
    }
  }
  return set;
}

Adam::Adam(std::vector<ParamGroup*> groups, double lr, double beta1, double beta2, double eps)
    : groups_(std::move(groups)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(groups_.size());
  v_.resize(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    m_[g].assign(groups_[g]->size(), 0.0);
    v_[g].assign(groups_[g]->size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    ParamGroup& pg = *groups_[g];
    if (!pg.trainable) continue;
    for (std::size_t i = 0; i < pg.size(); ++i) {
      double grad = pg.grad[i];
      m_[g][i] = beta1_ * m_[g][i] + (1.0 - beta1_) * grad;
      v_[g][i] = beta2_ * v_[g][i] + (1.0 - beta2_) * grad * grad;
      double mhat = m_[g][i] / bc1;
      double vhat = v_[g][i] / bc2;
      pg.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double grad_check(const std::function<double(bool)>& eval, ParamGroup& group, double step, int samples,
                  uint64_t seed) {
  require(step > 0.0, "grad_check: step must be positive");
  require(samples > 0, "grad_check: samples must be positive");
  require(group.size() > 0, "grad_check: empty parameter group");
  double base = eval(true);
  if (!std::isfinite(base)) throw validation_error("grad_check: non-finite loss");
  std::vector<double> analytic = group.grad;

  std::vector<int> coords(group.size());
  std::iota(coords.begin(), coords.end(), 0);
  Rng rng(derive_seed(seed, "grad_check"));
  rng.shuffle(coords);
  std::size_t checked = std::min<std::size_t>(coords.size(), static_cast<std::size_t>(samples));

  double worst = 0.0;
  for (std::size_t s = 0; s < checked; ++s) {
    std::size_t i = static_cast<std::size_t>(coords[s]);
    double saved = group.values[i];
    group.values[i] = saved + step;
    double plus = eval(false);
    group.values[i] = saved - step;
    double minus = eval(false);
    group.values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus))
      throw validation_error("grad_check: non-finite loss during perturbation");
    double fd = (plus - minus) / (2.0 * step);
    double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-8});
    worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
  }
  return worst;
}

std::string format_history(std::span<const EpochRecord> records) {
  std::ostringstream out;
  for (const auto& rec : records) {
    out << rec.iteration << ' ' << rec.stage << ' ' << rec.epoch << ' ' << fmt_double(rec.loss) << '\n';
  }
  return out.str();
}

std::vector<EpochRecord> parse_history(const std::string& text) {
  std::vector<EpochRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochRecord rec;
    std::string stage;
    if (!(ls >> rec.iteration >> stage >> rec.epoch >> rec.loss) || stage.size() != 1 ||
        (stage[0] != 'A' && stage[0] != 'B')) {
      throw io_error(io_error::Kind::malformed,
                     "history: malformed record at line " + std::to_string(line_no));
    }
    std::string rest;
    if (ls >> rest)
      throw io_error(io_error::Kind::malformed,
                     "history: trailing fields at line " + std::to_string(line_no));
    rec.stage = stage[0];
    records.push_back(rec);
  }
  return records;
}

std::vector<double> run_stage_a(const TrainSet& data, ModelState& state, const TrainConfig& config,
                                const BridgeSchedule& sched, int iteration) {
  require(!data.features.empty(), "stage A: empty training set");
  require(data.dim == state.dim, "stage A: data width != model width");
  std::vector<ParamGroup*> groups = {&state.enc_shared.params, &state.enc_indiv.params,
                                     &state.transfer.params};
  Adam opt(groups, config.lr_a);
  Rng order_rng(derive_seed(config.seed, "stage_a.order", static_cast<uint64_t>(iteration)));
  std::vector<int> order(data.features.size());
  std::iota(order.begin(), order.end(), 0);

  // one (step, noise) draw per sample per phase, so batch order never
  // changes what a sample contributes
  std::vector<int> t_draw(data.features.size());
  std::vector<Vec> noise_draw(data.features.size());
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    Rng rng(derive_seed(config.seed, "stage_a.draw", static_cast<uint64_t>(iteration), i));
    t_draw[i] = rng.uniform_int(1, sched.steps);
    noise_draw[i] = rng.normals(static_cast<std::size_t>(state.dim));
  }

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(config.stage_a_epochs));
  for (int epoch = 0; epoch < config.stage_a_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      for (ParamGroup* g : groups) g->zero_grad();
      ag::Tape tape;
      ag::Var es_leaf = tape.leaf(state.enc_shared.params.values, state.enc_shared.params.grad_sink());
      ag::Var ei_leaf = tape.leaf(state.enc_indiv.params.values, state.enc_indiv.params.grad_sink());
      ag::Var tm_leaf = tape.leaf(state.transfer.params.values, state.transfer.params.grad_sink());
      std::vector<ag::Var> losses;
      losses.reserve(batch.size());
      for (int idx : batch) {
        ag::Var x = tape.constant(data.features[static_cast<std::size_t>(idx)]);
        PairVars pair = disentangle(tape, es_leaf, ei_leaf, x, state.enc_shared, state.enc_indiv);
        losses.push_back(stage_a_loss(tape, tm_leaf, x, pair, t_draw[static_cast<std::size_t>(idx)],
                                      noise_draw[static_cast<std::size_t>(idx)], state.transfer, sched,
                                      config.variant));
      }
      ag::Var batch_loss = tape.mean(tape.stack(losses));
      double value = tape.scalar(batch_loss);
      if (!std::isfinite(value)) throw validation_error("stage A: non-finite batch loss");
      tape.backward(batch_loss);
      opt.step();
      loss_sum += value * static_cast<double>(batch.size());
    }
    trace.push_back(loss_sum / static_cast<double>(data.features.size()));
  }
  return trace;
}

std::vector<double> run_stage_b(const TrainSet& data, ModelState& state, const TrainConfig& config,
                                int iteration) {
  require(!data.features.empty(), "stage B: empty training set");
  require(data.dim == state.dim, "stage B: data width != model width");
  require(iteration >= 1, "stage B: iteration must be at least 1");
  int num_classes = static_cast<int>(state.prompt.class_embeds.size());
  require(num_classes > 0, "stage B: prompt has no classes");
  for (int label : data.labels)
    require(label >= 0 && label < num_classes, "stage B: label outside prompt classes");

  // encoders are frozen during this phase; their outputs enter as constants
  std::vector<Vec> shared_all(data.features.size());
  std::vector<Vec> indiv_all(data.features.size());
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    shared_all[i] = state.enc_shared.apply(data.features[i]);
    indiv_all[i] = state.enc_indiv.apply(data.features[i]);
  }

  Temperature tau(config.tau);
  std::vector<ParamGroup*> groups = {&state.queries.params, &state.decoder.params, &state.prompt.ctx};
  Adam opt(groups, config.lr_b);
  Rng order_rng(derive_seed(config.seed, "stage_b.order", static_cast<uint64_t>(iteration)));
  std::vector<int> order(data.features.size());
  std::iota(order.begin(), order.end(), 0);

  int epochs = config.stage_b_base * iteration;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(epochs));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      for (ParamGroup* g : groups) g->zero_grad();
      ag::Tape tape;
      ag::Var ctx_leaf = tape.leaf(state.prompt.ctx.values, state.prompt.ctx.grad_sink());
      ag::Var stub_leaf = tape.leaf(state.prompt.stub.values, state.prompt.stub.grad_sink());
      ag::Var q_leaf = tape.leaf(state.queries.params.values, state.queries.params.grad_sink());
      ag::Var dec_leaf = tape.leaf(state.decoder.params.values, state.decoder.params.grad_sink());

      std::vector<ag::Var> prompted;
      prompted.reserve(static_cast<std::size_t>(num_classes));
      std::vector<std::vector<ag::Var>> attrs(static_cast<std::size_t>(num_classes));
      for (int c = 0; c < num_classes; ++c) {
        ag::Var pc = encode_prompted(tape, ctx_leaf, stub_leaf, state.prompt,
                                     state.prompt.class_embeds[static_cast<std::size_t>(c)]);
        prompted.push_back(pc);
        attrs[static_cast<std::size_t>(c)] = query_bank(tape, q_leaf, state.queries, pc);
      }

      std::vector<Vec> shared_b, indiv_b, x_b;
      std::vector<int> labels_b;
      shared_b.reserve(batch.size());
      indiv_b.reserve(batch.size());
      x_b.reserve(batch.size());
      labels_b.reserve(batch.size());
      for (int idx : batch) {
        shared_b.push_back(shared_all[static_cast<std::size_t>(idx)]);
        indiv_b.push_back(indiv_all[static_cast<std::size_t>(idx)]);
        x_b.push_back(data.features[static_cast<std::size_t>(idx)]);
        labels_b.push_back(data.labels[static_cast<std::size_t>(idx)]);
      }
      GranuleBatch gb = build_granules(tape, q_leaf, state.queries, dec_leaf, state.decoder, shared_b,
                                       indiv_b, labels_b);
      ag::Var loss = granule_loss(tape, gb, x_b, attrs, prompted, tau, config.lambda_f, config.lambda_r);
      double value = tape.scalar(loss);
      if (!std::isfinite(value)) throw validation_error("stage B: non-finite batch loss");
      tape.backward(loss);
      opt.step();
      loss_sum += value * static_cast<double>(batch.size());
    }
    trace.push_back(loss_sum / static_cast<double>(data.features.size()));
  }
  return trace;
}

double diag_reconstruction(const TrainSet& data, const ModelState& state) {
  require(!data.features.empty(), "diag_reconstruction: empty set");
  double sum = 0.0;
  for (const auto& x : data.features) {
    Vec shared = state.enc_shared.apply(x);
    Vec indiv = state.enc_indiv.apply(x);
    Vec rebuilt = state.decoder.apply(shared, indiv);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double diff = x[i] - rebuilt[i];
      acc += diff * diff;
    }
    sum += acc;
  }
  return sum / static_cast<double>(data.features.size());
}

TrainResult run_training(const TrainSet& data, const TrainConfig& config, const StageCallback& on_stage) {
  config.validate();
  BridgeSchedule sched = make_schedule(config.transfer_steps);
  TrainResult result{ModelState::init(config, data.dim, data.class_names), {}, 0.0, 0.0};
  for (int n = 1; n <= config.iterations; ++n) {
    std::vector<double> trace_a = run_stage_a(data, result.state, config, sched, n);
    for (std::size_t e = 0; e < trace_a.size(); ++e)
      result.history.push_back(EpochRecord{n, 'A', static_cast<int>(e), trace_a[e]});
    if (on_stage) on_stage(result.state, n, 'A');
    if (n == 1) result.diag_recon_start = diag_reconstruction(data, result.state);
    std::vector<double> trace_b = run_stage_b(data, result.state, config, n);
    for (std::size_t e = 0; e < trace_b.size(); ++e)
      result.history.push_back(EpochRecord{n, 'B', static_cast<int>(e), trace_b[e]});
    if (on_stage) on_stage(result.state, n, 'B');
  }
  result.diag_recon_end = diag_reconstruction(data, result.state);
  return result;
}

BaselineResult run_prompt_ce_baseline(const TrainSet& data, const TrainConfig& config) {
  config.validate();
  require(!data.features.empty(), "baseline: empty training set");
  int dim = data.dim;
  int embed_dim = config.resolve(config.embed_dim, dim);
  int stub_hidden = config.resolve(config.stub_hidden, dim);
  BaselineResult result{PromptState::init(config.context_len, embed_dim, dim, stub_hidden,
                                          data.class_names, config.seed),
                        {}};
  PromptState& prompt = result.prompt;
  int num_classes = static_cast<int>(prompt.class_embeds.size());
  Temperature tau(config.tau);

  int epochs = 0;
  for (int n = 1; n <= config.iterations; ++n) epochs += config.stage_b_base * n;

  Adam opt({&prompt.ctx}, config.lr_b);
  Rng order_rng(derive_seed(config.seed, "baseline.order"));
  std::vector<int> order(data.features.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      prompt.ctx.zero_grad();
      ag::Tape tape;
      ag::Var ctx_leaf = tape.leaf(prompt.ctx.values, prompt.ctx.grad_sink());
      ag::Var stub_leaf = tape.leaf(prompt.stub.values, prompt.stub.grad_sink());
      std::vector<ag::Var> prompted;
      prompted.reserve(static_cast<std::size_t>(num_classes));
      for (int c = 0; c < num_classes; ++c)
        prompted.push_back(encode_prompted(tape, ctx_leaf, stub_leaf, prompt,
                                           prompt.class_embeds[static_cast<std::size_t>(c)]));
      std::vector<ag::Var> ce_terms;
      ce_terms.reserve(batch.size());
      for (int idx : batch) {
        ag::Var x = tape.constant(data.features[static_cast<std::size_t>(idx)]);
        std::vector<ag::Var> cos;
        cos.reserve(static_cast<std::size_t>(num_classes));
        for (int c = 0; c < num_classes; ++c) cos.push_back(tape.cosine(x, prompted[static_cast<std::size_t>(c)]));
        ag::Var probs = tape.softmax(tape.scale(tape.stack(cos), 1.0 / tau.tau));
        ag::Var picked = tape.pick(probs, data.labels[static_cast<std::size_t>(idx)]);
        ce_terms.push_back(tape.scale(tape.log(picked), -1.0));
      }
      ag::Var loss = tape.mean(tape.stack(ce_terms));
      double value = tape.scalar(loss);
      if (!std::isfinite(value)) throw validation_error("baseline: non-finite batch loss");
      tape.backward(loss);
      opt.step();
      loss_sum += value * static_cast<double>(batch.size());
    }
    result.history.push_back(
        EpochRecord{1, 'B', epoch, loss_sum / static_cast<double>(data.features.size())});
  }
  return result;
}

std::vector<GradCheckRow> run_gradient_suite(uint64_t seed, int samples_per_group) {
  const int d = 8;
  const int hidden = 8;
  const int token_count = 2;
  const int attr_count = 2;
  const int num_classes = 3;
  const int batch = 2;
  const int t_step = 3;
  const double step = 1e-6;
  const double lambda_f = 0.7;
  const double lambda_r = 0.3;
  Temperature tau(0.5);

  BridgeSchedule sched = make_schedule(8);
  Encoder enc_s = Encoder::init("enc_shared", d, hidden, seed);
  Encoder enc_i = Encoder::init("enc_indiv", d, hidden, seed);
  TransferModel transfer = TransferModel::init(d, 16, 8, seed);
  AttributeQueries queries = AttributeQueries::init(attr_count, token_count, d / token_count, seed);
  Decoder decoder = Decoder::init(d, 2 * hidden, seed);
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.push_back("c" + std::to_string(c));
  PromptState prompt = PromptState::init(2, d, d, hidden, names, seed);

  // moderate input scale keeps the finite-difference checks well away from
  // the cancellation floor of the pinned 1e-6 step
  const double input_scale = 0.25;
  std::vector<Vec> x(batch);
  for (int i = 0; i < batch; ++i) {
    x[i] = Rng(derive_seed(seed, "fixture.x", static_cast<uint64_t>(i))).normals(static_cast<std::size_t>(d));
    for (double& v : x[i]) v *= input_scale;
  }
  std::vector<int> labels = {0, 1};
  Vec noise = Rng(derive_seed(seed, "fixture.noise")).normals(static_cast<std::size_t>(d));
  for (double& v : noise) v *= input_scale;

  // the granule losses see the attribute halves the way stage B does: frozen
  std::vector<Vec> shared(x.size()), indiv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    shared[i] = enc_s.apply(x[i]);
    indiv[i] = enc_i.apply(x[i]);
  }

  auto zero_all = [&] {
    enc_s.params.zero_grad();
    enc_i.params.zero_grad();
    transfer.params.zero_grad();
    queries.params.zero_grad();
    decoder.params.zero_grad();
    prompt.ctx.zero_grad();
  };

  struct PromptedSet {
    std::vector<ag::Var> prompted;
    std::vector<std::vector<ag::Var>> attrs;
  };
  auto make_prompted = [&](ag::Tape& tape, ag::Var ctx_leaf, ag::Var stub_leaf, ag::Var q_leaf) {
    PromptedSet set;
    set.attrs.resize(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
      ag::Var pc = encode_prompted(tape, ctx_leaf, stub_leaf, prompt,
                                   prompt.class_embeds[static_cast<std::size_t>(c)]);
      set.prompted.push_back(pc);
      set.attrs[static_cast<std::size_t>(c)] = query_bank(tape, q_leaf, queries, pc);
    }
    return set;
  };

  auto eval_stage_a = [&](bool want_grad) {
    if (want_grad) zero_all();
    ag::Tape tape;
    ag::Var es = tape.leaf(enc_s.params.values, enc_s.params.grad_sink());
    ag::Var ei = tape.leaf(enc_i.params.values, enc_i.params.grad_sink());
    ag::Var tm = tape.leaf(transfer.params.values, transfer.params.grad_sink());
    ag::Var xv = tape.constant(x[0]);
    PairVars pair = disentangle(tape, es, ei, xv, enc_s, enc_i);
    ag::Var loss =
        stage_a_loss(tape, tm, xv, pair, t_step, noise, transfer, sched, BridgeVariant::standard);
    double value = tape.scalar(loss);
    if (want_grad) tape.backward(loss);
    return value;
  };

  auto eval_factual = [&](bool want_grad) {
    if (want_grad) zero_all();
    ag::Tape tape;
    ag::Var q = tape.leaf(queries.params.values, queries.params.grad_sink());
    ag::Var dec = tape.leaf(decoder.params.values, decoder.params.grad_sink());
    ag::Var ctx = tape.leaf(prompt.ctx.values, prompt.ctx.grad_sink());
    ag::Var stub = tape.leaf(prompt.stub.values, prompt.stub.grad_sink());
    PromptedSet set = make_prompted(tape, ctx, stub, q);
    ag::Var sh = tape.constant(shared[0]);
    std::vector<ag::Var> sliced = query_bank(tape, q, queries, tape.constant(indiv[0]));
    std::vector<ag::Var> granules;
    for (ag::Var attr : sliced) granules.push_back(factual_granule(tape, dec, decoder, sh, attr));
    ag::Var loss = factual_loss(tape, granules, set.attrs, labels[0], tau, lambda_f);
    double value = tape.scalar(loss);
    if (want_grad) tape.backward(loss);
    return value;
  };

  auto eval_counterfactual = [&](bool want_grad) {
    if (want_grad) zero_all();
    ag::Tape tape;
    ag::Var dec = tape.leaf(decoder.params.values, decoder.params.grad_sink());
    ag::Var ctx = tape.leaf(prompt.ctx.values, prompt.ctx.grad_sink());
    ag::Var stub = tape.leaf(prompt.stub.values, prompt.stub.grad_sink());
    std::vector<ag::Var> prompted;
    for (int c = 0; c < num_classes; ++c)
      prompted.push_back(encode_prompted(tape, ctx, stub, prompt,
                                         prompt.class_embeds[static_cast<std::size_t>(c)]));
    ag::Var sh0 = tape.constant(shared[0]);
    ag::Var g01 = counterfactual_granule(tape, dec, decoder, sh0, tape.constant(indiv[1]));
    ag::Var g00 = counterfactual_granule(tape, dec, decoder, sh0, tape.constant(indiv[0]));
    ag::Var loss = counterfactual_loss(tape, g01, labels[1], prompted, tape.constant(x[0]), g00, tau,
                                       lambda_r);
    double value = tape.scalar(loss);
    if (want_grad) tape.backward(loss);
    return value;
  };

  auto eval_granule = [&](bool want_grad) {
    if (want_grad) zero_all();
    ag::Tape tape;
    ag::Var q = tape.leaf(queries.params.values, queries.params.grad_sink());
    ag::Var dec = tape.leaf(decoder.params.values, decoder.params.grad_sink());
    ag::Var ctx = tape.leaf(prompt.ctx.values, prompt.ctx.grad_sink());
    ag::Var stub = tape.leaf(prompt.stub.values, prompt.stub.grad_sink());
    PromptedSet set = make_prompted(tape, ctx, stub, q);
    GranuleBatch gb = build_granules(tape, q, queries, dec, decoder, shared, indiv, labels);
    ag::Var loss = granule_loss(tape, gb, x, set.attrs, set.prompted, tau, lambda_f, lambda_r);
    double value = tape.scalar(loss);
    if (want_grad) tape.backward(loss);
    return value;
  };

  std::vector<GradCheckRow> rows;
  auto check = [&](const char* loss_name, ParamGroup& group, const std::function<double(bool)>& eval) {
    double err = grad_check(eval, group, step, samples_per_group,
                            derive_seed(seed, "suite", rows.size()));
    rows.push_back(GradCheckRow{loss_name, group.name, err});
  };

  check("restoration", enc_s.params, eval_stage_a);
  check("restoration", enc_i.params, eval_stage_a);
  check("restoration", transfer.params, eval_stage_a);
  check("factual", queries.params, eval_factual);
  check("factual", decoder.params, eval_factual);
  check("factual", prompt.ctx, eval_factual);
  check("counterfactual", decoder.params, eval_counterfactual);
  check("counterfactual", prompt.ctx, eval_counterfactual);
  check("granule_total", queries.params, eval_granule);
  check("granule_total", decoder.params, eval_granule);
  check("granule_total", prompt.ctx, eval_granule);
  return rows;
}

namespace {

constexpr uint32_t kChunk = 256;
constexpr char kSep = '\x1f';

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out.push_back(kSep);
    out += names[i];
  }
  return out;
}

std::vector<std::string> split_names(const std::string& joined) {
  std::vector<std::string> names;
  if (joined.empty()) return names;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = joined.find(kSep, start);
    if (pos == std::string::npos) {
      names.push_back(joined.substr(start));
      break;
    }
    names.push_back(joined.substr(start, pos - start));
    start = pos + 1;
  }
  return names;
}

std::string join_ids(const std::vector<int>& ids) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ',';
    out << ids[i];
  }
  return out.str();
}

std::vector<int> split_ids(const std::string& joined) {
  std::vector<int> ids;
  std::stringstream ss(joined);
  std::string tok;
  while (std::getline(ss, tok, ',')) ids.push_back(std::stoi(tok));
  return ids;
}

void config_to_meta(const TrainConfig& c, std::map<std::string, std::string>& meta) {
  meta["cfg.transfer_steps"] = std::to_string(c.transfer_steps);
  meta["cfg.attr_count"] = std::to_string(c.attr_count);
  meta["cfg.batch_size"] = std::to_string(c.batch_size);
  meta["cfg.lambda_f"] = fmt_double(c.lambda_f);
  meta["cfg.lambda_r"] = fmt_double(c.lambda_r);
  meta["cfg.tau"] = fmt_double(c.tau);
  meta["cfg.context_len"] = std::to_string(c.context_len);
  meta["cfg.iterations"] = std::to_string(c.iterations);
  meta["cfg.stage_a_epochs"] = std::to_string(c.stage_a_epochs);
  meta["cfg.stage_b_base"] = std::to_string(c.stage_b_base);
  meta["cfg.lr_a"] = fmt_double(c.lr_a);
  meta["cfg.lr_b"] = fmt_double(c.lr_b);
  meta["cfg.seed"] = std::to_string(c.seed);
  meta["cfg.variant"] = variant_name(c.variant);
  meta["cfg.shots"] = std::to_string(c.shots);
  meta["cfg.token_count"] = std::to_string(c.token_count);
  meta["cfg.enc_hidden"] = std::to_string(c.enc_hidden);
  meta["cfg.dec_hidden"] = std::to_string(c.dec_hidden);
  meta["cfg.transfer_hidden"] = std::to_string(c.transfer_hidden);
  meta["cfg.time_embed_dim"] = std::to_string(c.time_embed_dim);
  meta["cfg.stub_hidden"] = std::to_string(c.stub_hidden);
  meta["cfg.embed_dim"] = std::to_string(c.embed_dim);
}

const std::string& meta_get(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw io_error(io_error::Kind::malformed, "checkpoint: missing meta key " + key);
  return it->second;
}

TrainConfig config_from_meta(const std::map<std::string, std::string>& meta) {
  TrainConfig c;
  c.transfer_steps = std::stoi(meta_get(meta, "cfg.transfer_steps"));
  c.attr_count = std::stoi(meta_get(meta, "cfg.attr_count"));
  c.batch_size = std::stoi(meta_get(meta, "cfg.batch_size"));
  c.lambda_f = std::stod(meta_get(meta, "cfg.lambda_f"));
  c.lambda_r = std::stod(meta_get(meta, "cfg.lambda_r"));
  c.tau = std::stod(meta_get(meta, "cfg.tau"));
  c.context_len = std::stoi(meta_get(meta, "cfg.context_len"));
  c.iterations = std::stoi(meta_get(meta, "cfg.iterations"));
  c.stage_a_epochs = std::stoi(meta_get(meta, "cfg.stage_a_epochs"));
  c.stage_b_base = std::stoi(meta_get(meta, "cfg.stage_b_base"));
  c.lr_a = std::stod(meta_get(meta, "cfg.lr_a"));
  c.lr_b = std::stod(meta_get(meta, "cfg.lr_b"));
  c.seed = std::stoull(meta_get(meta, "cfg.seed"));
  c.variant = parse_variant(meta_get(meta, "cfg.variant"));
  c.shots = std::stoi(meta_get(meta, "cfg.shots"));
  c.token_count = std::stoi(meta_get(meta, "cfg.token_count"));
  c.enc_hidden = std::stoi(meta_get(meta, "cfg.enc_hidden"));
  c.dec_hidden = std::stoi(meta_get(meta, "cfg.dec_hidden"));
  c.transfer_hidden = std::stoi(meta_get(meta, "cfg.transfer_hidden"));
  c.time_embed_dim = std::stoi(meta_get(meta, "cfg.time_embed_dim"));
  c.stub_hidden = std::stoi(meta_get(meta, "cfg.stub_hidden"));
  c.embed_dim = std::stoi(meta_get(meta, "cfg.embed_dim"));
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state, const TrainConfig& config,
                     int dim, const std::vector<std::string>& bank_class_names, const LabelSpace& split) {
  EmbeddingBank container;
  container.dim = kChunk;
  container.meta["ckpt"] = "1";
  container.meta["model.dim"] = std::to_string(dim);
  container.meta["data.classes"] = join_names(bank_class_names);
  container.meta["data.base_ids"] = join_ids(split.base_ids);
  container.meta["data.new_ids"] = join_ids(split.new_ids);
  config_to_meta(config, container.meta);
  auto groups = state.all_groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const ParamGroup& pg = *groups[g];
    container.class_names.push_back(pg.name);
    container.meta["pg." + std::to_string(g) + ".len"] = std::to_string(pg.size());
    container.meta["pg." + std::to_string(g) + ".trainable"] = pg.trainable ? "1" : "0";
    for (std::size_t off = 0; off < pg.size(); off += kChunk) {
      BankRecord rec;
      rec.class_id = static_cast<uint32_t>(g);
      rec.feature.assign(kChunk, 0.0f);
      std::size_t count = std::min<std::size_t>(kChunk, pg.size() - off);
      for (std::size_t i = 0; i < count; ++i) rec.feature[i] = static_cast<float>(pg.values[off + i]);
      container.records.push_back(std::move(rec));
    }
  }
  write_bank(container, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  EmbeddingBank container = read_bank(path);
  if (container.meta.find("ckpt") == container.meta.end())
    throw io_error(io_error::Kind::malformed, "checkpoint: not a checkpoint container: " + path);
  Checkpoint ckpt;
  ckpt.config = config_from_meta(container.meta);
  ckpt.dim = std::stoi(meta_get(container.meta, "model.dim"));
  ckpt.bank_class_names = split_names(meta_get(container.meta, "data.classes"));
  ckpt.split.base_ids = split_ids(meta_get(container.meta, "data.base_ids"));
  ckpt.split.new_ids = split_ids(meta_get(container.meta, "data.new_ids"));

  std::vector<std::string> base_names;
  for (int id : ckpt.split.base_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= ckpt.bank_class_names.size())
      throw io_error(io_error::Kind::malformed, "checkpoint: base id out of range");
    base_names.push_back(ckpt.bank_class_names[static_cast<std::size_t>(id)]);
  }
  ckpt.state = ModelState::init(ckpt.config, ckpt.dim, base_names);

  auto groups = ckpt.state.all_groups();
  if (container.class_names.size() != groups.size())
    throw io_error(io_error::Kind::malformed, "checkpoint: unexpected group count");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ParamGroup& pg = *groups[g];
    if (container.class_names[g] != pg.name)
      throw io_error(io_error::Kind::malformed, "checkpoint: group name mismatch: " + container.class_names[g]);
    std::size_t len = std::stoull(meta_get(container.meta, "pg." + std::to_string(g) + ".len"));
    if (len != pg.size())
      throw io_error(io_error::Kind::malformed, "checkpoint: group length mismatch: " + pg.name);
  }
  std::vector<std::size_t> cursor(groups.size(), 0);
  for (const auto& rec : container.records) {
    std::size_t g = rec.class_id;
    if (g >= groups.size()) throw io_error(io_error::Kind::malformed, "checkpoint: chunk group out of range");
    ParamGroup& pg = *groups[g];
    for (float f : rec.feature) {
      if (cursor[g] >= pg.size()) break;  // zero padding of the final chunk
      pg.values[cursor[g]++] = static_cast<double>(f);
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (cursor[g] != groups[g]->size())
      throw io_error(io_error::Kind::malformed, "checkpoint: missing chunks for group " + groups[g]->name);
  }
  return ckpt;
}

}  // namespace vgpl
