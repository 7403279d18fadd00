#ifndef VGPL_TRAINKIT_HPP
#define VGPL_TRAINKIT_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vgpl/bridge.hpp"
#include "vgpl/disentangle.hpp"
#include "vgpl/embank.hpp"
#include "vgpl/granule.hpp"
#include "vgpl/prompt.hpp"

namespace vgpl {

struct TrainConfig {
  // schedule / loss shape
  int transfer_steps = 1000;  // T
  int attr_count = 10;        // K
  int batch_size = 64;        // N
  double lambda_f = 1.0;
  double lambda_r = 1.0;
  double tau = 0.01;
  int context_len = 4;  // M
  // two-stage scheme: iteration n runs stage_a_epochs of stage A followed by
  // stage_b_base * n of stage B
  int iterations = 3;
  int stage_a_epochs = 10;
  int stage_b_base = 10;
  double lr_a = 1e-3;
  double lr_b = 2e-3;
  uint64_t seed = 0;
  BridgeVariant variant = BridgeVariant::standard;
  // per-class training cap; 0 keeps every record
  int shots = 0;
  // model shape; 0 falls back to the bank's feature width
  int token_count = 8;  // L
  int enc_hidden = 0;
  int dec_hidden = 0;
  int transfer_hidden = 128;
  int time_embed_dim = 32;
  int stub_hidden = 0;
  int embed_dim = 0;  // d_e

  void validate() const;
  int resolve(int value, int dim) const { return value > 0 ? value : dim; }
};

// Everything learnable (or deliberately frozen), grouped per component.
struct ModelState {
  int dim = 0;
  Encoder enc_shared;
  Encoder enc_indiv;
  TransferModel transfer;
  AttributeQueries queries;
  Decoder decoder;
  PromptState prompt;

  static ModelState init(const TrainConfig& config, int dim,
                         const std::vector<std::string>& class_names);
  std::vector<ParamGroup*> all_groups();
  std::vector<const ParamGroup*> all_groups() const;
};

// Flattened training view of one split of a bank. labels are local indices
// into class_names; class_ids maps them back to bank ids.
struct TrainSet {
  int dim = 0;
  std::vector<Vec> features;
  std::vector<int> labels;
  std::vector<int> class_ids;
  std::vector<std::string> class_names;
};

TrainSet make_train_set(const EmbeddingBank& bank, const std::vector<int>& classes, int shots,
                        uint64_t seed);

// Adam with bias correction. One instance per training phase; groups are
// fixed at construction and stepped together.
class Adam {
 public:
  Adam(std::vector<ParamGroup*> groups, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();

 private:
  std::vector<ParamGroup*> groups_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Central-difference check of an analytic gradient. eval(want_grad) returns
// the loss; when want_grad it must also refresh group.grad. Checks `samples`
// randomly chosen coordinates and returns the largest relative error, with
// denominators floored at 1e-8. Throws on non-finite losses.
double grad_check(const std::function<double(bool)>& eval, ParamGroup& group, double step, int samples,
                  uint64_t seed);

struct EpochRecord {
  int iteration = 0;
  char stage = 'A';
  int epoch = 0;
  double loss = 0.0;
};

std::string format_history(std::span<const EpochRecord> records);
std::vector<EpochRecord> parse_history(const std::string& text);

// One stage-A phase: per sample, a uniformly random step and fresh noise,
// restoration loss averaged per batch. Updates encoders and the transfer
// model only. Returns per-epoch mean losses.
std::vector<double> run_stage_a(const TrainSet& data, ModelState& state, const TrainConfig& config,
                                const BridgeSchedule& sched, int iteration);

// One stage-B phase (stage_b_base * iteration epochs): granule loss over
// factual and counterfactual granules. Updates queries, decoder and prompt
// context only.
std::vector<double> run_stage_b(const TrainSet& data, ModelState& state, const TrainConfig& config,
                                int iteration);

// Mean diagonal reconstruction error over the whole set with current params.
double diag_reconstruction(const TrainSet& data, const ModelState& state);

struct TrainResult {
  ModelState state;
  std::vector<EpochRecord> history;
  double diag_recon_start = 0.0;  // measured entering the first stage-B phase
  double diag_recon_end = 0.0;    // measured after the final epoch
};

using StageCallback = std::function<void(const ModelState&, int iteration, char stage)>;

TrainResult run_training(const TrainSet& data, const TrainConfig& config,
                         const StageCallback& on_stage = nullptr);

// Prompt-only reference trained with plain cosine-softmax cross entropy on
// raw features, matched to the pipeline's total stage-B epoch budget,
// optimizer, learning rate and batch streams.
struct BaselineResult {
  PromptState prompt;
  std::vector<EpochRecord> history;
};

BaselineResult run_prompt_ce_baseline(const TrainSet& data, const TrainConfig& config);

// Central-difference verification of every training loss against every
// parameter group it trains, on a small fixed fixture (width 8, two tokens,
// two attributes, three classes, two samples). Step 1e-6.
struct GradCheckRow {
  std::string loss;
  std::string group;
  double rel_error = 0.0;
};

std::vector<GradCheckRow> run_gradient_suite(uint64_t seed, int samples_per_group = 24);

// Checkpoints reuse the bank container: parameter groups are chunked into
// fixed-width records and the configuration lands in meta.
struct Checkpoint {
  TrainConfig config;
  int dim = 0;
  std::vector<std::string> bank_class_names;
  LabelSpace split;
  ModelState state;
};

void save_checkpoint(const std::string& path, const ModelState& state, const TrainConfig& config,
                     int dim, const std::vector<std::string>& bank_class_names, const LabelSpace& split);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vgpl

#endif
