#ifndef VGPL_EVAL_HPP
#define VGPL_EVAL_HPP

#include <string>
#include <vector>

#include "vgpl/embank.hpp"
#include "vgpl/prompt.hpp"

namespace vgpl {

// Base/new accuracies and their harmonic mean, all on one scale (fractions
// or percentages, consistently).
struct Metrics {
  double base_acc = 0.0;
  double new_acc = 0.0;
  double harmonic = 0.0;
};

// 2ab / (a + b); zero when both inputs are zero. Rejects negative inputs.
double harmonic_mean(double base, double novel);

struct ClassAccuracy {
  int class_id = -1;  // bank id
  std::string name;
  int correct = 0;
  int total = 0;

  double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

struct EvalReport {
  std::vector<ClassAccuracy> per_class;
  double mean_accuracy = 0.0;  // mean over classes of per-class top-1
};

// Top-1 classification of every record belonging to `classes`, with exactly
// those classes as candidates. Prompted features come from the class names
// through the frozen stub, so the classes never need to have been seen in
// training. Accuracy averages per class, not per sample.
EvalReport evaluate_split(const EmbeddingBank& bank, const std::vector<int>& classes,
                          const PromptState& prompt);

// Base and new halves evaluated separately, each against its own candidate
// set. Optional out-params receive the per-class tables.
Metrics evaluate_base_new(const EmbeddingBank& bank, const LabelSpace& split, const PromptState& prompt,
                          EvalReport* base_report = nullptr, EvalReport* new_report = nullptr);

// Zero-retraining evaluation on a whole foreign bank: every target class is a
// candidate. With target == source this equals evaluate_split over all
// classes.
double evaluate_transfer(const EmbeddingBank& target, const PromptState& prompt);

// Fraction of samples whose nearest group centroid (Euclidean) is their own
// group; ties resolve to the smallest group id.
double group_centroid_purity(const std::vector<Vec>& features, const std::vector<int>& groups);

}  // namespace vgpl

#endif
