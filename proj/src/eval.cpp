#include "vgpl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "vgpl/errors.hpp"

namespace vgpl {

double harmonic_mean(double base, double novel) {
  if (base < 0.0 || novel < 0.0) throw validation_error("harmonic_mean: negative input");
  if (base == 0.0 && novel == 0.0) return 0.0;
  return 2.0 * base * novel / (base + novel);
}

EvalReport evaluate_split(const EmbeddingBank& bank, const std::vector<int>& classes,
                          const PromptState& prompt) {
  if (classes.empty()) throw validation_error("evaluate_split: empty candidate set");
  if (static_cast<int>(bank.dim) != prompt.out_dim)
    throw validation_error("evaluate_split: bank width does not match the prompt's feature width");

  std::vector<Vec> prompted;
  prompted.reserve(classes.size());
  EvalReport report;
  std::map<int, int> local;  // bank id -> candidate index
  for (std::size_t i = 0; i < classes.size(); ++i) {
    int cid = classes[i];
    if (cid < 0 || static_cast<std::size_t>(cid) >= bank.class_names.size())
      throw validation_error("evaluate_split: class id out of range");
    if (!local.emplace(cid, static_cast<int>(i)).second)
      throw validation_error("evaluate_split: duplicate class id");
    const std::string& name = bank.class_names[static_cast<std::size_t>(cid)];
    Vec embed = class_embedding(prompt.embed_seed, name, prompt.embed_dim);
    prompted.push_back(encode_prompted(prompt, embed));
    report.per_class.push_back(ClassAccuracy{cid, name, 0, 0});
  }

  for (const auto& rec : bank.records) {
    auto it = local.find(static_cast<int>(rec.class_id));
    if (it == local.end()) continue;
    Vec x(rec.feature.begin(), rec.feature.end());
    int pred = classify(x, prompted);
    ClassAccuracy& row = report.per_class[static_cast<std::size_t>(it->second)];
    ++row.total;
    if (pred == it->second) ++row.correct;
  }

  double sum = 0.0;
  for (const auto& row : report.per_class) {
    if (row.total == 0)
      throw validation_error("evaluate_split: class without records: " + row.name);
    sum += row.accuracy();
  }
  report.mean_accuracy = sum / static_cast<double>(report.per_class.size());
  return report;
}

Metrics evaluate_base_new(const EmbeddingBank& bank, const LabelSpace& split, const PromptState& prompt,
                          EvalReport* base_report, EvalReport* new_report) {
  EvalReport base = evaluate_split(bank, split.base_ids, prompt);
  EvalReport novel = evaluate_split(bank, split.new_ids, prompt);
  Metrics m;
  m.base_acc = base.mean_accuracy;
  m.new_acc = novel.mean_accuracy;
  m.harmonic = harmonic_mean(m.base_acc, m.new_acc);
  if (base_report) *base_report = std::move(base);
  if (new_report) *new_report = std::move(novel);
  return m;
}

double evaluate_transfer(const EmbeddingBank& target, const PromptState& prompt) {
  std::vector<int> all(target.class_names.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate_split(target, all, prompt).mean_accuracy;
}

double group_centroid_purity(const std::vector<Vec>& features, const std::vector<int>& groups) {
  if (features.empty()) throw validation_error("group_centroid_purity: empty input");
  if (features.size() != groups.size())
    throw validation_error("group_centroid_purity: group list length mismatch");
  std::size_t dim = features.front().size();
  std::map<int, Vec> centroids;
  std::map<int, int> counts;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (groups[i] < 0) throw validation_error("group_centroid_purity: negative group id");
    if (features[i].size() != dim)
      throw validation_error("group_centroid_purity: ragged feature widths");
    auto [it, fresh] = centroids.emplace(groups[i], Vec(dim, 0.0));
    for (std::size_t k = 0; k < dim; ++k) it->second[k] += features[i][k];
    ++counts[groups[i]];
  }
  for (auto& [gid, c] : centroids)
    for (double& v : c) v /= static_cast<double>(counts[gid]);

  int hits = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_gid = -1;
    for (const auto& [gid, c] : centroids) {  // std::map iterates ids ascending
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        double diff = features[i][k] - c[k];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_gid = gid;
      }
    }
    if (best_gid == groups[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(features.size());
}

}  // namespace vgpl
