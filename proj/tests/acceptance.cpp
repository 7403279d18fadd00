// Release gate: one self-contained check per line, [PASS]/[FAIL] on stdout,
// exit code = number of failures. Every check pins its own seeds, so reruns
// are bit-identical.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vgpl/bridge.hpp"
#include "vgpl/eval.hpp"
#include "vgpl/granule.hpp"
#include "vgpl/rng.hpp"
#include "vgpl/trainkit.hpp"

using namespace vgpl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int g_failures = 0;

void run_check(const char* name, const std::function<Outcome()>& body) {
  auto start = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("[%s] %s: %s (%.2f s)\n", out.ok ? "PASS" : "FAIL", name, out.detail.c_str(), secs);
  std::fflush(stdout);
  if (!out.ok) ++g_failures;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

// The training benchmark shared by the pipeline-vs-baseline check, the purity
// check and the determinism check.
EmbeddingBank benchmark_bank() {
  SynthSpec spec;
  spec.num_classes = 8;
  spec.num_shared_factors = 4;
  spec.samples_per_class = 64;
  spec.dim = 64;
  spec.factor_noise = 0.05;
  spec.seed = 42;
  return generate_synthetic(spec);
}

TrainConfig benchmark_config() {
  TrainConfig cfg;
  cfg.transfer_steps = 64;
  cfg.attr_count = 4;
  cfg.iterations = 2;
  cfg.tau = 0.1;
  cfg.context_len = 4;
  cfg.stage_a_epochs = 12;
  cfg.stage_b_base = 100;
  cfg.lr_a = 1e-3;
  cfg.lr_b = 5e-3;
  cfg.batch_size = 8;
  cfg.lambda_f = 1.0;
  cfg.lambda_r = 100.0;
  cfg.seed = 4;
  cfg.shots = 4;
  cfg.token_count = 4;
  cfg.enc_hidden = 16;
  cfg.dec_hidden = 128;
  cfg.stub_hidden = 128;
  cfg.embed_dim = 128;
  return cfg;
}

constexpr uint64_t kSplitSeed = 3;

bool files_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace

int main() {
  run_check("bridge schedule identities", [] {
    auto t0 = Clock::now();
    for (int T : {2, 4, 64, 1000}) {
      BridgeSchedule s = make_schedule(T);
      if (s.m[0] != 0.0 || s.m[static_cast<std::size_t>(T)] != 1.0)
        return Outcome{false, "endpoint mixing off at T=" + std::to_string(T)};
      if (s.delta[0] != 0.0 || s.delta[static_cast<std::size_t>(T)] != 0.0)
        return Outcome{false, "endpoint variance off at T=" + std::to_string(T)};
      for (int t = 0; t <= T; ++t) {
        if (s.delta[static_cast<std::size_t>(t)] != s.delta[static_cast<std::size_t>(T - t)])
          return Outcome{false, "variance not mirror-symmetric at T=" + std::to_string(T)};
      }
      if (posterior_sigma2(1, s) != 0.0)
        return Outcome{false, "first-step posterior variance nonzero at T=" + std::to_string(T)};
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= 1.0) return Outcome{false, fmt("identities exact but took %.2f s (budget 1 s)", secs)};
    return Outcome{true, "T in {2,4,64,1000}: endpoints, mirror symmetry, zero first-step variance all exact"};
  });

  run_check("forward marginal monte carlo", [] {
    auto t0 = Clock::now();
    const int n = 100000;
    const int t = 2;
    BridgeSchedule sched = make_schedule(4);
    const Vec z0 = {0.2, -1.1, 0.7, 3.0};
    const Vec zT = {1.0, 0.4, -0.3, -2.0};
    const std::size_t dim = z0.size();
    const double m = sched.m[t];
    const double delta = sched.delta[t];
    Rng rng(2026);
    std::vector<double> dev_sum(dim, 0.0), dev_sq(dim, 0.0);
    for (int i = 0; i < n; ++i) {
      Vec noise = rng.normals(dim);
      Vec z = forward_sample(z0, zT, t, noise, sched);
      for (std::size_t k = 0; k < dim; ++k) {
        double dev = z[k] - ((1.0 - m) * z0[k] + m * zT[k]);
        dev_sum[k] += dev;
        dev_sq[k] += dev * dev;
      }
    }
    double se = std::sqrt(delta / n);
    double worst_mean = 0.0;
    for (std::size_t k = 0; k < dim; ++k)
      worst_mean = std::max(worst_mean, std::abs(dev_sum[k] / n));
    double pooled_var = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      double mean = dev_sum[k] / n;
      pooled_var += (dev_sq[k] - n * mean * mean) / (n - 1);
    }
    pooled_var /= static_cast<double>(dim);
    double var_rel = std::abs(pooled_var / delta - 1.0);
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    bool ok = worst_mean <= 4.0 * se && var_rel <= 0.02 && secs < 10.0;
    return Outcome{ok, fmt("1e5 draws at t=2, T=4: worst |mean dev| %.5f (4 SE = %.5f), variance off by %.3f%%",
                           worst_mean, 4.0 * se, 100.0 * var_rel)};
  });

  run_check("posterior variance closed form", [] {
    BridgeSchedule sched = make_schedule(4);
    double got = posterior_sigma2(2, sched);
    double err = std::abs(got - 0.25);
    return Outcome{err <= 1e-12, fmt("t=2, T=4: got %.17g, |err| = %.3g (tol 1e-12)", got, err)};
  });

  run_check("gradient suite", [] {
    auto t0 = Clock::now();
    std::vector<GradCheckRow> rows = run_gradient_suite(0, 6);
    if (rows.empty()) return Outcome{false, "suite returned no rows"};
    double worst = 0.0;
    std::string worst_name;
    for (const auto& row : rows) {
      if (!std::isfinite(row.rel_error)) return Outcome{false, row.loss + "/" + row.group + " non-finite"};
      if (row.rel_error > worst) {
        worst = row.rel_error;
        worst_name = row.loss + "/" + row.group;
      }
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    bool ok = worst <= 1e-5 && secs < 30.0;
    return Outcome{ok, fmt("%.0f loss/parameter pairs, worst rel error %.3g (tol 1e-5), at ",
                           static_cast<double>(rows.size()), worst) + worst_name};
  });

  run_check("probability normalization", [] {
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      int dim = rng.uniform_int(2, 6);
      int K = rng.uniform_int(1, 4);
      int C = rng.uniform_int(2, 5);
      Temperature tau(rng.uniform(0.05, 1.05));
      auto draw = [&](int len) {
        Vec v = rng.normals(static_cast<std::size_t>(len));
        for (double& x : v) x *= 0.8;
        return v;
      };
      std::vector<std::vector<Vec>> attrs(static_cast<std::size_t>(C));
      for (auto& row : attrs)
        for (int k = 0; k < K; ++k) row.push_back(draw(dim));
      std::vector<Vec> granules;
      for (int k = 0; k < K; ++k) granules.push_back(draw(dim));
      std::vector<Vec> prompted;
      for (int c = 0; c < C; ++c) prompted.push_back(draw(dim));
      Vec granule = draw(dim);

      double s1 = 0.0;
      for (double p : attr_probs(granule, attrs[0], tau)) s1 += p;
      double s2 = 0.0;
      for (int c = 0; c < C; ++c) s2 += factual_class_prob(granules, attrs, c, tau);
      double s3 = 0.0;
      for (double p : counterfactual_class_probs(granule, prompted, tau)) s3 += p;
      worst = std::max({worst, std::abs(s1 - 1.0), std::abs(s2 - 1.0), std::abs(s3 - 1.0)});
    }
    return Outcome{worst <= 1e-9,
                   fmt("1000 random fixtures, worst |sum - 1| = %.3g across all three softmax families", worst)};
  });

  run_check("harmonic mean anchors", [] {
    double h1 = harmonic_mean(82.69, 63.22);
    double h2 = harmonic_mean(76.47, 67.88);
    bool ok = std::abs(h1 - 71.66) <= 0.005 && std::abs(h2 - 71.92) <= 0.005;
    return Outcome{ok, fmt("(82.69, 63.22) -> %.4f vs 71.66; (76.47, 67.88) -> %.4f vs 71.92 (tol 0.005)", h1, h2)};
  });

  // Shared state between the three training-based checks.
  EmbeddingBank bank = benchmark_bank();
  LabelSpace split = split_base_new(bank, kSplitSeed);
  TrainConfig cfg = benchmark_config();
  TrainSet data = make_train_set(bank, split.base_ids, cfg.shots, cfg.seed);
  TrainResult trained;
  bool trained_ok = false;

  run_check("synthetic benchmark", [&] {
    auto t0 = Clock::now();
    trained = run_training(data, cfg);
    trained_ok = true;
    double a_first = -1.0, a_last = -1.0;
    for (const auto& rec : trained.history) {
      if (rec.stage != 'A') continue;
      if (a_first < 0.0) a_first = rec.loss;
      a_last = rec.loss;
    }
    BaselineResult baseline = run_prompt_ce_baseline(data, cfg);
    double pipe_acc = evaluate_split(bank, split.base_ids, trained.state.prompt).mean_accuracy;
    double base_acc = evaluate_split(bank, split.base_ids, baseline.prompt).mean_accuracy;
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    bool stage_a_ok = a_first > 0.0 && a_last <= 0.5 * a_first;
    bool margin_ok = pipe_acc > base_acc;
    bool recon_ok = trained.diag_recon_end <= 0.5 * trained.diag_recon_start;
    bool ok = stage_a_ok && margin_ok && recon_ok && secs < 300.0;
    return Outcome{ok, fmt("pipeline %.4f vs baseline %.4f base accuracy; stage-A loss %.3f -> %.3f",
                           pipe_acc, base_acc, a_first, a_last) +
                           fmt("; diagonal reconstruction %.3f -> %.4f", trained.diag_recon_start,
                               trained.diag_recon_end)};
  });

  run_check("disentanglement purity", [&] {
    if (!trained_ok) return Outcome{false, "benchmark training unavailable"};
    std::vector<int> groups = bank_groups(bank);
    std::vector<Vec> raw, shared;
    std::vector<int> sample_groups;
    for (const auto& rec : bank.records) {
      Vec x(rec.feature.begin(), rec.feature.end());
      raw.push_back(x);
      shared.push_back(trained.state.enc_shared.apply(x));
      sample_groups.push_back(groups[static_cast<std::size_t>(rec.class_id)]);
    }
    double p_raw = group_centroid_purity(raw, sample_groups);
    double p_shared = group_centroid_purity(shared, sample_groups);
    return Outcome{p_shared >= p_raw,
                   fmt("nearest-group-centroid purity: shared representation %.4f vs raw features %.4f", p_shared,
                       p_raw)};
  });

  run_check("checkpoint determinism", [&] {
    if (!trained_ok) return Outcome{false, "benchmark training unavailable"};
    TrainResult second = run_training(data, cfg);
    auto dir = std::filesystem::temp_directory_path();
    auto path_a = dir / "vgpl_acceptance_run_a.ckpt";
    auto path_b = dir / "vgpl_acceptance_run_b.ckpt";
    save_checkpoint(path_a.string(), trained.state, cfg, static_cast<int>(bank.dim), bank.class_names, split);
    save_checkpoint(path_b.string(), second.state, cfg, static_cast<int>(bank.dim), bank.class_names, split);
    bool same = files_equal(path_a, path_b);
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
    return Outcome{same, same ? "two identically seeded runs serialize byte-identically"
                              : "checkpoints differ between identically seeded runs"};
  });

  std::printf("%d of 9 checks passed\n", 9 - g_failures);
  return g_failures;
}
