#include "vgpl/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "vgpl/errors.hpp"

namespace vgpl {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.classes",      "data.samples_per_class",
      "data.dim",          "data.groups",
      "data.noise",        "data.seed",
      "data.group_assignment",
      "train.transfer_steps", "train.attr_count",
      "train.batch_size",  "train.lambda_f",
      "train.lambda_r",    "train.tau",
      "train.context_len", "train.iterations",
      "train.stage_a_epochs", "train.stage_b_base",
      "train.lr_a",        "train.lr_b",
      "train.seed",        "train.variant",
      "train.shots",       "model.token_count",
      "model.enc_hidden",  "model.dec_hidden",
      "model.transfer_hidden", "model.time_embed_dim",
      "model.stub_hidden", "model.embed_dim",
  };
  return keys;
}

long long parse_int(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  errno = 0;
  long long parsed = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE)
    throw validation_error("config: " + key + " expects an integer, got '" + value + "'");
  return parsed;
}

double parse_real(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  errno = 0;
  double parsed = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw validation_error("config: " + key + " expects a number, got '" + value + "'");
  return parsed;
}

uint64_t parse_seed(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  errno = 0;
  unsigned long long parsed = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE)
    throw validation_error("config: " + key + " expects a non-negative integer, got '" + value + "'");
  return parsed;
}

template <typename T, typename Parse>
void take(const KvMap& kv, const std::string& key, T& slot, Parse parse) {
  auto it = kv.find(key);
  if (it != kv.end()) slot = static_cast<T>(parse(key, it->second));
}

const std::string& required(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw validation_error("config: missing required key " + key);
  return it->second;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(io_error::Kind::open_failed, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw io_error(io_error::Kind::truncated, "read failed: " + path);
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(io_error::Kind::open_failed, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw io_error(io_error::Kind::write_failed, "write failed: " + path);
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw validation_error("config: missing '=' at line " + std::to_string(line_no));
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw validation_error("config: empty key at line " + std::to_string(line_no));
    if (!kv.emplace(key, value).second)
      throw validation_error("config: duplicate key " + key + " at line " + std::to_string(line_no));
  }
  return kv;
}

KvMap load_kv_file(const std::string& path) { return parse_kv_text(read_text_file(path)); }

void check_known_keys(const KvMap& kv) {
  for (const auto& [key, value] : kv) {
    (void)value;
    if (known_keys().find(key) == known_keys().end())
      throw validation_error("config: unknown key " + key);
  }
}

TrainConfig train_config_from_kv(const KvMap& kv) {
  TrainConfig cfg;
  take(kv, "train.transfer_steps", cfg.transfer_steps, parse_int);
  take(kv, "train.attr_count", cfg.attr_count, parse_int);
  take(kv, "train.batch_size", cfg.batch_size, parse_int);
  take(kv, "train.lambda_f", cfg.lambda_f, parse_real);
  take(kv, "train.lambda_r", cfg.lambda_r, parse_real);
  take(kv, "train.tau", cfg.tau, parse_real);
  take(kv, "train.context_len", cfg.context_len, parse_int);
  take(kv, "train.iterations", cfg.iterations, parse_int);
  take(kv, "train.stage_a_epochs", cfg.stage_a_epochs, parse_int);
  take(kv, "train.stage_b_base", cfg.stage_b_base, parse_int);
  take(kv, "train.lr_a", cfg.lr_a, parse_real);
  take(kv, "train.lr_b", cfg.lr_b, parse_real);
  take(kv, "train.seed", cfg.seed, parse_seed);
  take(kv, "train.shots", cfg.shots, parse_int);
  take(kv, "model.token_count", cfg.token_count, parse_int);
  take(kv, "model.enc_hidden", cfg.enc_hidden, parse_int);
  take(kv, "model.dec_hidden", cfg.dec_hidden, parse_int);
  take(kv, "model.transfer_hidden", cfg.transfer_hidden, parse_int);
  take(kv, "model.time_embed_dim", cfg.time_embed_dim, parse_int);
  take(kv, "model.stub_hidden", cfg.stub_hidden, parse_int);
  take(kv, "model.embed_dim", cfg.embed_dim, parse_int);
  auto it = kv.find("train.variant");
  if (it != kv.end()) cfg.variant = parse_variant(it->second);
  return cfg;
}

SynthSpec synth_spec_from_kv(const KvMap& kv) {
  SynthSpec spec;
  spec.num_classes = static_cast<int>(parse_int("data.classes", required(kv, "data.classes")));
  spec.samples_per_class =
      static_cast<int>(parse_int("data.samples_per_class", required(kv, "data.samples_per_class")));
  spec.dim = static_cast<int>(parse_int("data.dim", required(kv, "data.dim")));
  spec.num_shared_factors = static_cast<int>(parse_int("data.groups", required(kv, "data.groups")));
  take(kv, "data.noise", spec.factor_noise, parse_real);
  take(kv, "data.seed", spec.seed, parse_seed);
  auto it = kv.find("data.group_assignment");
  if (it != kv.end()) {
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ','))
      spec.group_assignment.push_back(static_cast<int>(parse_int("data.group_assignment", trim(tok))));
  }
  return spec;
}

std::string format_class_table(const EvalReport& report) {
  std::size_t name_w = 4;
  for (const auto& row : report.per_class) name_w = std::max(name_w, row.name.size());
  std::ostringstream out;
  out << std::left << std::setw(6) << "id" << std::setw(static_cast<int>(name_w) + 2) << "name"
      << std::right << std::setw(9) << "correct" << std::setw(7) << "total" << std::setw(9) << "acc"
      << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& row : report.per_class) {
    out << std::left << std::setw(6) << row.class_id << std::setw(static_cast<int>(name_w) + 2)
        << row.name << std::right << std::setw(9) << row.correct << std::setw(7) << row.total
        << std::setw(9) << row.accuracy() << '\n';
  }
  out << "mean per-class accuracy " << report.mean_accuracy << '\n';
  return out.str();
}

std::string format_history_table(std::span<const EpochRecord> records) {
  std::ostringstream out;
  out << std::right << std::setw(5) << "iter" << std::setw(7) << "stage" << std::setw(7) << "epoch"
      << std::setw(15) << "loss" << '\n';
  out << std::fixed << std::setprecision(6);
  for (const auto& rec : records) {
    out << std::setw(5) << rec.iteration << std::setw(7) << rec.stage << std::setw(7) << rec.epoch
        << std::setw(15) << rec.loss << '\n';
  }
  return out.str();
}

namespace {

struct CommonArgs {
  std::string config_path;
  std::string bank_path;
  std::string checkpoint_path;
  std::string out_path;
  std::string variant;
  std::string history_path;
  uint64_t seed = 0;
};

int cmd_gen_synth(const CommonArgs& args, bool seed_given) {
  KvMap kv = load_kv_file(args.config_path);
  check_known_keys(kv);
  SynthSpec spec = synth_spec_from_kv(kv);
  if (seed_given) spec.seed = args.seed;
  EmbeddingBank bank = generate_synthetic(spec);
  write_bank(bank, args.out_path);
  std::cout << "wrote " << args.out_path << ": " << bank.class_names.size() << " classes, "
            << bank.records.size() << " records, width " << bank.dim << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, bool seed_given, bool variant_given) {
  KvMap kv = load_kv_file(args.config_path);
  check_known_keys(kv);
  TrainConfig cfg = train_config_from_kv(kv);
  if (seed_given) cfg.seed = args.seed;
  if (variant_given) cfg.variant = parse_variant(args.variant);
  cfg.validate();

  EmbeddingBank bank = read_bank(args.bank_path);
  LabelSpace split = split_base_new(bank, cfg.seed);
  TrainSet data = make_train_set(bank, split.base_ids, cfg.shots, cfg.seed);
  std::cout << "training on " << data.features.size() << " records, " << data.class_names.size()
            << " base classes, width " << data.dim << ", variant " << variant_name(cfg.variant)
            << "\n";

  auto on_stage = [&](const ModelState& state, int iteration, char stage) {
    std::string path = args.out_path + ".stage-" + std::to_string(iteration) + stage;
    save_checkpoint(path, state, cfg, data.dim, bank.class_names, split);
    std::cout << "iteration " << iteration << " stage " << stage << " -> " << path << "\n";
  };
  TrainResult result = run_training(data, cfg, on_stage);

  save_checkpoint(args.out_path, result.state, cfg, data.dim, bank.class_names, split);
  write_text_file(args.out_path + ".history", format_history(result.history));
  std::cout << "final checkpoint " << args.out_path << "\n";
  std::cout << "history " << args.out_path << ".history (" << result.history.size() << " records)\n";
  std::cout << std::scientific << std::setprecision(6) << "diagonal reconstruction "
            << result.diag_recon_start << " -> " << result.diag_recon_end << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  EmbeddingBank bank = read_bank(args.bank_path);
  if (static_cast<int>(bank.dim) != ckpt.dim)
    throw validation_error("eval: bank width " + std::to_string(bank.dim) +
                           " does not match checkpoint width " + std::to_string(ckpt.dim));
  if (bank.class_names != ckpt.bank_class_names)
    throw validation_error("eval: bank classes differ from the checkpoint's training bank");

  EvalReport base, novel;
  Metrics m = evaluate_base_new(bank, ckpt.split, ckpt.state.prompt, &base, &novel);
  std::cout << "base classes\n" << format_class_table(base) << "\n";
  std::cout << "new classes\n" << format_class_table(novel) << "\n";
  std::cout << std::fixed << std::setprecision(4) << "base " << m.base_acc << "\nnew  " << m.new_acc
            << "\nH    " << m.harmonic << "\n";
  return 0;
}

int cmd_transfer(const CommonArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  EmbeddingBank target = read_bank(args.bank_path);
  if (static_cast<int>(target.dim) != ckpt.dim)
    throw validation_error("transfer: bank width " + std::to_string(target.dim) +
                           " does not match checkpoint width " + std::to_string(ckpt.dim));
  double acc = evaluate_transfer(target, ckpt.state.prompt);
  std::cout << std::fixed << std::setprecision(4) << "transfer accuracy " << acc << " over "
            << target.class_names.size() << " classes\n";
  return 0;
}

int cmd_grad_check(const CommonArgs& args) {
  const double tolerance = 1e-5;
  std::vector<GradCheckRow> rows = run_gradient_suite(args.seed);
  std::size_t loss_w = 4, group_w = 5;
  for (const auto& row : rows) {
    loss_w = std::max(loss_w, row.loss.size());
    group_w = std::max(group_w, row.group.size());
  }
  double worst = 0.0;
  std::cout << std::left << std::setw(static_cast<int>(loss_w) + 2) << "loss"
            << std::setw(static_cast<int>(group_w) + 2) << "group" << "rel_error\n";
  for (const auto& row : rows) {
    std::cout << std::left << std::setw(static_cast<int>(loss_w) + 2) << row.loss
              << std::setw(static_cast<int>(group_w) + 2) << row.group << std::scientific
              << std::setprecision(3) << row.rel_error << "\n";
    worst = std::max(worst, row.rel_error);
  }
  std::cout << "max relative error " << std::scientific << std::setprecision(3) << worst
            << " (tolerance " << tolerance << ")\n";
  if (worst > tolerance) throw validation_error("gradient check failed");
  return 0;
}

int cmd_report(const CommonArgs& args, bool out_given) {
  std::vector<EpochRecord> records = parse_history(read_text_file(args.history_path));
  std::cout << format_history_table(records);
  if (out_given) write_text_file(args.out_path, format_history(records));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"granulated prompt learning over embedding banks"};
  app.require_subcommand(1);
  CommonArgs args;

  CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic embedding bank");
  gen->add_option("--config", args.config_path, "key=value config with data.* entries")->required();
  gen->add_option("--out", args.out_path, "output bank path")->required();
  CLI::Option* gen_seed = gen->add_option("--seed", args.seed, "override data.seed");

  CLI::App* train = app.add_subcommand("train", "train on the base half of a bank");
  train->add_option("--config", args.config_path, "key=value config with train.*/model.* entries")
      ->required();
  train->add_option("--bank", args.bank_path, "input bank path")->required();
  train->add_option("--out", args.out_path, "final checkpoint path")->required();
  CLI::Option* train_seed = train->add_option("--seed", args.seed, "override train.seed");
  CLI::Option* train_variant =
      train->add_option("--variant", args.variant, "bridge endpoint role: standard or swapped");

  CLI::App* eval_cmd = app.add_subcommand("eval", "base/new accuracy of a checkpoint on its bank");
  eval_cmd->add_option("--checkpoint", args.checkpoint_path, "trained checkpoint")->required();
  eval_cmd->add_option("--bank", args.bank_path, "bank the checkpoint was trained on")->required();

  CLI::App* transfer = app.add_subcommand("transfer", "evaluate a checkpoint on a foreign bank");
  transfer->add_option("--checkpoint", args.checkpoint_path, "trained checkpoint")->required();
  transfer->add_option("--bank", args.bank_path, "target bank")->required();

  CLI::App* grad = app.add_subcommand("grad-check", "finite-difference check of every loss");
  grad->add_option("--seed", args.seed, "fixture seed");

  CLI::App* report = app.add_subcommand("report", "render a training history file");
  report->add_option("history", args.history_path, "history file from train")->required();
  CLI::Option* report_out =
      report->add_option("--out", args.out_path, "also write machine-readable records here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(args, gen_seed->count() > 0);
    if (train->parsed()) return cmd_train(args, train_seed->count() > 0, train_variant->count() > 0);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (transfer->parsed()) return cmd_transfer(args);
    if (grad->parsed()) return cmd_grad_check(args);
    if (report->parsed()) return cmd_report(args, report_out->count() > 0);
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vgpl
