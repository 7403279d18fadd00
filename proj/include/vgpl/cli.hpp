#ifndef VGPL_CLI_HPP
#define VGPL_CLI_HPP

#include <map>
#include <span>
#include <string>

#include "vgpl/embank.hpp"
#include "vgpl/eval.hpp"
#include "vgpl/trainkit.hpp"

namespace vgpl {

using KvMap = std::map<std::string, std::string>;

// Flat key=value configuration: one pair per line, '#' comments, blank lines
// ignored, duplicate keys rejected. Keys carry a section prefix (data.,
// model., train.).
KvMap parse_kv_text(const std::string& text);
KvMap load_kv_file(const std::string& path);

// Rejects keys outside the known data./model./train. vocabulary.
void check_known_keys(const KvMap& kv);

// Missing keys keep the struct defaults.
TrainConfig train_config_from_kv(const KvMap& kv);

// data.classes, data.samples_per_class, data.dim and data.groups are
// required; noise and seed default to zero.
SynthSpec synth_spec_from_kv(const KvMap& kv);

std::string format_class_table(const EvalReport& report);
std::string format_history_table(std::span<const EpochRecord> records);

// Entry point behind main(). Exit codes: 0 success, 1 validation or usage
// error, 2 I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace vgpl

#endif
