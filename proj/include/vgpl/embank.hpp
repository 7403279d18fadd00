#ifndef VGPL_EMBANK_HPP
#define VGPL_EMBANK_HPP

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vgpl {

// Labeled embedding storage, file format CEB1.
//
// Layout, all integers little-endian:
//   magic "CEB1"
//   u32 version (currently 1)
//   u32 dim
//   u32 num_classes
//   u32 num_records
//   num_classes x { u16 byte_length, UTF-8 name }
//   num_records x { u32 class_id, dim x f32 }
//   u32 meta_count
//   meta_count x { u16 key_length, key, u16 value_length, value }
//
// Readers reject wrong magic, unknown versions, truncated payloads, trailing
// bytes and non-finite floats, each with its own io_error kind.

struct BankRecord {
  uint32_t class_id = 0;
  std::vector<float> feature;
};

struct EmbeddingBank {
  uint32_t dim = 0;
  std::vector<std::string> class_names;
  std::vector<BankRecord> records;
  std::map<std::string, std::string> meta;

  bool operator==(const EmbeddingBank& other) const;
};

// Throws validation_error when the in-memory bank breaks its invariants
// (dim == 0, feature length != dim, class_id out of range, oversized names).
void validate_bank(const EmbeddingBank& bank);

std::vector<uint8_t> serialize_bank(const EmbeddingBank& bank);
EmbeddingBank parse_bank(std::span<const uint8_t> bytes);

void write_bank(const EmbeddingBank& bank, const std::string& path);
EmbeddingBank read_bank(const std::string& path);

// Deterministic base/new class split: |base| = ceil(C / 2). Requires at
// least two classes. Ids in each half are sorted ascending.
struct LabelSpace {
  std::vector<int> base_ids;
  std::vector<int> new_ids;
};

LabelSpace split_base_new(const EmbeddingBank& bank, uint64_t seed);

// Synthetic bank generation. Every sample of class c is
//   G(shared_factor[group(c)] (+) individual_factor[c]) + factor_noise * gaussian
// with one fixed random linear map G per seed and factors drawn once per
// group/class. Group ids per class land in meta under "groups". Classes in
// one group differ only through their individual factors, which keeps
// within-group discrimination deliberately fine-grained.
struct SynthSpec {
  int num_classes = 0;
  int samples_per_class = 0;
  int dim = 0;
  int num_shared_factors = 0;
  std::vector<int> group_assignment;  // empty -> class c maps to c % num_shared_factors
  double factor_noise = 0.0;
  uint64_t seed = 0;
};

EmbeddingBank generate_synthetic(const SynthSpec& spec);

// Group id per class recovered from the "groups" meta key.
std::vector<int> bank_groups(const EmbeddingBank& bank);

}  // namespace vgpl

#endif
