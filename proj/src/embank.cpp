#include "vgpl/embank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

namespace {

constexpr char kMagic[4] = {'C', 'E', 'B', '1'};
constexpr uint32_t kVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

void put_str16(std::vector<uint8_t>& out, const std::string& s) {
  put_u16(out, static_cast<uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

// Bounds-checked cursor over an input buffer.
struct Cursor {
  std::span<const uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw io_error(io_error::Kind::truncated, "bank: truncated payload");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string str16() {
    uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

bool EmbeddingBank::operator==(const EmbeddingBank& other) const {
  if (dim != other.dim || class_names != other.class_names || meta != other.meta ||
      records.size() != other.records.size())
    return false;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].class_id != other.records[i].class_id || records[i].feature != other.records[i].feature)
      return false;
  }
  return true;
}

void validate_bank(const EmbeddingBank& bank) {
  if (bank.dim == 0) throw validation_error("bank: dim must be positive");
  for (const auto& name : bank.class_names) {
    if (name.size() > std::numeric_limits<uint16_t>::max())
      throw validation_error("bank: class name longer than 65535 bytes");
  }
  for (const auto& rec : bank.records) {
    if (rec.feature.size() != bank.dim) throw validation_error("bank: record feature length != dim");
    if (rec.class_id >= bank.class_names.size()) throw validation_error("bank: record class_id out of range");
  }
  for (const auto& [k, v] : bank.meta) {
    if (k.size() > std::numeric_limits<uint16_t>::max() || v.size() > std::numeric_limits<uint16_t>::max())
      throw validation_error("bank: meta entry longer than 65535 bytes");
  }
}

std::vector<uint8_t> serialize_bank(const EmbeddingBank& bank) {
  validate_bank(bank);
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, bank.dim);
  put_u32(out, static_cast<uint32_t>(bank.class_names.size()));
  put_u32(out, static_cast<uint32_t>(bank.records.size()));
  for (const auto& name : bank.class_names) put_str16(out, name);
  for (const auto& rec : bank.records) {
    put_u32(out, rec.class_id);
    for (float f : rec.feature) put_f32(out, f);
  }
  put_u32(out, static_cast<uint32_t>(bank.meta.size()));
  for (const auto& [k, v] : bank.meta) {
    put_str16(out, k);
    put_str16(out, v);
  }
  return out;
}

EmbeddingBank parse_bank(std::span<const uint8_t> bytes) {
  Cursor cur{bytes};
  cur.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw io_error(io_error::Kind::bad_magic, "bank: bad magic");
  cur.pos = 4;
  uint32_t version = cur.u32();
  if (version != kVersion) {
    std::ostringstream msg;
    msg << "bank: unsupported version " << version;
    throw io_error(io_error::Kind::bad_version, msg.str());
  }
  EmbeddingBank bank;
  bank.dim = cur.u32();
  uint32_t num_classes = cur.u32();
  uint32_t num_records = cur.u32();
  bank.class_names.reserve(num_classes);
  for (uint32_t i = 0; i < num_classes; ++i) bank.class_names.push_back(cur.str16());
  bank.records.reserve(num_records);
  for (uint32_t i = 0; i < num_records; ++i) {
    BankRecord rec;
    rec.class_id = cur.u32();
    rec.feature.resize(bank.dim);
    for (uint32_t j = 0; j < bank.dim; ++j) {
      float f = cur.f32();
      if (!std::isfinite(f)) throw io_error(io_error::Kind::non_finite, "bank: non-finite feature value");
      rec.feature[j] = f;
    }
    bank.records.push_back(std::move(rec));
  }
  uint32_t meta_count = cur.u32();
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string k = cur.str16();
    std::string v = cur.str16();
    bank.meta.emplace(std::move(k), std::move(v));
  }
  if (cur.pos != bytes.size()) throw io_error(io_error::Kind::malformed, "bank: trailing bytes after payload");
  try {
    validate_bank(bank);
  } catch (const validation_error& e) {
    throw io_error(io_error::Kind::malformed, std::string("bank: ") + e.what());
  }
  return bank;
}

void write_bank(const EmbeddingBank& bank, const std::string& path) {
  std::vector<uint8_t> bytes = serialize_bank(bank);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error(io_error::Kind::open_failed, "bank: cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error(io_error::Kind::write_failed, "bank: write failed: " + path);
}

EmbeddingBank read_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(io_error::Kind::open_failed, "bank: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error(io_error::Kind::open_failed, "bank: read failed: " + path);
  return parse_bank(bytes);
}

LabelSpace split_base_new(const EmbeddingBank& bank, uint64_t seed) {
  int num_classes = static_cast<int>(bank.class_names.size());
  if (num_classes < 2) throw validation_error("split: need at least two classes");
  std::vector<int> ids(static_cast<std::size_t>(num_classes));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(ids);
  int base_count = (num_classes + 1) / 2;
  LabelSpace space;
  space.base_ids.assign(ids.begin(), ids.begin() + base_count);
  space.new_ids.assign(ids.begin() + base_count, ids.end());
  std::sort(space.base_ids.begin(), space.base_ids.end());
  std::sort(space.new_ids.begin(), space.new_ids.end());
  return space;
}

EmbeddingBank generate_synthetic(const SynthSpec& spec) {
  if (spec.num_classes <= 0) throw validation_error("synth: num_classes must be positive");
  if (spec.samples_per_class <= 0) throw validation_error("synth: samples_per_class must be positive");
  if (spec.dim <= 0) throw validation_error("synth: dim must be positive");
  if (spec.num_shared_factors <= 0 || spec.num_shared_factors > spec.num_classes)
    throw validation_error("synth: num_shared_factors must be in [1, num_classes]");
  if (spec.factor_noise < 0.0) throw validation_error("synth: factor_noise must be non-negative");

  std::vector<int> groups = spec.group_assignment;
  if (groups.empty()) {
    groups.resize(static_cast<std::size_t>(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c)
      groups[static_cast<std::size_t>(c)] = c % spec.num_shared_factors;
  }
  if (groups.size() != static_cast<std::size_t>(spec.num_classes))
    throw validation_error("synth: group_assignment size != num_classes");
  for (int g : groups) {
    if (g < 0 || g >= spec.num_shared_factors) throw validation_error("synth: group id out of range");
  }

  int shared_len = (spec.dim + 1) / 2;
  int indiv_len = spec.dim - shared_len;
  if (indiv_len == 0) indiv_len = 1;  // dim == 1 still gets an individual factor
  int factor_len = shared_len + indiv_len;

  // Group separation dominates; classes inside a group sit close together so
  // telling them apart is the hard part of the task.
  constexpr double kSharedScale = 0.17;
  constexpr double kIndivScale = 0.05;

  // Mixing map G, scaled so factor norms carry through roughly unchanged.
  Rng g_rng(derive_seed(spec.seed, "synth.mixmap"));
  std::vector<double> G(static_cast<std::size_t>(spec.dim) * factor_len);
  double g_scale = 1.0 / std::sqrt(static_cast<double>(factor_len));
  for (auto& v : G) v = g_rng.normal() * g_scale;

  std::vector<std::vector<double>> shared(static_cast<std::size_t>(spec.num_shared_factors));
  for (int g = 0; g < spec.num_shared_factors; ++g) {
    Rng rng(derive_seed(spec.seed, "synth.shared", static_cast<uint64_t>(g)));
    shared[static_cast<std::size_t>(g)].resize(static_cast<std::size_t>(shared_len));
    for (auto& v : shared[static_cast<std::size_t>(g)]) v = rng.normal() * kSharedScale;
  }
  std::vector<std::vector<double>> indiv(static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    Rng rng(derive_seed(spec.seed, "synth.indiv", static_cast<uint64_t>(c)));
    indiv[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(indiv_len));
    for (auto& v : indiv[static_cast<std::size_t>(c)]) v = rng.normal() * kIndivScale;
  }

  EmbeddingBank bank;
  bank.dim = static_cast<uint32_t>(spec.dim);
  char name_buf[32];
  for (int c = 0; c < spec.num_classes; ++c) {
    std::snprintf(name_buf, sizeof(name_buf), "class_%02d", c);
    bank.class_names.emplace_back(name_buf);
  }

  std::vector<double> factors(static_cast<std::size_t>(factor_len));
  std::vector<double> clean(static_cast<std::size_t>(spec.dim));
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto& sf = shared[static_cast<std::size_t>(groups[static_cast<std::size_t>(c)])];
    const auto& icf = indiv[static_cast<std::size_t>(c)];
    std::copy(sf.begin(), sf.end(), factors.begin());
    std::copy(icf.begin(), icf.end(), factors.begin() + shared_len);
    for (int r = 0; r < spec.dim; ++r) {
      double acc = 0.0;
      const double* row = G.data() + static_cast<std::size_t>(r) * factor_len;
      for (int k = 0; k < factor_len; ++k) acc += row[k] * factors[static_cast<std::size_t>(k)];
      clean[static_cast<std::size_t>(r)] = acc;
    }
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Rng noise_rng(derive_seed(spec.seed, "synth.noise", static_cast<uint64_t>(c), static_cast<uint64_t>(s)));
      BankRecord rec;
      rec.class_id = static_cast<uint32_t>(c);
      rec.feature.resize(static_cast<std::size_t>(spec.dim));
      for (int r = 0; r < spec.dim; ++r) {
        double v = clean[static_cast<std::size_t>(r)];
        if (spec.factor_noise > 0.0) v += spec.factor_noise * noise_rng.normal();
        rec.feature[static_cast<std::size_t>(r)] = static_cast<float>(v);
      }
      bank.records.push_back(std::move(rec));
    }
  }

  std::ostringstream gstr;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i) gstr << ',';
    gstr << groups[i];
  }
  bank.meta["groups"] = gstr.str();
  return bank;
}

std::vector<int> bank_groups(const EmbeddingBank& bank) {
  auto it = bank.meta.find("groups");
  if (it == bank.meta.end()) throw validation_error("bank: no groups meta entry");
  std::vector<int> groups;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) groups.push_back(std::stoi(tok));
  if (groups.size() != bank.class_names.size())
    throw validation_error("bank: groups meta length != number of classes");
  return groups;
}

}  // namespace vgpl
