#include "lorafit/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lorafit/error.hpp"
#include "lorafit/random.hpp"

namespace lorafit {

namespace {

constexpr char kMagic[8] = {'L', 'O', 'R', 'A', 'F', 'I', 'T', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  void put_le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ValidationError("checkpoint is truncated");
  }
  std::uint64_t get_le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ValidationError("checkpoint metadata '" + key + "' is not an integer: " + value);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ValidationError("checkpoint metadata '" + key + "' is not a number: " + value);
  }
  return out;
}

}  // namespace

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ValidationError("checkpoint lacks metadata '" + key + "'");
  return it->second;
}

const Tensor& Checkpoint::tensor_at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("checkpoint lacks tensor '" + name + "'");
  return it->second;
}

std::string serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[std::move(k)] = r.str();
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.u64());
      numel *= d;
    }
    if (numel > bytes.size()) throw ValidationError("checkpoint is truncated");
    std::vector<double> values(numel);
    for (double& v : values) v = r.f64();
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw ValidationError("trailing bytes after checkpoint payload");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) { return deserialize(slurp(path)); }

std::string file_fingerprint(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(std::string_view(bytes))));
  return buf;
}

Checkpoint encoder_checkpoint(const PairEncoder& model) {
  Checkpoint ckpt;
  const EncoderConfig& c = model.config();
  ckpt.meta["kind"] = "encoder";
  ckpt.meta["vocab_size"] = std::to_string(c.vocab_size);
  ckpt.meta["embed_dim"] = std::to_string(c.embed_dim);
  ckpt.meta["num_heads"] = std::to_string(c.num_heads);
  ckpt.meta["num_layers"] = std::to_string(c.num_layers);
  ckpt.meta["ffn_dim"] = std::to_string(c.ffn_dim);
  ckpt.meta["max_seq_len"] = std::to_string(c.max_seq_len);
  ckpt.meta["seed"] = std::to_string(c.seed);
  std::string unfrozen;
  for (const auto& name : model.unfrozen()) {
    if (!unfrozen.empty()) unfrozen += ",";
    unfrozen += name;
  }
  ckpt.meta["unfrozen"] = unfrozen;
  ckpt.tensors = model.params();
  return ckpt;
}

PairEncoder encoder_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta_at("kind") != "encoder") {
    throw ValidationError("checkpoint holds '" + ckpt.meta_at("kind") + "', expected an encoder");
  }
  EncoderConfig c;
  auto sz = [&](const char* key) { return parse_size(key, ckpt.meta_at(key)); };
  c.vocab_size = sz("vocab_size");
  c.embed_dim = sz("embed_dim");
  c.num_heads = sz("num_heads");
  c.num_layers = sz("num_layers");
  c.ffn_dim = sz("ffn_dim");
  c.max_seq_len = sz("max_seq_len");
  c.seed = sz("seed");
  PairEncoder model = build_encoder(c);
  if (ckpt.tensors.size() != model.params().size()) {
    throw ValidationError("encoder checkpoint has " + std::to_string(ckpt.tensors.size()) +
                          " tensors, expected " + std::to_string(model.params().size()));
  }
  for (const auto& [name, t] : ckpt.tensors) model.set_param(name, t);
  const std::string& unfrozen = ckpt.meta_at("unfrozen");
  std::size_t start = 0;
  while (start < unfrozen.size()) {
    std::size_t end = unfrozen.find(',', start);
    if (end == std::string::npos) end = unfrozen.size();
    model.unfreeze(unfrozen.substr(start, end - start));
    start = end + 1;
  }
  return model;
}

Checkpoint adapter_checkpoint(const AdapterSet& adapters) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "adapters";
  std::string targets;
  for (const auto& [name, adapter] : adapters) {
    if (adapter.merged()) throw StateError("cannot checkpoint merged adapter '" + name + "'");
    if (!targets.empty()) targets += ",";
    targets += name;
    ckpt.meta[name + ".rank"] = std::to_string(adapter.rank());
    ckpt.meta[name + ".scale"] = format_double(adapter.scale());
    ckpt.tensors.emplace(name + ".A", adapter.a());
    ckpt.tensors.emplace(name + ".B", adapter.b());
  }
  ckpt.meta["targets"] = targets;
  return ckpt;
}

AdapterSet adapters_from_checkpoint(const Checkpoint& ckpt, const PairEncoder& model) {
  if (ckpt.meta_at("kind") != "adapters") {
    throw ValidationError("checkpoint holds '" + ckpt.meta_at("kind") + "', expected adapters");
  }
  AdapterSet out;
  const std::string& targets = ckpt.meta_at("targets");
  std::size_t start = 0;
  while (start < targets.size()) {
    std::size_t end = targets.find(',', start);
    if (end == std::string::npos) end = targets.size();
    const std::string name = targets.substr(start, end - start);
    start = end + 1;
    const std::size_t rank = parse_size(name + ".rank", ckpt.meta_at(name + ".rank"));
    const double scale = parse_double(name + ".scale", ckpt.meta_at(name + ".scale"));
    LoraAdapter adapter = LoraAdapter::from_factors(model.param(name), ckpt.tensor_at(name + ".A"),
                                                    ckpt.tensor_at(name + ".B"), scale);
    if (adapter.rank() != rank) {
      throw ValidationError("adapter '" + name + "' rank metadata disagrees with its factors");
    }
    out.emplace(name, std::move(adapter));
  }
  return out;
}

}  // namespace lorafit
