#include "exifcons/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <nlohmann/json.hpp>

#include "exifcons/config.hpp"
#include "exifcons/errors.hpp"

namespace exifcons {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'E', 'X', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(U));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
  }
  void str(const std::string& s) {
    pod(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::uint64_t base)
      : data_(data), size_(size), base_(base) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_ + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    const auto* p = take(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  bool done() const { return pos_ == size_; }
  std::uint64_t offset() const { return base_ + pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw ParseError("truncated checkpoint", base_ + pos_);
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint64_t base_;
};

std::vector<std::uint8_t> encode_tensors(const std::map<std::string, Tensor>& tensors) {
  Writer w;
  w.pod(std::uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.pod(std::uint32_t(t.dims.size()));
    for (auto d : t.dims) w.pod(std::int64_t(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return w.buf;
}

std::map<std::string, Tensor> decode_tensors(const std::uint8_t* data, std::size_t size,
                                             std::uint64_t base) {
  Reader r(data, size, base);
  std::map<std::string, Tensor> out;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    std::string name = r.str();
    Tensor t;
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw ParseError("tensor " + name + " has too many dimensions", at);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto v = r.pod<std::int64_t>();
      if (v < 0 || v > (std::int64_t(1) << 32)) throw ParseError("bad tensor dimension", at);
      t.dims.push_back(v);
      n *= std::uint64_t(v);
    }
    if (n > size) throw ParseError("tensor " + name + " exceeds section size", at);
    t.data.resize(n);
    std::memcpy(t.data.data(), r.take(n * sizeof(float)), n * sizeof(float));
    if (!out.emplace(name, std::move(t)).second) {
      throw ParseError("duplicate tensor " + name, at);
    }
  }
  if (!r.done()) throw ParseError("trailing bytes in tensor section", r.offset());
  return out;
}

Tensor to_tensor(const nn::Matrix<float>& m) {
  Tensor t;
  t.dims = {m.rows(), m.cols()};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

template <typename Params>
std::map<std::string, Tensor> export_params(const Params& params) {
  std::map<std::string, Tensor> out;
  for (const auto* p : params) {
    if (!out.emplace(p->name, to_tensor(p->value)).second) {
      throw std::logic_error("duplicate parameter name " + p->name);
    }
  }
  return out;
}

void import_params(const std::vector<nn::Param<float>*>& params,
                   const std::map<std::string, Tensor>& tensors, const std::string& what) {
  if (params.size() != tensors.size()) {
    throw InputError(what + ": checkpoint has " + std::to_string(tensors.size()) +
                     " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw InputError(what + ": missing tensor " + p->name);
    const auto& t = it->second;
    if (t.dims.size() != 2 || t.dims[0] != p->value.rows() || t.dims[1] != p->value.cols()) {
      throw InputError(what + ": shape mismatch for tensor " + p->name);
    }
    std::memcpy(p->value.data(), t.data.data(), t.data.size() * sizeof(float));
  }
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::filesystem::path resolve_checkpoint_path(const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) return p / kCheckpointFile;
  return p;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json cfg;
  cfg["format"] = "exifcons-checkpoint";
  cfg["tool_version"] = ckpt.tool_version.empty() ? version() : ckpt.tool_version;
  cfg["model"] = json::parse(ckpt.model.to_json());
  cfg["experiment"] = json::parse(ckpt.experiment_json);
  cfg["step"] = ckpt.step;
  cfg["vocab_fingerprint"] = fingerprint_hex(ckpt.vocab_fingerprint);

  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;
  auto text = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  sections.emplace_back("config", text(cfg.dump(2)));
  sections.emplace_back("vocab", text(ckpt.vocab.to_json()));
  sections.emplace_back("tensors", encode_tensors(ckpt.tensors));
  if (ckpt.combiner) {
    json c;
    c["input_dim"] = ckpt.combiner->input_dim;
    c["hidden"] = ckpt.combiner->hidden;
    c["iterations"] = ckpt.combiner->iterations;
    sections.emplace_back("combiner", text(c.dump(2)));
    sections.emplace_back("combiner.tensors", encode_tensors(ckpt.combiner->tensors));
  }

  Writer w;
  w.bytes(kMagic, 4);
  w.pod(kFormatVersion);
  for (const auto& [name, payload] : sections) {
    w.str(name);
    w.pod(std::uint64_t(payload.size()));
    w.bytes(payload.data(), payload.size());
  }
  write_file(path, w.buf);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto resolved = resolve_checkpoint_path(path);
  const auto bytes = read_file(resolved);
  Reader r(bytes.data(), bytes.size(), 0);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a checkpoint file: " + resolved.string(), 0);
  }
  r.take(4);
  const auto ver = r.pod<std::uint32_t>();
  if (ver != kFormatVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(ver), 4);
  }
  std::map<std::string, std::pair<std::uint64_t, std::string_view>> sections;
  while (!r.done()) {
    const auto at = r.offset();
    auto name = r.str();
    const auto len = r.pod<std::uint64_t>();
    const auto base = r.offset();
    if (len > bytes.size()) throw ParseError("section " + name + " exceeds file size", at);
    const auto* p = r.take(std::size_t(len));
    sections[name] = {base, {reinterpret_cast<const char*>(p), std::size_t(len)}};
  }
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) {
      throw ParseError("checkpoint lacks section '" + name + "'", bytes.size());
    }
    return it->second;
  };

  Checkpoint ck;
  try {
    const auto cfg = json::parse(section("config").second);
    ck.model = ModelConfig::from_json(cfg.at("model").dump());
    ck.experiment_json = cfg.at("experiment").dump();
    ck.step = cfg.at("step").get<std::int64_t>();
    ck.tool_version = cfg.at("tool_version").get<std::string>();
    ck.vocab_fingerprint =
        std::stoull(cfg.at("vocab_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint config: ") + e.what(), section("config").first);
  }
  ck.vocab = AttributeVocabulary::from_json(std::string(section("vocab").second));
  const auto [tbase, tdata] = section("tensors");
  ck.tensors = decode_tensors(reinterpret_cast<const std::uint8_t*>(tdata.data()),
                              tdata.size(), tbase);
  if (sections.count("combiner")) {
    Checkpoint::CombinerPart part;
    try {
      const auto c = json::parse(section("combiner").second);
      part.input_dim = c.at("input_dim").get<int>();
      part.hidden = c.at("hidden").get<int>();
      part.iterations = c.at("iterations").get<std::int64_t>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad combiner section: ") + e.what(),
                       section("combiner").first);
    }
    const auto [cbase, cdata] = section("combiner.tensors");
    part.tensors = decode_tensors(reinterpret_cast<const std::uint8_t*>(cdata.data()),
                                  cdata.size(), cbase);
    ck.combiner = std::move(part);
  }
  return ck;
}

Checkpoint make_checkpoint(const ConsistencyNet<float>& net, const AttributeVocabulary& vocab,
                           std::int64_t step, const std::string& experiment_json) {
  Checkpoint ck;
  ck.model = net.config();
  ck.experiment_json = experiment_json.empty() ? "{}" : experiment_json;
  ck.step = step;
  ck.vocab = vocab;
  ck.vocab_fingerprint = vocab.fingerprint();
  ck.tool_version = version();
  ck.tensors = export_params(net.parameters());
  return ck;
}

void attach_combiner(Checkpoint& ckpt, const Combiner& combiner, std::int64_t iterations) {
  Checkpoint::CombinerPart part;
  part.input_dim = combiner.input_dim();
  part.hidden = combiner.hidden();
  part.iterations = iterations;
  part.tensors = export_params(combiner.parameters());
  ckpt.combiner = std::move(part);
}

void check_vocabulary(const Checkpoint& ckpt, const AttributeVocabulary& vocab) {
  const auto fp = vocab.fingerprint();
  if (fp != ckpt.vocab_fingerprint) {
    throw InputError("vocabulary fingerprint " + fingerprint_hex(fp) +
                     " does not match the checkpoint's " +
                     fingerprint_hex(ckpt.vocab_fingerprint));
  }
}

std::unique_ptr<ConsistencyNet<float>> restore_model(const Checkpoint& ckpt) {
  check_vocabulary(ckpt, ckpt.vocab);
  auto net = std::make_unique<ConsistencyNet<float>>(ckpt.model, 0);
  import_params(net->parameters(), ckpt.tensors, "model");
  return net;
}

std::unique_ptr<Combiner> restore_combiner(const Checkpoint& ckpt) {
  if (!ckpt.combiner) {
    throw InputError("checkpoint has no combiner; run train-combiner first");
  }
  auto c = std::make_unique<Combiner>(ckpt.combiner->input_dim, ckpt.combiner->hidden, 0);
  import_params(c->parameters(), ckpt.combiner->tensors, "combiner");
  return c;
}

}  // namespace exifcons
