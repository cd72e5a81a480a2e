#include "uer/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>

#include "uer/error.hpp"

namespace uer::pipeline {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'U', 'E', 'R', 'F'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_record(std::string& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, kDtypeF64);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  auto data = t.data();
  out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError("checkpoint " + path_.string() + ": " + msg);
  }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      fail(std::string("truncated while reading ") + what + " (needs " + std::to_string(n) + " bytes, " +
           std::to_string(remaining()) + " left)");
    }
  }
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t step,
                     const AdamState* optimizer) {
  const auto params = model.named_parameters();
  std::string spec_text = "step = " + std::to_string(step) + "\n" + model.spec().to_config().dump();

  std::vector<std::pair<std::string, Tensor>> records;
  for (const auto& p : params) records.emplace_back(p.name, p.value);
  if (optimizer) {
    if (optimizer->m.size() != params.size()) throw ContractError("optimizer state does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      records.emplace_back("optim.m." + params[i].name, Tensor::from(params[i].value.shape(), optimizer->m[i]));
      records.emplace_back("optim.v." + params[i].name, Tensor::from(params[i].value.shape(), optimizer->v[i]));
    }
    records.emplace_back("optim.t", Tensor::scalar(static_cast<double>(optimizer->t)));
  }

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, spec_text.size());
  out += spec_text;
  put<std::uint64_t>(out, records.size());
  for (const auto& [name, t] : records) put_record(out, name, t);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);

  const std::string magic = r.get_bytes(4, "magic");
  if (magic != std::string(kMagic, 4)) r.fail("bad magic: expected UERF, found '" + magic + "'");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    r.fail("format version mismatch: expected " + std::to_string(kCheckpointVersion) + ", found " +
           std::to_string(version));
  }
  Checkpoint ck;
  const auto spec_len = r.get<std::uint64_t>("spec length");
  ck.spec_text = r.get_bytes(spec_len, "spec");
  try {
    const ConfigFile cfg = ConfigFile::parse(ck.spec_text);
    ck.step = get_u64(cfg.root, "step", 0);
    ck.spec = ModelSpec::from_config(cfg);
  } catch (const ConfigError& e) {
    r.fail(std::string("malformed spec: ") + e.what());
  }

  const auto count = r.get<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("record name length");
    std::string name = r.get_bytes(name_len, "record name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF64) r.fail("record '" + name + "' has dtype " + std::to_string(dtype) + ", expected 1");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) r.fail("record '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>("extent");
      if (d != 0 && n > r.remaining() / d) r.fail("record '" + name + "' is larger than the file");
      n *= d;
    }
    if (n > r.remaining() / sizeof(double)) {
      r.fail("truncated while reading payload of '" + name + "'");
    }
    std::vector<double> data(n);
    const std::string raw = r.get_bytes(n * sizeof(double), "payload");
    std::memcpy(data.data(), raw.data(), raw.size());
    ck.tensors.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  return ck;
}

LoadReport load_parameters(Model& model, const Checkpoint& checkpoint) {
  LoadReport report;
  const auto params = model.named_parameters();
  // Validate everything first so a failure leaves the model untouched.
  std::vector<std::pair<Tensor, const Tensor*>> copies;
  for (const auto& p : params) {
    const Tensor* src = checkpoint.find(p.name);
    const bool head = p.name.rfind("target.", 0) == 0;
    if (src && src->shape() == p.value.shape()) {
      copies.emplace_back(p.value, src);
      report.loaded.push_back(p.name);
      continue;
    }
    if (!head) {
      throw DataError("checkpoint parameter " + p.name + ": expected shape " + shape_str(p.value.shape()) +
                      ", found " + (src ? shape_str(src->shape()) : std::string("nothing")));
    }
    report.fresh.push_back(p.name);
  }
  for (auto& [dst, src] : copies) {
    auto d = dst.mutable_data();
    std::copy(src->data().begin(), src->data().end(), d.begin());
  }
  return report;
}

std::optional<AdamState> load_optimizer(const Model& model, const Checkpoint& checkpoint, AdamHyper hyper) {
  const Tensor* t = checkpoint.find("optim.t");
  if (!t) return std::nullopt;
  const auto params = model.named_parameters();
  std::vector<Tensor> values;
  for (const auto& p : params) values.push_back(p.value);
  AdamState state = AdamState::for_parameters(values, hyper);
  state.t = static_cast<std::size_t>(t->item());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = checkpoint.find("optim.m." + params[i].name);
    const Tensor* v = checkpoint.find("optim.v." + params[i].name);
    if (!m || !v || m->numel() != state.m[i].size() || v->numel() != state.v[i].size()) return std::nullopt;
    std::copy(m->data().begin(), m->data().end(), state.m[i].begin());
    std::copy(v->data().begin(), v->data().end(), state.v[i].begin());
  }
  return state;
}

LoadedModel load_model(const std::filesystem::path& path, const text::Vocabulary& vocab,
                       const std::optional<ModelSpec>& override_spec, bool allow_vocab_mismatch) {
  LoadedModel out;
  out.checkpoint = read_checkpoint(path);
  const ModelSpec& stored = out.checkpoint.spec;
  if (stored.vocab_hash != vocab.hash()) {
    const std::string msg = "vocabulary hash " + std::to_string(vocab.hash()) + " differs from checkpoint's " +
                            std::to_string(stored.vocab_hash);
    if (!allow_vocab_mismatch) throw DataError(msg);
    std::cerr << "warning: " << msg << '\n';
  }
  ModelSpec spec = override_spec ? *override_spec : stored;
  if (allow_vocab_mismatch) spec.vocab_size = 0;
  out.model = assemble(spec, vocab);
  out.report = load_parameters(*out.model, out.checkpoint);
  return out;
}

}  // namespace uer::pipeline
