#include <cstring>
#include <fstream>
#include <sstream>

#include "cartoonize/errors.hpp"
#include "cartoonize/training.hpp"

namespace fs = std::filesystem;

namespace ctz {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'Z', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8 + 8;

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  void tensor(const Tensor& t) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod<std::int32_t>(d);
    buf_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  void tensors(const std::vector<Tensor>& ts) {
    pod<std::uint64_t>(ts.size());
    for (const auto& t : ts) tensor(t);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) raise(ErrorKind::integrity, "checkpoint tensor rank out of range");
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = pod<std::int32_t>();
      if (d < 0) raise(ErrorKind::integrity, "negative dimension in checkpoint");
      count *= static_cast<std::uint64_t>(d);
    }
    need(count * sizeof(double));
    Tensor t(shape);
    std::memcpy(t.data(), data_ + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return t;
  }
  std::vector<Tensor> tensors() {
    const auto n = pod<std::uint64_t>();
    if (n > size_) raise(ErrorKind::integrity, "checkpoint truncated");
    std::vector<Tensor> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::uint64_t n) const {
    if (n > size_ - pos_) raise(ErrorKind::integrity, "checkpoint truncated");
  }
  void take(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_params(Writer& w, const ParameterList& params) {
  w.pod<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.text(p.name);
    w.tensor(p.var.value());
  }
}

void read_params(Reader& r, const ParameterList& params, const char* module) {
  const auto n = r.pod<std::uint64_t>();
  if (n != params.size()) raise(ErrorKind::integrity, std::string("parameter count mismatch in ") + module);
  for (const auto& p : params) {
    const std::string name = r.text();
    Tensor value = r.tensor();
    if (name != p.name || value.shape() != p.var.shape()) {
      raise(ErrorKind::integrity, std::string("parameter layout mismatch in ") + module + " at " + name);
    }
    Var handle = p.var;
    handle.mutable_value() = std::move(value);
  }
}

void write_adam(Writer& w, const AdamState& s) {
  w.pod<std::int64_t>(s.steps);
  w.tensors(s.first_moment);
  w.tensors(s.second_moment);
}

AdamState read_adam(Reader& r) {
  AdamState s;
  s.steps = r.pod<std::int64_t>();
  s.first_moment = r.tensors();
  s.second_moment = r.tensors();
  return s;
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& path) {
  Writer w;
  w.text(nlohmann::json(state.config).dump());
  w.pod<std::int64_t>(state.step);
  std::ostringstream rng;
  rng << state.rng;
  w.text(rng.str());
  write_params(w, state.g_ab.parameters());
  write_params(w, state.g_ba.parameters());
  write_params(w, state.d_a.parameters());
  write_params(w, state.d_b.parameters());
  for (const AdamState* s : {&state.opt_g_ab, &state.opt_g_ba, &state.opt_d_a, &state.opt_d_b}) write_adam(w, *s);
  for (const ReplayPool* p : {&state.pool_fake_a, &state.pool_fake_b}) {
    w.pod<std::int32_t>(p->capacity());
    w.tensors(p->images());
  }
  const std::string& payload = w.bytes();

  Writer header;
  for (char c : kMagic) header.pod(c);
  header.pod<std::uint32_t>(kCheckpointVersion);
  header.pod<std::uint64_t>(state.fingerprint);
  header.pod<std::uint64_t>(payload.size());
  header.pod<std::uint64_t>(fnv1a(payload.data(), payload.size()));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::io, "cannot write checkpoint " + tmp.string());
    out.write(header.bytes().data(), static_cast<std::streamsize>(header.bytes().size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) raise(ErrorKind::io, "failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderSize) raise(ErrorKind::integrity, "checkpoint truncated: " + path.string());

  Reader header(bytes.data(), kHeaderSize);
  char magic[8];
  for (char& c : magic) c = header.pod<char>();
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    raise(ErrorKind::integrity, "not a checkpoint file: " + path.string());
  }
  const auto version = header.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    raise(ErrorKind::integrity, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto fingerprint = header.pod<std::uint64_t>();
  const auto length = header.pod<std::uint64_t>();
  const auto checksum = header.pod<std::uint64_t>();
  if (bytes.size() - kHeaderSize != length) raise(ErrorKind::integrity, "checkpoint truncated: " + path.string());
  const char* payload = bytes.data() + kHeaderSize;
  if (fnv1a(payload, length) != checksum) raise(ErrorKind::integrity, "checkpoint checksum mismatch");

  Reader r(payload, length);
  TrainConfig config;
  try {
    config = nlohmann::json::parse(r.text()).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::integrity, std::string("checkpoint config unreadable: ") + e.what());
  }
  if (config.architecture_fingerprint() != fingerprint) {
    raise(ErrorKind::integrity, "checkpoint fingerprint does not match its config");
  }
  TrainState state = TrainState::initialize(config);
  state.step = r.pod<std::int64_t>();
  std::istringstream rng(r.text());
  rng >> state.rng;
  if (!rng) raise(ErrorKind::integrity, "checkpoint rng state unreadable");
  read_params(r, state.g_ab.parameters(), "g_ab");
  read_params(r, state.g_ba.parameters(), "g_ba");
  read_params(r, state.d_a.parameters(), "d_a");
  read_params(r, state.d_b.parameters(), "d_b");
  for (AdamState* s : {&state.opt_g_ab, &state.opt_g_ba, &state.opt_d_a, &state.opt_d_b}) *s = read_adam(r);
  for (ReplayPool* p : {&state.pool_fake_a, &state.pool_fake_b}) {
    const auto capacity = r.pod<std::int32_t>();
    *p = ReplayPool(capacity);
    p->restore(r.tensors());
  }
  if (!r.done()) raise(ErrorKind::integrity, "trailing bytes in checkpoint");
  return state;
}

}  // namespace ctz
