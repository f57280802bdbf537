#include "absa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <boost/crc.hpp>

#include "absa/error.hpp"

namespace absa {
namespace {

constexpr char kMagic[8] = {'A', 'B', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::uint64_t n) const {
    if (n > size_ - pos_) throw IntegrityError("checkpoint payload ends early");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

}  // namespace

Vocabulary Checkpoint::vocab() const { return Vocabulary::from_tokens(vocabulary); }

Checkpoint make_checkpoint(const AbsaModel& model, const Vocabulary& vocab, const RunConfig& config,
                           const AdamState& optimizer, std::uint64_t epoch, std::uint64_t seed,
                           const std::mt19937_64& rng) {
  Checkpoint ckpt;
  ckpt.config_text = config.to_text();
  ckpt.vocabulary = vocab.tokens();
  for (const auto& [name, t] : model.named_parameters()) {
    ckpt.parameters.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  ckpt.optimizer = optimizer;
  ckpt.epoch = epoch;
  ckpt.seed = seed;
  std::ostringstream os;
  os << rng;
  ckpt.rng_state = os.str();
  return ckpt;
}

AbsaModel restore_model(const Checkpoint& ckpt) {
  const RunConfig config = ckpt.config();
  AbsaModel model(config.model_spec(ckpt.vocabulary.size()), ckpt.seed);
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& p : ckpt.parameters) {
    if (!by_name.emplace(p.name, &p).second) throw DataError("checkpoint repeats parameter " + p.name);
  }
  auto params = model.named_parameters();
  if (params.size() != by_name.size()) {
    throw DataError("checkpoint holds " + std::to_string(by_name.size()) + " parameters, model expects " +
                    std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + name);
    if (it->second->shape != t.shape()) {
      throw DataError("checkpoint parameter " + name + " has shape " + shape_str(it->second->shape) +
                      ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
  return model;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer body;
  body.str(ckpt.config_text);
  body.u64(ckpt.epoch);
  body.u64(ckpt.seed);
  body.str(ckpt.rng_state);
  body.u64(ckpt.vocabulary.size());
  for (const auto& t : ckpt.vocabulary) body.str(t);
  body.u64(ckpt.parameters.size());
  for (const auto& p : ckpt.parameters) {
    body.str(p.name);
    body.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) body.u64(d);
    for (double v : p.values) body.f64(v);
  }
  const auto& opt = ckpt.optimizer;
  body.u64(opt.step);
  body.f64(opt.lr);
  body.f64(opt.beta1);
  body.f64(opt.beta2);
  body.f64(opt.epsilon);
  body.u64(opt.first_moment.size());
  for (std::size_t i = 0; i < opt.first_moment.size(); ++i) {
    body.u64(opt.first_moment[i].size());
    for (double v : opt.first_moment[i]) body.f64(v);
    for (double v : opt.second_moment.at(i)) body.f64(v);
  }

  Writer file;
  file.raw(kMagic, sizeof kMagic);
  file.u32(ckpt.version);
  file.u64(body.bytes().size());
  file.raw(body.bytes().data(), body.bytes().size());
  file.u32(crc32(body.bytes().data(), body.bytes().size()));
  return std::move(file.bytes());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize + 4) throw IntegrityError("checkpoint truncated: header incomplete");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  Reader header(bytes.data() + 8, kHeaderSize - 8);
  const std::uint32_t version = header.u32();
  const std::uint64_t length = header.u64();
  if (version != kCheckpointVersion) {
    throw IncompatibleVersionError("checkpoint format version " + std::to_string(version) +
                                   " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() != kHeaderSize + length + 4) {
    throw IntegrityError("checkpoint truncated or padded: header declares " + std::to_string(length) +
                         " payload bytes, file has " + std::to_string(bytes.size()));
  }
  const std::uint8_t* payload = bytes.data() + kHeaderSize;
  Reader trailer(payload + length, 4);
  if (trailer.u32() != crc32(payload, length)) throw IntegrityError("checkpoint checksum mismatch");

  Reader r(payload, length);
  Checkpoint ckpt;
  ckpt.version = version;
  ckpt.config_text = r.str();
  ckpt.epoch = r.u64();
  ckpt.seed = r.u64();
  ckpt.rng_state = r.str();
  const auto n_vocab = r.u64();
  for (std::uint64_t i = 0; i < n_vocab; ++i) ckpt.vocabulary.push_back(r.str());
  const auto n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    NamedArray p;
    p.name = r.str();
    const auto rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) p.shape.push_back(r.u64());
    p.values.resize(shape_numel(p.shape));
    for (auto& v : p.values) v = r.f64();
    ckpt.parameters.push_back(std::move(p));
  }
  auto& opt = ckpt.optimizer;
  opt.step = r.u64();
  opt.lr = r.f64();
  opt.beta1 = r.f64();
  opt.beta2 = r.f64();
  opt.epsilon = r.f64();
  const auto n_moments = r.u64();
  for (std::uint64_t i = 0; i < n_moments; ++i) {
    const auto n = r.u64();
    std::vector<double> m(n), v(n);
    for (auto& x : m) x = r.f64();
    for (auto& x : v) x = r.f64();
    opt.first_moment.push_back(std::move(m));
    opt.second_moment.push_back(std::move(v));
  }
  if (!r.done()) throw IntegrityError("checkpoint payload has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t parameter_fingerprint(const AbsaModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : model.named_parameters()) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (auto d : t.shape()) mix(d);
    for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace absa
