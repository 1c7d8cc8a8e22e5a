#include "rnncnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "rnncnn/errors.hpp"

namespace rnncnn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'S', 'V', '1'};
const std::string kAdamM = "adam.m/";
const std::string kAdamV = "adam.v/";
const std::string kFrozen = "frozen.embedding";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) u32(static_cast<std::uint32_t>(d));
    bytes(t.ptr(), t.size() * sizeof(float));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, const std::string& origin)
      : data_(data), size_(size), origin_(origin) {}

  bool done() const { return pos_ == size_; }
  void bytes(void* p, std::size_t n) {
    if (n > size_ - pos_) {
      throw CorruptionError(origin_ + ": truncated at byte " +
                            std::to_string(pos_));
    }
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  const std::string& origin_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state) {
  KeyValues kv = to_key_values(state.config);
  kv.emplace_back("step", std::to_string(state.step));
  for (const std::string& tok : state.vocab.tokens()) kv.emplace_back("token", tok);

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(format_key_values(kv));
  const Model<float>& m = state.model;
  for (std::size_t i = 0; i < m.num_tensors(); ++i) w.tensor(m.name(i), m.param(i));
  for (std::size_t i = 0; i < state.adam.size(); ++i) {
    if (!state.adam[i]) continue;
    w.tensor(kAdamM + m.name(i), state.adam[i]->m);
    w.tensor(kAdamV + m.name(i), state.adam[i]->v);
  }
  if (state.frozen_embedding) w.tensor(kFrozen, *state.frozen_embedding);
  std::vector<std::uint8_t>& out = w.buffer();
  const std::uint32_t crc = crc_of(out.data(), out.size());
  w.u32(crc);
  return std::move(out);
}

TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": not a checkpoint (bad magic)");
  }
  if (bytes.size() < 8) throw CorruptionError(origin + ": truncated header");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": unsupported checkpoint version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 12) throw CorruptionError(origin + ": truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (crc_of(bytes.data(), body) != stored) {
    throw CorruptionError(origin + ": checksum mismatch");
  }

  Reader r(bytes.data() + 8, body - 8, origin);
  TrainConfig config;
  std::uint64_t step = 0;
  std::vector<std::string> tokens;
  try {
    KeyValues rest;
    for (auto& [k, v] : parse_key_values(r.str())) {
      if (k == "token") {
        tokens.push_back(std::move(v));
      } else if (k == "step") {
        step = std::stoull(v);
      } else {
        rest.emplace_back(std::move(k), std::move(v));
      }
    }
    apply_key_values(rest, config);
    config.validate();
  } catch (const CorruptionError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(origin + ": bad config section: " + e.what());
  }
  if (tokens.size() != config.model.vocab_size) {
    throw FormatError(origin + ": vocabulary has " + std::to_string(tokens.size()) +
                      " tokens but vocab_size is " +
                      std::to_string(config.model.vocab_size));
  }

  TrainState state{config, Vocabulary::from_tokens(std::move(tokens)),
                   Model<float>::zeros(config.model), step, {}, std::nullopt};
  Model<float>& m = state.model;
  state.adam.resize(m.num_tensors());
  std::vector<bool> seen(m.num_tensors(), false);
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < m.num_tensors(); ++i) {
      if (m.name(i) == name) return i;
    }
    throw FormatError(origin + ": unexpected tensor '" + name + "'");
  };
  while (!r.done()) {
    const std::string name = r.str();
    Dims dims(r.u32());
    for (std::size_t& d : dims) d = r.u32();
    if (dims.empty() || num_elements(dims) == 0) {
      throw FormatError(origin + ": tensor '" + name + "' has empty dims");
    }
    std::vector<float> data(num_elements(dims));
    r.bytes(data.data(), data.size() * sizeof(float));
    Tensor<float> t(dims, std::move(data));
    auto expect_dims = [&](const Dims& want) {
      if (t.dims() != want) {
        throw FormatError(origin + ": tensor '" + name + "' has dims " +
                          dims_to_string(t.dims()) + ", expected " +
                          dims_to_string(want));
      }
    };
    if (name == kFrozen) {
      expect_dims(m.embedding().dims());
      state.frozen_embedding = std::move(t);
    } else if (starts_with(name, kAdamM) || starts_with(name, kAdamV)) {
      const std::size_t i = index_of(name.substr(kAdamM.size()));
      expect_dims(m.param(i).dims());
      auto& slot = state.adam[i];
      if (!slot) {
        slot.emplace(m.param(i).dims());
        slot->step_count = static_cast<std::int64_t>(step);
      }
      (starts_with(name, kAdamM) ? slot->m : slot->v) = std::move(t);
    } else {
      const std::size_t i = index_of(name);
      expect_dims(m.param(i).dims());
      m.param(i) = std::move(t);
      seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw FormatError(origin + ": missing tensor '" + m.name(i) + "'");
  }
  return state;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(state);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path);
}

}  // namespace rnncnn
