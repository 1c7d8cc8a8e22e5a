#include "rnncnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rnncnn/errors.hpp"

namespace rnncnn {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view key, std::string_view value,
                const std::array<Enum, N>& options) {
  for (Enum e : options) {
    if (to_string(e) == value) return e;
  }
  std::string allowed;
  for (Enum e : options) {
    if (!allowed.empty()) allowed += ", ";
    allowed += to_string(e);
  }
  throw ConfigError("invalid value '" + std::string(value) + "' for " +
                    std::string(key) + " (expected one of " + allowed + ")");
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("invalid integer '" + std::string(value) + "' for " +
                      std::string(key));
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(value), &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + std::string(value) + "' for " +
                      std::string(key));
  }
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean '" + std::string(value) + "' for " +
                    std::string(key));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool apply_model_key(const std::string& key, const std::string& value,
                     ModelConfig& c) {
  if (key == "vocab_size") {
    c.vocab_size = parse_uint(key, value);
  } else if (key == "embed_dim") {
    c.embed_dim = parse_uint(key, value);
  } else if (key == "hidden_dim") {
    c.hidden_dim = parse_uint(key, value);
  } else if (key == "encoder") {
    c.encoder = parse_enum(key, value,
                           std::array{EncoderKind::kRnn, EncoderKind::kCnn});
  } else if (key == "cnn_channels") {
    std::array<std::size_t, 4> ch{};
    std::size_t n = 0;
    std::string_view rest = value;
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      if (n == 4) throw ConfigError("cnn_channels takes exactly 4 widths");
      ch[n++] = parse_uint(key, rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{}
                                             : rest.substr(comma + 1);
    }
    if (n != 4) throw ConfigError("cnn_channels takes exactly 4 widths");
    c.cnn_channels = ch;
  } else if (key == "pooling") {
    c.pooling = parse_enum(key, value,
                           std::array{Pooling::kMeanMax, Pooling::kMaxOnly});
  } else if (key == "decoder") {
    c.decoder = parse_enum(key, value,
                           std::array{DecoderKind::kPawCnn, DecoderKind::kPawRnn,
                                      DecoderKind::kArRnn, DecoderKind::kArCnn});
  } else if (key == "sampling") {
    c.sampling = parse_enum(
        key, value,
        std::array{Sampling::kNone, Sampling::kTeacherForcing,
                   Sampling::kAlwaysSampling, Sampling::kUniformSampling});
  } else if (key == "target_len") {
    c.target_len = parse_uint(key, value);
  } else if (key == "dec_channels1") {
    c.dec_channels1 = parse_uint(key, value);
  } else if (key == "dec_channels2") {
    c.dec_channels2 = parse_uint(key, value);
  } else if (key == "dec_hidden") {
    c.dec_hidden = parse_uint(key, value);
  } else if (key == "max_src_len") {
    c.max_src_len = parse_uint(key, value);
  } else if (key == "init_scale") {
    c.init_scale = parse_double(key, value);
  } else {
    return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(EncoderKind kind) {
  return kind == EncoderKind::kRnn ? "rnn" : "cnn";
}

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::kMeanMax ? "mean_max" : "max_only";
}

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kPawCnn: return "paw_cnn";
    case DecoderKind::kPawRnn: return "paw_rnn";
    case DecoderKind::kArRnn: return "ar_rnn";
    case DecoderKind::kArCnn: return "ar_cnn";
  }
  return "?";
}

std::string_view to_string(Sampling sampling) {
  switch (sampling) {
    case Sampling::kNone: return "none";
    case Sampling::kTeacherForcing: return "teacher_forcing";
    case Sampling::kAlwaysSampling: return "always_sampling";
    case Sampling::kUniformSampling: return "uniform_sampling";
  }
  return "?";
}

bool is_autoregressive(DecoderKind kind) {
  return kind == DecoderKind::kArRnn || kind == DecoderKind::kArCnn;
}

std::size_t ModelConfig::repr_dim() const {
  if (encoder == EncoderKind::kCnn) {
    return cnn_channels[0] + cnn_channels[1] + cnn_channels[2] + cnn_channels[3];
  }
  const std::size_t d_h = 2 * hidden_dim;
  return pooling == Pooling::kMeanMax ? 2 * d_h : d_h;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(hidden_dim, "hidden_dim");
  positive(target_len, "target_len");
  positive(dec_channels1, "dec_channels1");
  positive(dec_channels2, "dec_channels2");
  positive(dec_hidden, "dec_hidden");
  positive(max_src_len, "max_src_len");
  for (std::size_t ch : cnn_channels) positive(ch, "cnn_channels");
  if (vocab_size < 4) {
    throw ConfigError("vocab_size must cover the 3 specials and a word");
  }
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  if (is_autoregressive(decoder) == (sampling == Sampling::kNone)) {
    throw ConfigError(
        "sampling must be set exactly when the decoder is autoregressive "
        "(decoder=" + std::string(to_string(decoder)) +
        ", sampling=" + std::string(to_string(sampling)) + ")");
  }
}

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (checkpoint_every == 0) {
    throw ConfigError("checkpoint_every must be positive");
  }
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string_view::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key=value, got '" + std::string(line) + "'");
    }
    std::string key(line.substr(start, eq - start));
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) {
      key.pop_back();
    }
    kv.emplace_back(std::move(key), std::string(line.substr(eq + 1)));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

KeyValues to_key_values(const ModelConfig& c) {
  std::string channels;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) channels += ',';
    channels += std::to_string(c.cnn_channels[i]);
  }
  return {
      {"vocab_size", std::to_string(c.vocab_size)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"encoder", std::string(to_string(c.encoder))},
      {"cnn_channels", channels},
      {"pooling", std::string(to_string(c.pooling))},
      {"decoder", std::string(to_string(c.decoder))},
      {"sampling", std::string(to_string(c.sampling))},
      {"target_len", std::to_string(c.target_len)},
      {"dec_channels1", std::to_string(c.dec_channels1)},
      {"dec_channels2", std::to_string(c.dec_channels2)},
      {"dec_hidden", std::to_string(c.dec_hidden)},
      {"max_src_len", std::to_string(c.max_src_len)},
      {"init_scale", format_double(c.init_scale)},
  };
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv = to_key_values(c.model);
  kv.emplace_back("lr", format_double(c.lr));
  kv.emplace_back("batch_size", std::to_string(c.batch_size));
  kv.emplace_back("steps", std::to_string(c.steps));
  kv.emplace_back("seed", std::to_string(c.seed));
  kv.emplace_back("checkpoint_every", std::to_string(c.checkpoint_every));
  kv.emplace_back("freeze_encoder", c.freeze_encoder ? "true" : "false");
  kv.emplace_back("pretrained", c.pretrained);
  return kv;
}

void apply_key_values(const KeyValues& kv, ModelConfig& config) {
  for (const auto& [key, value] : kv) {
    if (!apply_model_key(key, value, config)) {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
}

void apply_key_values(const KeyValues& kv, TrainConfig& c) {
  for (const auto& [key, value] : kv) {
    if (apply_model_key(key, value, c.model)) continue;
    if (key == "lr") {
      c.lr = parse_double(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_uint(key, value);
    } else if (key == "steps") {
      c.steps = parse_uint(key, value);
    } else if (key == "seed") {
      c.seed = parse_uint(key, value);
    } else if (key == "checkpoint_every") {
      c.checkpoint_every = parse_uint(key, value);
    } else if (key == "freeze_encoder") {
      c.freeze_encoder = parse_bool(key, value);
    } else if (key == "pretrained") {
      c.pretrained = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  TrainConfig config;
  try {
    apply_key_values(parse_key_values(text.str()), config);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config;
}

}  // namespace rnncnn
