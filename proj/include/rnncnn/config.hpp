#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rnncnn {

enum class EncoderKind { kRnn, kCnn };
enum class Pooling { kMeanMax, kMaxOnly };
enum class DecoderKind { kPawCnn, kPawRnn, kArRnn, kArCnn };
enum class Sampling { kNone, kTeacherForcing, kAlwaysSampling, kUniformSampling };

std::string_view to_string(EncoderKind kind);
std::string_view to_string(Pooling pooling);
std::string_view to_string(DecoderKind kind);
std::string_view to_string(Sampling sampling);

bool is_autoregressive(DecoderKind kind);

// Architecture hyperparameters. Defaults are the small model: 300-d word
// vectors, 300 GRU units per direction, decoder channels 600-1200-300,
// 30 target words.
struct ModelConfig {
  std::size_t vocab_size = 20003;
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 300;  // per direction
  EncoderKind encoder = EncoderKind::kRnn;
  std::array<std::size_t, 4> cnn_channels{300, 300, 300, 300};
  Pooling pooling = Pooling::kMeanMax;
  DecoderKind decoder = DecoderKind::kPawCnn;
  Sampling sampling = Sampling::kNone;
  std::size_t target_len = 30;
  std::size_t dec_channels1 = 600;
  std::size_t dec_channels2 = 1200;
  std::size_t dec_hidden = 600;
  std::size_t max_src_len = 30;
  double init_scale = 0.1;

  // Dimension of the sentence representation fed to the decoder.
  std::size_t repr_dim() const;
  // Throws ConfigError on inconsistent settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 0.0005;
  std::size_t batch_size = 512;
  std::uint64_t steps = 1000;
  std::uint64_t seed = 1;
  std::uint64_t checkpoint_every = 1000;
  bool freeze_encoder = false;
  std::string pretrained;  // optional word2vec/GloVe text file for init

  void validate() const;
};

// Ordered key=value list; keys may repeat.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

KeyValues to_key_values(const ModelConfig& config);
KeyValues to_key_values(const TrainConfig& config);

// Applies every entry in `kv` to `config`; unknown keys raise ConfigError.
void apply_key_values(const KeyValues& kv, ModelConfig& config);
void apply_key_values(const KeyValues& kv, TrainConfig& config);

TrainConfig load_train_config(const std::string& path);

}  // namespace rnncnn
