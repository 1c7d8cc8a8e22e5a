#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rnncnn/config.hpp"
#include "rnncnn/ops.hpp"

namespace rnncnn {

inline constexpr const char* kEmbeddingName = "embedding";

// Owns every learned tensor of one encoder/decoder pair. The embedding matrix
// (|V| x d_e, one row per word) is stored once and read by both the encoder
// input layer and the decoder word-prediction layer.
template <typename T>
class Model {
 public:
  // Weights uniform in [-init_scale, init_scale], biases zero.
  Model(ModelConfig config, std::uint64_t seed);

  // All parameters zero.
  static Model zeros(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  std::size_t num_tensors() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return params_[i].first; }
  Tensor<T>& param(std::size_t i) { return params_[i].second; }
  const Tensor<T>& param(std::size_t i) const { return params_[i].second; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<T>& param(const std::string& name);
  const Tensor<T>& param(const std::string& name) const;

  Tensor<T>& embedding() { return param(kEmbeddingName); }
  const Tensor<T>& embedding() const { return param(kEmbeddingName); }

  // Replaces the embedding (and vocab_size) after vocabulary expansion.
  void set_embedding(Tensor<T> table);

  std::size_t num_parameters() const;
  void zero_grad();

  template <typename U>
  Model<U> cast() const {
    Model<U> out = Model<U>::zeros(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.param(i) = params_[i].second.template cast<U>();
    }
    return out;
  }

 private:
  explicit Model(ModelConfig config);
  void add(const std::string& name, Dims dims, bool is_bias);

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<bool> is_bias_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Closed-form parameter count for `config` (one |V| x d_e matrix).
std::size_t analytic_parameter_count(const ModelConfig& config);

// A Model registered on a Tape. Parameters whose name starts with a frozen
// prefix are bound without gradients.
template <typename T>
class BoundModel {
 public:
  BoundModel(Tape<T>& tape, Model<T>& model, bool requires_grad = true,
             std::vector<std::string> frozen_prefixes = {});

  Tape<T>& tape() const { return *tape_; }
  const ModelConfig& config() const { return config_; }
  Var operator[](const std::string& name) const;
  op::GruVars gru(const std::string& prefix) const;

  // Table read by the encoder input layer; defaults to the shared embedding.
  Var encoder_embedding() const { return encoder_embedding_; }
  void set_encoder_embedding(Var v) { encoder_embedding_ = v; }

 private:
  Tape<T>* tape_;
  ModelConfig config_;
  std::unordered_map<std::string, Var> vars_;
  Var encoder_embedding_;
};

}  // namespace rnncnn
