#include "rnncnn/model.hpp"

#include <random>

namespace rnncnn {
namespace {

const char* const kGruNames[] = {"W_z", "W_r", "W_h", "U_z", "U_r",
                                 "U_h", "b_z", "b_r", "b_h"};

std::size_t gru_count(std::size_t in, std::size_t hid) {
  return 3 * hid * in + 3 * hid * hid + 3 * hid;
}

std::size_t conv_count(std::size_t in, std::size_t out) {
  return out * in * 3 + out;
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const ModelConfig& c = config_;
  add(kEmbeddingName, {c.vocab_size, c.embed_dim}, false);
  auto add_gru = [&](const std::string& prefix, std::size_t in,
                     std::size_t hid) {
    for (int i = 0; i < 3; ++i) add(prefix + kGruNames[i], {hid, in}, false);
    for (int i = 3; i < 6; ++i) add(prefix + kGruNames[i], {hid, hid}, false);
    for (int i = 6; i < 9; ++i) add(prefix + kGruNames[i], {hid}, true);
  };
  auto add_conv = [&](const std::string& prefix, std::size_t in,
                      std::size_t out) {
    add(prefix + "weight", {out, in, 3}, false);
    add(prefix + "bias", {out}, true);
  };
  auto add_affine = [&](const std::string& prefix, std::size_t in,
                        std::size_t out) {
    add(prefix + "weight", {out, in}, false);
    add(prefix + "bias", {out}, true);
  };

  // Row n * c1 + j of the expansion holds output channel j of position n.
  auto add_expand = [&] {
    add("dec.expand.weight", {c.target_len * c.dec_channels1, c.repr_dim()},
        false);
    add("dec.expand.bias", {c.target_len * c.dec_channels1}, true);
  };

  if (c.encoder == EncoderKind::kRnn) {
    add_gru("enc.fwd.", c.embed_dim, c.hidden_dim);
    add_gru("enc.bwd.", c.embed_dim, c.hidden_dim);
  } else {
    std::size_t in = c.embed_dim;
    for (std::size_t l = 0; l < 4; ++l) {
      add_conv("enc.conv" + std::to_string(l + 1) + ".", in, c.cnn_channels[l]);
      in = c.cnn_channels[l];
    }
  }

  const std::size_t repr = c.repr_dim();
  switch (c.decoder) {
    case DecoderKind::kPawCnn:
      add_expand();
      add_conv("dec.conv2.", c.dec_channels1, c.dec_channels2);
      add_conv("dec.conv3.", c.dec_channels2, c.embed_dim);
      break;
    case DecoderKind::kPawRnn:
      add_expand();
      add_gru("dec.fwd.", c.dec_channels1, c.dec_hidden);
      add_gru("dec.bwd.", c.dec_channels1, c.dec_hidden);
      add_affine("dec.proj.", 2 * c.dec_hidden, c.embed_dim);
      break;
    case DecoderKind::kArRnn:
      add_affine("dec.init.", repr, c.dec_hidden);
      add_gru("dec.gru.", c.embed_dim, c.dec_hidden);
      add_affine("dec.proj.", c.dec_hidden, c.embed_dim);
      break;
    case DecoderKind::kArCnn:
      add_affine("dec.init.", repr, c.embed_dim);
      add_conv("dec.conv1.", c.embed_dim, c.dec_channels1);
      add_conv("dec.conv2.", c.dec_channels1, c.dec_channels2);
      add_conv("dec.conv3.", c.dec_channels2, c.embed_dim);
      break;
  }
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed)
    : Model(std::move(config)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-config_.init_scale,
                                                 config_.init_scale);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (is_bias_[i]) continue;
    for (T& v : params_[i].second.data()) v = static_cast<T>(uniform(rng));
  }
}

template <typename T>
Model<T> Model<T>::zeros(ModelConfig config) {
  return Model(std::move(config));
}

template <typename T>
void Model<T>::add(const std::string& name, Dims dims, bool is_bias) {
  index_.emplace(name, params_.size());
  params_.emplace_back(name, Tensor<T>(std::move(dims)));
  is_bias_.push_back(is_bias);
}

template <typename T>
Tensor<T>& Model<T>::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InternalError("no parameter named " + name);
  return params_[it->second].second;
}

template <typename T>
const Tensor<T>& Model<T>::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InternalError("no parameter named " + name);
  return params_[it->second].second;
}

template <typename T>
void Model<T>::set_embedding(Tensor<T> table) {
  if (table.rank() != 2 || table.dim(1) != config_.embed_dim) {
    throw ShapeError("embedding must be |V| x " +
                     std::to_string(config_.embed_dim) + ", got " +
                     dims_to_string(table.dims()));
  }
  config_.vocab_size = table.dim(0);
  embedding() = std::move(table);
}

template <typename T>
std::size_t Model<T>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t analytic_parameter_count(const ModelConfig& c) {
  std::size_t n = c.vocab_size * c.embed_dim;
  if (c.encoder == EncoderKind::kRnn) {
    n += 2 * gru_count(c.embed_dim, c.hidden_dim);
  } else {
    std::size_t in = c.embed_dim;
    for (std::size_t ch : c.cnn_channels) {
      n += conv_count(in, ch);
      in = ch;
    }
  }
  const std::size_t repr = c.repr_dim();
  const std::size_t expand = c.target_len * c.dec_channels1 * (repr + 1);
  switch (c.decoder) {
    case DecoderKind::kPawCnn:
      n += expand + conv_count(c.dec_channels1, c.dec_channels2) +
           conv_count(c.dec_channels2, c.embed_dim);
      break;
    case DecoderKind::kPawRnn:
      n += expand + 2 * gru_count(c.dec_channels1, c.dec_hidden) +
           c.embed_dim * (2 * c.dec_hidden + 1);
      break;
    case DecoderKind::kArRnn:
      n += c.dec_hidden * (repr + 1) + gru_count(c.embed_dim, c.dec_hidden) +
           c.embed_dim * (c.dec_hidden + 1);
      break;
    case DecoderKind::kArCnn:
      n += c.embed_dim * (repr + 1) + conv_count(c.embed_dim, c.dec_channels1) +
           conv_count(c.dec_channels1, c.dec_channels2) +
           conv_count(c.dec_channels2, c.embed_dim);
      break;
  }
  return n;
}

template <typename T>
BoundModel<T>::BoundModel(Tape<T>& tape, Model<T>& model, bool requires_grad,
                          std::vector<std::string> frozen_prefixes)
    : tape_(&tape), config_(model.config()) {
  for (std::size_t i = 0; i < model.num_tensors(); ++i) {
    const std::string& name = model.name(i);
    bool trainable = requires_grad;
    for (const std::string& prefix : frozen_prefixes) {
      if (name.rfind(prefix, 0) == 0) trainable = false;
    }
    vars_.emplace(name, tape.param(model.param(i), trainable));
  }
  encoder_embedding_ = vars_.at(kEmbeddingName);
}

template <typename T>
Var BoundModel<T>::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw InternalError("model has no parameter named " + name);
  }
  return it->second;
}

template <typename T>
op::GruVars BoundModel<T>::gru(const std::string& prefix) const {
  const BoundModel& m = *this;
  return op::GruVars{m[prefix + "W_z"], m[prefix + "W_r"], m[prefix + "W_h"],
                     m[prefix + "U_z"], m[prefix + "U_r"], m[prefix + "U_h"],
                     m[prefix + "b_z"], m[prefix + "b_r"], m[prefix + "b_h"]};
}

template class Model<float>;
template class Model<double>;
template class Model<long double>;
template class BoundModel<float>;
template class BoundModel<double>;
template class BoundModel<long double>;

}  // namespace rnncnn
