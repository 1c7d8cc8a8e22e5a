#include "rnncnn/encoder.hpp"

namespace rnncnn {
namespace {

template <typename T>
Var run_gru(const BoundModel<T>& m, Var inputs, const op::GruVars& cell,
            std::span<const std::int32_t> lengths, std::size_t hidden) {
  Tape<T>& tape = m.tape();
  const std::size_t batch = tape.dims(inputs)[0];
  const std::size_t len = tape.dims(inputs)[1];
  Var h = tape.constant(Tensor<T>({batch, hidden}));
  std::vector<Var> states;
  states.reserve(len);
  std::vector<std::uint8_t> active(batch);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      active[b] = static_cast<std::size_t>(lengths[b]) > t;
    }
    h = op::gru_step(tape, op::select_step(tape, inputs, t), h, cell, active);
    states.push_back(h);
  }
  return op::stack_steps(tape, states);
}

}  // namespace

template <typename T>
Var bigru_forward(const BoundModel<T>& m, const Batch& batch) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  if (batch.lengths.size() != batch.batch_size ||
      batch.source.size() != batch.batch_size * batch.max_len) {
    throw ShapeError("malformed batch");
  }
  if (batch.max_len == 0) {
    throw EmptySentenceError("batch holds only empty sentences");
  }
  const std::span<const std::int32_t> lens = batch.lengths;
  Var x = op::embed(tape, m.encoder_embedding(), batch.source,
                    {batch.batch_size, batch.max_len, c.embed_dim});
  Var fwd = run_gru(m, x, m.gru("enc.fwd."), lens, c.hidden_dim);
  Var x_rev = op::reverse_within_length(tape, x, lens);
  Var bwd_rev = run_gru(m, x_rev, m.gru("enc.bwd."), lens, c.hidden_dim);
  Var bwd = op::reverse_within_length(tape, bwd_rev, lens);
  return op::concat_last(tape, op::zero_invalid(tape, fwd, lens), bwd);
}

template <typename T>
Var mean_max_pool(Tape<T>& tape, Var states,
                  std::span<const std::int32_t> lengths) {
  return op::concat_last(tape, op::masked_mean(tape, states, lengths),
                         op::masked_max(tape, states, lengths));
}

template <typename T>
Var max_only_pool(Tape<T>& tape, Var states,
                  std::span<const std::int32_t> lengths) {
  return op::masked_max(tape, states, lengths);
}

template <typename T>
Var cnn_encoder_forward(const BoundModel<T>& m, const Batch& batch) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  if (batch.max_len == 0) {
    throw EmptySentenceError("batch holds only empty sentences");
  }
  const std::span<const std::int32_t> lens = batch.lengths;
  Var x = op::embed(tape, m.encoder_embedding(), batch.source,
                    {batch.batch_size, batch.max_len, c.embed_dim});
  x = op::zero_invalid(tape, x, lens);
  Var repr;
  for (int l = 1; l <= 4; ++l) {
    const std::string prefix = "enc.conv" + std::to_string(l) + ".";
    x = op::conv1d(tape, x, m[prefix + "weight"], m[prefix + "bias"],
                   op::ConvPadding::kSame);
    x = op::zero_invalid(tape, op::tanh(tape, x), lens);
    Var pooled = op::masked_max(tape, x, lens);
    repr = repr.valid() ? op::concat_last(tape, repr, pooled) : pooled;
  }
  return repr;
}

template <typename T>
Var encode(const BoundModel<T>& m, const Batch& batch) {
  if (m.config().encoder == EncoderKind::kCnn) {
    return cnn_encoder_forward(m, batch);
  }
  Var states = bigru_forward(m, batch);
  if (m.config().pooling == Pooling::kMeanMax) {
    return mean_max_pool(m.tape(), states, batch.lengths);
  }
  return max_only_pool(m.tape(), states, batch.lengths);
}

template <typename T>
Tensor<T> encode_batch(Model<T>& model, const Batch& batch) {
  Tape<T> tape;
  BoundModel<T> bound(tape, model, /*requires_grad=*/false);
  return tape.value(encode(bound, batch));
}

#define RNNCNN_INSTANTIATE_ENCODER(T)                                          \
  template Var bigru_forward<T>(const BoundModel<T>&, const Batch&);           \
  template Var mean_max_pool<T>(Tape<T>&, Var, std::span<const std::int32_t>); \
  template Var max_only_pool<T>(Tape<T>&, Var, std::span<const std::int32_t>); \
  template Var cnn_encoder_forward<T>(const BoundModel<T>&, const Batch&);     \
  template Var encode<T>(const BoundModel<T>&, const Batch&);                  \
  template Tensor<T> encode_batch<T>(Model<T>&, const Batch&);

RNNCNN_INSTANTIATE_ENCODER(float)
RNNCNN_INSTANTIATE_ENCODER(double)
RNNCNN_INSTANTIATE_ENCODER(long double)

#undef RNNCNN_INSTANTIATE_ENCODER

}  // namespace rnncnn
