#include "rnncnn/decoder.hpp"

#include "rnncnn/encoder.hpp"

namespace rnncnn {
namespace {

void require_rng(Sampling sampling, const Rng* rng) {
  if (sampling != Sampling::kTeacherForcing && rng == nullptr) {
    throw ConfigError("sampling mode " + std::string(to_string(sampling)) +
                      " needs a random generator");
  }
}

void check_targets(std::span<const TokenId> targets, std::size_t batch,
                   std::size_t n) {
  if (targets.size() != batch * n) {
    throw ShapeError("expected " + std::to_string(batch * n) +
                     " target ids, got " + std::to_string(targets.size()));
  }
}

// Picks the word fed at step t (t >= 1) for every row. `probs` (B x |V|) is
// the distribution predicted at step t - 1 and is only read when sampling
// from the model.
template <typename T>
void choose_inputs(Sampling sampling, std::span<const TokenId> targets,
                   std::size_t n, std::size_t t, std::size_t vocab,
                   const std::vector<T>* probs, Rng* rng,
                   std::vector<TokenId>& step_ids) {
  const std::size_t batch = step_ids.size();
  for (std::size_t b = 0; b < batch; ++b) {
    switch (sampling) {
      case Sampling::kTeacherForcing:
        step_ids[b] = targets[b * n + t - 1];
        break;
      case Sampling::kUniformSampling: {
        std::uniform_int_distribution<TokenId> pick(
            0, static_cast<TokenId>(vocab) - 1);
        step_ids[b] = pick(*rng);
        break;
      }
      case Sampling::kAlwaysSampling: {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double u = unit(*rng);
        const T* p = probs->data() + b * vocab;
        double acc = 0.0;
        TokenId chosen = static_cast<TokenId>(vocab) - 1;
        for (std::size_t v = 0; v < vocab; ++v) {
          acc += static_cast<double>(p[v]);
          if (u < acc) {
            chosen = static_cast<TokenId>(v);
            break;
          }
        }
        step_ids[b] = chosen;
        break;
      }
      case Sampling::kNone:
        throw ConfigError("autoregressive decoder needs a sampling mode");
    }
  }
}

// Softmax over E u for a B x d_e block of features, values only.
template <typename T>
std::vector<T> step_distribution(const Tensor<T>& features,
                                 const Tensor<T>& embedding) {
  Tape<T> scratch;
  Var u = scratch.constant(features);
  Var e = scratch.constant(embedding);
  const Tensor<T>& logits = scratch.value(op::affine(scratch, u, e, Var{}));
  std::vector<T> probs(logits.size());
  op::softmax_rows<T>(logits.data(), embedding.dim(0), probs);
  return probs;
}

template <typename T>
Var causal_stack(const BoundModel<T>& m, Var x) {
  Tape<T>& tape = m.tape();
  using op::ConvPadding;
  Var h = op::tanh(tape, op::conv1d(tape, x, m["dec.conv1.weight"],
                                    m["dec.conv1.bias"], ConvPadding::kCausal));
  h = op::tanh(tape, op::conv1d(tape, h, m["dec.conv2.weight"],
                                m["dec.conv2.bias"], ConvPadding::kCausal));
  return op::conv1d(tape, h, m["dec.conv3.weight"], m["dec.conv3.bias"],
                    ConvPadding::kCausal);
}

}  // namespace

template <typename T>
Var linear_expand(const BoundModel<T>& m, Var z) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  const std::size_t batch = tape.dims(z)[0];
  Var y = op::affine(tape, z, m["dec.expand.weight"], m["dec.expand.bias"]);
  return op::reshape(tape, y, {batch, c.target_len, c.dec_channels1});
}

template <typename T>
Var paw_cnn_decode(const BoundModel<T>& m, Var z) {
  Tape<T>& tape = m.tape();
  using op::ConvPadding;
  Var h = op::tanh(tape, linear_expand(m, z));
  h = op::tanh(tape, op::conv1d(tape, h, m["dec.conv2.weight"],
                                m["dec.conv2.bias"], ConvPadding::kSame));
  return op::conv1d(tape, h, m["dec.conv3.weight"], m["dec.conv3.bias"],
                    ConvPadding::kSame);
}

template <typename T>
Var paw_rnn_decode(const BoundModel<T>& m, Var z) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  const std::size_t batch = tape.dims(z)[0];
  const std::size_t n = c.target_len;
  Var x = op::tanh(tape, linear_expand(m, z));
  const std::vector<std::int32_t> lens(batch, static_cast<std::int32_t>(n));

  auto run = [&](Var inputs, const op::GruVars& cell) {
    Var h = tape.constant(Tensor<T>({batch, c.dec_hidden}));
    std::vector<Var> states;
    for (std::size_t t = 0; t < n; ++t) {
      h = op::gru_step(tape, op::select_step(tape, inputs, t), h, cell);
      states.push_back(h);
    }
    return op::stack_steps(tape, states);
  };
  Var fwd = run(x, m.gru("dec.fwd."));
  Var bwd = op::reverse_within_length(
      tape, run(op::reverse_within_length(tape, x, lens), m.gru("dec.bwd.")),
      lens);
  return op::affine(tape, op::concat_last(tape, fwd, bwd),
                    m["dec.proj.weight"], m["dec.proj.bias"]);
}

template <typename T>
Decoded<T> ar_rnn_decode(const BoundModel<T>& m, Var z,
                         std::span<const TokenId> targets, Rng* rng) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  require_rng(c.sampling, rng);
  const std::size_t batch = tape.dims(z)[0];
  const std::size_t n = c.target_len;
  check_targets(targets, batch, n);
  const op::GruVars cell = m.gru("dec.gru.");
  const Var table = m[kEmbeddingName];

  Decoded<T> out;
  out.fed_ids.assign(batch * n, Vocabulary::kSos);
  Var h = op::affine(tape, z, m["dec.init.weight"], m["dec.init.bias"]);
  std::vector<TokenId> step_ids(batch, Vocabulary::kSos);
  std::vector<Var> features;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      std::vector<T> probs;
      if (c.sampling == Sampling::kAlwaysSampling) {
        probs = step_distribution(tape.value(features.back()),
                                  tape.value(table));
      }
      choose_inputs<T>(c.sampling, targets, n, t, c.vocab_size, &probs, rng,
                       step_ids);
      for (std::size_t b = 0; b < batch; ++b) {
        out.fed_ids[b * n + t] = step_ids[b];
      }
    }
    Var x = op::embed(tape, table, step_ids, {batch, c.embed_dim});
    h = op::gru_step(tape, x, h, cell);
    features.push_back(
        op::affine(tape, h, m["dec.proj.weight"], m["dec.proj.bias"]));
  }
  out.features = op::stack_steps(tape, features);
  return out;
}

template <typename T>
Decoded<T> ar_cnn_decode(const BoundModel<T>& m, Var z,
                         std::span<const TokenId> targets, Rng* rng) {
  Tape<T>& tape = m.tape();
  const ModelConfig& c = m.config();
  require_rng(c.sampling, rng);
  const std::size_t batch = tape.dims(z)[0];
  const std::size_t n = c.target_len;
  check_targets(targets, batch, n);
  const Var table = m[kEmbeddingName];

  Decoded<T> out;
  out.fed_ids.assign(batch * n, Vocabulary::kSos);
  Var start = op::affine(tape, z, m["dec.init.weight"], m["dec.init.bias"]);
  std::vector<Var> inputs{start};
  std::vector<TokenId> step_ids(batch);
  for (std::size_t t = 1; t < n; ++t) {
    std::vector<T> probs;
    if (c.sampling == Sampling::kAlwaysSampling) {
      // Position t-1 depends only on inputs < t, so the prefix suffices.
      Var prefix = causal_stack(m, op::stack_steps(tape, inputs));
      Var last = op::select_step(tape, prefix, t - 1);
      probs = step_distribution(tape.value(last), tape.value(table));
    }
    choose_inputs<T>(c.sampling, targets, n, t, c.vocab_size, &probs, rng,
                     step_ids);
    for (std::size_t b = 0; b < batch; ++b) out.fed_ids[b * n + t] = step_ids[b];
    inputs.push_back(op::embed(tape, table, step_ids, {batch, c.embed_dim}));
  }
  out.features = causal_stack(m, op::stack_steps(tape, inputs));
  return out;
}

template <typename T>
Decoded<T> decode(const BoundModel<T>& m, Var z,
                  std::span<const TokenId> targets, Rng* rng) {
  switch (m.config().decoder) {
    case DecoderKind::kPawCnn:
      return {paw_cnn_decode(m, z), {}};
    case DecoderKind::kPawRnn:
      return {paw_rnn_decode(m, z), {}};
    case DecoderKind::kArRnn:
      return ar_rnn_decode(m, z, targets, rng);
    case DecoderKind::kArCnn:
      return ar_cnn_decode(m, z, targets, rng);
  }
  throw InternalError("unknown decoder kind");
}

template <typename T>
Var predict_logits(Tape<T>& tape, Var features, Var embedding) {
  const Dims& fd = tape.dims(features);
  const std::size_t width = tape.dims(embedding).at(1);
  if (fd.empty() || fd.back() != width) {
    throw ShapeError("decoder features " + dims_to_string(fd) +
                     " do not match word vectors of size " +
                     std::to_string(width));
  }
  Var flat = op::reshape(tape, features, {tape.value(features).size() / width, width});
  return op::affine(tape, flat, embedding, Var{});
}

template <typename T>
Var sequence_nll(Tape<T>& tape, Var logits, std::span<const TokenId> targets,
                 std::size_t batch_size) {
  return op::softmax_xent(tape, logits, targets,
                          T(1) / static_cast<T>(batch_size));
}

template <typename T>
Var model_loss(const BoundModel<T>& m, const Batch& batch, Rng* rng) {
  if (batch.target_len != m.config().target_len) {
    throw ShapeError("batch target length " + std::to_string(batch.target_len) +
                     " differs from model target length " +
                     std::to_string(m.config().target_len));
  }
  Var z = encode(m, batch);
  Decoded<T> decoded = decode(m, z, batch.target, rng);
  Var logits = predict_logits(m.tape(), decoded.features, m[kEmbeddingName]);
  return sequence_nll(m.tape(), logits, batch.target, batch.batch_size);
}

#define RNNCNN_INSTANTIATE_DECODER(T)                                          \
  template Var linear_expand<T>(const BoundModel<T>&, Var);                    \
  template Var paw_cnn_decode<T>(const BoundModel<T>&, Var);                   \
  template Var paw_rnn_decode<T>(const BoundModel<T>&, Var);                   \
  template Decoded<T> ar_rnn_decode<T>(const BoundModel<T>&, Var,              \
                                       std::span<const TokenId>, Rng*);        \
  template Decoded<T> ar_cnn_decode<T>(const BoundModel<T>&, Var,              \
                                       std::span<const TokenId>, Rng*);        \
  template Decoded<T> decode<T>(const BoundModel<T>&, Var,                     \
                                std::span<const TokenId>, Rng*);               \
  template Var predict_logits<T>(Tape<T>&, Var, Var);                          \
  template Var sequence_nll<T>(Tape<T>&, Var, std::span<const TokenId>,        \
                               std::size_t);                                   \
  template Var model_loss<T>(const BoundModel<T>&, const Batch&, Rng*);

RNNCNN_INSTANTIATE_DECODER(float)
RNNCNN_INSTANTIATE_DECODER(double)
RNNCNN_INSTANTIATE_DECODER(long double)

#undef RNNCNN_INSTANTIATE_DECODER

}  // namespace rnncnn
