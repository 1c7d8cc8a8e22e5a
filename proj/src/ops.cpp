#include "rnncnn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace rnncnn::op {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using RowMap = Eigen::Map<RowVec<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowVec<T>>;

template <typename T>
ConstMatMap<T> mat(const Tensor<T>& t, std::size_t cols) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size() / cols),
                        static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> mat(Tensor<T>& t, std::size_t cols) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size() / cols),
                   static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> mat(std::span<T> data, std::size_t cols) {
  return MatMap<T>(data.data(), static_cast<Eigen::Index>(data.size() / cols),
                   static_cast<Eigen::Index>(cols));
}

template <typename T>
RowMap<T> row(std::span<T> data) {
  return RowMap<T>(data.data(), static_cast<Eigen::Index>(data.size()));
}

template <typename T>
ConstRowMap<T> row(const Tensor<T>& t) {
  return ConstRowMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_rank(const Tape<T>& tape, Var v, std::size_t rank,
                  const char* name) {
  if (tape.dims(v).size() != rank) {
    throw ShapeError(std::string(name) + " expects rank " +
                     std::to_string(rank) + ", got dims " +
                     dims_to_string(tape.dims(v)));
  }
}

void check_lengths(std::span<const std::int32_t> lengths, std::size_t batch,
                   std::size_t max_len) {
  require(lengths.size() == batch,
          "lengths count " + std::to_string(lengths.size()) +
              " does not match batch " + std::to_string(batch));
  for (std::int32_t len : lengths) {
    if (len < 0 || static_cast<std::size_t>(len) > max_len) {
      throw ShapeError("sequence length " + std::to_string(len) +
                       " outside [0, " + std::to_string(max_len) + "]");
    }
  }
}

}  // namespace

template <typename T>
Var embed(Tape<T>& tape, Var table, std::span<const std::int32_t> ids,
          Dims out_dims) {
  require_rank(tape, table, 2, "embed table");
  const std::size_t vocab = tape.dims(table)[0];
  const std::size_t width = tape.dims(table)[1];
  require(num_elements(out_dims) == ids.size() * width,
          "embed output dims " + dims_to_string(out_dims) + " do not hold " +
              std::to_string(ids.size()) + " rows of " + std::to_string(width));
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("word id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  Tensor<T> out(std::move(out_dims));
  const T* src = tape.value(table).ptr();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(src + static_cast<std::size_t>(ids[r]) * width, width,
                out.ptr() + r * width);
  }
  return tape.record(
      std::move(out), {table},
      [table, width, saved = std::vector<std::int32_t>(ids.begin(), ids.end())](
          Tape<T>& t, Var self) {
        std::span<const T> g = t.grad(self);
        std::span<T> gt = t.grad(table);
        for (std::size_t r = 0; r < saved.size(); ++r) {
          T* dst = gt.data() + static_cast<std::size_t>(saved[r]) * width;
          const T* src_row = g.data() + r * width;
          for (std::size_t c = 0; c < width; ++c) dst[c] += src_row[c];
        }
      });
}

template <typename T>
Var affine(Tape<T>& tape, Var x, Var weight, Var bias) {
  require_rank(tape, weight, 2, "affine weight");
  const std::size_t out_dim = tape.dims(weight)[0];
  const std::size_t in_dim = tape.dims(weight)[1];
  Dims out_dims = tape.dims(x);
  require(!out_dims.empty() && out_dims.back() == in_dim,
          "affine input dims " + dims_to_string(out_dims) +
              " do not end in " + std::to_string(in_dim));
  if (bias.valid()) {
    require(tape.value(bias).size() == out_dim,
            "affine bias size " + std::to_string(tape.value(bias).size()) +
                " != " + std::to_string(out_dim));
  }
  out_dims.back() = out_dim;
  Tensor<T> out(out_dims);
  {
    auto X = mat(tape.value(x), in_dim);
    auto W = mat(tape.value(weight), in_dim);
    auto Y = mat(out, out_dim);
    Y.noalias() = X * W.transpose();
    if (bias.valid()) Y.rowwise() += row(tape.value(bias));
  }
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return tape.record(
      std::move(out), inputs,
      [x, weight, bias, in_dim, out_dim](Tape<T>& t, Var self) {
        auto G = mat(t.grad(self), out_dim);
        if (t.requires_grad(x)) {
          mat(t.grad(x), in_dim).noalias() +=
              G * mat(t.value(weight), in_dim);
        }
        if (t.requires_grad(weight)) {
          mat(t.grad(weight), in_dim).noalias() +=
              G.transpose() * mat(t.value(x), in_dim);
        }
        if (bias.valid() && t.requires_grad(bias)) {
          row(t.grad(bias)) += G.colwise().sum();
        }
      });
}

template <typename T>
Var gru_step(Tape<T>& tape, Var x, Var h, const GruVars& p,
             std::span<const std::uint8_t> active) {
  require_rank(tape, x, 2, "gru input");
  require_rank(tape, h, 2, "gru state");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t in_dim = tape.dims(x)[1];
  const std::size_t hid = tape.dims(h)[1];
  require(tape.dims(h)[0] == batch, "gru state batch does not match input");
  for (Var w : {p.w_z, p.w_r, p.w_h}) {
    require(tape.dims(w) == Dims{hid, in_dim},
            "gru input weight dims " + dims_to_string(tape.dims(w)) +
                ", expected " + dims_to_string({hid, in_dim}));
  }
  for (Var u : {p.u_z, p.u_r, p.u_h}) {
    require(tape.dims(u) == Dims{hid, hid},
            "gru recurrent weight dims " + dims_to_string(tape.dims(u)) +
                ", expected " + dims_to_string({hid, hid}));
  }
  for (Var b : {p.b_z, p.b_r, p.b_h}) {
    require(tape.value(b).size() == hid, "gru bias size mismatch");
  }
  require(active.empty() || active.size() == batch,
          "gru activity mask does not match batch");

  struct Cache {
    Mat<T> z, r, c, rh;
    std::vector<std::uint8_t> active;
  };
  auto cache = std::make_shared<Cache>();
  cache->active.assign(active.begin(), active.end());

  auto X = mat(tape.value(x), in_dim);
  auto H = mat(tape.value(h), hid);
  const auto rows = static_cast<Eigen::Index>(batch);

  cache->z.noalias() = X * mat(tape.value(p.w_z), in_dim).transpose();
  cache->z.noalias() += H * mat(tape.value(p.u_z), hid).transpose();
  cache->z.rowwise() += row(tape.value(p.b_z));
  cache->z = cache->z.unaryExpr([](T v) { return sigmoid(v); });

  cache->r.noalias() = X * mat(tape.value(p.w_r), in_dim).transpose();
  cache->r.noalias() += H * mat(tape.value(p.u_r), hid).transpose();
  cache->r.rowwise() += row(tape.value(p.b_r));
  cache->r = cache->r.unaryExpr([](T v) { return sigmoid(v); });

  cache->rh = cache->r.cwiseProduct(H);
  cache->c.noalias() = X * mat(tape.value(p.w_h), in_dim).transpose();
  cache->c.noalias() += cache->rh * mat(tape.value(p.u_h), hid).transpose();
  cache->c.rowwise() += row(tape.value(p.b_h));
  cache->c = cache->c.array().tanh();

  Tensor<T> out({batch, hid});
  auto Out = mat(out, hid);
  Out = H + cache->z.cwiseProduct(cache->c - H);
  for (Eigen::Index b = 0; b < rows; ++b) {
    if (!cache->active.empty() && !cache->active[b]) Out.row(b) = H.row(b);
  }

  std::vector<Var> inputs{x,     h,     p.w_z, p.w_r, p.w_h, p.u_z,
                          p.u_r, p.u_h, p.b_z, p.b_r, p.b_h};
  return tape.record(
      std::move(out), inputs,
      [x, h, p, in_dim, hid, cache](Tape<T>& t, Var self) {
        auto G = mat(t.grad(self), hid);
        auto X = mat(t.value(x), in_dim);
        auto H = mat(t.value(h), hid);
        const Mat<T>& z = cache->z;
        const Mat<T>& r = cache->r;
        const Mat<T>& c = cache->c;

        // Inactive rows: identity on h, no parameter contribution.
        Mat<T> g = G;
        Mat<T> pass = Mat<T>::Zero(g.rows(), g.cols());
        if (!cache->active.empty()) {
          for (Eigen::Index b = 0; b < g.rows(); ++b) {
            if (!cache->active[b]) {
              pass.row(b) = g.row(b);
              g.row(b).setZero();
            }
          }
        }

        const Mat<T> da_h =
            (g.array() * z.array() * (T(1) - c.array().square())).matrix();
        const Mat<T> da_z = (g.array() * (c - H).array() * z.array() *
                             (T(1) - z.array()))
                                .matrix();
        const Mat<T> d_rh = da_h * mat(t.value(p.u_h), hid);
        const Mat<T> da_r =
            (d_rh.array() * H.array() * r.array() * (T(1) - r.array()))
                .matrix();

        if (t.requires_grad(x)) {
          auto dX = mat(t.grad(x), in_dim);
          dX.noalias() += da_z * mat(t.value(p.w_z), in_dim);
          dX.noalias() += da_r * mat(t.value(p.w_r), in_dim);
          dX.noalias() += da_h * mat(t.value(p.w_h), in_dim);
        }
        if (t.requires_grad(h)) {
          auto dH = mat(t.grad(h), hid);
          dH += pass;
          dH += (g.array() * (T(1) - z.array())).matrix();
          dH += d_rh.cwiseProduct(r);
          dH.noalias() += da_z * mat(t.value(p.u_z), hid);
          dH.noalias() += da_r * mat(t.value(p.u_r), hid);
        }
        auto accumulate = [&](Var w, Var u, Var b, const Mat<T>& da,
                              const auto& u_input) {
          if (t.requires_grad(w)) {
            mat(t.grad(w), in_dim).noalias() += da.transpose() * X;
          }
          if (t.requires_grad(u)) {
            mat(t.grad(u), hid).noalias() += da.transpose() * u_input;
          }
          if (t.requires_grad(b)) row(t.grad(b)) += da.colwise().sum();
        };
        accumulate(p.w_z, p.u_z, p.b_z, da_z, H);
        accumulate(p.w_r, p.u_r, p.b_r, da_r, H);
        accumulate(p.w_h, p.u_h, p.b_h, da_h, cache->rh);
      });
}

template <typename T>
Var conv1d(Tape<T>& tape, Var x, Var kernel, Var bias, ConvPadding padding) {
  require_rank(tape, x, 3, "conv1d input");
  require_rank(tape, kernel, 3, "conv1d kernel");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t c_in = tape.dims(x)[2];
  const std::size_t c_out = tape.dims(kernel)[0];
  require(tape.dims(kernel)[2] == 3, "conv1d kernel width must be 3");
  require(tape.dims(kernel)[1] == c_in,
          "conv1d channel mismatch: input has " + std::to_string(c_in) +
              " channels, kernel expects " +
              std::to_string(tape.dims(kernel)[1]));
  require(tape.value(bias).size() == c_out, "conv1d bias size mismatch");

  const int first = padding == ConvPadding::kSame ? -1 : -2;
  // im2col: column cin * 3 + k holds x[b, i + first + k, cin].
  auto cols = std::make_shared<Mat<T>>(
      Mat<T>::Zero(static_cast<Eigen::Index>(batch * len),
                   static_cast<Eigen::Index>(c_in * 3)));
  const T* xp = tape.value(x).ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < len; ++i) {
      T* dst = cols->data() + (b * len + i) * c_in * 3;
      for (int k = 0; k < 3; ++k) {
        const long src_pos = static_cast<long>(i) + first + k;
        if (src_pos < 0 || src_pos >= static_cast<long>(len)) continue;
        const T* src = xp + (b * len + static_cast<std::size_t>(src_pos)) * c_in;
        for (std::size_t ci = 0; ci < c_in; ++ci) dst[ci * 3 + k] = src[ci];
      }
    }
  }
  Tensor<T> out({batch, len, c_out});
  {
    auto Y = mat(out, c_out);
    Y.noalias() = *cols * mat(tape.value(kernel), c_in * 3).transpose();
    Y.rowwise() += row(tape.value(bias));
  }
  return tape.record(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, batch, len, c_in, c_out, first, cols](Tape<T>& t,
                                                               Var self) {
        auto G = mat(t.grad(self), c_out);
        if (t.requires_grad(kernel)) {
          mat(t.grad(kernel), c_in * 3).noalias() += G.transpose() * *cols;
        }
        if (t.requires_grad(bias)) row(t.grad(bias)) += G.colwise().sum();
        if (t.requires_grad(x)) {
          const Mat<T> dcols = G * mat(t.value(kernel), c_in * 3);
          std::span<T> gx = t.grad(x);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < len; ++i) {
              const T* src = dcols.data() + (b * len + i) * c_in * 3;
              for (int k = 0; k < 3; ++k) {
                const long pos = static_cast<long>(i) + first + k;
                if (pos < 0 || pos >= static_cast<long>(len)) continue;
                T* dst = gx.data() +
                         (b * len + static_cast<std::size_t>(pos)) * c_in;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                  dst[ci] += src[ci * 3 + k];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var tanh(Tape<T>& tape, Var x) {
  Tensor<T> out(tape.dims(x));
  const Tensor<T>& in = tape.value(x);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    std::span<const T> g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    std::span<T> gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += g[i] * (T(1) - y[i] * y[i]);
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  require(tape.dims(a) == tape.dims(b), "add operands differ in shape");
  Tensor<T> out(tape.dims(a));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = tape.value(a)[i] + tape.value(b)[i];
  }
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    std::span<const T> g = t.grad(self);
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      std::span<T> gv = t.grad(v);
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  require(tape.dims(a) == tape.dims(b), "mul operands differ in shape");
  Tensor<T> out(tape.dims(a));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = tape.value(a)[i] * tape.value(b)[i];
  }
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    std::span<const T> g = t.grad(self);
    if (t.requires_grad(a)) {
      std::span<T> ga = t.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * t.value(b)[i];
    }
    if (t.requires_grad(b)) {
      std::span<T> gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * t.value(a)[i];
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T total = T(0);
  for (T v : tape.value(x).data()) total += v;
  return tape.record(Tensor<T>({1}, total), {x}, [x](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    for (T& v : t.grad(x)) v += g;
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Dims dims) {
  Tensor<T> out = tape.value(x);
  out.drop_grad();
  out.reshape(std::move(dims));
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    std::span<const T> g = t.grad(self);
    std::span<T> gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var concat_last(Tape<T>& tape, Var a, Var b) {
  const Dims& da = tape.dims(a);
  const Dims& db = tape.dims(b);
  require(da.size() == db.size() && !da.empty() &&
              std::equal(da.begin(), da.end() - 1, db.begin()),
          "concat leading dims differ: " + dims_to_string(da) + " vs " +
              dims_to_string(db));
  const std::size_t wa = da.back();
  const std::size_t wb = db.back();
  Dims out_dims = da;
  out_dims.back() = wa + wb;
  Tensor<T> out(out_dims);
  const std::size_t rows = tape.value(a).size() / wa;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(tape.value(a).ptr() + r * wa, wa, out.ptr() + r * (wa + wb));
    std::copy_n(tape.value(b).ptr() + r * wb, wb,
                out.ptr() + r * (wa + wb) + wa);
  }
  return tape.record(
      std::move(out), {a, b}, [a, b, wa, wb, rows](Tape<T>& t, Var self) {
        std::span<const T> g = t.grad(self);
        if (t.requires_grad(a)) {
          std::span<T> ga = t.grad(a);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < wa; ++c) {
              ga[r * wa + c] += g[r * (wa + wb) + c];
            }
          }
        }
        if (t.requires_grad(b)) {
          std::span<T> gb = t.grad(b);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < wb; ++c) {
              gb[r * wb + c] += g[r * (wa + wb) + wa + c];
            }
          }
        }
      });
}

template <typename T>
Var stack_steps(Tape<T>& tape, const std::vector<Var>& steps) {
  require(!steps.empty(), "stack_steps needs at least one step");
  const Dims& first = tape.dims(steps.front());
  require(first.size() == 2, "stack_steps expects B x C steps");
  const std::size_t batch = first[0];
  const std::size_t width = first[1];
  const std::size_t len = steps.size();
  Tensor<T> out({batch, len, width});
  for (std::size_t t = 0; t < len; ++t) {
    require(tape.dims(steps[t]) == first, "stack_steps step shapes differ");
    const T* src = tape.value(steps[t]).ptr();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(src + b * width, width, out.ptr() + (b * len + t) * width);
    }
  }
  return tape.record(
      std::move(out), steps,
      [steps, batch, width, len](Tape<T>& tp, Var self) {
        std::span<const T> g = tp.grad(self);
        for (std::size_t t = 0; t < len; ++t) {
          if (!tp.requires_grad(steps[t])) continue;
          std::span<T> gs = tp.grad(steps[t]);
          for (std::size_t b = 0; b < batch; ++b) {
            const T* src = g.data() + (b * len + t) * width;
            T* dst = gs.data() + b * width;
            for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
          }
        }
      });
}

template <typename T>
Var select_step(Tape<T>& tape, Var x, std::size_t t) {
  require_rank(tape, x, 3, "select_step");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t width = tape.dims(x)[2];
  require(t < len, "select_step position out of range");
  Tensor<T> out({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(tape.value(x).ptr() + (b * len + t) * width, width,
                out.ptr() + b * width);
  }
  return tape.record(
      std::move(out), {x}, [x, t, batch, len, width](Tape<T>& tp, Var self) {
        std::span<const T> g = tp.grad(self);
        std::span<T> gx = tp.grad(x);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < width; ++c) {
            gx[(b * len + t) * width + c] += g[b * width + c];
          }
        }
      });
}

template <typename T>
Var reverse_within_length(Tape<T>& tape, Var x,
                          std::span<const std::int32_t> lengths) {
  require_rank(tape, x, 3, "reverse_within_length");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t width = tape.dims(x)[2];
  check_lengths(lengths, batch, len);
  std::vector<std::int32_t> lens(lengths.begin(), lengths.end());
  Tensor<T> out(tape.dims(x));
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = static_cast<std::size_t>(lens[b]);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(tape.value(x).ptr() + (b * len + (n - 1 - i)) * width, width,
                  out.ptr() + (b * len + i) * width);
    }
  }
  return tape.record(
      std::move(out), {x},
      [x, lens = std::move(lens), len, width](Tape<T>& tp, Var self) {
        std::span<const T> g = tp.grad(self);
        std::span<T> gx = tp.grad(x);
        for (std::size_t b = 0; b < lens.size(); ++b) {
          const std::size_t n = static_cast<std::size_t>(lens[b]);
          for (std::size_t i = 0; i < n; ++i) {
            const T* src = g.data() + (b * len + i) * width;
            T* dst = gx.data() + (b * len + (n - 1 - i)) * width;
            for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
          }
        }
      });
}

template <typename T>
Var zero_invalid(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths) {
  require_rank(tape, x, 3, "zero_invalid");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t width = tape.dims(x)[2];
  check_lengths(lengths, batch, len);
  std::vector<std::int32_t> lens(lengths.begin(), lengths.end());
  Tensor<T> out = tape.value(x);
  out.drop_grad();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = static_cast<std::size_t>(lens[b]); i < len; ++i) {
      std::fill_n(out.ptr() + (b * len + i) * width, width, T(0));
    }
  }
  return tape.record(
      std::move(out), {x},
      [x, lens = std::move(lens), len, width](Tape<T>& tp, Var self) {
        std::span<const T> g = tp.grad(self);
        std::span<T> gx = tp.grad(x);
        for (std::size_t b = 0; b < lens.size(); ++b) {
          const std::size_t n = static_cast<std::size_t>(lens[b]) * width;
          for (std::size_t i = 0; i < n; ++i) {
            gx[b * len * width + i] += g[b * len * width + i];
          }
        }
      });
}

template <typename T>
Var masked_mean(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths) {
  require_rank(tape, x, 3, "masked_mean");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t width = tape.dims(x)[2];
  check_lengths(lengths, batch, len);
  std::vector<std::int32_t> lens(lengths.begin(), lengths.end());
  Tensor<T> out({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    if (lens[b] < 1) {
      throw EmptySentenceError("cannot pool an empty sentence (batch row " +
                               std::to_string(b) + ")");
    }
    T* dst = out.ptr() + b * width;
    for (std::size_t i = 0; i < static_cast<std::size_t>(lens[b]); ++i) {
      const T* src = tape.value(x).ptr() + (b * len + i) * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
    const T inv = T(1) / static_cast<T>(lens[b]);
    for (std::size_t c = 0; c < width; ++c) dst[c] *= inv;
  }
  return tape.record(
      std::move(out), {x},
      [x, lens = std::move(lens), len, width](Tape<T>& tp, Var self) {
        std::span<const T> g = tp.grad(self);
        std::span<T> gx = tp.grad(x);
        for (std::size_t b = 0; b < lens.size(); ++b) {
          const T inv = T(1) / static_cast<T>(lens[b]);
          for (std::size_t i = 0; i < static_cast<std::size_t>(lens[b]); ++i) {
            T* dst = gx.data() + (b * len + i) * width;
            for (std::size_t c = 0; c < width; ++c) {
              dst[c] += g[b * width + c] * inv;
            }
          }
        }
      });
}

template <typename T>
Var masked_max(Tape<T>& tape, Var x, std::span<const std::int32_t> lengths) {
  require_rank(tape, x, 3, "masked_max");
  const std::size_t batch = tape.dims(x)[0];
  const std::size_t len = tape.dims(x)[1];
  const std::size_t width = tape.dims(x)[2];
  check_lengths(lengths, batch, len);
  Tensor<T> out({batch, width});
  std::vector<std::uint32_t> argmax(batch * width, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (lengths[b] < 1) {
      throw EmptySentenceError("cannot pool an empty sentence (batch row " +
                               std::to_string(b) + ")");
    }
    for (std::size_t c = 0; c < width; ++c) {
      const T* base = tape.value(x).ptr() + b * len * width + c;
      std::size_t best = 0;
      for (std::size_t i = 1; i < static_cast<std::size_t>(lengths[b]); ++i) {
        if (base[i * width] > base[best * width]) best = i;
      }
      out[b * width + c] = base[best * width];
      argmax[b * width + c] = static_cast<std::uint32_t>(best);
    }
  }
  return tape.record(
      std::move(out), {x},
      [x, argmax = std::move(argmax), batch, len, width](Tape<T>& tp,
                                                         Var self) {
        std::span<const T> g = tp.grad(self);
        std::span<T> gx = tp.grad(x);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < width; ++c) {
            gx[(b * len + argmax[b * width + c]) * width + c] +=
                g[b * width + c];
          }
        }
      });
}

template <typename T>
void softmax_rows(std::span<const T> logits, std::size_t cols,
                  std::span<T> probs) {
  const std::size_t rows = logits.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * cols;
    T* out = probs.data() + r * cols;
    const T peak = *std::max_element(in, in + cols);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - peak);
      total += out[c];
    }
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
  }
}

template <typename T>
Var softmax_xent(Tape<T>& tape, Var logits,
                 std::span<const std::int32_t> targets, T scale) {
  require_rank(tape, logits, 2, "softmax_xent logits");
  const std::size_t rows = tape.dims(logits)[0];
  const std::size_t vocab = tape.dims(logits)[1];
  require(vocab >= 2, "softmax needs at least two classes");
  require(targets.size() == rows,
          "softmax_xent has " + std::to_string(rows) + " rows but " +
              std::to_string(targets.size()) + " targets");
  for (std::int32_t id : targets) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("target id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  auto probs = std::make_shared<std::vector<T>>(rows * vocab);
  softmax_rows<T>(tape.value(logits).data(), vocab, *probs);
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    // log-sum-exp form keeps -log p finite when p underflows.
    const T* in = tape.value(logits).ptr() + r * vocab;
    const T peak = *std::max_element(in, in + vocab);
    T total = T(0);
    for (std::size_t c = 0; c < vocab; ++c) total += std::exp(in[c] - peak);
    loss += std::log(total) + peak - in[targets[r]];
  }
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return tape.record(
      Tensor<T>({1}, scale * loss), {logits},
      [logits, probs, saved = std::move(saved), vocab, scale](Tape<T>& t,
                                                              Var self) {
        const T g = t.grad(self)[0] * scale;
        std::span<T> gl = t.grad(logits);
        for (std::size_t r = 0; r < saved.size(); ++r) {
          for (std::size_t c = 0; c < vocab; ++c) {
            gl[r * vocab + c] += g * (*probs)[r * vocab + c];
          }
          gl[r * vocab + static_cast<std::size_t>(saved[r])] -= g;
        }
      });
}

#define RNNCNN_INSTANTIATE_OPS(T)                                             \
  template Var embed<T>(Tape<T>&, Var, std::span<const std::int32_t>, Dims);  \
  template Var affine<T>(Tape<T>&, Var, Var, Var);                            \
  template Var gru_step<T>(Tape<T>&, Var, Var, const GruVars&,                \
                           std::span<const std::uint8_t>);                    \
  template Var conv1d<T>(Tape<T>&, Var, Var, Var, ConvPadding);               \
  template Var tanh<T>(Tape<T>&, Var);                                        \
  template Var add<T>(Tape<T>&, Var, Var);                                    \
  template Var mul<T>(Tape<T>&, Var, Var);                                    \
  template Var sum<T>(Tape<T>&, Var);                                         \
  template Var reshape<T>(Tape<T>&, Var, Dims);                               \
  template Var concat_last<T>(Tape<T>&, Var, Var);                            \
  template Var stack_steps<T>(Tape<T>&, const std::vector<Var>&);             \
  template Var select_step<T>(Tape<T>&, Var, std::size_t);                    \
  template Var reverse_within_length<T>(Tape<T>&, Var,                        \
                                        std::span<const std::int32_t>);       \
  template Var zero_invalid<T>(Tape<T>&, Var, std::span<const std::int32_t>); \
  template Var masked_mean<T>(Tape<T>&, Var, std::span<const std::int32_t>);  \
  template Var masked_max<T>(Tape<T>&, Var, std::span<const std::int32_t>);   \
  template Var softmax_xent<T>(Tape<T>&, Var, std::span<const std::int32_t>,  \
                               T);                                            \
  template void softmax_rows<T>(std::span<const T>, std::size_t, std::span<T>);

RNNCNN_INSTANTIATE_OPS(float)
RNNCNN_INSTANTIATE_OPS(double)
RNNCNN_INSTANTIATE_OPS(long double)

#undef RNNCNN_INSTANTIATE_OPS

}  // namespace rnncnn::op
