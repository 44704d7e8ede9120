// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/attention.hpp"

#include <cmath>
#include <set>

namespace stpose {

void AttentionConfig::validate() const {
  if (embed_dim == 0 || num_heads == 0) {
    throw ContractError("attention: embed_dim and num_heads must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ContractError("attention: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by " + std::to_string(num_heads) + " heads");
  }
}

void WindowSpec::validate() const {
  if (window == 0 || grid_h == 0 || grid_w == 0) {
    throw ContractError("window spec: extents and window must be positive");
  }
  if (grid_h % window != 0 || grid_w % window != 0) {
    throw ContractError("window spec: grid " + std::to_string(grid_h) + "x" +
                        std::to_string(grid_w) + " not divisible by window " +
                        std::to_string(window));
  }
  if (shift != 0 && shift != window / 2) {
    throw ContractError("window spec: shift must be 0 or floor(window/2)");
  }
}

template <typename T>
Var<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v, const Tensor<T>* mask,
                            Tensor<T>* weights) {
  const bool flat = q.value().rank() == 2;
  if (q.shape() != k.shape() || q.shape() != v.shape() || (q.value().rank() != 3 && !flat)) {
    throw DimensionError("scaled_dot_attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (flat) {
    const Shape s3{1, q.shape()[0], q.shape()[1]};
    q = ad::reshape(q, s3);
    k = ad::reshape(k, s3);
    v = ad::reshape(v, s3);
  }
  const std::size_t batch = q.shape()[0], n = q.shape()[1], d = q.shape()[2];
  if (d == 0) throw ContractError("scaled_dot_attention: head dimension is zero");

  Var<T> scores = ad::scale(ad::batch_matmul(q, k, /*transpose_b=*/true), T(1) / std::sqrt(T(d)));
  if (mask) {
    const Shape want{batch, n, n};
    if (mask->size() != numel(want)) {
      throw DimensionError("scaled_dot_attention: mask " + shape_string(mask->shape()) +
                           " for scores " + shape_string(want));
    }
    scores = ad::add(scores, scores.tape->constant(mask->reshaped(want)));
  }
  Var<T> attn = ad::softmax(scores);
  if (weights) *weights = attn.value();
  Var<T> out = ad::batch_matmul(attn, v);
  return flat ? ad::reshape(out, {n, d}) : out;
}

void declare_mha(const ParamInit& init, std::size_t dim) {
  ParamInit p = init;
  p.normal("qkv.w", {dim, 3 * dim}, kInitStd);
  p.normal("proj.w", {dim, dim}, kInitStd);
}

template <typename T>
Var<T> multi_head_attention(Var<T> z, const MhaWeights<T>& w, std::size_t num_heads,
                            const Tensor<T>* mask, Tensor<T>* weights) {
  const bool flat = z.value().rank() == 2;
  if (!flat && z.value().rank() != 3) {
    throw DimensionError("multi_head_attention: input " + shape_string(z.shape()));
  }
  if (flat) z = ad::reshape(z, {1, z.shape()[0], z.shape()[1]});
  const std::size_t batch = z.shape()[0], n = z.shape()[1], c = z.shape()[2];
  AttentionConfig{c, num_heads}.validate();
  if (w.qkv.shape() != Shape{c, 3 * c} || w.out.shape() != Shape{c, c}) {
    throw DimensionError("multi_head_attention: weights " + shape_string(w.qkv.shape()) +
                         " / " + shape_string(w.out.shape()) + " for width " +
                         std::to_string(c));
  }
  const std::size_t h = num_heads, d = c / h;

  Var<T> qkv = linear(z, w.qkv);                               // [B, n, 3C]
  qkv = ad::reshape(qkv, {batch, n, 3, h, d});
  qkv = ad::permute(qkv, {2, 0, 3, 1, 4});                     // [3, B, h, n, d]
  const Shape head_shape{batch * h, n, d};
  Var<T> q = ad::reshape(ad::gather_rows(qkv, {0}), head_shape);
  Var<T> k = ad::reshape(ad::gather_rows(qkv, {1}), head_shape);
  Var<T> v = ad::reshape(ad::gather_rows(qkv, {2}), head_shape);

  Tensor<T> head_mask;
  if (mask) {
    if (mask->size() != batch * n * n) {
      throw DimensionError("multi_head_attention: mask " + shape_string(mask->shape()) +
                           " for batch " + std::to_string(batch) + " of " +
                           std::to_string(n) + " tokens");
    }
    head_mask = Tensor<T>({batch * h, n, n});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < h; ++i) {
        std::copy_n(mask->data().begin() + b * n * n, n * n,
                    head_mask.data().begin() + (b * h + i) * n * n);
      }
    }
  }
  Var<T> heads = scaled_dot_attention(q, k, v, mask ? &head_mask : nullptr, weights);
  if (weights) *weights = weights->reshaped({batch, h, n, n});

  heads = ad::reshape(heads, {batch, h, n, d});
  heads = ad::permute(heads, {0, 2, 1, 3});                    // [B, n, h, d]
  Var<T> out = linear(ad::reshape(heads, {batch, n, c}), w.out);
  return flat ? ad::reshape(out, {n, c}) : out;
}

// ---------------------------------------------------------------------------
// Window geometry

namespace {

void check_grid(const Shape& s, const WindowSpec& spec, const char* op) {
  spec.validate();
  if (s.size() != 3 || s[0] != spec.grid_h || s[1] != spec.grid_w) {
    throw DimensionError(std::string(op) + ": grid " + shape_string(s) + " for window spec " +
                         std::to_string(spec.grid_h) + "x" + std::to_string(spec.grid_w));
  }
}

void check_windows(const Shape& s, const WindowSpec& spec, const char* op) {
  spec.validate();
  if (s.size() != 3 || s[0] != spec.num_windows() || s[1] != spec.window_tokens()) {
    throw DimensionError(std::string(op) + ": windows " + shape_string(s) + " for window spec");
  }
}

}  // namespace

template <typename T>
Tensor<T> window_partition(const Tensor<T>& grid, const WindowSpec& spec) {
  check_grid(grid.shape(), spec, "window_partition");
  const std::size_t m = spec.window, c = grid.dim(2);
  Tensor<T> t = grid.reshaped({spec.grid_h / m, m, spec.grid_w / m, m, c});
  return permute(t, {0, 2, 1, 3, 4}).reshaped({spec.num_windows(), m * m, c});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowSpec& spec) {
  check_windows(windows.shape(), spec, "window_reverse");
  const std::size_t m = spec.window, c = windows.dim(2);
  Tensor<T> t = windows.reshaped({spec.grid_h / m, spec.grid_w / m, m, m, c});
  return permute(t, {0, 2, 1, 3, 4}).reshaped({spec.grid_h, spec.grid_w, c});
}

template <typename T>
Var<T> window_partition(Var<T> grid, const WindowSpec& spec) {
  check_grid(grid.shape(), spec, "window_partition");
  const std::size_t m = spec.window, c = grid.shape()[2];
  Var<T> t = ad::reshape(grid, {spec.grid_h / m, m, spec.grid_w / m, m, c});
  return ad::reshape(ad::permute(t, {0, 2, 1, 3, 4}), {spec.num_windows(), m * m, c});
}

template <typename T>
Var<T> window_reverse(Var<T> windows, const WindowSpec& spec) {
  check_windows(windows.shape(), spec, "window_reverse");
  const std::size_t m = spec.window, c = windows.shape()[2];
  Var<T> t = ad::reshape(windows, {spec.grid_h / m, spec.grid_w / m, m, m, c});
  return ad::reshape(ad::permute(t, {0, 2, 1, 3, 4}), {spec.grid_h, spec.grid_w, c});
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& grid, std::ptrdiff_t shift) {
  return roll(roll(grid, 0, shift), 1, shift);
}

template <typename T>
Var<T> cyclic_shift(Var<T> grid, std::ptrdiff_t shift) {
  return ad::roll(ad::roll(grid, 0, shift), 1, shift);
}

std::vector<int> shift_region_labels(const WindowSpec& spec) {
  spec.validate();
  const std::size_t m = spec.window, s = spec.shift;
  auto band = [&](std::size_t i, std::size_t extent) {
    if (s == 0) return 0;
    if (i < extent - m) return 0;
    if (i < extent - s) return 1;
    return 2;
  };
  std::vector<int> labels(spec.grid_h * spec.grid_w);
  for (std::size_t r = 0; r < spec.grid_h; ++r) {
    for (std::size_t c = 0; c < spec.grid_w; ++c) {
      labels[r * spec.grid_w + c] = band(r, spec.grid_h) * 3 + band(c, spec.grid_w);
    }
  }
  return labels;
}

namespace {

// Mask built from per-position region labels and a pad flag, both indexed in
// shifted-grid layout.
Tensor<double> region_mask(const WindowSpec& spec, const std::vector<int>& labels,
                           const std::vector<bool>& is_pad) {
  const std::size_t m = spec.window, n = m * m, wc = spec.grid_w / m;
  Tensor<double> mask({spec.num_windows(), n, n});
  for (std::size_t w = 0; w < spec.num_windows(); ++w) {
    const std::size_t r0 = (w / wc) * m, c0 = (w % wc) * m;
    auto pos = [&](std::size_t slot) { return (r0 + slot / m) * spec.grid_w + c0 + slot % m; };
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t pi = pos(i), pj = pos(j);
        if (labels[pi] != labels[pj] || is_pad[pj]) mask(w, i, j) = kMaskValue;
      }
    }
  }
  return mask;
}

}  // namespace

Tensor<double> shifted_mask(const WindowSpec& spec) {
  spec.validate();
  if (spec.shift == 0) throw ContractError("shifted_mask: shift is zero, no mask needed");
  return region_mask(spec, shift_region_labels(spec),
                     std::vector<bool>(spec.grid_h * spec.grid_w, false));
}

WindowLayout make_window_layout(std::size_t grid_h, std::size_t grid_w, std::size_t window,
                                bool shifted) {
  if (grid_h == 0 || grid_w == 0 || window == 0) {
    throw ContractError("window layout: extents and window must be positive");
  }
  WindowLayout layout;
  layout.grid_h = grid_h;
  layout.grid_w = grid_w;
  const std::size_t hp = (grid_h + window - 1) / window * window;
  const std::size_t wp = (grid_w + window - 1) / window * window;
  const bool single = hp == window && wp == window;
  layout.spec = WindowSpec{hp, wp, window, shifted && !single ? window / 2 : 0};
  layout.spec.validate();

  const std::size_t s = layout.spec.shift, m = window, n = m * m;
  const std::size_t wc = wp / m;
  layout.origin.assign(layout.spec.num_windows() * n, ad::kZeroRow);
  std::vector<bool> is_pad(hp * wp);
  for (std::size_t rs = 0; rs < hp; ++rs) {
    for (std::size_t cs = 0; cs < wp; ++cs) {
      // Shifted position (rs, cs) holds the padded-grid token at (r, c).
      const std::size_t r = (rs + s) % hp, c = (cs + s) % wp;
      const bool pad = r >= grid_h || c >= grid_w;
      is_pad[rs * wp + cs] = pad;
      const std::size_t w = (rs / m) * wc + cs / m;
      const std::size_t slot = (rs % m) * m + cs % m;
      layout.origin[w * n + slot] = pad ? ad::kZeroRow : r * grid_w + c;
    }
  }
  if (s > 0 || layout.padded()) {
    layout.mask = region_mask(layout.spec, shift_region_labels(layout.spec), is_pad);
  }
  return layout;
}

template <typename T>
Var<T> window_attention(Var<T> x, const WindowLayout& layout, const MhaWeights<T>& w,
                        std::size_t num_heads, std::vector<double>* received) {
  const std::size_t n_tokens = layout.grid_h * layout.grid_w;
  if (x.value().rank() != 2 || x.shape()[0] != n_tokens) {
    throw DimensionError("window_attention: tokens " + shape_string(x.shape()) + " for grid " +
                         std::to_string(layout.grid_h) + "x" + std::to_string(layout.grid_w));
  }
  const std::size_t c = x.shape()[1];
  const WindowSpec& spec = layout.spec;
  const auto shift = static_cast<std::ptrdiff_t>(spec.shift);

  // Zero-pad up to window multiples.
  Var<T> grid = x;
  if (layout.padded()) {
    std::vector<std::size_t> rows(spec.grid_h * spec.grid_w, ad::kZeroRow);
    for (std::size_t r = 0; r < layout.grid_h; ++r) {
      for (std::size_t q = 0; q < layout.grid_w; ++q) rows[r * spec.grid_w + q] = r * layout.grid_w + q;
    }
    grid = ad::gather_rows(grid, std::move(rows));
  }
  grid = ad::reshape(grid, {spec.grid_h, spec.grid_w, c});
  if (shift) grid = cyclic_shift(grid, -shift);
  Var<T> windows = window_partition(grid, spec);

  Tensor<T> mask;
  if (!layout.mask.empty()) mask = layout.mask.template cast<T>();
  Tensor<T> weights;
  windows = multi_head_attention(windows, w, num_heads, layout.mask.empty() ? nullptr : &mask,
                                 received ? &weights : nullptr);

  grid = window_reverse(windows, spec);
  if (shift) grid = cyclic_shift(grid, shift);
  Var<T> out = ad::reshape(grid, {spec.grid_h * spec.grid_w, c});
  if (layout.padded()) {
    std::vector<std::size_t> rows(n_tokens);
    for (std::size_t r = 0; r < layout.grid_h; ++r) {
      for (std::size_t q = 0; q < layout.grid_w; ++q) rows[r * layout.grid_w + q] = r * spec.grid_w + q;
    }
    out = ad::gather_rows(out, std::move(rows));
  }

  if (received) {
    const std::size_t nw = spec.num_windows(), slots = spec.window_tokens();
    received->assign(n_tokens, 0.0);
    for (std::size_t wi = 0; wi < nw; ++wi) {
      std::size_t real_queries = 0;
      for (std::size_t i = 0; i < slots; ++i) real_queries += layout.origin[wi * slots + i] != ad::kZeroRow;
      const double norm = 1.0 / static_cast<double>(real_queries * num_heads);
      for (std::size_t j = 0; j < slots; ++j) {
        const std::size_t tok = layout.origin[wi * slots + j];
        if (tok == ad::kZeroRow) continue;
        double total = 0.0;
        for (std::size_t hd = 0; hd < num_heads; ++hd) {
          for (std::size_t i = 0; i < slots; ++i) {
            if (layout.origin[wi * slots + i] == ad::kZeroRow) continue;
            total += static_cast<double>(weights(wi, hd, i, j));
          }
        }
        (*received)[tok] = total * norm;
      }
    }
  }
  return out;
}

template <typename T>
Var<T> window_block(const Scope<T>& p, Var<T> x, const WindowLayout& layout,
                    std::size_t num_heads, std::vector<double>* received) {
  Var<T> a = window_attention(layer_norm(p / "norm1", x), layout, bind_mha(p / "attn"),
                              num_heads, received);
  x = ad::add(x, a);
  return ad::add(x, mlp(p / "mlp", layer_norm(p / "norm2", x)));
}

template <typename T>
Var<T> swmsa_block_pair(const Scope<T>& p, Var<T> x, std::size_t grid_h, std::size_t grid_w,
                        std::size_t window, std::size_t num_heads, std::vector<double>* received) {
  const WindowLayout regular = make_window_layout(grid_h, grid_w, window, false);
  const WindowLayout shifted = make_window_layout(grid_h, grid_w, window, true);
  x = window_block(p / "wmsa", x, regular, num_heads);
  return window_block(p / "swmsa", x, shifted, num_heads, received);
}

void declare_window_block(const ParamInit& init, std::size_t dim, std::size_t mlp_ratio) {
  declare_layer_norm(init / "norm1", dim);
  declare_mha(init / "attn", dim);
  declare_layer_norm(init / "norm2", dim);
  declare_mlp(init / "mlp", dim, dim * mlp_ratio);
}

void declare_swmsa_block_pair(const ParamInit& init, std::size_t dim, std::size_t mlp_ratio) {
  declare_window_block(init / "wmsa", dim, mlp_ratio);
  declare_window_block(init / "swmsa", dim, mlp_ratio);
}

#define STPOSE_INSTANTIATE_ATTENTION(T)                                                     \
  template Var<T> scaled_dot_attention(Var<T>, Var<T>, Var<T>, const Tensor<T>*, Tensor<T>*); \
  template Var<T> multi_head_attention(Var<T>, const MhaWeights<T>&, std::size_t,           \
                                       const Tensor<T>*, Tensor<T>*);                       \
  template Tensor<T> window_partition(const Tensor<T>&, const WindowSpec&);                 \
  template Tensor<T> window_reverse(const Tensor<T>&, const WindowSpec&);                   \
  template Var<T> window_partition(Var<T>, const WindowSpec&);                              \
  template Var<T> window_reverse(Var<T>, const WindowSpec&);                                \
  template Tensor<T> cyclic_shift(const Tensor<T>&, std::ptrdiff_t);                        \
  template Var<T> cyclic_shift(Var<T>, std::ptrdiff_t);                                     \
  template Var<T> window_attention(Var<T>, const WindowLayout&, const MhaWeights<T>&,       \
                                   std::size_t, std::vector<double>*);                      \
  template Var<T> window_block(const Scope<T>&, Var<T>, const WindowLayout&, std::size_t,   \
                               std::vector<double>*);                                       \
  template Var<T> swmsa_block_pair(const Scope<T>&, Var<T>, std::size_t, std::size_t,       \
                                   std::size_t, std::size_t, std::vector<double>*);

STPOSE_INSTANTIATE_ATTENTION(float)
STPOSE_INSTANTIATE_ATTENTION(double)

#undef STPOSE_INSTANTIATE_ATTENTION

}  // namespace stpose
