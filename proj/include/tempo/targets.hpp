#ifndef TEMPO_TARGETS_HPP
#define TEMPO_TARGETS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/sgd.hpp"
#include "tempo/vit.hpp"

namespace tempo {

// Victim models are architecturally disjoint from the surrogate: their own
// patch size, depth and width, initialized from their own seeds.
struct TargetConfig {
  std::int64_t depth = 3;
  std::int64_t embed_dim = 48;
  std::int64_t heads = 4;
  std::int64_t patch = 4;
  std::int64_t resolution = 32;
  std::int64_t channels = 3;
  std::int64_t num_classes = 8;
  std::int64_t t_max = 16;  // temporal positional table size

  void validate() const {
    if (resolution % patch != 0)
      throw ConfigError("TargetConfig: resolution not divisible by patch");
    if (embed_dim % heads != 0)
      throw ConfigError("TargetConfig: embed_dim not divisible by heads");
    if (depth < 1 || t_max < 1) throw ConfigError("TargetConfig: bad depth or t_max");
  }
  std::int64_t side() const { return resolution / patch; }
  std::int64_t num_patches() const { return side() * side(); }
};

// One divided space-time block: temporal attention mixes the t tokens at a
// fixed spatial index, spatial attention mixes the N tokens of a fixed frame
// (plus the class token), then a shared MLP.
struct DividedBlock {
  LayerNormParams ln_t, ln_s, ln_m;
  Mhsa attn_t, attn_s;
  Linear fc1, fc2;

  static DividedBlock init(std::int64_t d, std::int64_t heads, Rng& rng) {
    DividedBlock b;
    b.ln_t = LayerNormParams::init(d);
    b.ln_s = LayerNormParams::init(d);
    b.ln_m = LayerNormParams::init(d);
    b.attn_t = Mhsa::init(d, heads, rng);
    b.attn_s = Mhsa::init(d, heads, rng);
    b.fc1 = Linear::init(d, 4 * d, rng);
    b.fc2 = Linear::init(4 * d, d, rng);
    return b;
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    ln_t.collect(prefix + ".ln_t", out);
    attn_t.collect(prefix + ".attn_t", out);
    ln_s.collect(prefix + ".ln_s", out);
    attn_s.collect(prefix + ".attn_s", out);
    ln_m.collect(prefix + ".ln_m", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

struct DividedSTModel {
  TargetConfig cfg;
  Linear patch_embed;
  Tensor cls_token;     // [1 x D]
  Tensor pos_spatial;   // [N x D]
  Tensor pos_temporal;  // [t_max x D]
  std::vector<DividedBlock> blocks;
  LayerNormParams final_norm;
  Linear head;

  static DividedSTModel init(const TargetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DividedSTModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const std::int64_t d = cfg.embed_dim;
    m.patch_embed = Linear::init(cfg.channels * cfg.patch * cfg.patch, d, rng);
    m.cls_token = Tensor::randn({1, d}, rng, 0.02, true);
    m.pos_spatial = Tensor::randn({cfg.num_patches(), d}, rng, 0.02, true);
    m.pos_temporal = Tensor::randn({cfg.t_max, d}, rng, 0.02, true);
    for (std::int64_t i = 0; i < cfg.depth; ++i)
      m.blocks.push_back(DividedBlock::init(d, cfg.heads, rng));
    m.final_norm = LayerNormParams::init(d);
    m.head = Linear::init(d, cfg.num_classes, rng);
    return m;
  }

  NamedParams named_params() const {
    NamedParams out;
    patch_embed.collect("patch_embed", out);
    out.emplace_back("cls_token", cls_token);
    out.emplace_back("pos_spatial", pos_spatial);
    out.emplace_back("pos_temporal", pos_temporal);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect("block" + std::to_string(i), out);
    final_norm.collect("final_norm", out);
    head.collect("head", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  std::uint64_t param_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : named_params()) {
      h = fnv1a64(name.data(), name.size(), h);
      h = hash_doubles(t.data(), h);
    }
    return h;
  }
};

namespace detail {

// column-wise mean with correctly rounded summation, so pooling is exactly
// invariant to any row permutation
inline Tensor exact_mean_rows(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("exact_mean_rows: need 2-d tensor");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> col(static_cast<std::size_t>(m));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t r = 0; r < m; ++r)
      col[static_cast<std::size_t>(r)] = a.data()[static_cast<std::size_t>(r * n + j)];
    out[static_cast<std::size_t>(j)] =
        exact_sum(col.data(), col.size()) / static_cast<double>(m);
  }
  return make_op({1, n}, std::move(out), {a}, [m, n](Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t r = 0; r < m; ++r)
      for (std::int64_t j = 0; j < n; ++j)
        p.grad[static_cast<std::size_t>(r * n + j)] +=
            nd.grad[static_cast<std::size_t>(j)] / static_cast<double>(m);
  });
}

// temporal sublayer: residual attention over the t rows at each spatial index
inline Tensor divided_temporal(const DividedBlock& blk, const Tensor& x, std::int64_t t,
                               std::int64_t n) {
  Tensor y = blk.ln_t(x);
  std::vector<Tensor> per_pos;
  per_pos.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t));
    for (std::int64_t f = 0; f < t; ++f) idx[static_cast<std::size_t>(f)] = f * n + k;
    per_pos.push_back(blk.attn_t(gather_rows(y, std::move(idx))));
  }
  // per_pos is position-major [n*t x D]; route back to frame-major order
  std::vector<std::int64_t> back(static_cast<std::size_t>(t * n));
  for (std::int64_t f = 0; f < t; ++f)
    for (std::int64_t k = 0; k < n; ++k)
      back[static_cast<std::size_t>(f * n + k)] = k * t + f;
  return add(x, gather_rows(concat_rows(per_pos), std::move(back)));
}

// spatial sublayer: residual attention over [cls, frame tokens] per frame;
// the class token update is the mean of its per-frame refinements
inline std::pair<Tensor, Tensor> divided_spatial(const DividedBlock& blk, const Tensor& cls,
                                                 const Tensor& x, std::int64_t t,
                                                 std::int64_t n) {
  Tensor w = blk.ln_s(concat_rows({cls, x}));
  Tensor cls_row = slice_rows(w, 0, 1);
  std::vector<Tensor> cls_outs, tok_outs;
  cls_outs.reserve(static_cast<std::size_t>(t));
  tok_outs.reserve(static_cast<std::size_t>(t));
  for (std::int64_t f = 0; f < t; ++f) {
    Tensor o = blk.attn_s(concat_rows({cls_row, slice_rows(w, 1 + f * n, n)}));
    cls_outs.push_back(slice_rows(o, 0, 1));
    tok_outs.push_back(slice_rows(o, 1, n));
  }
  Tensor cls_delta = reshape(mean_rows(concat_rows(cls_outs)), {1, cls.dim(1)});
  return {add(cls, cls_delta), add(x, concat_rows(tok_outs))};
}

}  // namespace detail

// Forward pass over live frame tensors, [t x N] patch tokens plus one class
// token; logits come from the refined class token.
inline Tensor forward_divided_frames(const DividedSTModel& m, const std::vector<Tensor>& frames) {
  const std::int64_t t = static_cast<std::int64_t>(frames.size());
  const std::int64_t n = m.cfg.num_patches();
  const std::int64_t d = m.cfg.embed_dim;
  if (t < 1) throw DimensionError("forward_divided: empty clip");
  if (t > m.cfg.t_max)
    throw ConfigError("forward_divided: clip length " + std::to_string(t) +
                      " exceeds t_max " + std::to_string(m.cfg.t_max));
  std::vector<Tensor> per_frame;
  per_frame.reserve(frames.size());
  for (std::int64_t f = 0; f < t; ++f) {
    const Tensor& img = frames[static_cast<std::size_t>(f)];
    if (img.ndim() != 3 || img.dim(0) != m.cfg.channels || img.dim(1) != m.cfg.resolution ||
        img.dim(2) != m.cfg.resolution)
      throw DimensionError("forward_divided: bad frame shape " + shape_str(img.shape()));
    Tensor tok = m.patch_embed(scale(extract_patches(img, m.cfg.patch), 1.0 / 255.0));
    tok = add(tok, m.pos_spatial);
    tok = add_rowvec(tok, reshape(slice_rows(m.pos_temporal, f, 1), {d}));
    per_frame.push_back(tok);
  }
  Tensor x = concat_rows(per_frame);  // [t*N x D], frame-major
  Tensor cls = m.cls_token;
  for (const auto& blk : m.blocks) {
    x = detail::divided_temporal(blk, x, t, n);
    auto [c2, x2] = detail::divided_spatial(blk, cls, x, t, n);
    Tensor w = blk.ln_m(concat_rows({c2, x2}));
    Tensor delta = blk.fc2(gelu(blk.fc1(w)));
    cls = add(c2, slice_rows(delta, 0, 1));
    x = add(x2, slice_rows(delta, 1, t * n));
  }
  return reshape(m.head(m.final_norm(cls)), {m.cfg.num_classes});
}

// Non-attention victim: linear patch embedding, one global mean over all
// t*N tokens, then a two-layer MLP head. Exactly invariant to any
// permutation of frames and patches.
struct FrameMeanMLP {
  TargetConfig cfg;
  Linear patch_embed;
  Linear fc1, fc2;

  static FrameMeanMLP init(const TargetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FrameMeanMLP m;
    m.cfg = cfg;
    Rng rng(seed);
    const std::int64_t d = cfg.embed_dim;
    m.patch_embed = Linear::init(cfg.channels * cfg.patch * cfg.patch, d, rng);
    m.fc1 = Linear::init(d, 4 * d, rng);
    m.fc2 = Linear::init(4 * d, cfg.num_classes, rng);
    return m;
  }

  NamedParams named_params() const {
    NamedParams out;
    patch_embed.collect("patch_embed", out);
    fc1.collect("fc1", out);
    fc2.collect("fc2", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  std::uint64_t param_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : named_params()) {
      h = fnv1a64(name.data(), name.size(), h);
      h = hash_doubles(t.data(), h);
    }
    return h;
  }
};

inline Tensor forward_framemean_frames(const FrameMeanMLP& m, const std::vector<Tensor>& frames) {
  if (frames.empty()) throw DimensionError("forward_framemean: empty clip");
  std::vector<Tensor> per_frame;
  per_frame.reserve(frames.size());
  for (const auto& img : frames) {
    if (img.ndim() != 3 || img.dim(0) != m.cfg.channels || img.dim(1) != m.cfg.resolution ||
        img.dim(2) != m.cfg.resolution)
      throw DimensionError("forward_framemean: bad frame shape " + shape_str(img.shape()));
    per_frame.push_back(m.patch_embed(scale(extract_patches(img, m.cfg.patch), 1.0 / 255.0)));
  }
  Tensor pooled = detail::exact_mean_rows(concat_rows(per_frame));
  return reshape(m.fc2(gelu(m.fc1(pooled))), {m.cfg.num_classes});
}

using TargetModel = std::variant<DividedSTModel, FrameMeanMLP>;

inline Tensor forward_target_frames(const TargetModel& m, const std::vector<Tensor>& frames) {
  return std::visit(
      [&](const auto& model) {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, DividedSTModel>)
          return forward_divided_frames(model, frames);
        else
          return forward_framemean_frames(model, frames);
      },
      m);
}

inline Tensor forward_target(const TargetModel& m, const VideoClip& clip) {
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(clip.t()));
  for (std::int64_t f = 0; f < clip.t(); ++f) frames.push_back(clip.frame(f));
  return forward_target_frames(m, frames);
}

inline std::vector<Tensor> target_params(const TargetModel& m) {
  return std::visit([](const auto& model) { return model.params(); }, m);
}

inline NamedParams target_named_params(const TargetModel& m) {
  return std::visit([](const auto& model) { return model.named_params(); }, m);
}

inline std::uint64_t target_param_hash(const TargetModel& m) {
  return std::visit([](const auto& model) { return model.param_hash(); }, m);
}

inline std::string target_kind(const TargetModel& m) {
  return std::holds_alternative<DividedSTModel>(m) ? "divided_st" : "frame_mean_mlp";
}

inline TrainSchedule default_target_schedule() {
  TrainSchedule s;
  s.epochs = 20;
  s.lr = 0.01;
  s.momentum = 0.9;
  s.batch = 32;
  s.decay_epochs = {14, 18};
  s.decay_factor = 0.1;
  return s;
}

inline std::pair<TargetModel, TrainLog> train_target(const std::string& model_kind,
                                                     const VideoDataset& ds,
                                                     const TrainSchedule& sched,
                                                     std::uint64_t seed,
                                                     TargetConfig cfg = TargetConfig{}) {
  if (ds.clips.empty()) throw ConfigError("train_target: empty dataset");
  cfg.num_classes = ds.num_classes;
  for (const auto& c : ds.clips)
    if (c.label < 0 || c.label >= cfg.num_classes)
      throw ConfigError("train_target: label out of range");
  TargetModel model = [&]() -> TargetModel {
    if (model_kind == "divided_st") return DividedSTModel::init(cfg, splitmix64(seed));
    if (model_kind == "frame_mean_mlp") return FrameMeanMLP::init(cfg, splitmix64(seed));
    throw ConfigError("train_target: unknown model kind '" + model_kind + "'");
  }();
  Sgd opt(target_params(model), sched.momentum);
  Rng rng = Rng(seed).split(3);
  TrainLog log;
  std::vector<std::size_t> order(ds.clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::int64_t epoch = 1; epoch <= sched.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);
    const double lr = sched.lr_at(epoch);
    double total_loss = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += sched.batch) {
      const std::size_t end = std::min(order.size(), start + sched.batch);
      std::vector<Tensor> rows;
      std::vector<std::int64_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& clip = ds.clips[order[i]];
        Tensor logits = forward_target(model, clip);
        if (argmax(logits.data()) == clip.label) ++correct;
        rows.push_back(reshape(logits, {1, cfg.num_classes}));
        labels.push_back(clip.label);
      }
      Tensor loss = cross_entropy(concat_rows(rows), labels);
      total_loss += loss.item() * static_cast<double>(end - start);
      opt.zero_grad();
      backward(loss);
      opt.step(lr);
    }
    log.epoch_loss.push_back(total_loss / static_cast<double>(order.size()));
    log.epoch_acc.push_back(100.0 * static_cast<double>(correct) /
                            static_cast<double>(order.size()));
  }
  return {std::move(model), std::move(log)};
}

}  // namespace tempo

#endif  // TEMPO_TARGETS_HPP
