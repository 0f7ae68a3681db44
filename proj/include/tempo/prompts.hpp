#ifndef TEMPO_PROMPTS_HPP
#define TEMPO_PROMPTS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/sgd.hpp"
#include "tempo/vit.hpp"

namespace tempo {

// Mean of the refined temporal class token and prompt rows, plus the refined
// spatial class token. Both [1 x D], post final-norm.
struct RefinedTokens {
  Tensor temporal_avg;
  Tensor spatial_cls;
};

enum class AdaptMode { kPrompt, kFullFinetune };

// The trainable bundle grafted onto one frozen backbone at one resolution:
// transformation over all frame-patch tokens, a temporal class token, and a
// temporal head. Everything else stays frozen.
struct PromptAdapter {
  std::int64_t resolution = 32;
  std::int64_t t_train = 8;
  std::int64_t num_classes = 8;  // C_t
  bool with_mlp = false;         // optional MLP sublayer in the transformation
  // Sinusoidal frame-index encoding on the transformation inputs. Without it
  // the prompts are order-agnostic and time-reversed motion pairs collapse.
  bool with_temporal_pos = true;
  double temporal_pos_scale = 0.3;

  LayerNormParams trans_ln;
  Mhsa trans_attn;
  LayerNormParams trans_ln2;  // used only when with_mlp
  Linear trans_fc1, trans_fc2;

  Tensor temporal_cls;   // [1 x D]
  Linear temporal_head;  // D -> C_t

  Tensor pos_embed;  // frozen positional table for this resolution, [(N+1) x D]
  std::uint64_t backbone_hash = 0;

  static PromptAdapter init(const FrozenBackbone& bb, std::int64_t resolution,
                            std::int64_t num_classes, std::uint64_t seed,
                            std::int64_t t_train = 8, bool with_mlp = false) {
    if (resolution % bb.cfg.patch != 0)
      throw ConfigError("PromptAdapter: resolution not divisible by patch size");
    const std::int64_t d = bb.cfg.embed_dim;
    PromptAdapter ad;
    ad.resolution = resolution;
    ad.t_train = t_train;
    ad.num_classes = num_classes;
    ad.with_mlp = with_mlp;
    Rng rng(seed);
    ad.trans_ln = LayerNormParams::init(d);
    ad.trans_attn = Mhsa::init(d, bb.cfg.heads, rng);
    ad.trans_ln2 = LayerNormParams::init(d);
    ad.trans_fc1 = Linear::init(d, 4 * d, rng);
    ad.trans_fc2 = Linear::init(4 * d, d, rng);
    ad.temporal_cls = Tensor::randn({1, d}, rng, 0.02, true);
    ad.temporal_head = Linear::init(d, num_classes, rng);
    ad.pos_embed = interpolate_pos_embed(bb, resolution);
    ad.backbone_hash = bb.param_hash();
    return ad;
  }

  NamedParams named_params() const {
    NamedParams out;
    trans_ln.collect("trans.ln", out);
    trans_attn.collect("trans.attn", out);
    if (with_mlp) {
      trans_ln2.collect("trans.ln2", out);
      trans_fc1.collect("trans.fc1", out);
      trans_fc2.collect("trans.fc2", out);
    }
    out.emplace_back("temporal_cls", temporal_cls);
    temporal_head.collect("temporal_head", out);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }
};

namespace detail {

// fixed sinusoidal encoding of a frame index, [d]
inline Tensor temporal_encoding(std::int64_t f, std::int64_t d, double scale) {
  std::vector<double> v(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
    const double angle = static_cast<double>(f) * freq;
    v[static_cast<std::size_t>(j)] = scale * (j % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return Tensor::from({d}, std::move(v));
}

// spatial patch tokens of one frame with positional embeddings added
inline Tensor frame_tokens(const FrozenBackbone& bb, const PromptAdapter& ad,
                           const Tensor& frame, std::int64_t frame_index) {
  if (frame.dim(1) != ad.resolution || frame.dim(2) != ad.resolution)
    throw DimensionError("frame resolution " + shape_str(frame.shape()) +
                         " does not match adapter resolution " + std::to_string(ad.resolution));
  Tensor tokens = patchify_any(bb, frame);
  Tensor grid_pos = slice_rows(ad.pos_embed, 1, tokens.dim(0));
  tokens = add(tokens, grid_pos);
  if (ad.with_temporal_pos)
    tokens = add_rowvec(tokens, temporal_encoding(frame_index, bb.cfg.embed_dim,
                                                  ad.temporal_pos_scale));
  return tokens;
}

}  // namespace detail

// The transformation: patch-embed every frame, run one pre-norm
// self-attention block jointly over all t*N tokens, then mean-pool each
// frame's N spatial positions down to one prompt vector per frame.
inline Tensor temporal_transform(const FrozenBackbone& bb, const PromptAdapter& ad,
                                 const VideoClip& clip) {
  const std::int64_t t = clip.t();
  const std::int64_t n = bb.cfg.num_patches(ad.resolution);
  std::vector<Tensor> per_frame;
  per_frame.reserve(static_cast<std::size_t>(t));
  for (std::int64_t f = 0; f < t; ++f)
    per_frame.push_back(detail::frame_tokens(bb, ad, clip.frame(f), f));
  Tensor x = concat_rows(per_frame);  // [t*N x D]
  x = add(x, ad.trans_attn(ad.trans_ln(x)));
  if (ad.with_mlp) x = add(x, ad.trans_fc2(gelu(ad.trans_fc1(ad.trans_ln2(x)))));
  std::vector<Tensor> prompts;
  prompts.reserve(static_cast<std::size_t>(t));
  for (std::int64_t f = 0; f < t; ++f)
    prompts.push_back(reshape(mean_rows(slice_rows(x, f * n, n)), {1, bb.cfg.embed_dim}));
  return concat_rows(prompts);  // [t x D]
}

// Differentiable variant used by attacks: frames arrive as live graph
// tensors rather than a VideoClip.
inline Tensor temporal_transform_frames(const FrozenBackbone& bb, const PromptAdapter& ad,
                                        const std::vector<Tensor>& frames) {
  const std::int64_t t = static_cast<std::int64_t>(frames.size());
  const std::int64_t n = bb.cfg.num_patches(ad.resolution);
  std::vector<Tensor> per_frame;
  per_frame.reserve(frames.size());
  for (std::int64_t f = 0; f < t; ++f)
    per_frame.push_back(detail::frame_tokens(bb, ad, frames[static_cast<std::size_t>(f)], f));
  Tensor x = concat_rows(per_frame);
  x = add(x, ad.trans_attn(ad.trans_ln(x)));
  if (ad.with_mlp) x = add(x, ad.trans_fc2(gelu(ad.trans_fc1(ad.trans_ln2(x)))));
  std::vector<Tensor> prompts;
  for (std::int64_t f = 0; f < t; ++f)
    prompts.push_back(reshape(mean_rows(slice_rows(x, f * n, n)), {1, bb.cfg.embed_dim}));
  return concat_rows(prompts);
}

// Joint forward pass over [temporal_cls, prompts, spatial_cls, frame
// patches]; spatial tokens carry positional embeddings, prompt slots do not.
inline RefinedTokens forward_video_frames(const FrozenBackbone& bb, const PromptAdapter& ad,
                                          const std::vector<Tensor>& frames,
                                          std::int64_t frame_index) {
  const std::int64_t t = static_cast<std::int64_t>(frames.size());
  if (frame_index < 0 || frame_index >= t)
    throw ContractError("forward_video: frame_index " + std::to_string(frame_index) +
                        " out of [0, " + std::to_string(t) + ")");
  Tensor prompts = temporal_transform_frames(bb, ad, frames);
  Tensor spatial = concat_rows({bb.cls_token, patchify_any(bb, frames[frame_index])});
  spatial = add(spatial, ad.pos_embed);
  Tensor tokens = concat_rows({ad.temporal_cls, prompts, spatial});
  Tensor refined = forward_tokens(bb, tokens);
  RefinedTokens out;
  out.temporal_avg = reshape(
      mean_rows(bb.final_norm(slice_rows(refined, 0, 1 + t))), {1, bb.cfg.embed_dim});
  out.spatial_cls = bb.final_norm(slice_rows(refined, 1 + t, 1));
  return out;
}

inline RefinedTokens forward_video(const FrozenBackbone& bb, const PromptAdapter& ad,
                                   const VideoClip& clip, std::int64_t frame_index) {
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(clip.t()));
  for (std::int64_t f = 0; f < clip.t(); ++f) frames.push_back(clip.frame(f));
  return forward_video_frames(bb, ad, frames, frame_index);
}

inline Tensor temporal_logits(const PromptAdapter& ad, const RefinedTokens& refined) {
  return reshape(ad.temporal_head(refined.temporal_avg), {ad.num_classes});
}

// Paper-default schedule for adapter training.
inline TrainSchedule default_adapt_schedule() {
  TrainSchedule s;
  s.epochs = 15;
  s.lr = 0.005;
  s.momentum = 0.9;
  s.batch = 64;
  s.decay_epochs = {11, 14};
  s.decay_factor = 0.1;
  return s;
}

// Trains the adapter (and, in full-finetune mode, also the backbone) with
// SGD on cross-entropy over temporal logits. The frame fed to the spatial
// branch is resampled uniformly per example per epoch.
inline std::pair<PromptAdapter, TrainLog> adapt_prompts(
    FrozenBackbone& bb, const VideoDataset& ds, const TrainSchedule& sched,
    std::int64_t num_classes, std::uint64_t seed, AdaptMode mode = AdaptMode::kPrompt,
    std::int64_t resolution = -1, bool with_mlp = false) {
  if (ds.clips.empty()) throw ConfigError("adapt_prompts: empty dataset");
  for (const auto& c : ds.clips)
    if (c.label < 0 || c.label >= num_classes)
      throw ConfigError("adapt_prompts: label out of range for C_t = " +
                        std::to_string(num_classes));
  if (mode == AdaptMode::kFullFinetune && bb.immutable_by_policy)
    throw ConfigError("adapt_prompts: backbone is immutable-by-policy; full finetune refused");
  if (!bb.frozen && mode == AdaptMode::kPrompt)
    throw ContractError("adapt_prompts: backbone must be frozen in prompt mode");
  if (resolution < 0) resolution = ds.clips.front().height();

  PromptAdapter ad = PromptAdapter::init(bb, resolution, num_classes, splitmix64(seed),
                                         ds.clips.front().t(), with_mlp);
  std::vector<Tensor> train_params = ad.params();
  if (mode == AdaptMode::kFullFinetune) {
    // the frozen-hash invariant is intentionally waived here
    bb.set_frozen(false);
    for (auto& p : bb.params()) train_params.push_back(p);
  }
  Sgd opt(train_params, sched.momentum);
  Rng rng = Rng(seed).split(2);
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
      std::vector<Tensor> logit_rows;
      std::vector<std::int64_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& clip = ds.clips[order[i]];
        const std::int64_t fi = rng.uniform_int(clip.t());
        Tensor logits = temporal_logits(ad, forward_video(bb, ad, clip, fi));
        if (argmax(logits.data()) == clip.label) ++correct;
        logit_rows.push_back(reshape(logits, {1, num_classes}));
        labels.push_back(clip.label);
      }
      Tensor loss = cross_entropy(concat_rows(logit_rows), labels);
      total_loss += loss.item() * static_cast<double>(end - start);
      opt.zero_grad();
      backward(loss);
      opt.step(lr);
    }
    log.epoch_loss.push_back(total_loss / static_cast<double>(order.size()));
    log.epoch_acc.push_back(100.0 * static_cast<double>(correct) /
                            static_cast<double>(order.size()));
  }
  if (mode == AdaptMode::kFullFinetune) bb.set_frozen(true);
  return {std::move(ad), std::move(log)};
}

// Scale-space adaptation for static images: one adapter per resolution,
// each trained on the images wrapped as t = 1 clips at that scale, labels
// reused (C_t = C_s).
inline std::map<std::int64_t, PromptAdapter> adapt_scale_space(
    FrozenBackbone& bb, const VideoDataset& images, const std::vector<std::int64_t>& resolutions,
    const TrainSchedule& sched, std::uint64_t seed) {
  for (auto res : resolutions)
    if (res % bb.cfg.patch != 0)
      throw ConfigError("adapt_scale_space: resolution " + std::to_string(res) +
                        " not divisible by patch size");
  auto scaled = multiscale_variants(images, resolutions);
  std::map<std::int64_t, PromptAdapter> out;
  for (auto res : resolutions) {
    auto [ad, log] = adapt_prompts(bb, scaled.at(res), sched, bb.cfg.num_classes,
                                   splitmix64(seed ^ static_cast<std::uint64_t>(res)),
                                   AdaptMode::kPrompt, res);
    out.emplace(res, std::move(ad));
  }
  return out;
}

}  // namespace tempo

#endif  // TEMPO_PROMPTS_HPP
