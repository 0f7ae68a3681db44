#ifndef TEMPO_ATTACK_HPP
#define TEMPO_ATTACK_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/nn.hpp"
#include "tempo/prompts.hpp"
#include "tempo/vit.hpp"

namespace tempo {

// One white-box member the attacker differentiates through: a frozen
// backbone, optionally with its prompt adapter. A bare backbone (adapter ==
// nullptr) is the prompts-off ablation and supports only the
// self-supervised objective.
struct SurrogateMember {
  const FrozenBackbone* backbone = nullptr;
  const PromptAdapter* adapter = nullptr;

  std::int64_t resolution() const {
    return adapter ? adapter->resolution : backbone->cfg.resolution;
  }
};

struct AttackConfig {
  std::string method = "pgd";  // fgsm | pgd | mim | dim
  double epsilon = 16.0;       // pixels, [0,255] scale
  double alpha = 2.0;          // step size, pixels
  std::int64_t steps = 20;
  double mu = 1.0;              // MIM momentum decay
  double diversity_prob = 0.0;  // DIM only
  double div_min_scale = 0.9, div_max_scale = 1.0;
  std::string loss_mode = "joint";  // joint | supervised_only | self_supervised_only
  std::string frame_policy = "resample_per_step";  // or "fixed"
  std::int64_t fixed_frame = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (method != "fgsm" && method != "pgd" && method != "mim" && method != "dim")
      throw ConfigError("AttackConfig: unknown method '" + method + "'");
    if (loss_mode != "joint" && loss_mode != "supervised_only" &&
        loss_mode != "self_supervised_only")
      throw ConfigError("AttackConfig: unknown loss_mode '" + loss_mode + "'");
    if (frame_policy != "resample_per_step" && frame_policy != "fixed")
      throw ConfigError("AttackConfig: unknown frame_policy '" + frame_policy + "'");
    if (epsilon < 0.0) throw ConfigError("AttackConfig: epsilon must be >= 0");
    if (steps < 1) throw ConfigError("AttackConfig: steps must be >= 1");
    if (alpha < 0.0) throw ConfigError("AttackConfig: alpha must be >= 0");
    if (mu < 0.0) throw ConfigError("AttackConfig: mu must be >= 0");
    if (method == "fgsm" && (steps != 1 || alpha != epsilon))
      throw ConfigError("AttackConfig: FGSM requires steps == 1 and alpha == epsilon");
    if (diversity_prob < 0.0 || diversity_prob > 1.0)
      throw ConfigError("AttackConfig: diversity_prob must be in [0, 1]");
    if (diversity_prob > 0.0 && method != "dim")
      throw ConfigError("AttackConfig: diversity_prob > 0 only valid for DIM");
    if (div_min_scale <= 0.0 || div_min_scale > div_max_scale || div_max_scale > 1.0)
      throw ConfigError("AttackConfig: bad diversity scale range");
  }
};

struct AttackResult {
  VideoClip adversarial;
  std::vector<double> loss_trace;  // initial, one per step, final
  double linf_norm = 0.0;
  bool success_on_surrogate = false;
};

// Per-pixel projection into the epsilon ball around clean, intersected with
// the valid pixel range.
inline Tensor project_linf(const Tensor& adv, const Tensor& clean, double epsilon) {
  if (adv.shape() != clean.shape())
    throw DimensionError("project_linf: shape mismatch " + shape_str(adv.shape()) + " vs " +
                         shape_str(clean.shape()));
  std::vector<double> out(adv.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = clean.data()[i];
    out[i] = std::min(std::max(out[i], c - epsilon), c + epsilon);
    out[i] = std::min(std::max(out[i], 0.0), 255.0);
  }
  return Tensor::from(adv.shape(), std::move(out));
}

namespace detail {

// zero-pad [c x h x w] into [c x H x W] with the source at offset (oy, ox)
inline Tensor pad_image(const Tensor& img, std::int64_t H, std::int64_t W, std::int64_t oy,
                        std::int64_t ox) {
  if (img.ndim() != 3) throw DimensionError("pad_image: need [c x h x w]");
  const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (oy < 0 || ox < 0 || oy + h > H || ox + w > W)
    throw DimensionError("pad_image: source does not fit the padded canvas");
  std::vector<double> out(static_cast<std::size_t>(c * H * W), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        out[static_cast<std::size_t>(ch * H * W + (oy + y) * W + ox + x)] =
            img.data()[static_cast<std::size_t>(ch * h * w + y * w + x)];
  return make_op({c, H, W}, std::move(out), {img}, [c, h, w, H, W, oy, ox](Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          p.grad[static_cast<std::size_t>(ch * h * w + y * w + x)] +=
              nd.grad[static_cast<std::size_t>(ch * H * W + (oy + y) * W + ox + x)];
  });
}

// spatial class-token feature of a bare backbone (pre-head, post final norm)
inline Tensor bare_cls_feature(const FrozenBackbone& bb, const Tensor& frame) {
  Tensor tokens = concat_rows({bb.cls_token, patchify(bb, frame)});
  tokens = add(tokens, bb.pos_embed);
  return bb.final_norm(slice_rows(forward_tokens(bb, tokens), 0, 1));
}

}  // namespace detail

// DIM input transformation: with probability diversity_prob, differentiably
// downscale every frame by one shared random factor and zero-pad back at one
// shared random offset. Draws come from the caller's RNG stream.
inline std::vector<Tensor> input_diversity(const std::vector<Tensor>& frames,
                                           double diversity_prob, Rng& rng,
                                           double min_scale = 0.9, double max_scale = 1.0) {
  if (diversity_prob < 0.0 || diversity_prob > 1.0)
    throw ConfigError("input_diversity: probability out of [0, 1]");
  const bool active = rng.bernoulli(diversity_prob);
  if (frames.empty()) return frames;
  const std::int64_t h = frames.front().dim(1), w = frames.front().dim(2);
  const double s = rng.uniform(min_scale, max_scale);
  std::int64_t nh = static_cast<std::int64_t>(std::floor(s * static_cast<double>(h)));
  std::int64_t nw = static_cast<std::int64_t>(std::floor(s * static_cast<double>(w)));
  nh = std::max<std::int64_t>(nh, 1);
  nw = std::max<std::int64_t>(nw, 1);
  const std::int64_t oy = rng.uniform_int(h - nh + 1);
  const std::int64_t ox = rng.uniform_int(w - nw + 1);
  if (!active) return frames;
  if (nh == h && nw == w) return frames;  // scale 1.0 boundary: exact identity
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames)
    out.push_back(detail::pad_image(bilinear_resize(f, nh, nw), h, w, oy, ox));
  return out;
}

// Detached clean reference features of one member at one frame index.
inline RefinedTokens clean_reference(const SurrogateMember& m, const std::vector<Tensor>& frames,
                                     std::int64_t frame_index) {
  if (m.adapter) {
    RefinedTokens r = forward_video_frames(*m.backbone, *m.adapter, frames, frame_index);
    return {r.temporal_avg.detach(), r.spatial_cls.detach()};
  }
  Tensor feat = detail::bare_cls_feature(*m.backbone, frames[static_cast<std::size_t>(frame_index)]);
  return {Tensor::zeros({1, m.backbone->cfg.embed_dim}), feat.detach()};
}

// Eq. 3 objective for one member: supervised cross-entropy on the temporal
// head minus cosine similarity of adversarial vs clean spatial class tokens.
inline Tensor joint_loss(const RefinedTokens& clean_ref, const std::vector<Tensor>& adv_frames,
                         std::int64_t label, const FrozenBackbone& bb,
                         const PromptAdapter* adapter, std::int64_t frame_index,
                         const std::string& loss_mode) {
  const bool want_sup = loss_mode == "joint" || loss_mode == "supervised_only";
  const bool want_ss = loss_mode == "joint" || loss_mode == "self_supervised_only";
  if (want_sup && label < 0)
    throw ContractError("joint_loss: supervised loss requires a label");
  if (want_sup && !adapter)
    throw ContractError("joint_loss: supervised loss requires a prompt adapter");
  Tensor loss = Tensor::scalar(0.0);
  if (adapter) {
    RefinedTokens adv = forward_video_frames(bb, *adapter, adv_frames, frame_index);
    if (want_sup)
      loss = add(loss, cross_entropy(temporal_logits(*adapter, adv), label));
    if (want_ss)
      loss = sub(loss, cosine_similarity(adv.spatial_cls, clean_ref.spatial_cls));
    return loss;
  }
  Tensor feat =
      detail::bare_cls_feature(bb, adv_frames[static_cast<std::size_t>(frame_index)]);
  return sub(loss, cosine_similarity(feat, clean_ref.spatial_cls));
}

inline Tensor joint_loss(const RefinedTokens& clean_ref, const VideoClip& adv_clip,
                         std::int64_t label, const FrozenBackbone& bb,
                         const PromptAdapter* adapter, std::int64_t frame_index,
                         const std::string& loss_mode) {
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(adv_clip.t()));
  for (std::int64_t f = 0; f < adv_clip.t(); ++f) frames.push_back(adv_clip.frame(f));
  return joint_loss(clean_ref, frames, label, bb, adapter, frame_index, loss_mode);
}

namespace detail {

inline std::vector<Tensor> resize_frames(const std::vector<Tensor>& frames, std::int64_t res) {
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(bilinear_resize(f, res, res));
  return out;
}

}  // namespace detail

inline AttackResult run_attack(const VideoClip& clip, std::int64_t label,
                               const std::vector<SurrogateMember>& surrogates,
                               const AttackConfig& cfg) {
  cfg.validate();
  if (surrogates.empty()) throw ConfigError("run_attack: no surrogate members");
  for (const auto& m : surrogates) {
    if (!m.backbone) throw ConfigError("run_attack: null backbone in surrogate member");
    if (m.adapter && m.adapter->backbone_hash != m.backbone->param_hash())
      throw ConfigError("run_attack: adapter was built for a different backbone (hash mismatch)");
  }
  const std::int64_t t = clip.t();
  const std::int64_t c = clip.frames.dim(1), h = clip.frames.dim(2), w = clip.frames.dim(3);
  const std::size_t frame_px = static_cast<std::size_t>(c * h * w);

  Rng frame_rng = Rng(cfg.seed).split(4);
  Rng div_rng = Rng(cfg.seed).split(5);

  std::vector<double> clean_px(clip.frames.data());
  std::vector<double> adv_px(clean_px);
  if (cfg.loss_mode == "self_supervised_only") {
    // The cosine objective is stationary at the clean point (cos(x, x) has
    // zero gradient), so this mode needs a seeded random start. The kick is
    // the minimal one that escapes the stationary point — at most 1 pixel,
    // never more than eps — rather than a uniform draw over the whole eps
    // ball: a max-budget start would inject eps-scale noise whose damage to
    // noise-sensitive victims has nothing to do with the attack gradient.
    const double radius = std::min(1.0, cfg.epsilon);
    Rng init_rng = Rng(cfg.seed).split(6);
    for (auto& v : adv_px) {
      const double jitter = init_rng.uniform(-radius, radius);
      v = std::min(std::max(v + jitter, 0.0), 255.0);
    }
  }

  // detached clean references per (member, frame_index), filled on first use
  std::map<std::pair<std::size_t, std::int64_t>, RefinedTokens> ref_cache;
  auto reference = [&](std::size_t mi, std::int64_t fi) -> const RefinedTokens& {
    auto key = std::make_pair(mi, fi);
    auto it = ref_cache.find(key);
    if (it != ref_cache.end()) return it->second;
    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(t));
    for (std::int64_t f = 0; f < t; ++f) frames.push_back(clip.frame(f));
    const auto& m = surrogates[mi];
    auto resized = detail::resize_frames(frames, m.resolution());
    return ref_cache.emplace(key, clean_reference(m, resized, fi)).first->second;
  };

  auto make_frames = [&](const std::vector<double>& px, bool with_grad) {
    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(t));
    for (std::int64_t f = 0; f < t; ++f) {
      std::vector<double> d(px.begin() + static_cast<std::ptrdiff_t>(f * frame_px),
                            px.begin() + static_cast<std::ptrdiff_t>((f + 1) * frame_px));
      Tensor fr = Tensor::from({c, h, w}, std::move(d));
      if (with_grad) fr.set_requires_grad(true);
      frames.push_back(fr);
    }
    return frames;
  };

  auto ensemble_loss = [&](const std::vector<Tensor>& frames, std::int64_t fi) {
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t mi = 0; mi < surrogates.size(); ++mi) {
      const auto& m = surrogates[mi];
      auto resized = detail::resize_frames(frames, m.resolution());
      total = add(total, joint_loss(reference(mi, fi), resized, label, *m.backbone, m.adapter,
                                    fi, cfg.loss_mode));
    }
    return total;
  };

  std::vector<double> trace;
  const std::int64_t first_frame =
      cfg.frame_policy == "fixed" ? cfg.fixed_frame : frame_rng.uniform_int(t);
  if (first_frame < 0 || first_frame >= t)
    throw ConfigError("run_attack: fixed_frame out of range");

  // initial surrogate loss on the clean clip (no diversity), for the trace
  // and the progress check
  trace.push_back(ensemble_loss(make_frames(clean_px, false), first_frame).item());

  std::vector<double> momentum(adv_px.size(), 0.0);
  const bool momentum_method = cfg.method == "mim" || cfg.method == "dim";

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const std::int64_t fi = step == 0 ? first_frame
                            : cfg.frame_policy == "fixed" ? cfg.fixed_frame
                                                          : frame_rng.uniform_int(t);
    std::vector<Tensor> leaves = make_frames(adv_px, true);
    std::vector<Tensor> attacked = leaves;
    if (cfg.method == "dim")
      attacked = input_diversity(leaves, cfg.diversity_prob, div_rng, cfg.div_min_scale,
                                 cfg.div_max_scale);
    Tensor loss = ensemble_loss(attacked, fi);
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw NumericError("run_attack: non-finite loss at step " + std::to_string(step));
    trace.push_back(lv);
    backward(loss);

    std::vector<double> grad(adv_px.size(), 0.0);
    for (std::int64_t f = 0; f < t; ++f) {
      const auto& g = leaves[static_cast<std::size_t>(f)].grad();
      if (g.empty()) continue;
      std::copy(g.begin(), g.end(),
                grad.begin() + static_cast<std::ptrdiff_t>(f * frame_px));
    }

    const double* dir = grad.data();
    if (momentum_method) {
      double l1 = 0.0;
      for (double gv : grad) l1 += std::abs(gv);
      const double inv = l1 > 0.0 ? 1.0 / l1 : 0.0;
      for (std::size_t i = 0; i < grad.size(); ++i)
        momentum[i] = cfg.mu * momentum[i] + grad[i] * inv;
      dir = momentum.data();
    }
    for (std::size_t i = 0; i < adv_px.size(); ++i) {
      const double s = dir[i] > 0.0 ? 1.0 : (dir[i] < 0.0 ? -1.0 : 0.0);
      double v = adv_px[i] + cfg.alpha * s;
      const double cl = clean_px[i];
      v = std::min(std::max(v, cl - cfg.epsilon), cl + cfg.epsilon);
      adv_px[i] = std::min(std::max(v, 0.0), 255.0);
    }
  }

  // final surrogate loss at the same frame index as the initial one
  Tensor final_loss = ensemble_loss(make_frames(adv_px, false), first_frame);
  trace.push_back(final_loss.item());
  if (trace.back() + 1e-9 < trace.front())
    throw ContractError("run_attack: surrogate loss decreased over the attack (" +
                        std::to_string(trace.front()) + " -> " + std::to_string(trace.back()) +
                        ")");

  AttackResult res{VideoClip(Tensor::from(clip.frames.shape(), adv_px), clip.label),
                   std::move(trace), 0.0, false};
  for (std::size_t i = 0; i < adv_px.size(); ++i)
    res.linf_norm = std::max(res.linf_norm, std::abs(adv_px[i] - clean_px[i]));
  if (res.linf_norm > cfg.epsilon + 1e-9)
    throw ContractError("run_attack: budget exceeded");
  if (label >= 0) {
    for (std::size_t mi = 0; mi < surrogates.size() && !res.success_on_surrogate; ++mi) {
      const auto& m = surrogates[mi];
      if (!m.adapter) continue;
      std::vector<Tensor> frames;
      for (std::int64_t f = 0; f < t; ++f) frames.push_back(res.adversarial.frame(f));
      auto resized = detail::resize_frames(frames, m.resolution());
      RefinedTokens r = forward_video_frames(*m.backbone, *m.adapter, resized, first_frame);
      if (argmax(temporal_logits(*m.adapter, r).data()) != label)
        res.success_on_surrogate = true;
    }
  }
  return res;
}

// Named surrogate-member registry for ensemble construction.
using SurrogateRegistry = std::map<std::string, SurrogateMember>;

inline std::vector<SurrogateMember> make_ensemble(const std::string& kind,
                                                  const SurrogateRegistry& registry,
                                                  const std::vector<std::string>& member_ids) {
  if (kind != "networks" && kind != "schemes" && kind != "resolutions")
    throw ConfigError("make_ensemble: unknown kind '" + kind + "'");
  if (member_ids.empty()) throw ConfigError("make_ensemble: empty member list");
  std::vector<SurrogateMember> out;
  out.reserve(member_ids.size());
  for (const auto& id : member_ids) {
    auto it = registry.find(id);
    if (it == registry.end())
      throw ConfigError("make_ensemble: member '" + id + "' missing from registry");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace tempo

#endif  // TEMPO_ATTACK_HPP
