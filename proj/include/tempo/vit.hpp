#ifndef TEMPO_VIT_HPP
#define TEMPO_VIT_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/nn.hpp"
#include "tempo/sgd.hpp"
#include "tempo/tensor.hpp"

namespace tempo {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// ---- building blocks ------------------------------------------------------

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  // default: fan-in scaled normal init
  static Linear init(std::int64_t in, std::int64_t out, Rng& rng, double stddev = -1.0) {
    Linear l;
    if (stddev < 0.0) stddev = 1.0 / std::sqrt(static_cast<double>(in));
    l.w = Tensor::randn({in, out}, rng, stddev, true);
    l.b = Tensor::zeros({out}, true);
    return l;
  }

  Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams init(std::int64_t d) {
    LayerNormParams ln;
    ln.gain = Tensor::full({d}, 1.0, true);
    ln.bias = Tensor::zeros({d}, true);
    return ln;
  }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gain", gain);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Full multi-head self-attention over an [M x D] token sequence.
struct Mhsa {
  std::int64_t heads = 1;
  Linear q, k, v, o;

  static Mhsa init(std::int64_t d, std::int64_t heads, Rng& rng) {
    if (d % heads != 0) throw ConfigError("Mhsa: embed_dim must be divisible by heads");
    Mhsa m;
    m.heads = heads;
    m.q = Linear::init(d, d, rng);
    m.k = Linear::init(d, d, rng);
    m.v = Linear::init(d, d, rng);
    m.o = Linear::init(d, d, rng);
    return m;
  }

  Tensor operator()(const Tensor& x) const {
    const std::int64_t d = x.dim(1);
    const std::int64_t dh = d / heads;
    const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor qs = q(x), ks = k(x), vs = v(x);
    std::vector<Tensor> head_out;
    head_out.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(qs, h * dh, dh);
      Tensor kh = slice_cols(ks, h * dh, dh);
      Tensor vh = slice_cols(vs, h * dh, dh);
      Tensor attn = softmax(scale(matmul(qh, transpose2d(kh)), scale_f));
      head_out.push_back(matmul(attn, vh));
    }
    return o(concat_cols(head_out));
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
  }
};

// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)).
struct VitBlock {
  LayerNormParams ln1, ln2;
  Mhsa attn;
  Linear fc1, fc2;

  static VitBlock init(std::int64_t d, std::int64_t heads, Rng& rng) {
    VitBlock b;
    b.ln1 = LayerNormParams::init(d);
    b.ln2 = LayerNormParams::init(d);
    b.attn = Mhsa::init(d, heads, rng);
    b.fc1 = Linear::init(d, 4 * d, rng);
    b.fc2 = Linear::init(4 * d, d, rng);
    return b;
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = add(x, attn(ln1(x)));
    return add(y, fc2(gelu(fc1(ln2(y)))));
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    ln1.collect(prefix + ".ln1", out);
    attn.collect(prefix + ".attn", out);
    ln2.collect(prefix + ".ln2", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// ---- backbone -------------------------------------------------------------

struct VitConfig {
  std::int64_t depth = 4;
  std::int64_t embed_dim = 64;
  std::int64_t heads = 4;
  std::int64_t patch = 8;
  std::int64_t resolution = 32;
  std::int64_t channels = 3;
  std::int64_t num_classes = 4;

  void validate() const {
    if (resolution % patch != 0)
      throw ConfigError("VitConfig: resolution " + std::to_string(resolution) +
                        " not divisible by patch " + std::to_string(patch));
    if (embed_dim % heads != 0)
      throw ConfigError("VitConfig: embed_dim not divisible by heads");
  }

  std::int64_t side(std::int64_t res) const { return res / patch; }
  std::int64_t num_patches(std::int64_t res) const { return side(res) * side(res); }
  std::int64_t num_patches() const { return num_patches(resolution); }
};

struct FrozenBackbone {
  VitConfig cfg;
  Linear patch_embed;  // [p*p*c x D]
  Tensor cls_token;    // [1 x D]
  Tensor pos_embed;    // [(N+1) x D], row 0 for the class token
  std::vector<VitBlock> blocks;
  LayerNormParams final_norm;  // applied to refined tokens before any head
  Linear head;                 // D -> C_s
  bool frozen = false;
  bool immutable_by_policy = false;  // refuses full finetune when set

  static FrozenBackbone init(const VitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FrozenBackbone bb;
    bb.cfg = cfg;
    Rng rng(seed);
    bb.patch_embed = Linear::init(cfg.patch * cfg.patch * cfg.channels, cfg.embed_dim, rng);
    bb.cls_token = Tensor::randn({1, cfg.embed_dim}, rng, 0.02, true);
    bb.pos_embed = Tensor::randn({cfg.num_patches() + 1, cfg.embed_dim}, rng, 0.02, true);
    for (std::int64_t i = 0; i < cfg.depth; ++i)
      bb.blocks.push_back(VitBlock::init(cfg.embed_dim, cfg.heads, rng));
    bb.final_norm = LayerNormParams::init(cfg.embed_dim);
    bb.head = Linear::init(cfg.embed_dim, cfg.num_classes, rng);
    return bb;
  }

  NamedParams named_params() const {
    NamedParams out;
    patch_embed.collect("patch_embed", out);
    out.emplace_back("cls_token", cls_token);
    out.emplace_back("pos_embed", pos_embed);
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

  void set_frozen(bool f) {
    frozen = f;
    for (auto& p : params()) p.set_requires_grad(!f);
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

// ---- forward passes -------------------------------------------------------

// Differentiable gather of non-overlapping p x p patches, row-major grid
// order, each row flattened (channel, y, x).
inline Tensor extract_patches(const Tensor& image, std::int64_t p) {
  if (image.ndim() != 3) throw DimensionError("extract_patches: need [c x h x w]");
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h % p != 0 || w % p != 0)
    throw DimensionError("extract_patches: image " + shape_str(image.shape()) +
                         " not divisible by patch " + std::to_string(p));
  const std::int64_t gy = h / p, gx = w / p, n = gy * gx, plen = c * p * p;
  std::vector<std::int64_t> src(static_cast<std::size_t>(n * plen));
  std::vector<double> out(static_cast<std::size_t>(n * plen));
  std::int64_t idx = 0;
  for (std::int64_t ty = 0; ty < gy; ++ty)
    for (std::int64_t tx = 0; tx < gx; ++tx)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t py = 0; py < p; ++py)
          for (std::int64_t px = 0; px < p; ++px) {
            const std::int64_t s = ch * h * w + (ty * p + py) * w + (tx * p + px);
            src[idx] = s;
            out[idx] = image.data()[s];
            ++idx;
          }
  return detail::make_op({n, plen}, std::move(out), {image}, [src](detail::Node& nd) {
    auto& pa = *nd.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) pa.grad[src[i]] += nd.grad[i];
  });
}

// Patch tokens of one image: pixels scaled to [0,1], patches linearly
// embedded. Resolution must match the backbone's configured resolution.
inline Tensor patchify(const FrozenBackbone& bb, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(1) != bb.cfg.resolution || image.dim(2) != bb.cfg.resolution ||
      image.dim(0) != bb.cfg.channels)
    throw DimensionError("patchify: image " + shape_str(image.shape()) +
                         " does not match configured resolution " +
                         std::to_string(bb.cfg.resolution));
  return bb.patch_embed(scale(extract_patches(image, bb.cfg.patch), 1.0 / 255.0));
}

// Same embedding applied at a different (patch-divisible) resolution.
inline Tensor patchify_any(const FrozenBackbone& bb, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != bb.cfg.channels)
    throw DimensionError("patchify_any: bad image shape " + shape_str(image.shape()));
  return bb.patch_embed(scale(extract_patches(image, bb.cfg.patch), 1.0 / 255.0));
}

// Runs the block stack over an arbitrary-length token sequence.
inline Tensor forward_tokens(const FrozenBackbone& bb, const Tensor& tokens) {
  if (tokens.ndim() != 2 || tokens.dim(1) != bb.cfg.embed_dim)
    throw DimensionError("forward_tokens: need [M x D] tokens");
  Tensor x = tokens;
  for (const auto& blk : bb.blocks) x = blk(x);
  return x;
}

// Positional embeddings resampled for a new resolution: class row copied,
// grid rows bilinearly resized. Returns a graph-free tensor.
inline Tensor interpolate_pos_embed(const FrozenBackbone& bb, std::int64_t new_resolution) {
  if (new_resolution % bb.cfg.patch != 0)
    throw ConfigError("interpolate_pos_embed: resolution " + std::to_string(new_resolution) +
                      " not divisible by patch " + std::to_string(bb.cfg.patch));
  const std::int64_t d = bb.cfg.embed_dim;
  const std::int64_t s0 = bb.cfg.side(bb.cfg.resolution);
  const std::int64_t s1 = bb.cfg.side(new_resolution);
  if (s1 == s0) return bb.pos_embed.detach();
  // [N x D] grid -> [D x s0 x s0] -> resize -> back
  std::vector<double> grid(static_cast<std::size_t>(d * s0 * s0));
  for (std::int64_t i = 0; i < s0 * s0; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      grid[j * s0 * s0 + i] = bb.pos_embed.data()[(i + 1) * d + j];
  Tensor resized = bilinear_resize(Tensor::from({d, s0, s0}, std::move(grid)), s1, s1);
  std::vector<double> out(static_cast<std::size_t>((s1 * s1 + 1) * d));
  for (std::int64_t j = 0; j < d; ++j) out[j] = bb.pos_embed.data()[j];  // cls row
  for (std::int64_t i = 0; i < s1 * s1; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out[(i + 1) * d + j] = resized.data()[j * s1 * s1 + i];
  return Tensor::from({s1 * s1 + 1, d}, std::move(out));
}

// Spatial classification: g_s applied to the refined class token of
// [I_cls, patches] + positional embeddings.
inline Tensor forward_image(const FrozenBackbone& bb, const Tensor& image) {
  Tensor tokens = concat_rows({bb.cls_token, patchify(bb, image)});
  tokens = add(tokens, reshape(bb.pos_embed, tokens.shape()));
  Tensor refined = forward_tokens(bb, tokens);
  return reshape(bb.head(bb.final_norm(slice_rows(refined, 0, 1))), {bb.cfg.num_classes});
}

// Spatial classification at a non-base resolution via interpolated
// positional embeddings.
inline Tensor forward_image_at(const FrozenBackbone& bb, const Tensor& image,
                               std::int64_t resolution) {
  if (resolution == bb.cfg.resolution) return forward_image(bb, image);
  if (image.dim(1) != resolution || image.dim(2) != resolution)
    throw DimensionError("forward_image_at: image does not match requested resolution");
  Tensor pos = interpolate_pos_embed(bb, resolution);
  Tensor tokens = concat_rows({bb.cls_token, patchify_any(bb, image)});
  tokens = add(tokens, reshape(pos, tokens.shape()));
  Tensor refined = forward_tokens(bb, tokens);
  return reshape(bb.head(bb.final_norm(slice_rows(refined, 0, 1))), {bb.cfg.num_classes});
}

// ---- pretraining ----------------------------------------------------------

inline std::int64_t argmax(const std::vector<double>& v) {
  std::int64_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<std::int64_t>(i);
  return best;
}

// Default recipe that reaches >95% train top-1 on the toy shape task. The
// lower learning rate trades epochs for robustness: at lr 0.01 training from
// scratch stalls near chance for some init seeds, while lr 0.005 converges
// for every seed tried.
inline TrainSchedule default_pretrain_schedule() {
  TrainSchedule s;
  s.epochs = 40;
  s.lr = 0.005;
  s.momentum = 0.9;
  s.batch = 32;
  s.decay_epochs = {24, 34};
  s.decay_factor = 0.1;
  return s;
}

// Supervised pretraining of every backbone parameter with SGD + momentum on
// cross-entropy, after which the backbone is frozen.
inline std::pair<FrozenBackbone, TrainLog> pretrain_backbone(const VideoDataset& ds,
                                                             const VitConfig& cfg,
                                                             const TrainSchedule& sched,
                                                             std::uint64_t seed) {
  if (ds.clips.empty()) throw ConfigError("pretrain_backbone: empty dataset");
  for (const auto& c : ds.clips)
    if (c.label < 0 || c.label >= cfg.num_classes)
      throw ConfigError("pretrain_backbone: label out of range");

  FrozenBackbone bb = FrozenBackbone::init(cfg, seed);
  Sgd opt(bb.params(), sched.momentum);
  Rng order_rng = Rng(seed).split(1);
  TrainLog log;

  std::vector<std::size_t> order(ds.clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 1; epoch <= sched.epochs; ++epoch) {
    // Fisher-Yates with the dedicated stream
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(
                                  static_cast<std::int64_t>(i)))]);
    const double lr = sched.lr_at(epoch);
    double total_loss = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += sched.batch) {
      const std::size_t end = std::min(order.size(), start + sched.batch);
      std::vector<Tensor> logit_rows;
      std::vector<std::int64_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& clip = ds.clips[order[i]];
        Tensor logits = forward_image(bb, clip.frame(0));
        if (argmax(logits.data()) == clip.label) ++correct;
        logit_rows.push_back(reshape(logits, {1, cfg.num_classes}));
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
  bb.set_frozen(true);
  return {std::move(bb), std::move(log)};
}

}  // namespace tempo

#endif  // TEMPO_VIT_HPP
