#include <catch2/catch_amalgamated.hpp>

#include "tempo/targets.hpp"

using namespace tempo;

namespace {

TargetConfig tiny_cfg() {
  TargetConfig cfg;
  cfg.depth = 1;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.patch = 8;
  cfg.resolution = 16;  // N = 4
  cfg.channels = 1;
  cfg.num_classes = 8;
  cfg.t_max = 8;
  return cfg;
}

VideoClip random_clip(std::int64_t t, std::int64_t c, std::int64_t r, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(static_cast<std::size_t>(t * c * r * r));
  for (auto& v : px) v = rng.uniform(0.0, 255.0);
  return VideoClip(Tensor::from({t, c, r, r}, std::move(px)), 0);
}

std::vector<Tensor> clip_frames(const VideoClip& clip) {
  std::vector<Tensor> frames;
  for (std::int64_t f = 0; f < clip.t(); ++f) frames.push_back(clip.frame(f));
  return frames;
}

double eval_acc(const TargetModel& m, const VideoDataset& ds) {
  std::int64_t correct = 0;
  for (const auto& clip : ds.clips)
    if (argmax(forward_target(m, clip).data()) == clip.label) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.clips.size());
}

}  // namespace

TEST_CASE("config validation") {
  TargetConfig cfg = tiny_cfg();
  cfg.patch = 5;
  REQUIRE_THROWS_AS(DividedSTModel::init(cfg, 0), ConfigError);
  cfg = tiny_cfg();
  cfg.heads = 3;
  REQUIRE_THROWS_AS(FrameMeanMLP::init(cfg, 0), ConfigError);
}

TEST_CASE("forward_target: deterministic logits of length C_t") {
  TargetModel m = DividedSTModel::init(tiny_cfg(), 1);
  auto clip = random_clip(3, 1, 16, 2);
  auto a = forward_target(m, clip);
  auto b = forward_target(m, clip);
  REQUIRE(a.shape() == Shape{8});
  REQUIRE(a.data() == b.data());
}

TEST_CASE("forward_target: shape mismatch errors") {
  TargetModel m = DividedSTModel::init(tiny_cfg(), 3);
  REQUIRE_THROWS_AS(forward_target(m, random_clip(2, 1, 32, 4)), DimensionError);
  TargetModel f = FrameMeanMLP::init(tiny_cfg(), 5);
  REQUIRE_THROWS_AS(forward_target(f, random_clip(2, 1, 32, 6)), DimensionError);
}

TEST_CASE("FrameMeanMLP: invariant to frame and patch permutations") {
  TargetConfig cfg = tiny_cfg();
  TargetModel m = FrameMeanMLP::init(cfg, 7);
  auto clip = random_clip(4, 1, 16, 8);
  auto base = forward_target(m, clip);

  SECTION("shuffled frames give identical logits") {
    std::vector<double> px;
    for (std::int64_t f : {2, 0, 3, 1}) {
      auto fr = clip.frame(f);
      px.insert(px.end(), fr.data().begin(), fr.data().end());
    }
    VideoClip shuffled(Tensor::from({4, 1, 16, 16}, std::move(px)), 0);
    REQUIRE(forward_target(m, shuffled).data() == base.data());
  }

  SECTION("swapping two patches inside a frame preserves logits exactly") {
    std::vector<double> px(clip.frames.data());
    // swap patch (0,0) with patch (1,1) of frame 0
    for (std::int64_t y = 0; y < 8; ++y)
      for (std::int64_t x = 0; x < 8; ++x)
        std::swap(px[static_cast<std::size_t>(y * 16 + x)],
                  px[static_cast<std::size_t>((8 + y) * 16 + 8 + x)]);
    VideoClip swapped(Tensor::from({4, 1, 16, 16}, std::move(px)), 0);
    REQUIRE(forward_target(m, swapped).data() == base.data());
  }
}

TEST_CASE("DividedSTModel: t=1 temporal sublayer is identity-equivalent") {
  // with one frame, each temporal attention group holds a single token, so
  // softmax weights are exactly 1 and the sublayer reduces to x + O(V(ln(x)))
  auto cfg = tiny_cfg();
  auto m = DividedSTModel::init(cfg, 9);
  Rng rng(10);
  Tensor x = Tensor::randn({4, 8}, rng);
  const auto& blk = m.blocks[0];
  Tensor got = tempo::detail::divided_temporal(blk, x, 1, 4);
  Tensor expect = add(x, blk.attn_t.o(blk.attn_t.v(blk.ln_t(x))));
  for (std::size_t i = 0; i < got.data().size(); ++i)
    REQUIRE(got.data()[i] == Catch::Approx(expect.data()[i]).margin(1e-12));
}

TEST_CASE("DividedSTModel: temporal sublayer never mixes across spatial positions") {
  // Jacobian mask on a 2-frame, 4-patch config: perturbing input row (f, k)
  // may only move temporal-sublayer outputs at rows (*, k).
  auto cfg = tiny_cfg();
  auto m = DividedSTModel::init(cfg, 11);
  const auto& blk = m.blocks[0];
  Rng rng(12);
  const std::int64_t T = 2, N = 4, D = 8;
  Tensor x = Tensor::randn({T * N, D}, rng);
  Tensor base = tempo::detail::divided_temporal(blk, x, T, N);
  for (std::int64_t k = 0; k < N; ++k) {
    Tensor xp = Tensor::from(x.shape(), x.data());
    xp.data()[static_cast<std::size_t>((0 * N + k) * D + 3)] += 0.37;
    Tensor out = tempo::detail::divided_temporal(blk, xp, T, N);
    bool moved_same_pos = false;
    for (std::int64_t f = 0; f < T; ++f)
      for (std::int64_t j = 0; j < D; ++j) {
        const double diff = std::abs(out.data()[static_cast<std::size_t>((f * N + k) * D + j)] -
                                     base.data()[static_cast<std::size_t>((f * N + k) * D + j)]);
        if (diff > 1e-12) moved_same_pos = true;
      }
    REQUIRE(moved_same_pos);
    for (std::int64_t f = 0; f < T; ++f)
      for (std::int64_t k2 = 0; k2 < N; ++k2) {
        if (k2 == k) continue;
        for (std::int64_t j = 0; j < D; ++j)
          REQUIRE(out.data()[static_cast<std::size_t>((f * N + k2) * D + j)] ==
                  base.data()[static_cast<std::size_t>((f * N + k2) * D + j)]);
      }
  }
}

TEST_CASE("DividedSTModel: spatial sublayer never mixes across frames") {
  auto cfg = tiny_cfg();
  auto m = DividedSTModel::init(cfg, 13);
  const auto& blk = m.blocks[0];
  Rng rng(14);
  const std::int64_t T = 2, N = 4, D = 8;
  Tensor cls = Tensor::randn({1, D}, rng);
  Tensor x = Tensor::randn({T * N, D}, rng);
  auto [cls_base, x_base] = tempo::detail::divided_spatial(blk, cls, x, T, N);
  // perturb a token of frame 0; frame 1's token outputs must be bit-unmoved
  Tensor xp = Tensor::from(x.shape(), x.data());
  xp.data()[2 * D + 5] += 0.51;
  auto [cls_out, x_out] = tempo::detail::divided_spatial(blk, cls, xp, T, N);
  for (std::int64_t r = N; r < T * N; ++r)
    for (std::int64_t j = 0; j < D; ++j)
      REQUIRE(x_out.data()[static_cast<std::size_t>(r * D + j)] ==
              x_base.data()[static_cast<std::size_t>(r * D + j)]);
  // the class token is shared, so it may move
  bool cls_moved = false;
  for (std::int64_t j = 0; j < D; ++j)
    if (cls_out.data()[static_cast<std::size_t>(j)] !=
        cls_base.data()[static_cast<std::size_t>(j)])
      cls_moved = true;
  REQUIRE(cls_moved);
}

TEST_CASE("gradient mask: pixel gradients through block-1 temporal sublayer stay in-patch") {
  // end-to-end variant of the factorization invariant: d(sublayer out at
  // spatial index k) / d(pixels) is zero outside patch k in every frame
  auto cfg = tiny_cfg();
  auto m = DividedSTModel::init(cfg, 15);
  const auto& blk = m.blocks[0];
  const std::int64_t T = 2, N = 4, D = 8;
  auto clip = random_clip(T, 1, 16, 16);
  std::vector<Tensor> frames;
  for (std::int64_t f = 0; f < T; ++f) {
    Tensor fr = clip.frame(f);
    fr.set_requires_grad(true);
    frames.push_back(fr);
  }
  std::vector<Tensor> per_frame;
  for (std::int64_t f = 0; f < T; ++f) {
    Tensor tok = m.patch_embed(scale(extract_patches(frames[static_cast<std::size_t>(f)], 8),
                                     1.0 / 255.0));
    tok = add(tok, m.pos_spatial);
    per_frame.push_back(tok);
  }
  Tensor x = concat_rows(per_frame);
  Tensor y = tempo::detail::divided_temporal(blk, x, T, N);
  const std::int64_t k = 2;  // probe output token (frame 1, spatial index 2)
  Tensor probe = sum(slice_rows(y, 1 * N + k, 1));
  backward(probe);
  const std::int64_t ty = k / 2, tx = k % 2;
  for (std::int64_t f = 0; f < T; ++f) {
    const auto& g = frames[static_cast<std::size_t>(f)].grad();
    bool inside_nonzero = false;
    for (std::int64_t y2 = 0; y2 < 16; ++y2)
      for (std::int64_t x2 = 0; x2 < 16; ++x2) {
        const bool inside = (y2 / 8 == ty) && (x2 / 8 == tx);
        const double gv = g[static_cast<std::size_t>(y2 * 16 + x2)];
        if (inside && gv != 0.0) inside_nonzero = true;
        if (!inside) REQUIRE(gv == 0.0);
      }
    REQUIRE(inside_nonzero);
  }
}

TEST_CASE("forward_divided: t beyond t_max rejected") {
  TargetConfig cfg = tiny_cfg();
  cfg.t_max = 2;
  TargetModel m = DividedSTModel::init(cfg, 17);
  REQUIRE_THROWS_AS(forward_target(m, random_clip(3, 1, 16, 18)), ConfigError);
}

TEST_CASE("train_target: empty dataset and bad kind rejected") {
  VideoDataset empty;
  REQUIRE_THROWS_AS(train_target("divided_st", empty, TrainSchedule{}, 0), ConfigError);
  auto ds = gen_motion_clips(8, 2, 16, 1.0, 19, 1);
  REQUIRE_THROWS_AS(train_target("resnet", ds, TrainSchedule{}, 0), ConfigError);
}

TEST_CASE("train_target: 1-class dataset reaches 100% train accuracy") {
  auto ds = gen_motion_clips(16, 2, 16, 1.0, 20, 1);
  VideoDataset one;
  one.num_classes = 8;
  for (const auto& c : ds.clips)
    if (c.label == 0) one.clips.push_back(c);
  while (one.clips.size() < 8) one.clips.push_back(one.clips[0]);
  TrainSchedule sched;
  sched.epochs = 3;
  sched.lr = 0.05;
  sched.batch = 8;
  TargetConfig cfg = tiny_cfg();
  for (const auto kind : {"divided_st", "frame_mean_mlp"}) {
    auto [m, log] = train_target(kind, one, sched, 21, cfg);
    REQUIRE(eval_acc(m, one) == 100.0);
  }
}

TEST_CASE("train_target: two seeds give different parameter hashes") {
  auto ds = gen_motion_clips(8, 2, 16, 1.0, 22, 1);
  TrainSchedule sched;
  sched.epochs = 1;
  sched.lr = 0.01;
  sched.batch = 8;
  TargetConfig cfg = tiny_cfg();
  auto [a, la] = train_target("frame_mean_mlp", ds, sched, 23, cfg);
  auto [b, lb] = train_target("frame_mean_mlp", ds, sched, 24, cfg);
  REQUIRE(target_param_hash(a) != target_param_hash(b));
}

TEST_CASE("independence: no parameter tensor shared between target seeds or kinds") {
  TargetConfig cfg = tiny_cfg();
  TargetModel a = DividedSTModel::init(cfg, 25);
  TargetModel b = FrameMeanMLP::init(cfg, 25);
  for (const auto& pa : target_params(a))
    for (const auto& pb : target_params(b)) REQUIRE(pa.node().get() != pb.node().get());
  REQUIRE(target_param_hash(a) != target_param_hash(b));
}

TEST_CASE("forward_target_frames matches forward_target on clip frames") {
  TargetModel m = DividedSTModel::init(tiny_cfg(), 26);
  auto clip = random_clip(3, 1, 16, 27);
  REQUIRE(forward_target_frames(m, clip_frames(clip)).data() ==
          forward_target(m, clip).data());
}
