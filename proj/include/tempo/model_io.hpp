#ifndef TEMPO_MODEL_IO_HPP
#define TEMPO_MODEL_IO_HPP

#include <filesystem>
#include <string>

#include "tempo/checkpoint.hpp"
#include "tempo/prompts.hpp"
#include "tempo/targets.hpp"
#include "tempo/vit.hpp"

namespace tempo {

inline void save_backbone(const std::filesystem::path& dir, const FrozenBackbone& bb) {
  nlohmann::json meta;
  meta["depth"] = bb.cfg.depth;
  meta["embed_dim"] = bb.cfg.embed_dim;
  meta["heads"] = bb.cfg.heads;
  meta["patch"] = bb.cfg.patch;
  meta["resolution"] = bb.cfg.resolution;
  meta["channels"] = bb.cfg.channels;
  meta["num_classes"] = bb.cfg.num_classes;
  meta["frozen"] = bb.frozen;
  meta["param_hash"] = bb.param_hash();
  save_checkpoint(dir, "backbone", meta, bb.named_params());
}

inline FrozenBackbone load_backbone(const std::filesystem::path& dir) {
  Checkpoint ck = load_checkpoint(dir);
  if (ck.model_kind != "backbone")
    throw ConfigError("load_backbone: checkpoint holds a '" + ck.model_kind + "'");
  VitConfig cfg;
  cfg.depth = ck.meta.at("depth");
  cfg.embed_dim = ck.meta.at("embed_dim");
  cfg.heads = ck.meta.at("heads");
  cfg.patch = ck.meta.at("patch");
  cfg.resolution = ck.meta.at("resolution");
  cfg.channels = ck.meta.at("channels");
  cfg.num_classes = ck.meta.at("num_classes");
  FrozenBackbone bb = FrozenBackbone::init(cfg, 0);
  restore_params(ck, bb.named_params());
  bb.set_frozen(ck.meta.at("frozen"));
  if (ck.meta.contains("param_hash") &&
      ck.meta.at("param_hash").get<std::uint64_t>() != bb.param_hash())
    throw ConfigError("load_backbone: parameter hash mismatch (corrupt checkpoint)");
  return bb;
}

inline void save_adapter(const std::filesystem::path& dir, const PromptAdapter& ad) {
  nlohmann::json meta;
  meta["resolution"] = ad.resolution;
  meta["t_train"] = ad.t_train;
  meta["num_classes"] = ad.num_classes;
  meta["with_mlp"] = ad.with_mlp;
  meta["with_temporal_pos"] = ad.with_temporal_pos;
  meta["temporal_pos_scale"] = ad.temporal_pos_scale;
  meta["backbone_hash"] = ad.backbone_hash;
  save_checkpoint(dir, "prompt_adapter", meta, ad.named_params());
}

inline PromptAdapter load_adapter(const std::filesystem::path& dir, const FrozenBackbone& bb) {
  Checkpoint ck = load_checkpoint(dir);
  if (ck.model_kind != "prompt_adapter")
    throw ConfigError("load_adapter: checkpoint holds a '" + ck.model_kind + "'");
  const std::uint64_t stored_hash = ck.meta.at("backbone_hash");
  if (stored_hash != bb.param_hash())
    throw ConfigError("load_adapter: adapter was trained against a different backbone");
  PromptAdapter ad =
      PromptAdapter::init(bb, ck.meta.at("resolution"), ck.meta.at("num_classes"), 0,
                          ck.meta.at("t_train"), ck.meta.at("with_mlp"));
  ad.with_temporal_pos = ck.meta.at("with_temporal_pos");
  ad.temporal_pos_scale = ck.meta.at("temporal_pos_scale");
  restore_params(ck, ad.named_params());
  return ad;
}

inline void save_target(const std::filesystem::path& dir, const TargetModel& model) {
  const TargetConfig& cfg = std::visit([](const auto& m) -> const TargetConfig& { return m.cfg; },
                                       model);
  nlohmann::json meta;
  meta["kind"] = target_kind(model);
  meta["depth"] = cfg.depth;
  meta["embed_dim"] = cfg.embed_dim;
  meta["heads"] = cfg.heads;
  meta["patch"] = cfg.patch;
  meta["resolution"] = cfg.resolution;
  meta["channels"] = cfg.channels;
  meta["num_classes"] = cfg.num_classes;
  meta["t_max"] = cfg.t_max;
  save_checkpoint(dir, "target", meta, target_named_params(model));
}

inline TargetModel load_target(const std::filesystem::path& dir) {
  Checkpoint ck = load_checkpoint(dir);
  if (ck.model_kind != "target")
    throw ConfigError("load_target: checkpoint holds a '" + ck.model_kind + "'");
  TargetConfig cfg;
  cfg.depth = ck.meta.at("depth");
  cfg.embed_dim = ck.meta.at("embed_dim");
  cfg.heads = ck.meta.at("heads");
  cfg.patch = ck.meta.at("patch");
  cfg.resolution = ck.meta.at("resolution");
  cfg.channels = ck.meta.at("channels");
  cfg.num_classes = ck.meta.at("num_classes");
  cfg.t_max = ck.meta.at("t_max");
  const std::string kind = ck.meta.at("kind");
  TargetModel model = [&]() -> TargetModel {
    if (kind == "divided_st") return DividedSTModel::init(cfg, 0);
    if (kind == "frame_mean_mlp") return FrameMeanMLP::init(cfg, 0);
    throw ConfigError("load_target: unknown target kind '" + kind + "'");
  }();
  restore_params(ck, target_named_params(model));
  return model;
}

}  // namespace tempo

#endif  // TEMPO_MODEL_IO_HPP
