// Command-line driver: data generation, training, attacks, and transfer
// evaluation. Every subcommand reads a JSON config (--config), takes a master
// seed (--seed), and writes its artifacts under --out. Exit code is nonzero
// on any invariant violation.
#include <CLI11.hpp>

#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "tempo/eval.hpp"
#include "tempo/gradcheck.hpp"
#include "tempo/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tempo;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  f >> j;
  return j;
}

template <typename T>
T jget(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

TrainSchedule schedule_from(const json& j, TrainSchedule s) {
  s.epochs = jget<std::int64_t>(j, "epochs", s.epochs);
  s.lr = jget<double>(j, "lr", s.lr);
  s.momentum = jget<double>(j, "momentum", s.momentum);
  s.batch = jget<std::int64_t>(j, "batch", s.batch);
  if (j.contains("decay_epochs"))
    s.decay_epochs = j.at("decay_epochs").get<std::vector<std::int64_t>>();
  s.decay_factor = jget<double>(j, "decay_factor", s.decay_factor);
  return s;
}

AttackConfig attack_from(const json& j) {
  AttackConfig c;
  c.method = jget<std::string>(j, "method", c.method);
  c.epsilon = jget<double>(j, "epsilon", c.epsilon);
  c.alpha = jget<double>(j, "alpha", c.alpha);
  c.steps = jget<std::int64_t>(j, "steps", c.steps);
  c.mu = jget<double>(j, "mu", c.mu);
  c.diversity_prob = jget<double>(j, "diversity_prob", c.diversity_prob);
  c.div_min_scale = jget<double>(j, "div_min_scale", c.div_min_scale);
  c.div_max_scale = jget<double>(j, "div_max_scale", c.div_max_scale);
  c.loss_mode = jget<std::string>(j, "loss_mode", c.loss_mode);
  c.frame_policy = jget<std::string>(j, "frame_policy", c.frame_policy);
  c.fixed_frame = jget<std::int64_t>(j, "fixed_frame", c.fixed_frame);
  return c;
}

VitConfig vit_from(const json& j) {
  VitConfig c;
  c.depth = jget<std::int64_t>(j, "depth", c.depth);
  c.embed_dim = jget<std::int64_t>(j, "embed_dim", c.embed_dim);
  c.heads = jget<std::int64_t>(j, "heads", c.heads);
  c.patch = jget<std::int64_t>(j, "patch", c.patch);
  c.resolution = jget<std::int64_t>(j, "resolution", c.resolution);
  c.channels = jget<std::int64_t>(j, "channels", c.channels);
  c.num_classes = jget<std::int64_t>(j, "num_classes", c.num_classes);
  return c;
}

TargetConfig target_from(const json& j) {
  TargetConfig c;
  c.depth = jget<std::int64_t>(j, "depth", c.depth);
  c.embed_dim = jget<std::int64_t>(j, "embed_dim", c.embed_dim);
  c.heads = jget<std::int64_t>(j, "heads", c.heads);
  c.patch = jget<std::int64_t>(j, "patch", c.patch);
  c.resolution = jget<std::int64_t>(j, "resolution", c.resolution);
  c.channels = jget<std::int64_t>(j, "channels", c.channels);
  c.num_classes = jget<std::int64_t>(j, "num_classes", c.num_classes);
  c.t_max = jget<std::int64_t>(j, "t_max", c.t_max);
  return c;
}

json log_to_json(const TrainLog& log) {
  return {{"epoch_loss", log.epoch_loss}, {"epoch_acc", log.epoch_acc}};
}

void write_json(const fs::path& p, const json& j) { detail::write_file(p, j.dump(2) + "\n"); }

// Owns everything loaded from disk so SurrogateMember pointers stay valid.
struct ModelPool {
  std::deque<FrozenBackbone> backbones;
  std::deque<PromptAdapter> adapters;
  std::map<std::string, const FrozenBackbone*> backbone_by_path;

  const FrozenBackbone* backbone(const std::string& path) {
    auto it = backbone_by_path.find(path);
    if (it != backbone_by_path.end()) return it->second;
    backbones.push_back(load_backbone(path));
    backbone_by_path[path] = &backbones.back();
    return &backbones.back();
  }

  SurrogateMember member(const json& spec) {
    const FrozenBackbone* bb = backbone(spec.at("backbone").get<std::string>());
    const PromptAdapter* ad = nullptr;
    if (spec.contains("adapter") && !spec.at("adapter").is_null()) {
      adapters.push_back(load_adapter(spec.at("adapter").get<std::string>(), *bb));
      ad = &adapters.back();
    }
    return {bb, ad};
  }
};

int cmd_gen_data(const json& cfg, std::uint64_t seed, const fs::path& out) {
  const std::string kind = jget<std::string>(cfg, "kind", "motion_clips");
  json spec = cfg;
  spec["kind"] = kind;
  if (!spec.contains("seed")) spec["seed"] = seed;
  if (!spec.contains("n")) spec["n"] = 64;
  if (!spec.contains("r")) spec["r"] = 32;
  if (!spec.contains("channels")) spec["channels"] = 3;
  if (kind != "shape_images" && !spec.contains("t")) spec["t"] = 8;
  if (kind == "motion_clips" && !spec.contains("delta")) spec["delta"] = 2.0;
  VideoDataset ds = regenerate(spec);
  save_dataset(out, ds);
  std::cout << "wrote " << ds.clips.size() << " clips (" << ds.num_classes << " classes) to "
            << out << "\nhash " << dataset_hash(ds) << "\n";
  return 0;
}

int cmd_pretrain(const json& cfg, std::uint64_t seed, const fs::path& out) {
  VideoDataset ds = load_dataset(cfg.at("dataset").get<std::string>());
  VitConfig vc = vit_from(jget<json>(cfg, "vit", json::object()));
  TrainSchedule sched = schedule_from(jget<json>(cfg, "schedule", json::object()),
                                      default_pretrain_schedule());
  auto [bb, log] = pretrain_backbone(ds, vc, sched, seed);
  bb.set_frozen(true);
  save_backbone(out / "backbone", bb);
  write_json(out / "train_log.json", log_to_json(log));
  std::cout << "final train acc " << log.epoch_acc.back() << "% | backbone hash "
            << bb.param_hash() << "\n";
  return 0;
}

int cmd_adapt_prompts(const json& cfg, std::uint64_t seed, const fs::path& out) {
  FrozenBackbone bb = load_backbone(cfg.at("backbone").get<std::string>());
  VideoDataset ds = load_dataset(cfg.at("dataset").get<std::string>());
  TrainSchedule sched =
      schedule_from(jget<json>(cfg, "schedule", json::object()), default_adapt_schedule());
  const std::int64_t num_classes = jget<std::int64_t>(cfg, "num_classes", ds.num_classes);
  const AdaptMode mode = jget<std::string>(cfg, "mode", "prompt") == "full_finetune"
                             ? AdaptMode::kFullFinetune
                             : AdaptMode::kPrompt;
  auto [ad, log] = adapt_prompts(bb, ds, sched, num_classes, seed, mode,
                                 jget<std::int64_t>(cfg, "resolution", -1),
                                 jget<bool>(cfg, "with_mlp", false));
  if (cfg.contains("with_temporal_pos")) ad.with_temporal_pos = cfg.at("with_temporal_pos");
  save_adapter(out / "adapter", ad);
  if (mode == AdaptMode::kFullFinetune) save_backbone(out / "backbone", bb);
  write_json(out / "train_log.json", log_to_json(log));
  std::cout << "final train acc " << log.epoch_acc.back() << "%\n";
  return 0;
}

int cmd_adapt_scales(const json& cfg, std::uint64_t seed, const fs::path& out) {
  FrozenBackbone bb = load_backbone(cfg.at("backbone").get<std::string>());
  VideoDataset images = load_dataset(cfg.at("dataset").get<std::string>());
  const auto resolutions = cfg.at("resolutions").get<std::vector<std::int64_t>>();
  TrainSchedule sched =
      schedule_from(jget<json>(cfg, "schedule", json::object()), default_adapt_schedule());
  auto adapters = adapt_scale_space(bb, images, resolutions, sched, seed);
  for (const auto& [res, ad] : adapters)
    save_adapter(out / ("adapter-" + std::to_string(res)), ad);
  std::cout << "trained " << adapters.size() << " scale adapters\n";
  return 0;
}

int cmd_train_target(const json& cfg, std::uint64_t seed, const fs::path& out) {
  VideoDataset ds = load_dataset(cfg.at("dataset").get<std::string>());
  const std::string kind = jget<std::string>(cfg, "kind", "divided_st");
  TargetConfig tc = target_from(jget<json>(cfg, "target", json::object()));
  TrainSchedule sched =
      schedule_from(jget<json>(cfg, "schedule", json::object()), default_target_schedule());
  auto [model, log] = train_target(kind, ds, sched, seed, tc);
  save_target(out / "target", model);
  write_json(out / "train_log.json", log_to_json(log));
  std::cout << "final train acc " << log.epoch_acc.back() << "%\n";
  return 0;
}

int cmd_attack(const json& cfg, std::uint64_t seed, const fs::path& out) {
  ModelPool pool;
  std::vector<SurrogateMember> members;
  for (const auto& spec : cfg.at("surrogates")) members.push_back(pool.member(spec));
  VideoDataset ds = load_dataset(cfg.at("dataset").get<std::string>());
  AttackConfig ac = attack_from(jget<json>(cfg, "attack", json::object()));
  AttackRun run = attack_dataset(ds, members, ac, seed);
  verify_budget(ds, run.adversarial, ac.epsilon);
  save_dataset(out / "adversarial", run.adversarial);
  fs::create_directories(out / "traces");
  for (std::size_t i = 0; i < run.loss_traces.size(); ++i) {
    std::string csv = "step,loss\n";
    for (std::size_t k = 0; k < run.loss_traces[i].size(); ++k)
      csv += std::to_string(k) + "," + std::to_string(run.loss_traces[i][k]) + "\n";
    char name[32];
    std::snprintf(name, sizeof(name), "trace_%04zu.csv", i);
    detail::write_file(out / "traces" / name, csv);
  }
  json manifest = {{"attack", jget<json>(cfg, "attack", json::object())},
                   {"attack_hash", attack_config_hash(ac)},
                   {"run_seed", seed},
                   {"clean_dataset_hash", dataset_hash(ds)},
                   {"adversarial_dataset_hash", dataset_hash(run.adversarial)},
                   {"linf_norms", run.linf_norms},
                   {"surrogate_successes", run.surrogate_successes}};
  write_json(out / "manifest.json", manifest);
  std::cout << "attacked " << ds.clips.size() << " clips | surrogate successes "
            << run.surrogate_successes << "\n";
  return 0;
}

int cmd_transfer_eval(const json& cfg, std::uint64_t seed, const fs::path& out) {
  ModelPool pool;
  TransferSpec spec;
  for (const auto& [sid, members] : cfg.at("surrogates").items()) {
    std::vector<SurrogateMember> ms;
    for (const auto& m : members) ms.push_back(pool.member(m));
    spec.surrogates[sid] = std::move(ms);
  }
  for (const auto& [aid, aj] : cfg.at("attacks").items()) spec.attacks[aid] = attack_from(aj);
  std::deque<TargetModel> targets;
  for (const auto& [tid, path] : cfg.at("targets").items()) {
    targets.push_back(load_target(path.get<std::string>()));
    spec.targets[tid] = &targets.back();
  }
  if (cfg.contains("seeds")) spec.seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  spec.prompts_off_ablation = jget<bool>(cfg, "prompts_off_ablation", true);
  VideoDataset ds = load_dataset(cfg.at("dataset").get<std::string>());

  TransferReport rep = transfer_matrix(spec, ds);
  fs::create_directories(out);
  detail::write_file(out / "transfer.csv", rep.to_csv());
  json manifest = rep.meta;
  manifest["master_seed"] = seed;
  manifest["rows"] = json::array();
  for (const auto& r : rep.rows)
    manifest["rows"].push_back({{"surrogate", r.surrogate_id},
                                {"attack", r.attack_id},
                                {"attack_hash", r.attack_hash},
                                {"target", r.target_id},
                                {"loss_mode", r.loss_mode},
                                {"prompts", r.prompts_on ? "on" : "off"},
                                {"clean_top1", r.clean_top1},
                                {"adv_top1", r.adv_top1},
                                {"accuracy_drop", r.accuracy_drop},
                                {"fooling_rate", r.fooling},
                                {"adv_top1_std", r.adv_top1_std},
                                {"fooling_rate_std", r.fooling_std}});
  write_json(out / "manifest.json", manifest);
  std::cout << rep.to_csv();
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  struct Item {
    std::string name;
    std::function<Tensor(const Tensor&)> f;
    Tensor x0;
  };
  Rng rng(seed);
  VitConfig vc;
  vc.depth = 1;
  vc.embed_dim = 8;
  vc.heads = 2;
  vc.patch = 8;
  vc.resolution = 16;
  vc.channels = 1;
  vc.num_classes = 4;
  auto bb = FrozenBackbone::init(vc, seed + 1);
  bb.set_frozen(true);
  auto ad = PromptAdapter::init(bb, 16, 8, seed + 2, 2, true);

  Tensor a = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::randn({4, 3}, rng);
  Tensor frame0 = Tensor::randn({1, 16, 16}, rng, 40.0);
  std::vector<double> px0(frame0.data());
  for (auto& v : px0) v = std::min(std::max(v + 128.0, 0.0), 255.0);
  frame0 = Tensor::from({1, 16, 16}, px0);
  Tensor clip_px = [&] {
    std::vector<double> v(2 * 16 * 16);
    for (auto& p : v) p = rng.uniform(30.0, 220.0);
    return Tensor::from({2 * 16 * 16}, std::move(v));
  }();

  std::vector<Item> items;
  items.push_back({"matmul+sum", [&](const Tensor& x) { return sum(matmul(x, b)); },
                   Tensor::randn({3, 4}, rng)});
  Tensor ln_gain = Tensor::randn({8}, rng);
  Tensor ln_bias = Tensor::randn({8}, rng);
  items.push_back(
      {"layernorm", [&](const Tensor& x) { return sum(layer_norm(x, ln_gain, ln_bias)); },
       Tensor::randn({3, 8}, rng)});
  items.push_back(
      {"softmax-ce",
       [&](const Tensor& x) { return cross_entropy(x, std::vector<std::int64_t>{1, 0}); },
       Tensor::randn({2, 5}, rng)});
  items.push_back({"gelu", [&](const Tensor& x) { return sum(gelu(x)); },
                   Tensor::randn({4, 4}, rng)});
  items.push_back({"cosine",
                   [&](const Tensor& x) {
                     Tensor y = Tensor::from({1, 8}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
                     return cosine_similarity(reshape(x, {1, 8}), y);
                   },
                   Tensor::randn({8}, rng)});
  items.push_back({"bilinear-resize",
                   [&](const Tensor& x) { return sum(bilinear_resize(x, 11, 7)); },
                   Tensor::randn({1, 16, 16}, rng)});
  items.push_back({"backbone-image-ce",
                   [&](const Tensor& x) {
                     return cross_entropy(forward_image(bb, x), 2);
                   },
                   frame0});
  items.push_back({"end-to-end-joint-loss",
                   [&](const Tensor& x) {
                     std::vector<Tensor> frames = {
                         reshape(slice_rows(reshape(x, {2, 16 * 16}), 0, 1), {1, 16, 16}),
                         reshape(slice_rows(reshape(x, {2, 16 * 16}), 1, 1), {1, 16, 16})};
                     std::vector<Tensor> clean = {frames[0].detach(), frames[1].detach()};
                     SurrogateMember m{&bb, &ad};
                     RefinedTokens ref = clean_reference(m, clean, 0);
                     return joint_loss(ref, frames, 3, bb, &ad, 0, "joint");
                   },
                   clip_px});

  bool all_pass = true;
  for (auto& item : items) {
    GradCheckReport rep = grad_check(item.f, item.x0, 1e-6, 1e-4);
    std::cout << (rep.pass ? "PASS" : "FAIL") << "  " << item.name << "  max_rel_err "
              << rep.max_rel_err << "\n";
    all_pass = all_pass && rep.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_report(const json& cfg, const fs::path& out) {
  const fs::path run = cfg.contains("run") ? fs::path(cfg.at("run").get<std::string>()) : out;
  json manifest;
  {
    std::ifstream f(run / "manifest.json");
    if (!f) throw ConfigError("report: no manifest.json under " + run.string());
    f >> manifest;
  }
  const std::string csv = detail::read_file(run / "transfer.csv");
  // cross-check: the CSV must contain exactly the manifest's rows
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  if (lines != manifest.at("rows").size() + 1)
    throw ContractError("report: CSV row count disagrees with the manifest");
  std::cout << "run " << run << "\nseeds " << manifest.at("seeds").dump() << "\ndataset hash "
            << manifest.at("dataset_hash") << "\n\n";
  std::map<std::string, std::pair<double, double>> by_mode;  // mode -> (sum drop, count)
  for (const auto& r : manifest.at("rows")) {
    auto& acc = by_mode[r.at("prompts").get<std::string>()];
    acc.first += r.at("accuracy_drop").get<double>();
    acc.second += 1.0;
  }
  for (const auto& [mode, acc] : by_mode)
    std::cout << "mean accuracy drop, prompts " << mode << ": " << acc.first / acc.second
              << " points over " << static_cast<std::int64_t>(acc.second) << " rows\n";
  std::cout << "\n" << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-prompt transfer attack workbench"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "runs/out";
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");

  const std::vector<std::string> names = {"gen-data",   "pretrain",      "adapt-prompts",
                                          "adapt-scales", "train-target", "attack",
                                          "transfer-eval", "gradcheck",   "report"};
  for (const auto& n : names) app.add_subcommand(n)->fallthrough();
  CLI11_PARSE(app, argc, argv);

  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    json cfg = load_config(config_path);
    fs::path out(out_dir);
    if (sub != "gradcheck" && sub != "report") fs::create_directories(out);
    if (sub == "gen-data") return cmd_gen_data(cfg, seed, out);
    if (sub == "pretrain") return cmd_pretrain(cfg, seed, out);
    if (sub == "adapt-prompts") return cmd_adapt_prompts(cfg, seed, out);
    if (sub == "adapt-scales") return cmd_adapt_scales(cfg, seed, out);
    if (sub == "train-target") return cmd_train_target(cfg, seed, out);
    if (sub == "attack") return cmd_attack(cfg, seed, out);
    if (sub == "transfer-eval") return cmd_transfer_eval(cfg, seed, out);
    if (sub == "gradcheck") return cmd_gradcheck(seed);
    if (sub == "report") return cmd_report(cfg, out);
    std::cerr << "unknown subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
