#ifndef TEMPO_EVAL_HPP
#define TEMPO_EVAL_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tempo/attack.hpp"
#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/prompts.hpp"
#include "tempo/targets.hpp"

namespace tempo {

// A black-box classifier under evaluation: clip in, logits [C] out.
using Scorer = std::function<Tensor(const VideoClip&)>;

inline Scorer target_scorer(const TargetModel& model) {
  return [&model](const VideoClip& clip) { return forward_target(model, clip); };
}

inline std::vector<std::int64_t> predict_all(const Scorer& scorer, const VideoDataset& ds) {
  std::vector<std::int64_t> preds;
  preds.reserve(ds.clips.size());
  for (const auto& clip : ds.clips) preds.push_back(argmax(scorer(clip).data()));
  return preds;
}

// Top-1 accuracy in percent. Ties in the logits resolve to the lowest class
// index (argmax keeps the first maximum); tie_count records how often that
// rule fired.
inline double top1_accuracy(const Scorer& scorer, const VideoDataset& ds,
                            std::int64_t* tie_count = nullptr) {
  if (ds.clips.empty()) throw ConfigError("top1_accuracy: empty dataset");
  std::int64_t correct = 0, ties = 0;
  for (const auto& clip : ds.clips) {
    const auto logits = scorer(clip).data();
    if (clip.label < 0 || clip.label >= static_cast<std::int64_t>(logits.size()))
      throw ConfigError("top1_accuracy: label " + std::to_string(clip.label) +
                        " outside the model's " + std::to_string(logits.size()) + " classes");
    const std::int64_t best = argmax(logits);
    std::int64_t maxima = 0;
    for (double v : logits)
      if (v == logits[static_cast<std::size_t>(best)]) ++maxima;
    if (maxima > 1) ++ties;
    if (best == clip.label) ++correct;
  }
  if (tie_count) *tie_count = ties;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.clips.size());
}

// Fraction of samples whose predicted label flips between the clean and the
// adversarial clip, in percent. Measured against the model's own clean
// predictions, not the ground truth.
inline double fooling_rate(const Scorer& scorer, const VideoDataset& clean,
                           const VideoDataset& adv) {
  if (clean.clips.empty()) throw ConfigError("fooling_rate: empty dataset");
  if (clean.clips.size() != adv.clips.size())
    throw ContractError("fooling_rate: clean and adversarial datasets are misaligned (" +
                        std::to_string(clean.clips.size()) + " vs " +
                        std::to_string(adv.clips.size()) + " clips)");
  std::int64_t flipped = 0;
  for (std::size_t i = 0; i < clean.clips.size(); ++i) {
    if (clean.clips[i].label != adv.clips[i].label ||
        clean.clips[i].frames.shape() != adv.clips[i].frames.shape())
      throw ContractError("fooling_rate: clip " + std::to_string(i) + " is misaligned");
    if (argmax(scorer(clean.clips[i]).data()) != argmax(scorer(adv.clips[i]).data())) ++flipped;
  }
  return 100.0 * static_cast<double>(flipped) / static_cast<double>(clean.clips.size());
}

inline std::uint64_t dataset_hash(const VideoDataset& ds) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& clip : ds.clips) {
    h = fnv1a64(&clip.label, sizeof(clip.label), h);
    h = hash_doubles(clip.frames.data(), h);
  }
  return h;
}

inline std::uint64_t attack_config_hash(const AttackConfig& cfg) {
  nlohmann::json j = {{"method", cfg.method},
                      {"epsilon", cfg.epsilon},
                      {"alpha", cfg.alpha},
                      {"steps", cfg.steps},
                      {"mu", cfg.mu},
                      {"diversity_prob", cfg.diversity_prob},
                      {"div_min_scale", cfg.div_min_scale},
                      {"div_max_scale", cfg.div_max_scale},
                      {"loss_mode", cfg.loss_mode},
                      {"frame_policy", cfg.frame_policy},
                      {"fixed_frame", cfg.fixed_frame}};
  const std::string s = j.dump();
  return fnv1a64(s.data(), s.size());
}

// One attack pass over a dataset. Per-clip seeds derive from (run_seed, clip
// index), so clips are independent jobs with isolated RNG streams.
struct AttackRun {
  VideoDataset adversarial;
  std::vector<std::vector<double>> loss_traces;
  std::vector<double> linf_norms;
  std::int64_t surrogate_successes = 0;
};

inline AttackRun attack_dataset(const VideoDataset& ds,
                                const std::vector<SurrogateMember>& surrogates,
                                AttackConfig cfg, std::uint64_t run_seed) {
  if (ds.clips.empty()) throw ConfigError("attack_dataset: empty dataset");
  AttackRun run;
  run.adversarial.num_classes = ds.num_classes;
  run.adversarial.spec = ds.spec;
  run.adversarial.spec["adversarial"] = true;
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    cfg.seed = splitmix64(run_seed ^ splitmix64(static_cast<std::uint64_t>(i) + 1));
    AttackResult res = run_attack(ds.clips[i], ds.clips[i].label, surrogates, cfg);
    run.adversarial.clips.push_back(std::move(res.adversarial));
    run.loss_traces.push_back(std::move(res.loss_trace));
    run.linf_norms.push_back(res.linf_norm);
    if (res.success_on_surrogate) ++run.surrogate_successes;
  }
  return run;
}

// Defense in depth: re-verify every adversarial clip against the budget at
// evaluation time, independently of the attack's own check.
inline void verify_budget(const VideoDataset& clean, const VideoDataset& adv, double epsilon) {
  if (clean.clips.size() != adv.clips.size())
    throw ContractError("verify_budget: datasets misaligned");
  for (std::size_t i = 0; i < clean.clips.size(); ++i) {
    const auto& c = clean.clips[i].frames.data();
    const auto& a = adv.clips[i].frames.data();
    if (c.size() != a.size()) throw ContractError("verify_budget: clip " + std::to_string(i) +
                                                  " shape mismatch");
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (std::abs(a[k] - c[k]) > epsilon + 1e-9)
        throw ContractError("verify_budget: clip " + std::to_string(i) +
                            " exceeds the epsilon ball");
      if (a[k] < 0.0 || a[k] > 255.0)
        throw ContractError("verify_budget: clip " + std::to_string(i) +
                            " leaves the pixel range");
    }
  }
}

struct TransferRow {
  std::string surrogate_id;
  std::string attack_id;
  std::uint64_t attack_hash = 0;
  std::string target_id;
  std::string loss_mode;
  bool prompts_on = true;
  double clean_top1 = 0.0;
  double adv_top1 = 0.0;       // mean over seeds
  double accuracy_drop = 0.0;  // clean_top1 - adv_top1
  double fooling = 0.0;        // mean over seeds
  double adv_top1_std = 0.0;
  double fooling_std = 0.0;
};

struct TransferReport {
  std::vector<TransferRow> rows;
  nlohmann::json meta;  // seeds, dataset hash, timestamps, notes

  // Byte-reproducible: fixed column order, fixed formatting, no timestamps.
  std::string to_csv() const {
    std::string out =
        "surrogate,attack,attack_hash,target,loss_mode,prompts,clean_top1,adv_top1,"
        "accuracy_drop,fooling_rate,adv_top1_std,fooling_rate_std\n";
    char buf[160];
    for (const auto& r : rows) {
      out += r.surrogate_id + "," + r.attack_id + "," + std::to_string(r.attack_hash) + "," +
             r.target_id + "," + r.loss_mode + "," + (r.prompts_on ? "on" : "off") + ",";
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.clean_top1,
                    r.adv_top1, r.accuracy_drop, r.fooling, r.adv_top1_std, r.fooling_std);
      out += buf;
    }
    return out;
  }
};

struct TransferSpec {
  std::map<std::string, std::vector<SurrogateMember>> surrogates;
  std::map<std::string, AttackConfig> attacks;
  std::map<std::string, const TargetModel*> targets;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  // When true, every cell gets a twin that drops the prompt modules and
  // optimizes only the self-supervised objective on the bare backbones.
  bool prompts_off_ablation = true;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size());
  return {m, std::sqrt(std::max(v, 0.0))};
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

// Full transfer matrix: every (surrogate, attack, target, prompts-mode) cell,
// aggregated over seeds. Any cell failure aborts with the cell id; a partial
// report is never returned.
inline TransferReport transfer_matrix(const TransferSpec& spec, const VideoDataset& ds) {
  if (spec.surrogates.empty() || spec.attacks.empty() || spec.targets.empty())
    throw ConfigError("transfer_matrix: surrogates, attacks, and targets must be non-empty");
  if (spec.seeds.empty()) throw ConfigError("transfer_matrix: need at least one seed");
  if (ds.clips.empty()) throw ConfigError("transfer_matrix: empty dataset");

  TransferReport report;
  report.meta["started"] = detail::iso_timestamp();
  report.meta["dataset_hash"] = dataset_hash(ds);
  report.meta["seeds"] = spec.seeds;
  report.meta["prompts_off_objective"] =
      "self_supervised_only on the bare backbone (no image-label signal)";

  // clean predictions and accuracy per target, computed once
  std::map<std::string, double> clean_acc;
  for (const auto& [tid, model] : spec.targets) {
    if (!model) throw ConfigError("transfer_matrix: null target '" + tid + "'");
    clean_acc[tid] = top1_accuracy(target_scorer(*model), ds);
  }

  std::vector<std::pair<bool, std::string>> modes = {{true, "prompts_on"}};
  if (spec.prompts_off_ablation) modes.emplace_back(false, "prompts_off");

  for (const auto& [sid, members] : spec.surrogates) {
    for (const auto& [aid, base_cfg] : spec.attacks) {
      for (const auto& [prompts_on, mode_name] : modes) {
        AttackConfig cfg = base_cfg;
        std::vector<SurrogateMember> used = members;
        if (!prompts_on) {
          for (auto& m : used) m.adapter = nullptr;
          cfg.loss_mode = "self_supervised_only";
        }
        const std::string cell_base = sid + "/" + aid + "/" + mode_name;
        // per-seed adversarial sets, shared by every target in this cell
        std::map<std::string, std::vector<double>> adv_accs, fools;
        for (std::uint64_t seed : spec.seeds) {
          const std::string cell = cell_base + "/seed" + std::to_string(seed);
          try {
            const std::uint64_t run_seed =
                splitmix64(seed ^ fnv1a64(cell_base.data(), cell_base.size()));
            AttackRun run = attack_dataset(ds, used, cfg, run_seed);
            verify_budget(ds, run.adversarial, cfg.epsilon);
            for (const auto& [tid, model] : spec.targets) {
              Scorer scorer = target_scorer(*model);
              adv_accs[tid].push_back(top1_accuracy(scorer, run.adversarial));
              fools[tid].push_back(fooling_rate(scorer, ds, run.adversarial));
            }
          } catch (const std::exception& e) {
            throw ContractError("transfer_matrix: cell " + cell + " failed: " + e.what());
          }
        }
        for (const auto& [tid, model] : spec.targets) {
          TransferRow row;
          row.surrogate_id = sid;
          row.attack_id = aid;
          row.attack_hash = attack_config_hash(cfg);
          row.target_id = tid;
          row.loss_mode = cfg.loss_mode;
          row.prompts_on = prompts_on;
          row.clean_top1 = clean_acc.at(tid);
          auto [am, as] = detail::mean_std(adv_accs.at(tid));
          auto [fm, fs] = detail::mean_std(fools.at(tid));
          row.adv_top1 = am;
          row.adv_top1_std = as;
          row.fooling = fm;
          row.fooling_std = fs;
          row.accuracy_drop = row.clean_top1 - row.adv_top1;
          for (double v : {row.clean_top1, row.adv_top1, row.fooling})
            if (v < 0.0 || v > 100.0)
              throw ContractError("transfer_matrix: percentage out of [0, 100]");
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  report.meta["finished"] = detail::iso_timestamp();
  return report;
}

// Linear probe on frozen single-frame class-token features: the control that
// shows per-frame appearance alone cannot solve the motion task.
struct FrameProbe {
  Linear head;
  std::int64_t num_classes = 0;
};

inline std::pair<FrameProbe, TrainLog> train_frame_probe(const FrozenBackbone& bb,
                                                         const VideoDataset& ds,
                                                         const TrainSchedule& sched,
                                                         std::uint64_t seed) {
  if (ds.clips.empty()) throw ConfigError("train_frame_probe: empty dataset");
  Rng rng(seed);
  FrameProbe probe{Linear::init(bb.cfg.embed_dim, ds.num_classes, rng), ds.num_classes};

  // frozen features never change: precompute one detached feature per frame
  std::vector<std::vector<Tensor>> feats(ds.clips.size());
  for (std::size_t i = 0; i < ds.clips.size(); ++i)
    for (std::int64_t f = 0; f < ds.clips[i].t(); ++f)
      feats[i].push_back(detail::bare_cls_feature(bb, ds.clips[i].frame(f)).detach());

  NamedParams np;
  probe.head.collect("head", np);
  std::vector<Tensor> params;
  for (auto& [name, t] : np) params.push_back(t);
  Sgd opt(params, sched.momentum);
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
        const auto& frame_feats = feats[order[i]];
        const std::int64_t fi = rng.uniform_int(static_cast<std::int64_t>(frame_feats.size()));
        Tensor logits = probe.head(frame_feats[static_cast<std::size_t>(fi)]);
        if (argmax(logits.data()) == ds.clips[order[i]].label) ++correct;
        rows.push_back(logits);
        labels.push_back(ds.clips[order[i]].label);
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
  return {std::move(probe), std::move(log)};
}

// Clip accuracy of the probe with logits averaged over all frames.
// Single-frame protocol: each clip is scored from exactly one (seeded) random
// frame, mirroring how the probe is trained. Averaging logits over all frames
// would grade a t-frame ensemble instead of a single-frame predictor.
inline double frame_probe_accuracy(const FrozenBackbone& bb, const FrameProbe& probe,
                                   const VideoDataset& ds, std::uint64_t seed = 0) {
  if (ds.clips.empty()) throw ConfigError("frame_probe_accuracy: empty dataset");
  Rng rng(splitmix64(seed ^ 0x70726f6265ULL));  // independent of training streams
  std::int64_t correct = 0;
  for (const auto& clip : ds.clips) {
    const std::int64_t f = rng.uniform_int(clip.t());
    Tensor logits = probe.head(detail::bare_cls_feature(bb, clip.frame(f)));
    if (argmax(logits.data()) == clip.label) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.clips.size());
}

}  // namespace tempo

#endif  // TEMPO_EVAL_HPP
