#ifndef TEMPO_CHECKPOINT_HPP
#define TEMPO_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempo/common.hpp"
#include "tempo/dataset.hpp"
#include "tempo/tensor.hpp"

namespace tempo {

// Checkpoints are a JSON manifest naming tensors (name, shape, dtype, byte
// offset) plus one little-endian raw blob.
struct Checkpoint {
  std::string model_kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw ConfigError("checkpoint: missing tensor '" + name + "'");
  }
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const std::string& model_kind,
                            const nlohmann::json& meta,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "tempo-checkpoint-v1";
  manifest["model_kind"] = model_kind;
  manifest["meta"] = meta;
  manifest["dtype"] = "f64le";
  std::string blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = blob.size();
    e["bytes"] = t.data().size() * sizeof(double);
    entries.push_back(e);
    const char* raw = reinterpret_cast<const char*>(t.data().data());
    blob.append(raw, t.data().size() * sizeof(double));
  }
  manifest["tensors"] = entries;
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  detail::write_file(dir / "weights.bin", blob);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  if (manifest.at("format") != "tempo-checkpoint-v1")
    throw ConfigError("unknown checkpoint format in " + dir.string());
  const std::string blob = detail::read_file(dir / "weights.bin");
  Checkpoint ck;
  ck.model_kind = manifest.at("model_kind");
  ck.meta = manifest.at("meta");
  for (const auto& e : manifest.at("tensors")) {
    Shape shape = e.at("shape").get<Shape>();
    const std::size_t offset = e.at("offset");
    const std::size_t bytes = e.at("bytes");
    if (offset + bytes > blob.size()) throw ConfigError("checkpoint blob truncated");
    std::vector<double> data(bytes / sizeof(double));
    std::memcpy(data.data(), blob.data() + offset, bytes);
    ck.tensors.emplace_back(e.at("name"), Tensor::from(std::move(shape), std::move(data)));
  }
  return ck;
}

// copies loaded values into an existing parameter set, by name
inline void restore_params(const Checkpoint& ck,
                           const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& [name, t] : params) {
    const Tensor& src = ck.at(name);
    if (src.shape() != t.shape())
      throw ConfigError("checkpoint: shape mismatch for '" + name + "'");
    Tensor dst = t;  // shared handle; writes land in the caller's parameter
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
}

// ---- dataset persistence --------------------------------------------------

inline void save_dataset(const std::filesystem::path& dir, const VideoDataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "tempo-dataset-v1";
  manifest["spec"] = ds.spec;
  manifest["num_classes"] = ds.num_classes;
  nlohmann::json entries = nlohmann::json::array();
  std::string blob;
  for (const auto& clip : ds.clips) {
    nlohmann::json e;
    e["shape"] = clip.frames.shape();
    e["label"] = clip.label;
    e["offset"] = blob.size();
    entries.push_back(e);
    const char* raw = reinterpret_cast<const char*>(clip.frames.data().data());
    blob.append(raw, clip.frames.data().size() * sizeof(double));
  }
  manifest["clips"] = entries;
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  detail::write_file(dir / "clips.bin", blob);
}

inline VideoDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  if (manifest.at("format") != "tempo-dataset-v1")
    throw ConfigError("unknown dataset format in " + dir.string());
  const std::string blob = detail::read_file(dir / "clips.bin");
  VideoDataset ds;
  ds.spec = manifest.at("spec");
  ds.num_classes = manifest.at("num_classes");
  for (const auto& e : manifest.at("clips")) {
    Shape shape = e.at("shape").get<Shape>();
    const std::size_t offset = e.at("offset");
    const std::size_t n = static_cast<std::size_t>(numel(shape));
    std::vector<double> data(n);
    std::memcpy(data.data(), blob.data() + offset, n * sizeof(double));
    VideoClip clip;
    clip.frames = Tensor::from(std::move(shape), std::move(data));
    clip.label = e.at("label");
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

}  // namespace tempo

#endif  // TEMPO_CHECKPOINT_HPP
