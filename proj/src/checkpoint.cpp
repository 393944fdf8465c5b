#include "mixbench/checkpoint.hpp"

#include <sstream>

#include "mixbench/config.hpp"
#include "mixbench/errors.hpp"

namespace mixbench {

namespace {

constexpr const char* kFormat = "mixbench-checkpoint-1";

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

template <typename Real>
Tensor<Real> vector_tensor(const std::vector<Real>& v) {
  return Tensor<Real>(Shape{v.size()}, v);
}

KeyValues read_manifest(const std::filesystem::path& manifest) {
  KeyValues kv = KeyValues::load(manifest);
  if (kv.get("format", "") != kFormat) throw DataError(manifest.string() + ": not a " + std::string(kFormat) + " manifest");
  return kv;
}

std::string required(const KeyValues& kv, const std::string& key, const std::filesystem::path& manifest) {
  if (!kv.has(key)) throw DataError(manifest.string() + ": missing key " + key);
  return kv.get(key);
}

}  // namespace

template <typename Real>
std::filesystem::path save_checkpoint(Model<Real>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tensors");
  KeyValues kv;
  kv.set("format", kFormat);
  kv.set("model.family", model.family());
  kv.set("model.mode", to_string(model.mode()));
  for (const auto& [k, v] : model.describe()) kv.set("model." + k, v);

  auto& store = model.params();
  std::vector<std::string> names;
  for (std::size_t g = 0; g < store.size(); ++g) names.push_back(store[g].name);
  auto stats = model.running_stats();
  std::vector<std::string> stat_names;
  for (const auto& [name, s] : stats) stat_names.push_back(name);
  kv.set("groups", join(names));
  kv.set("stats", join(stat_names));

  for (std::size_t g = 0; g < store.size(); ++g) {
    const auto& group = store[g];
    const std::string prefix = "group." + group.name;
    kv.set(prefix + ".kind", to_string(group.kind));
    kv.set(prefix + ".trainable", group.trainable ? "true" : "false");
    kv.set(prefix + ".init_checksum", checksum_hex(group.init_checksum));
    kv.set(prefix + ".checksum", checksum_hex(group.current_checksum()));
    kv.set(prefix + ".tensors", join(group.tensor_names));
    for (std::size_t t = 0; t < group.tensors.size(); ++t) {
      const std::string file = "tensors/" + group.name + "." + group.tensor_names[t] + ".mxt";
      save_mxt(group.tensors[t], dir / file);
      kv.set(prefix + ".tensor." + group.tensor_names[t], file);
      kv.set(prefix + ".tensor." + group.tensor_names[t] + ".file_checksum",
             checksum_hex(checksum(group.tensors[t].template cast<float>())));
    }
  }
  for (const auto& [name, s] : stats) {
    const std::string mean_file = "tensors/" + name + ".running_mean.mxt";
    const std::string var_file = "tensors/" + name + ".running_var.mxt";
    save_mxt(vector_tensor(s->mean), dir / mean_file);
    save_mxt(vector_tensor(s->var), dir / var_file);
    kv.set("stats." + name + ".mean", mean_file);
    kv.set("stats." + name + ".var", var_file);
  }
  const auto manifest = dir / "manifest.txt";
  kv.save(manifest);
  return manifest;
}

template <typename Real>
void load_checkpoint(Model<Real>& model, const std::filesystem::path& manifest) {
  const KeyValues kv = read_manifest(manifest);
  const auto root = manifest.parent_path();
  auto& store = model.params();
  for (const auto& name : split(required(kv, "groups", manifest))) {
    ParamGroup<Real>* group = store.find(name);
    if (!group) throw DataError(manifest.string() + ": model has no group " + name);
    for (std::size_t t = 0; t < group->tensors.size(); ++t) {
      const std::string key = "group." + name + ".tensor." + group->tensor_names[t];
      const auto path = root / required(kv, key, manifest);
      const Tensor<float> stored = load_mxt(path);
      if (checksum_hex(checksum(stored)) != required(kv, key + ".file_checksum", manifest))
        throw DataError(path.string() + ": checksum mismatch");
      if (stored.shape() != group->tensors[t].shape())
        throw DataError(path.string() + ": shape " + shape_string(stored.shape()) + " does not match model " +
                        shape_string(group->tensors[t].shape()));
      group->tensors[t] = stored.template cast<Real>();
    }
  }
  for (auto& [name, s] : model.running_stats()) {
    const std::string key = "stats." + name;
    if (!kv.has(key + ".mean")) throw DataError(manifest.string() + ": missing statistics for " + name);
    const Tensor<float> mean = load_mxt(root / kv.get(key + ".mean"));
    const Tensor<float> var = load_mxt(root / kv.get(key + ".var"));
    if (mean.numel() != s->mean.size() || var.numel() != s->var.size())
      throw DataError(manifest.string() + ": statistics size mismatch for " + name);
    for (std::size_t c = 0; c < s->mean.size(); ++c) {
      s->mean[c] = static_cast<Real>(mean[c]);
      s->var[c] = static_cast<Real>(var[c]);
    }
  }
  store.reseal();
}

bool CheckpointSummary::ok() const {
  for (const auto& g : groups)
    if (!g.frozen_intact()) return false;
  for (const auto& t : tensors)
    if (!t.checksum_ok) return false;
  return true;
}

CheckpointSummary inspect_checkpoint(const std::filesystem::path& manifest) {
  const KeyValues kv = read_manifest(manifest);
  const auto root = manifest.parent_path();
  CheckpointSummary summary;
  for (const auto& [k, v] : kv.entries())
    if (k.rfind("model.", 0) == 0) summary.model.emplace_back(k.substr(6), v);
  for (const auto& name : split(required(kv, "groups", manifest))) {
    const std::string prefix = "group." + name;
    CheckpointGroup group;
    group.name = name;
    group.kind = required(kv, prefix + ".kind", manifest);
    group.trainable = required(kv, prefix + ".trainable", manifest) == "true";
    group.init_checksum = required(kv, prefix + ".init_checksum", manifest);
    group.checksum = required(kv, prefix + ".checksum", manifest);
    for (const auto& tensor_name : split(kv.get(prefix + ".tensors", ""))) {
      const std::string key = prefix + ".tensor." + tensor_name;
      CheckpointTensor entry;
      entry.group = name;
      entry.tensor = tensor_name;
      entry.file = required(kv, key, manifest);
      const Tensor<float> stored = load_mxt(root / entry.file);
      entry.shape = stored.shape();
      entry.checksum_ok = checksum_hex(checksum(stored)) == required(kv, key + ".file_checksum", manifest);
      summary.total_params += stored.numel();
      if (group.trainable) summary.trainable_params += stored.numel();
      summary.tensors.push_back(std::move(entry));
    }
    summary.groups.push_back(std::move(group));
  }
  return summary;
}

template std::filesystem::path save_checkpoint(Model<float>&, const std::filesystem::path&);
template std::filesystem::path save_checkpoint(Model<double>&, const std::filesystem::path&);
template void load_checkpoint(Model<float>&, const std::filesystem::path&);
template void load_checkpoint(Model<double>&, const std::filesystem::path&);

}  // namespace mixbench
