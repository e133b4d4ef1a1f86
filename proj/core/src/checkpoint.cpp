#include "cridiff/checkpoint.hpp"

#include <stdexcept>

namespace cridiff {

namespace {

constexpr const char* kWeightPrefix = "w/";

std::map<std::string, torch::Tensor> module_tensors(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : module.named_parameters(true)) out[item.key()] = item.value();
  for (const auto& item : module.named_buffers(true)) out[item.key()] = item.value();
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& module, const CheckpointInfo& info) {
  torch::serialize::OutputArchive archive;
  archive.write("meta/format_version", c10::IValue(static_cast<int64_t>(info.format_version)));
  archive.write("meta/kind", c10::IValue(info.kind));
  archive.write("meta/schedule_steps", c10::IValue(static_cast<int64_t>(info.schedule_steps)));
  archive.write("meta/beta_start", c10::IValue(info.beta_start));
  archive.write("meta/beta_end", c10::IValue(info.beta_end));
  archive.write("meta/step", c10::IValue(info.step));
  archive.write("meta/config", c10::IValue(info.config_json));

  std::string names;
  for (const auto& [name, tensor] : module_tensors(module)) {
    archive.write(kWeightPrefix + name, tensor.detach(), /*is_buffer=*/true);
    names += name;
    names += '\n';
  }
  archive.write("meta/tensor_names", c10::IValue(names));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing checkpoint " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());

  LoadedCheckpoint out;
  c10::IValue v;
  if (!archive.try_read("meta/format_version", v)) {
    throw std::runtime_error("not a cridiff checkpoint: " + path.string());
  }
  out.info.format_version = static_cast<int>(v.toInt());
  if (out.info.format_version != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint format version " + std::to_string(out.info.format_version) +
                             " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  archive.read("meta/kind", v);
  out.info.kind = v.toStringRef();
  archive.read("meta/schedule_steps", v);
  out.info.schedule_steps = static_cast<int>(v.toInt());
  archive.read("meta/beta_start", v);
  out.info.beta_start = v.toDouble();
  archive.read("meta/beta_end", v);
  out.info.beta_end = v.toDouble();
  archive.read("meta/step", v);
  out.info.step = v.toInt();
  archive.read("meta/config", v);
  out.info.config_json = v.toStringRef();

  archive.read("meta/tensor_names", v);
  const std::string& names = v.toStringRef();
  std::size_t start = 0;
  while (start < names.size()) {
    const auto end = names.find('\n', start);
    const std::string name = names.substr(start, end - start);
    torch::Tensor t;
    archive.read(kWeightPrefix + name, t, /*is_buffer=*/true);
    out.tensors[name] = t;
    start = end + 1;
  }
  return out;
}

void load_tensors(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                  const std::function<bool(const std::string&)>& select) {
  torch::NoGradGuard no_grad;
  for (auto& [name, target] : module_tensors(module)) {
    if (select && !select(name)) continue;
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint lacks tensor '" + name + "'");
    if (!it->second.sizes().equals(target.sizes())) {
      throw std::runtime_error("shape mismatch for '" + name + "': checkpoint " +
                               c10::str(it->second.sizes()) + " vs model " + c10::str(target.sizes()));
    }
    target.copy_(it->second);
  }
}

}  // namespace cridiff
