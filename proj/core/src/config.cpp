#include "cridiff/config.hpp"

#include <cstdio>
#include <sstream>

namespace cridiff {

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) {
    try {
      field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValidationError("expected a boolean, got '" + v + "'");
}

}  // namespace

const char* code_version() noexcept { return "cridiff 0.1.0"; }

void RunConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (data_root.empty() && phantom_count < 1) fail("phantom_count must be >= 1");
  if (image_size <= 0 || image_size % 32 != 0) fail("image_size must be a positive multiple of 32");
  if (phantom_noise < 0) fail("phantom_noise must be non-negative");
  double total = 0;
  for (double f : split) {
    if (f < 0) fail("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("split fractions must sum to 1");
  if (diffusion_steps < 1) fail("diffusion_steps must be >= 1");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) fail("need 0 < beta_start <= beta_end < 1");
  try {
    (void)conditioner_variant();
    (void)plan();
    (void)init_mode();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (init == "gp" && gp_checkpoint.empty()) fail("init=gp requires gp_checkpoint");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (iterations < 0 || pretrain_iterations < 0) fail("iteration counts must be non-negative");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (ensemble < 1) fail("ensemble must be >= 1");
  if (!(threshold >= 0 && threshold <= 1)) fail("threshold must lie in [0, 1]");
  if (!(hausdorff_percentile > 0 && hausdorff_percentile <= 100)) fail("hausdorff_percentile must lie in (0, 100]");
  if (log_every < 1) fail("log_every must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  return nlohmann::json{
      {"data_root", data_root},
      {"phantom_count", phantom_count},
      {"image_size", image_size},
      {"phantom_noise", phantom_noise},
      {"data_seed", data_seed},
      {"split", split},
      {"diffusion_steps", diffusion_steps},
      {"beta_start", beta_start},
      {"beta_end", beta_end},
      {"small", small},
      {"conditioner", conditioner},
      {"strategy", strategy},
      {"ratio", ratio},
      {"init", init},
      {"gp_checkpoint", gp_checkpoint},
      {"learning_rate", learning_rate},
      {"weight_decay", weight_decay},
      {"iterations", iterations},
      {"pretrain_iterations", pretrain_iterations},
      {"batch_size", batch_size},
      {"ensemble", ensemble},
      {"threshold", threshold},
      {"hausdorff_percentile", hausdorff_percentile},
      {"seed", seed},
      {"output_dir", output_dir},
      {"log_every", log_every},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  const auto known = c.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  read_field(j, "data_root", c.data_root);
  read_field(j, "phantom_count", c.phantom_count);
  read_field(j, "image_size", c.image_size);
  read_field(j, "phantom_noise", c.phantom_noise);
  read_field(j, "data_seed", c.data_seed);
  read_field(j, "split", c.split);
  read_field(j, "diffusion_steps", c.diffusion_steps);
  read_field(j, "beta_start", c.beta_start);
  read_field(j, "beta_end", c.beta_end);
  read_field(j, "small", c.small);
  read_field(j, "conditioner", c.conditioner);
  read_field(j, "strategy", c.strategy);
  read_field(j, "ratio", c.ratio);
  read_field(j, "init", c.init);
  read_field(j, "gp_checkpoint", c.gp_checkpoint);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "iterations", c.iterations);
  read_field(j, "pretrain_iterations", c.pretrain_iterations);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "ensemble", c.ensemble);
  read_field(j, "threshold", c.threshold);
  read_field(j, "hausdorff_percentile", c.hausdorff_percentile);
  read_field(j, "seed", c.seed);
  read_field(j, "output_dir", c.output_dir);
  read_field(j, "log_every", c.log_every);
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto j = to_json();
  if (!j.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  auto& slot = j[key];
  try {
    if (slot.is_boolean()) {
      slot = parse_bool(value);
    } else if (slot.is_number_unsigned()) {
      slot = static_cast<std::uint64_t>(std::stoull(value));
    } else if (slot.is_number_integer()) {
      slot = std::stoll(value);
    } else if (slot.is_number_float()) {
      slot = std::stod(value);
    } else if (slot.is_array()) {
      slot = nlohmann::json::array();
      std::istringstream in(value);
      std::string tok;
      while (std::getline(in, tok, ',')) slot.push_back(std::stod(tok));
    } else {
      slot = value;
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("bad value '" + value + "' for config key '" + key + "'");
  }
  *this = from_json(j);
}

diffusion::NoiseSchedule RunConfig::schedule() const {
  return diffusion::make_schedule(diffusion_steps, beta_start, beta_end);
}

nn::DenoiserConfig RunConfig::denoiser_config() const {
  return small ? nn::DenoiserConfig::small() : nn::DenoiserConfig{};
}

nn::ConditionerVariant RunConfig::conditioner_variant() const { return nn::variant_from_string(conditioner); }

nn::InjectionPlan RunConfig::plan() const { return nn::build_injection_plan(strategy, ratio); }

nn::InitMode RunConfig::init_mode() const { return nn::init_mode_from_string(init); }

data::PhantomSpec RunConfig::phantom_spec() const {
  data::PhantomSpec spec;
  spec.height = image_size;
  spec.width = image_size;
  spec.noise_sigma = phantom_noise;
  return spec;
}

std::string RunConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cridiff
