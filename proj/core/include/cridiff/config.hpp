#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cridiff/conditioners.hpp"
#include "cridiff/denoiser.hpp"
#include "cridiff/diffusion.hpp"
#include "cridiff/phantom.hpp"

namespace cridiff {

/// Raised for configuration problems detected before any compute.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  // data: a dataset directory, or generated phantoms when empty
  std::string data_root;
  int phantom_count = 200;
  int image_size = 64;
  double phantom_noise = 0.05;
  std::uint64_t data_seed = 7;
  std::array<double, 3> split{0.8, 0.1, 0.1};

  // noise schedule
  int diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  // model
  bool small = true;
  std::string conditioner = "P+C+B";
  std::string strategy = "crisscross";
  std::string ratio = "2:2";
  std::string init = "random";
  std::string gp_checkpoint;

  // optimizer
  double learning_rate = 1e-5;
  double weight_decay = 1e-2;
  int iterations = 2000;
  int pretrain_iterations = 2000;
  int batch_size = 6;

  // inference
  int ensemble = 25;
  double threshold = 0.5;
  double hausdorff_percentile = 100.0;

  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  int log_every = 50;

  /// Throws ValidationError naming the first offending field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  /// Applies `key=value` style overrides (values parsed per field type).
  void set(const std::string& key, const std::string& value);

  diffusion::NoiseSchedule schedule() const;
  nn::DenoiserConfig denoiser_config() const;
  nn::ConditionerVariant conditioner_variant() const;
  nn::InjectionPlan plan() const;
  nn::InitMode init_mode() const;
  data::PhantomSpec phantom_spec() const;

  /// FNV-1a of the canonical JSON text.
  std::string hash() const;
};

/// Version string recorded in every run manifest.
const char* code_version() noexcept;

}  // namespace cridiff
