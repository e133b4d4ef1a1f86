#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cridiff/checkpoint.hpp"
#include "cridiff/config.hpp"
#include "cridiff/dataset.hpp"
#include "cridiff/training.hpp"

namespace cridiff {

/// A split dataset held in memory next to the manifest that produced it.
struct ExperimentData {
  data::DatasetManifest manifest;
  SegmentationData train;
  SegmentationData val;
  SegmentationData test;
};

/// Uses `cfg.data_root` when set; otherwise generates phantoms under
/// `work_dir/data` (reusing them when already there). Splits with
/// `cfg.split` and `cfg.data_seed`, and writes `work_dir/manifest.tsv`.
ExperimentData prepare_data(const RunConfig& cfg, const std::filesystem::path& work_dir);

/// Loads every case of one split.
SegmentationData load_split(const data::DatasetManifest& manifest, data::Split split);

SegmenterConfig segmenter_config(const RunConfig& cfg);
OptimizerOptions optimizer_options(const RunConfig& cfg);
EvaluationOptions evaluation_options(const RunConfig& cfg);
CheckpointInfo checkpoint_info(const RunConfig& cfg, const std::string& kind, int64_t step);

/// Seeds libtorch with `cfg.seed`, then builds the model and applies the
/// configured init mode to the denoiser.
Segmenter build_segmenter(const RunConfig& cfg);

using Progress = std::function<void(const StepRecord&)>;

/// Generative pre-training of a fresh denoiser on `images`. Writes a
/// `pretrain` checkpoint to `checkpoint` and returns the per-step records.
std::vector<StepRecord> run_pretrain(const RunConfig& cfg, const torch::Tensor& images,
                                     const std::filesystem::path& checkpoint, const Progress& progress = {});

std::vector<StepRecord> run_train(const RunConfig& cfg, Segmenter model, const SegmentationData& train,
                                  const Progress& progress = {});

metrics::MetricSummary summarize(const std::vector<CasePrediction>& predictions);

/// step,conditioner_loss,diffusion_loss,total_loss
void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records);
std::vector<StepRecord> read_loss_csv(const std::filesystem::path& path);

/// case_id,dsc,iou,hsd,asd,undefined_flags plus a final `mean` row. An empty
/// surface distance means it was undefined for that case (flag 1).
void write_eval_csv(const std::filesystem::path& path, const std::vector<CasePrediction>& predictions);

/// Provenance recorded next to every output: command, config and its hash,
/// seeds, code version and the injection plan.
nlohmann::json run_manifest(const RunConfig& cfg, const std::string& command);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cridiff
