#include "cridiff/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cridiff {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

SegmentationData load_split(const data::DatasetManifest& manifest, data::Split split) {
  std::vector<data::LoadedCase> cases;
  for (const auto& entry : manifest.select(split)) cases.push_back(data::load_case(entry));
  if (cases.empty()) return {};
  return SegmentationData::from_cases(cases);
}

ExperimentData prepare_data(const RunConfig& cfg, const fs::path& work_dir) {
  fs::path root = cfg.data_root;
  if (root.empty()) {
    root = work_dir / "data";
    const bool present = fs::exists(root / "images") && fs::exists(root / "masks") &&
                         data::load_dataset(root).cases.size() == static_cast<std::size_t>(cfg.phantom_count);
    if (!present) data::generate_dataset(root, cfg.phantom_spec(), cfg.phantom_count, cfg.data_seed);
  }
  ExperimentData out;
  out.manifest = data::split_manifest(data::load_dataset(root), cfg.split, cfg.data_seed);
  data::write_manifest(work_dir / "manifest.tsv", out.manifest);
  out.train = load_split(out.manifest, data::Split::Train);
  out.val = load_split(out.manifest, data::Split::Val);
  out.test = load_split(out.manifest, data::Split::Test);
  return out;
}

SegmenterConfig segmenter_config(const RunConfig& cfg) {
  SegmenterConfig sc;
  sc.variant = cfg.conditioner_variant();
  sc.denoiser = cfg.denoiser_config();
  sc.plan = cfg.plan();
  return sc;
}

OptimizerOptions optimizer_options(const RunConfig& cfg) {
  return {cfg.learning_rate, cfg.weight_decay, cfg.batch_size, cfg.seed};
}

EvaluationOptions evaluation_options(const RunConfig& cfg) {
  EvaluationOptions eo;
  eo.ensemble = cfg.ensemble;
  eo.threshold = cfg.threshold;
  eo.seed = cfg.seed;
  eo.hausdorff_percentile = cfg.hausdorff_percentile;
  return eo;
}

CheckpointInfo checkpoint_info(const RunConfig& cfg, const std::string& kind, int64_t step) {
  CheckpointInfo info;
  info.kind = kind;
  info.schedule_steps = cfg.diffusion_steps;
  info.beta_start = cfg.beta_start;
  info.beta_end = cfg.beta_end;
  info.step = step;
  info.config_json = cfg.to_json().dump();
  return info;
}

Segmenter build_segmenter(const RunConfig& cfg) {
  torch::manual_seed(cfg.seed);
  Segmenter model(segmenter_config(cfg));
  std::optional<fs::path> gp;
  if (!cfg.gp_checkpoint.empty()) gp = cfg.gp_checkpoint;
  nn::init_weights(model->denoiser, cfg.init_mode(), gp);
  return model;
}

std::vector<StepRecord> run_pretrain(const RunConfig& cfg, const torch::Tensor& images, const fs::path& checkpoint,
                                     const Progress& progress) {
  torch::manual_seed(cfg.seed);
  nn::Denoiser model(cfg.denoiser_config());
  GenerativePretrainer trainer(model, images, cfg.schedule(), optimizer_options(cfg));
  std::vector<StepRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.pretrain_iterations));
  for (int i = 0; i < cfg.pretrain_iterations; ++i) {
    records.push_back(trainer.step());
    if (progress) progress(records.back());
  }
  save_checkpoint(checkpoint, *model, checkpoint_info(cfg, "pretrain", trainer.current_step()));
  return records;
}

std::vector<StepRecord> run_train(const RunConfig& cfg, Segmenter model, const SegmentationData& train,
                                  const Progress& progress) {
  SegmenterTrainer trainer(model, train, cfg.schedule(), optimizer_options(cfg));
  std::vector<StepRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int i = 0; i < cfg.iterations; ++i) {
    records.push_back(trainer.step());
    if (progress) progress(records.back());
  }
  return records;
}

metrics::MetricSummary summarize(const std::vector<CasePrediction>& predictions) {
  std::vector<metrics::MetricReport> reports;
  reports.reserve(predictions.size());
  for (const auto& p : predictions) reports.push_back(p.report);
  return metrics::summarize(reports);
}

void write_loss_csv(const fs::path& path, const std::vector<StepRecord>& records) {
  auto out = open_out(path);
  out << "step,conditioner_loss,diffusion_loss,total_loss\n" << std::setprecision(9);
  for (const auto& r : records) {
    out << r.step << ',' << r.conditioner_loss << ',' << r.diffusion_loss << ',' << r.total_loss << '\n';
  }
}

std::vector<StepRecord> read_loss_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    StepRecord r;
    char comma = 0;
    if (!(row >> r.step >> comma >> r.conditioner_loss >> comma >> r.diffusion_loss >> comma >> r.total_loss)) {
      throw std::runtime_error("malformed loss row in " + path.string() + ": " + line);
    }
    out.push_back(r);
  }
  return out;
}

void write_eval_csv(const fs::path& path, const std::vector<CasePrediction>& predictions) {
  auto out = open_out(path);
  out << "case_id,dsc,iou,hsd,asd,undefined_flags\n" << std::fixed;
  const auto distance = [&](const std::optional<double>& d) {
    if (d) out << std::setprecision(2) << *d;
  };
  for (const auto& p : predictions) {
    out << p.stem << ',' << std::setprecision(3) << p.report.dsc << ',' << p.report.iou << ',';
    distance(p.report.hsd);
    out << ',';
    distance(p.report.asd);
    out << ',' << (p.report.surface_undefined() ? 1 : 0) << '\n';
  }
  const auto s = summarize(predictions);
  out << "mean," << std::setprecision(3) << s.dsc << ',' << s.iou << ',' << std::setprecision(2) << s.hsd << ','
      << s.asd << ',' << s.undefined_count << '\n';
}

nlohmann::json run_manifest(const RunConfig& cfg, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["code_version"] = code_version();
  j["config"] = cfg.to_json();
  j["config_hash"] = cfg.hash();
  j["seeds"] = {{"seed", cfg.seed}, {"data_seed", cfg.data_seed}};
  j["injection_plan"] = cfg.plan().to_text();
  return j;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace cridiff
