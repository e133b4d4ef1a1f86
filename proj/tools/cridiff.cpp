// Command line front end: data generation, pre-training, training,
// prediction, evaluation, label decoupling, ablations and plots.

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cridiff/checkpoint.hpp"
#include "cridiff/config.hpp"
#include "cridiff/dataset.hpp"
#include "cridiff/experiment.hpp"
#include "cridiff/labels.hpp"
#include "cridiff/metrics.hpp"
#include "cridiff/png_io.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using cridiff::GrayImage;
using cridiff::RealMap;
using cridiff::RunConfig;
using cridiff::ValidationError;

namespace {

constexpr const char* kOutputRootEnv = "CRIDIFF_OUTPUT_ROOT";

/// Unpaired inputs and other problems with user-supplied paths surface
/// before any compute, so they share the validation exit code.
struct InputError : ValidationError {
  using ValidationError::ValidationError;
};

struct Context {
  std::string config_path;
  std::vector<std::string> overrides;
};

/// `--key value` and `--key=value` pairs left over after subcommand options.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& token = extras[i];
    if (token.rfind("--", 0) != 0 || token.size() == 2) throw ValidationError("unexpected argument '" + token + "'");
    std::string key = token.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw ValidationError("override --" + key + " has no value");
      value = extras[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    out.emplace_back(key, value);
  }
  return out;
}

RunConfig load_config(const Context& ctx, const nlohmann::json* base = nullptr) {
  RunConfig cfg;
  if (base) cfg = RunConfig::from_json(*base);
  if (!ctx.config_path.empty()) {
    std::ifstream in(ctx.config_path);
    if (!in) throw ValidationError("cannot read config " + ctx.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + ctx.config_path + " is not valid JSON: " + e.what());
    }
    auto merged = cfg.to_json();
    merged.update(j);
    cfg = RunConfig::from_json(merged);
  }
  for (const auto& [key, value] : parse_overrides(ctx.overrides)) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = cfg.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root && dir.is_relative()) dir = fs::path(root) / dir;
  fs::create_directories(dir);
  return dir;
}

cridiff::Progress logger(const RunConfig& cfg, const char* what, int total) {
  return [&cfg, what, total](const cridiff::StepRecord& r) {
    if (r.step % cfg.log_every == 0 || r.step == total) {
      std::cerr << what << " step " << r.step << "/" << total << " loss " << r.total_loss << '\n';
    }
  };
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// A directory of masks, or a dataset root holding them under masks/.
fs::path mask_dir(const fs::path& dir) { return fs::is_directory(dir / "masks") ? dir / "masks" : dir; }
fs::path image_dir(const fs::path& dir) { return fs::is_directory(dir / "images") ? dir / "images" : dir; }

RealMap scaled(const RealMap& m, double factor) {
  RealMap out = m;
  for (auto& v : out.pixels()) v *= factor;
  return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Context& ctx, const std::string& out_override) {
  const auto cfg = load_config(ctx);
  const fs::path root = out_override.empty() ? output_dir(cfg) / "data" : fs::path(out_override);
  auto manifest = cridiff::data::generate_dataset(root, cfg.phantom_spec(), cfg.phantom_count, cfg.data_seed);
  manifest = cridiff::data::split_manifest(manifest, cfg.split, cfg.data_seed);
  cridiff::data::write_manifest(root / "manifest.tsv", manifest);
  cridiff::write_json(root / "gen_data_manifest.json", cridiff::run_manifest(cfg, "gen-data"));
  std::cout << "wrote " << manifest.cases.size() << " phantoms to " << root.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- pretrain

int cmd_pretrain(const Context& ctx) {
  const auto cfg = load_config(ctx);
  const auto dir = output_dir(cfg);
  const auto data = cridiff::prepare_data(cfg, dir);
  const auto records = cridiff::run_pretrain(cfg, data.train.images, dir / "pretrain.pt",
                                             logger(cfg, "pretrain", cfg.pretrain_iterations));
  cridiff::write_loss_csv(dir / "pretrain_loss.csv", records);
  cridiff::write_json(dir / "pretrain_manifest.json", cridiff::run_manifest(cfg, "pretrain"));
  std::cout << "checkpoint " << (dir / "pretrain.pt").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const Context& ctx, bool resume) {
  const auto cfg = load_config(ctx);
  const auto dir = output_dir(cfg);
  const auto data = cridiff::prepare_data(cfg, dir);
  auto model = cridiff::build_segmenter(cfg);
  cridiff::SegmenterTrainer trainer(model, data.train, cfg.schedule(), cridiff::optimizer_options(cfg));
  std::vector<cridiff::StepRecord> records;
  if (resume) {
    if (!fs::exists(dir / "model.pt") || !fs::exists(dir / "trainer.pt")) {
      throw InputError("--resume needs model.pt and trainer.pt in " + dir.string());
    }
    cridiff::load_tensors(*model, cridiff::read_checkpoint(dir / "model.pt").tensors);
    trainer.load_state(dir / "trainer.pt");
    if (fs::exists(dir / "loss.csv")) {
      for (const auto& r : cridiff::read_loss_csv(dir / "loss.csv")) {
        if (r.step <= trainer.current_step()) records.push_back(r);
      }
    }
  }
  const auto log = logger(cfg, "train", cfg.iterations);
  while (trainer.current_step() < cfg.iterations) {
    records.push_back(trainer.step());
    log(records.back());
  }
  cridiff::save_checkpoint(dir / "model.pt", *model, cridiff::checkpoint_info(cfg, "segmenter", trainer.current_step()));
  trainer.save_state(dir / "trainer.pt");
  cridiff::write_loss_csv(dir / "loss.csv", records);
  cridiff::write_json(dir / "train_manifest.json", cridiff::run_manifest(cfg, resume ? "train --resume" : "train"));
  std::cout << "checkpoint " << (dir / "model.pt").string() << '\n' << cfg.plan().to_text() << '\n';
  return 0;
}

// ---------------------------------------------------------------- predict

/// Channel-mean of every conditioner node, min-max scaled per node.
void dump_grids(cridiff::Segmenter& model, const cridiff::SegmentationData& data, const fs::path& dir) {
  torch::NoGradGuard no_grad;
  fs::create_directories(dir);
  const auto out = model->conditioner->forward(data.images);
  const auto write_grid = [&](const cridiff::nn::NodeGrid& grid, const char* tag) {
    for (int i = 1; i <= cridiff::nn::kLevels; ++i) {
      for (int j = 0; j <= grid.computed_nodes(i); ++j) {
        const auto maps = grid.at(i, j).mean(1, true);
        for (int64_t n = 0; n < data.size(); ++n) {
          auto m = maps[n];
          const auto lo = m.min(), hi = m.max();
          m = (m - lo) / (hi - lo).clamp_min(1e-12);
          std::ostringstream name;
          name << data.stems[static_cast<std::size_t>(n)] << '_' << tag << '_' << j << '_' << i << ".png";
          cridiff::png::write_gray16(dir / name.str(), cridiff::to_real_map(m));
        }
      }
    }
  };
  if (out.bec) write_grid(*out.bec, "B");
  if (out.cec) write_grid(*out.cec, "C");
}

int cmd_predict(const Context& ctx, const std::string& checkpoint_arg, const std::string& input, bool grids) {
  const RunConfig base = load_config(ctx);
  const fs::path checkpoint = checkpoint_arg.empty() ? output_dir(base) / "model.pt" : fs::path(checkpoint_arg);
  if (!fs::exists(checkpoint)) throw InputError("missing checkpoint " + checkpoint.string());
  const auto loaded = cridiff::read_checkpoint(checkpoint);
  if (loaded.info.kind != "segmenter") throw InputError(checkpoint.string() + " is not a segmenter checkpoint");

  // Architecture and schedule come from the checkpoint; overrides may change
  // inference settings.
  auto trained = nlohmann::json::parse(loaded.info.config_json);
  const RunConfig cfg = load_config(ctx, &trained);
  if (cfg.diffusion_steps != loaded.info.schedule_steps || cfg.beta_start != loaded.info.beta_start ||
      cfg.beta_end != loaded.info.beta_end) {
    std::cerr << "note: sampling with a schedule that differs from training\n";
  }
  cridiff::Segmenter model(cridiff::segmenter_config(cfg));
  cridiff::load_tensors(*model, loaded.tensors);

  std::vector<std::pair<std::string, GrayImage>> images;
  for (const auto& path : pngs_in(image_dir(input))) images.emplace_back(path.stem().string(), cridiff::png::read_gray(path));
  if (images.empty()) throw InputError("no PNG images in " + input);
  const auto data = cridiff::SegmentationData::from_images(images);

  const auto dir = output_dir(base) / "predictions";
  for (const char* sub : {"masks", "mean", "variance"}) fs::create_directories(dir / sub);
  const auto preds = cridiff::predict_cases(model, data, cfg.schedule(), cridiff::evaluation_options(cfg));
  for (const auto& p : preds) {
    cridiff::png::write_mask(dir / "masks" / (p.stem + ".png"), p.mask);
    cridiff::png::write_gray16(dir / "mean" / (p.stem + ".png"), p.mean);
    // Per-pixel variance of values in [0, 1] is at most 1/4.
    cridiff::png::write_gray16(dir / "variance" / (p.stem + ".png"), scaled(p.variance, 4.0));
  }
  if (grids) dump_grids(model, data, dir / "grids");
  auto manifest = cridiff::run_manifest(cfg, "predict");
  manifest["checkpoint"] = checkpoint.string();
  manifest["input"] = input;
  manifest["variance_png_scale"] = 4.0;
  cridiff::write_json(dir / "predict_manifest.json", manifest);
  std::cout << "predicted " << preds.size() << " images into " << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const Context& ctx, const std::string& pred, const std::string& gt, std::optional<double> percentile) {
  auto cfg = load_config(ctx);
  if (percentile) {
    cfg.hausdorff_percentile = *percentile;
    cfg.validate();
  }
  const auto pred_files = pngs_in(mask_dir(pred));
  std::map<std::string, fs::path> gt_files;
  for (const auto& p : pngs_in(mask_dir(gt))) gt_files[p.stem().string()] = p;
  std::vector<std::string> unpaired;
  for (const auto& p : pred_files) {
    if (!gt_files.count(p.stem().string())) unpaired.push_back(p.stem().string());
  }
  if (pred_files.size() != gt_files.size() || !unpaired.empty()) {
    std::string msg = "prediction and ground-truth stems do not pair up";
    for (const auto& s : unpaired) msg += "; no ground truth for " + s;
    throw InputError(msg);
  }
  std::vector<cridiff::CasePrediction> rows;
  for (const auto& p : pred_files) {
    cridiff::CasePrediction row;
    row.stem = p.stem().string();
    const auto pm = cridiff::png::read_mask(p);
    const auto gm = cridiff::png::read_mask(gt_files.at(row.stem));
    if (!pm.same_shape(gm)) throw InputError("size mismatch for " + row.stem);
    row.report = cridiff::metrics::evaluate(pm, gm, cfg.hausdorff_percentile);
    rows.push_back(std::move(row));
  }
  const auto dir = output_dir(cfg);
  cridiff::write_eval_csv(dir / "eval.csv", rows);
  const auto s = cridiff::summarize(rows);
  auto manifest = cridiff::run_manifest(cfg, "evaluate");
  manifest["pred"] = pred;
  manifest["gt"] = gt;
  manifest["summary"] = {{"dsc", s.dsc}, {"iou", s.iou}, {"hsd", s.hsd}, {"asd", s.asd},
                         {"cases", s.cases}, {"undefined_count", s.undefined_count}};
  cridiff::write_json(dir / "eval_summary.json", manifest);
  std::cout << "D " << s.dsc << " I " << s.iou << " H " << s.hsd << " A " << s.asd << " over " << s.cases
            << " cases (" << s.undefined_count << " undefined)\n";
  return 0;
}

// ---------------------------------------------------------------- decouple

int cmd_decouple(const Context& ctx, const std::string& input) {
  const auto cfg = load_config(ctx);
  const auto files = pngs_in(mask_dir(input));
  if (files.empty()) throw InputError("no masks in " + input);
  const auto dir = output_dir(cfg) / "decoupled";
  for (const char* sub : {"boundary", "core", "dt"}) fs::create_directories(dir / sub);
  for (const auto& f : files) {
    const auto d = cridiff::labels::decouple_labels(cridiff::png::read_mask(f));
    const auto name = f.stem().string() + ".png";
    cridiff::png::write_gray16(dir / "boundary" / name, d.boundary);
    cridiff::png::write_gray16(dir / "core" / name, d.core);
    cridiff::png::write_gray16(dir / "dt" / name, d.normalized_dt);
  }
  cridiff::write_json(dir / "decouple_manifest.json", cridiff::run_manifest(cfg, "decouple"));
  std::cout << "decoupled " << files.size() << " masks into " << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- ablate

struct Variant {
  std::string label;
  std::map<std::string, std::string> settings;
};

std::vector<Variant> ablation_variants(const std::string& axis) {
  if (axis == "conditioner") {
    return {{"(1) P", {{"conditioner", "P"}}},
            {"(2) P*", {{"conditioner", "P*"}}},
            {"(3) P+C", {{"conditioner", "P+C"}}},
            {"(4) P+B", {{"conditioner", "P+B"}}},
            {"(5) P+C+B", {{"conditioner", "P+C+B"}}}};
  }
  if (axis == "strategy") {
    return {{"(1) SbS 2:2", {{"strategy", "sbs"}, {"ratio", "2:2"}}},
            {"(2) Ours 2:2", {{"strategy", "crisscross"}, {"ratio", "2:2"}}},
            {"(3) Ours 1:3", {{"strategy", "crisscross"}, {"ratio", "1:3"}}},
            {"(4) Ours 3:1", {{"strategy", "crisscross"}, {"ratio", "3:1"}}}};
  }
  if (axis == "init") {
    return {{"Random", {{"init", "random"}}}, {"Kaiming", {{"init", "kaiming"}}}, {"Ours", {{"init", "gp"}}}};
  }
  throw ValidationError("unknown ablation axis '" + axis + "' (expected conditioner, strategy or init)");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_ablate(const Context& ctx, const std::string& axis, const std::vector<std::uint64_t>& seeds) {
  const auto cfg = load_config(ctx);
  const auto variants = ablation_variants(axis);
  if (seeds.empty()) throw ValidationError("ablate needs at least one seed");
  for (const auto& v : variants) {
    RunConfig probe = cfg;
    for (const auto& [k, val] : v.settings) probe.set(k, val);
    if (probe.init == "gp") probe.gp_checkpoint = "pending";
    probe.validate();
  }

  const auto dir = output_dir(cfg) / ("ablate_" + axis);
  const auto data = cridiff::prepare_data(cfg, dir);
  if (data.val.size() == 0) throw ValidationError("ablation needs a non-empty val split");

  std::ofstream runs_csv((fs::create_directories(dir), dir / "runs.csv"));
  runs_csv << "variant,seed,dsc,iou,hsd,asd,undefined\n";
  std::vector<std::vector<cridiff::metrics::MetricSummary>> results(variants.size());
  for (const auto seed : seeds) {
    fs::path gp;
    for (std::size_t k = 0; k < variants.size(); ++k) {
      RunConfig run = cfg;
      run.seed = seed;
      for (const auto& [key, val] : variants[k].settings) run.set(key, val);
      if (run.init == "gp" && run.gp_checkpoint.empty()) {
        gp = dir / ("pretrain_seed" + std::to_string(seed) + ".pt");
        if (!fs::exists(gp)) {
          const auto records = cridiff::run_pretrain(run, data.train.images, gp, logger(run, "pretrain", run.pretrain_iterations));
          cridiff::write_loss_csv(dir / ("pretrain_seed" + std::to_string(seed) + "_loss.csv"), records);
        }
        run.gp_checkpoint = gp.string();
      }
      run.validate();
      auto model = cridiff::build_segmenter(run);
      const auto records = cridiff::run_train(run, model, data.train, logger(run, variants[k].label.c_str(), run.iterations));
      std::ostringstream tag;
      tag << "v" << k << "_seed" << seed;
      cridiff::write_loss_csv(dir / (tag.str() + "_loss.csv"), records);
      const auto preds = cridiff::predict_cases(model, data.val, run.schedule(), cridiff::evaluation_options(run));
      const auto s = cridiff::summarize(preds);
      results[k].push_back(s);
      runs_csv << '"' << variants[k].label << "\"," << seed << ',' << s.dsc << ',' << s.iou << ',' << s.hsd << ','
               << s.asd << ',' << s.undefined_count << '\n';
      runs_csv.flush();
    }
  }

  // Median over seeds, shaped like the published comparison tables.
  std::ofstream table(dir / "ablation.csv");
  table << "variant,dsc,iou,hsd,asd,seeds\n" << std::fixed;
  std::ostringstream md;
  md << "| " << axis << " | D | I | H | A |\n|---|---|---|---|---|\n" << std::fixed;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    std::vector<double> d, i, h, a;
    for (const auto& s : results[k]) {
      d.push_back(s.dsc);
      i.push_back(s.iou);
      h.push_back(s.hsd);
      a.push_back(s.asd);
    }
    table << '"' << variants[k].label << "\"," << std::setprecision(3) << median(d) << ',' << median(i) << ','
          << std::setprecision(2) << median(h) << ',' << median(a) << ',' << seeds.size() << '\n';
    md << "| " << variants[k].label << " | " << std::setprecision(3) << median(d) << " | " << median(i) << " | "
       << std::setprecision(2) << median(h) << " | " << median(a) << " |\n";
  }
  std::ofstream(dir / "ablation.md") << md.str();
  auto manifest = cridiff::run_manifest(cfg, "ablate");
  manifest["axis"] = axis;
  manifest["seeds"]["ablation"] = seeds;
  cridiff::write_json(dir / "ablate_manifest.json", manifest);
  std::cout << md.str();
  return 0;
}

// ---------------------------------------------------------------- plot

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else cell += ch;
    }
    cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<double> column(const std::vector<std::vector<std::string>>& rows, const std::string& name,
                           bool skip_mean = true) {
  if (rows.empty()) return {};
  const auto it = std::find(rows[0].begin(), rows[0].end(), name);
  if (it == rows[0].end()) return {};
  const auto k = static_cast<std::size_t>(it - rows[0].begin());
  std::vector<double> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (skip_mean && !rows[r].empty() && rows[r][0] == "mean") continue;
    out.push_back(k < rows[r].size() && !rows[r][k].empty() ? std::stod(rows[r][k]) : NAN);
  }
  return out;
}

int cmd_plot(const Context& ctx, const std::string& run_arg, int grid_rows) {
  const auto cfg = load_config(ctx);
  const fs::path run = run_arg.empty() ? output_dir(cfg) : fs::path(run_arg);
  if (!fs::is_directory(run)) throw InputError("run directory " + run.string() + " does not exist");
  const auto figs = run / "figures";
  fs::create_directories(figs);
  int written = 0;
  for (const auto& e : fs::recursive_directory_iterator(run)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    if (e.path().parent_path() == figs) continue;
    const auto rows = read_csv(e.path());
    const auto name = e.path().stem().string();
    cridiff::png::RgbImage img;
    if (!rows.empty() && rows[0].size() == 4 && rows[0][0] == "step") {
      // Conditioner, diffusion and total loss against step.
      img = cridiff::plot::line_chart({column(rows, "conditioner_loss"), column(rows, "diffusion_loss"),
                                       column(rows, "total_loss")},
                                      640, 360);
    } else if (!column(rows, "dsc").empty()) {
      img = cridiff::plot::bar_chart(column(rows, "dsc"), 0.0, 1.0, 640, 360);
    } else {
      continue;
    }
    const auto rel = fs::relative(e.path().parent_path(), run).string();
    std::string prefix = rel == "." ? "" : rel + "_";
    std::replace(prefix.begin(), prefix.end(), '/', '_');
    cridiff::png::write_rgb(figs / (prefix + name + ".png"), img);
    ++written;
  }

  // Sample grid: image | ground truth | mean | variance, then node maps.
  const auto pred = run / "predictions";
  if (fs::is_directory(pred / "mean") && grid_rows > 0) {
    std::map<std::string, fs::path> images, masks;
    if (fs::exists(run / "manifest.tsv")) {
      for (const auto& c : cridiff::data::read_manifest(run / "manifest.tsv").cases) {
        images[c.stem] = c.image;
        masks[c.stem] = c.mask;
      }
    }
    std::vector<std::vector<RealMap>> tiles;
    for (const auto& mean_path : pngs_in(pred / "mean")) {
      if (static_cast<int>(tiles.size()) == grid_rows) break;
      const auto stem = mean_path.stem().string();
      const auto as_map = [](const GrayImage& g) {
        RealMap m(g.height(), g.width());
        for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i];
        return m;
      };
      std::vector<RealMap> row;
      const auto mean = as_map(cridiff::png::read_gray(mean_path));
      row.push_back(images.count(stem) ? as_map(cridiff::png::read_gray(images[stem])) : RealMap(mean.height(), mean.width()));
      if (masks.count(stem)) {
        const auto m = cridiff::png::read_mask(masks[stem]);
        RealMap gt(m.height(), m.width());
        for (std::size_t i = 0; i < m.size(); ++i) gt[i] = m[i];
        row.push_back(gt);
      } else {
        row.emplace_back(mean.height(), mean.width());
      }
      row.push_back(mean);
      row.push_back(as_map(cridiff::png::read_gray(pred / "variance" / (stem + ".png"))));
      if (fs::is_directory(pred / "grids")) {
        for (const auto& g : pngs_in(pred / "grids")) {
          if (g.filename().string().rfind(stem + "_", 0) == 0) row.push_back(as_map(cridiff::png::read_gray(g)));
        }
      }
      tiles.push_back(std::move(row));
    }
    cridiff::png::write_rgb(figs / "samples.png", cridiff::plot::tile_grid(tiles, 2));
    ++written;
  }
  if (written == 0) throw InputError("no plottable artifacts under " + run.string());
  std::cout << "wrote " << written << " figures to " << figs.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cridiff: diffusion segmentation with boundary and core conditioners"};
  app.require_subcommand(1);
  Context ctx;
  const auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", ctx.config_path, "JSON config file");
    sub->allow_extras();
    return sub;
  };

  std::string out_dir;
  auto* gen = add("gen-data", "write a synthetic phantom dataset");
  gen->add_option("--out", out_dir, "dataset root (default <output>/data)");

  auto* pretrain = add("pretrain", "unconditional generative pre-training on images");

  bool resume = false;
  auto* train = add("train", "joint conditioner + diffusion training");
  train->add_flag("--resume", resume, "continue from model.pt and trainer.pt in the output dir");

  std::string checkpoint, input;
  bool grids = false;
  auto* predict = add("predict", "ensemble segmentation of a directory of images");
  predict->add_option("--checkpoint", checkpoint, "segmenter checkpoint (default <output>/model.pt)");
  predict->add_option("--input", input, "image directory or dataset root")->required();
  predict->add_flag("--dump-grids", grids, "also write conditioner node maps");

  std::string pred_dir, gt_dir;
  double percentile = 100.0;
  auto* evaluate = add("evaluate", "DSC / IoU / HSD / ASD of predicted masks");
  evaluate->add_option("--pred", pred_dir, "predicted masks")->required();
  evaluate->add_option("--gt", gt_dir, "ground-truth masks")->required();
  auto* percentile_opt = evaluate->add_option("--percentile", percentile, "Hausdorff percentile in (0, 100]");

  auto* decouple = add("decouple", "write boundary / core soft labels for masks");
  decouple->add_option("--input", input, "mask directory or dataset root")->required();

  std::string axis;
  std::vector<std::uint64_t> seeds{0};
  auto* ablate = add("ablate", "train and compare variants along one axis");
  ablate->add_option("--axis", axis, "conditioner | strategy | init")->required();
  ablate->add_option("--seeds", seeds, "seeds shared by all variants")->delimiter(',');

  std::string run_dir;
  int grid_rows = 4;
  auto* plot = add("plot", "rasterize loss curves, metric bars and sample grids");
  plot->add_option("--run", run_dir, "run directory (default <output>)");
  plot->add_option("--rows", grid_rows, "rows in the sample grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) ctx.overrides = sub->remaining();
    if (gen->parsed()) return cmd_gen_data(ctx, out_dir);
    if (pretrain->parsed()) return cmd_pretrain(ctx);
    if (train->parsed()) return cmd_train(ctx, resume);
    if (predict->parsed()) return cmd_predict(ctx, checkpoint, input, grids);
    if (evaluate->parsed()) {
      return cmd_evaluate(ctx, pred_dir, gt_dir,
                          percentile_opt->count() ? std::optional<double>(percentile) : std::nullopt);
    }
    if (decouple->parsed()) return cmd_decouple(ctx, input);
    if (ablate->parsed()) return cmd_ablate(ctx, axis, seeds);
    if (plot->parsed()) return cmd_plot(ctx, run_dir, grid_rows);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
