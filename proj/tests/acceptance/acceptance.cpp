// Acceptance runner. Prints one "CRITERION n: PASS|FAIL ..." line per
// selected criterion and exits non-zero when any of them fails.

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cridiff/diffusion.hpp"
#include "cridiff/experiment.hpp"
#include "cridiff/labels.hpp"
#include "cridiff/metrics.hpp"
#include "oracles.hpp"
#include "probes.hpp"

namespace fs = std::filesystem;
namespace nn = cridiff::nn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// 1. Label identity

Outcome label_identity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> side(8, 64);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto m = oracle::random_blob_mask(side(rng), side(rng), rng);
    const auto d = cridiff::labels::decouple_labels(m);
    for (int r = 0; r < m.height(); ++r) {
      for (int c = 0; c < m.width(); ++c) {
        worst = std::max(worst, std::abs(d.boundary(r, c) + d.core(r, c) - d.prostate(r, c)));
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-6 && elapsed < 10.0,
          "max|g_b+g_c-g_p| " + fmt(worst) + " over 100 masks in " + fmt(elapsed, 3) + " s"};
}

// 2. Distance transform against the O(n^2) scan

Outcome distance_transform_oracle() {
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<int> side(1, 12);
  std::uniform_real_distribution<double> density(0.1, 0.95);
  int equal = 0;
  for (int k = 0; k < 200; ++k) {
    const auto m = oracle::random_mask(side(rng), side(rng), rng, density(rng));
    if (cridiff::labels::distance_transform(m) == oracle::distance_transform(m)) ++equal;
  }
  return {equal == 200, std::to_string(equal) + "/200 masks identical"};
}

// 3. Metrics against all-pairs references

Outcome metric_oracles() {
  std::mt19937_64 rng(103);
  int surface_ok = 0, compared = 0;
  while (compared < 200) {
    const auto a = oracle::random_mask(10, 10, rng, 0.35);
    const auto b = oracle::random_mask(10, 10, rng, 0.35);
    if (!oracle::count(a) || !oracle::count(b)) continue;
    ++compared;
    const auto h = cridiff::metrics::hausdorff(a, b);
    const auto s = cridiff::metrics::average_surface_distance(a, b);
    if (h && s && *h == oracle::hausdorff(a, b) && std::abs(*s - oracle::average_surface_distance(a, b)) <= 1e-12) {
      ++surface_ok;
    }
  }
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const auto a = oracle::random_mask(10, 10, rng, 0.4);
    const auto b = oracle::random_mask(10, 10, rng, 0.4);
    const double i = cridiff::metrics::iou(a, b);
    worst = std::max(worst, std::abs(cridiff::metrics::dice(a, b) - 2 * i / (1 + i)));
  }
  return {surface_ok == 200 && worst <= 1e-9,
          "hsd/asd " + std::to_string(surface_ok) + "/200, max|dsc-2iou/(1+iou)| " + fmt(worst)};
}

// 4. Grid topology and reference interpreter

Outcome grid_topology() {
  const auto rows = probe::grid_rows();
  const bool bec_rows = rows.bec == std::array<int, 4>{4, 3, 2, 1} && rows.bec_total == 10;
  const bool cec_rows = rows.cec == std::array<int, 4>{1, 2, 3, 4} && rows.cec_total == 10;
  const auto bad = probe::hand_transcription_mismatches();
  std::string detail = std::string("BEC rows ") + (bec_rows ? "ok" : "wrong") + ", CEC rows " +
                       (cec_rows ? "ok" : "wrong") + ", interpreter mismatches " + std::to_string(bad.size());
  for (const auto& n : bad) detail += " " + n;
  return {bec_rows && cec_rows && bad.empty(), detail};
}

// 5. Finite-difference gradients

Outcome gradient_checks() {
  const auto summarize = [](const std::vector<probe::GradientProbe>& probes, double& worst) {
    worst = 0.0;
    for (const auto& p : probes) worst = std::max(worst, p.relative_error());
    return probes.size();
  };
  double cond_worst = 0.0, simple_worst = 0.0;
  const auto cond = summarize(probe::conditioner_loss_probes(5), cond_worst);
  const auto simple = summarize(probe::simple_loss_probes(12), simple_worst);
  return {cond >= 5 && simple >= 5 && cond_worst < 1e-3 && simple_worst < 1e-3,
          "conditioner_loss " + std::to_string(cond) + " probes max rel err " + fmt(cond_worst) + ", simple_loss " +
              std::to_string(simple) + " probes max rel err " + fmt(simple_worst)};
}

// 6. Routing audit

Outcome routing_audit() {
  nn::Denoiser model(nn::DenoiserConfig::small());
  model->to(torch::kFloat64);
  probe::make_tracer(model);
  const auto cis = probe::recover_routing(model, nn::build_injection_plan("crisscross", "2:2"));
  const auto sbs = probe::recover_routing(model, nn::build_injection_plan("sbs", "2:2"));
  const bool cis_ok = cis == probe::crisscross_table();
  const bool sbs_ok = sbs == probe::stage_by_stage_table();
  std::string detail = std::string("crisscross 2:2 ") + (cis_ok ? "exact" : "got " + probe::to_string(cis)) +
                       ", SbS 2:2 " + (sbs_ok ? "exact" : "got " + probe::to_string(sbs));
  return {cis_ok && sbs_ok, detail};
}

// 7. Generative pre-train identity at init

Outcome gp_identity(const fs::path& work) {
  const auto bad = probe::gp_identity_mismatches(work / "gp_identity", 31);
  std::string detail = bad.empty() ? "output and all 8 stage activations bit-identical" : "differs at";
  for (const auto& n : bad) detail += " " + n;
  return {bad.empty(), detail};
}

// 8. Forward noising Monte Carlo

Outcome noising_statistics() {
  const int T = 100;
  const auto sched = cridiff::diffusion::make_schedule(T, 1e-4, 0.02);
  const int64_t n = 10000;
  const auto x0 = torch::linspace(-1, 1, 9, torch::kFloat64).view({1, 1, 3, 3}).expand({n, 1, 3, 3});
  auto gen = at::make_generator<at::CPUGeneratorImpl>(104);
  bool ok = true;
  std::string detail;
  for (int t : {1, T / 2, T}) {
    const auto eps = torch::randn({n, 1, 3, 3}, gen, torch::kFloat64);
    const auto xt = cridiff::diffusion::forward_noise(x0, torch::full({n}, t, torch::kInt64), eps, sched).x_t;
    const double ab = sched.alpha_bar(t);
    const double mean_err = (xt.mean(0) - std::sqrt(ab) * x0[0]).abs().max().item<double>();
    const double mean_bound = 4 * std::sqrt((1 - ab) / n);
    const double var_err = ((xt.var(0) - (1 - ab)).abs() / (1 - ab)).max().item<double>();
    ok = ok && mean_err <= mean_bound && var_err <= 0.10;
    detail += (detail.empty() ? "" : "; ") + std::string("t=") + std::to_string(t) + " mean err " + fmt(mean_err, 3) +
              " (bound " + fmt(mean_bound, 3) + ") var rel err " + fmt(var_err, 3) + " (bound 0.1)";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 9 and 10: desk-scale training runs

/// The shared desk setup: 200 phantoms at 64x64, T=100, 2000 iterations with
/// the small widths. Betas are the 1000-step range scaled by 1000/T so that
/// x_T is close to pure noise, as sampling assumes. Validation ensembles use
/// 5 chains to fit the CPU budget.
cridiff::RunConfig smoke_config() {
  cridiff::RunConfig cfg;
  cfg.phantom_count = 200;
  cfg.image_size = 64;
  cfg.diffusion_steps = 100;
  cfg.beta_start = 1e-3;
  cfg.beta_end = 0.2;
  cfg.iterations = 2000;
  cfg.pretrain_iterations = 2000;
  cfg.small = true;
  cfg.learning_rate = 2e-4;
  cfg.ensemble = 5;
  cfg.validate();
  return cfg;
}

struct RunResult {
  double val_dice = 0.0;
  double untrained_dice = 0.0;
  double seconds = 0.0;
};

/// Trains one configuration and scores the validation split, caching the
/// result under `work/runs/<label>.json` keyed by the config hash.
class RunCache {
 public:
  explicit RunCache(fs::path work) : work_(std::move(work)) { fs::create_directories(work_ / "runs"); }

  const cridiff::ExperimentData& data(const cridiff::RunConfig& cfg) {
    if (!data_) data_ = cridiff::prepare_data(cfg, work_);
    return *data_;
  }

  fs::path pretrain(cridiff::RunConfig cfg) {
    const auto path = work_ / "runs" / ("pretrain_seed" + std::to_string(cfg.seed) + ".pt");
    const auto stamp = fs::path(path).replace_extension(".hash");
    if (fs::exists(path) && read_text(stamp) == cfg.hash()) return path;
    log("pre-training seed " + std::to_string(cfg.seed));
    const auto start = Clock::now();
    cridiff::run_pretrain(cfg, data(cfg).train.images, path);
    std::ofstream(stamp) << cfg.hash();
    log("pre-training done in " + fmt(seconds_since(start), 4) + " s");
    return path;
  }

  RunResult run(const std::string& label, const cridiff::RunConfig& cfg, bool score_untrained) {
    const auto path = work_ / "runs" / (label + ".json");
    if (fs::exists(path)) {
      const auto j = nlohmann::json::parse(read_text(path));
      if (j.contains("config") && cache_key(cridiff::RunConfig::from_json(j.at("config"))) == cache_key(cfg) &&
          (!score_untrained || j.contains("untrained_dice"))) {
        RunResult r;
        r.val_dice = j.at("val_dice");
        r.untrained_dice = j.value("untrained_dice", 0.0);
        r.seconds = j.at("seconds");
        log(label + ": cached val Dice " + fmt(r.val_dice));
        return r;
      }
    }
    const auto& d = data(cfg);
    const auto eval = cridiff::evaluation_options(cfg);
    auto model = cridiff::build_segmenter(cfg);
    RunResult r;
    const auto start = Clock::now();
    if (score_untrained) {
      r.untrained_dice = cridiff::summarize(cridiff::predict_cases(model, d.val, cfg.schedule(), eval)).dsc;
      log(label + ": untrained val Dice " + fmt(r.untrained_dice));
    }
    cridiff::run_train(cfg, model, d.train, [&](const cridiff::StepRecord& s) {
      if (s.step % 250 == 0) {
        log(label + ": step " + std::to_string(s.step) + " conditioner " + fmt(s.conditioner_loss) + " diffusion " +
            fmt(s.diffusion_loss));
      }
    });
    r.val_dice = cridiff::summarize(cridiff::predict_cases(model, d.val, cfg.schedule(), eval)).dsc;
    r.seconds = seconds_since(start);
    log(label + ": val Dice " + fmt(r.val_dice) + " after " + fmt(r.seconds, 4) + " s");
    auto j = cridiff::run_manifest(cfg, "acceptance " + label);
    j["val_dice"] = r.val_dice;
    j["seconds"] = r.seconds;
    if (score_untrained) j["untrained_dice"] = r.untrained_dice;
    cridiff::write_json(path, j);
    return r;
  }

  const fs::path& work() const { return work_; }

 private:
  // The pre-train checkpoint lives under the work directory, so only its file
  // name enters the key. Otherwise relative and absolute --work paths miss.
  static std::string cache_key(cridiff::RunConfig cfg) {
    if (!cfg.gp_checkpoint.empty()) cfg.gp_checkpoint = fs::path(cfg.gp_checkpoint).filename().string();
    return cfg.hash();
  }
  static std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }
  static void log(const std::string& line) { std::cerr << "[acceptance] " << line << std::endl; }

  fs::path work_;
  std::optional<cridiff::ExperimentData> data_;
};

Outcome end_to_end_smoke(RunCache& cache) {
  const auto r = cache.run("crisscross_random_seed0", smoke_config(), true);
  const double gain = r.val_dice - r.untrained_dice;
  const bool in_budget = r.seconds <= 3 * 3600.0;
  return {gain >= 0.3 && in_budget, "val Dice untrained " + fmt(r.untrained_dice) + " -> trained " + fmt(r.val_dice) +
                                        " (gain " + fmt(gain) + ", need 0.3) in " + fmt(r.seconds, 4) +
                                        " s (budget 10800 s)"};
}

Outcome directional_ablations(RunCache& cache) {
  std::vector<double> random_init, gp_init, sbs;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto base = smoke_config();
    base.seed = seed;
    random_init.push_back(cache.run("crisscross_random_seed" + std::to_string(seed), base, seed == 0).val_dice);
    auto gp = base;
    gp.init = "gp";
    gp.gp_checkpoint = cache.pretrain(base).string();
    gp_init.push_back(cache.run("crisscross_gp_seed" + std::to_string(seed), gp, false).val_dice);
    auto stage = base;
    stage.strategy = "sbs";
    sbs.push_back(cache.run("sbs_random_seed" + std::to_string(seed), stage, false).val_dice);
  }
  const double m_random = median(random_init), m_gp = median(gp_init), m_sbs = median(sbs);
  const double init_gap = m_gp - m_random;
  const double strategy_gap = m_random - m_sbs;

  std::ofstream report(cache.work() / "ablation_report.md");
  report << "| variant | seed 0 | seed 1 | seed 2 | median |\n|---|---|---|---|---|\n" << std::fixed
         << std::setprecision(3);
  const auto row = [&](const std::string& name, const std::vector<double>& v) {
    report << "| " << name;
    for (double x : v) report << " | " << x;
    report << " | " << median(v) << " |\n";
  };
  row("crisscross 2:2, Random init", random_init);
  row("crisscross 2:2, GP init", gp_init);
  row("SbS 2:2, Random init", sbs);
  report << "\nGP - Random: " << init_gap << "\ncrisscross - SbS: " << strategy_gap << '\n';

  const auto direction = [](double gap) { return gap >= 0 ? std::string("holds") : std::string("reversed"); };
  return {init_gap >= -0.02 && strategy_gap >= -0.02,
          "median val Dice GP " + fmt(m_gp) + " vs Random " + fmt(m_random) + " (" + direction(init_gap) + ", gap " +
              fmt(init_gap) + "); crisscross " + fmt(m_random) + " vs SbS " + fmt(m_sbs) + " (" +
              direction(strategy_gap) + ", gap " + fmt(strategy_gap) + "); blocking below -0.02"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string criteria = "1,2,3,4,5,6,7,8";
  std::string work = "acceptance_work";
  app.add_option("--criteria", criteria, "Comma-separated criteria to run (1-10)");
  app.add_option("--work", work, "Directory for generated data and cached training runs");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream list(criteria);
  for (std::string item; std::getline(list, item, ',');) {
    const int n = std::stoi(item);
    if (n < 1 || n > 10) {
      std::cerr << "unknown criterion " << n << '\n';
      return 2;
    }
    selected.insert(n);
  }
  fs::create_directories(work);
  RunCache cache{fs::path(work)};

  const std::map<int, std::function<Outcome()>> runners{
      {1, label_identity},
      {2, distance_transform_oracle},
      {3, metric_oracles},
      {4, grid_topology},
      {5, gradient_checks},
      {6, routing_audit},
      {7, [&] { return gp_identity(work); }},
      {8, noising_statistics},
      {9, [&] { return end_to_end_smoke(cache); }},
      {10, [&] { return directional_ablations(cache); }},
  };
  bool all = true;
  for (const int n : selected) {
    Outcome o;
    try {
      o = runners.at(n)();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "CRITERION " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")" << std::endl;
  }
  return all ? 0 : 1;
}
