// Command-line driver: dataset generation, pretraining, evaluation, analysis,
// loss/seed comparison tables and the self-check suite.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sicl/checkpoint.hpp"
#include "sicl/dataset_io.hpp"
#include "sicl/errors.hpp"
#include "sicl/harness.hpp"
#include "sicl/losses.hpp"
#include "sicl/runtime.hpp"
#include "sicl/verify/suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::string> config_path;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool need_out = true) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "output directory (created if absent)");
  if (need_out) out->required();
  cmd->add_option("--set", c.overrides, "override, e.g. --set world.subject_nuisance_strength=0")
      ->take_all();
  cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
}

sicl::RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  return sicl::load_config(c.config_path, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Output directory plus the resolved-config echo that reproduces the run.
fs::path prepare_out(const std::string& out, const sicl::RunConfig& config) {
  const fs::path dir(out);
  fs::create_directories(dir);
  write_json(dir / "config.json", json(config));
  return dir;
}

sicl::Experiment load_experiment(const sicl::RunConfig& config, const std::optional<std::string>& data) {
  if (!data) return sicl::Experiment::build(config);
  sicl::DatasetFile file = sicl::read_dataset(*data);
  if (file.num_subjects != config.world.num_subjects || file.num_activities != config.world.num_activities) {
    throw sicl::ContractError("dataset " + *data + " has " + std::to_string(file.num_subjects) +
                              " subjects / " + std::to_string(file.num_activities) +
                              " activities but the config expects " +
                              std::to_string(config.world.num_subjects) + " / " +
                              std::to_string(config.world.num_activities));
  }
  return sicl::Experiment::from_windows(std::move(file.windows), config);
}

sicl::EncoderSet load_encoders(const std::string& path) {
  if (!fs::exists(path)) throw sicl::ContractError("checkpoint not found: " + path);
  const sicl::NamedTensors tensors = sicl::read_checkpoint(path);
  sicl::EncoderSet set;
  set.encoders.push_back(sicl::unpack_encoder(tensors, "inertial"));
  if (sicl::has_encoder(tensors, "secondary")) set.encoders.push_back(sicl::unpack_encoder(tensors, "secondary"));
  return set;
}

void save_encoders(const fs::path& path, const sicl::EncoderSet& set) {
  sicl::NamedTensors tensors;
  sicl::pack_encoder(tensors, set.encoders.at(0), "inertial");
  if (set.encoders.size() > 1) sicl::pack_encoder(tensors, set.encoders[1], "secondary");
  sicl::write_checkpoint(path, tensors);
}

/// report.json holds only deterministic fields; timing goes to a sidecar.
void write_report(const fs::path& dir, const sicl::EvalReport& report) {
  json j = sicl::to_json(report);
  const double wall = j.at("wall_seconds").get<double>();
  j.erase("wall_seconds");
  write_json(dir / "report.json", j);
  write_json(dir / "timing.json", {{"wall_seconds", wall}});
}

void write_histogram(const fs::path& path, const sicl::SimStats& s) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count_all,count_intra_subject\n";
  for (std::size_t b = 0; b + 1 < s.bin_edges.size(); ++b) {
    os << s.bin_edges[b] << ',' << s.bin_edges[b + 1] << ',' << s.hist_all[b] << ',' << s.hist_intra_subject[b]
       << '\n';
  }
  write_text(path, os.str());
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int cmd_gen(const Common& c) {
  const sicl::RunConfig config = resolve(c);
  const fs::path dir = prepare_out(c.out, config);
  const auto windows = sicl::generate(config.world);
  sicl::write_dataset(dir / "dataset.bin", windows, config.world);
  write_json(dir / "manifest.json",
             sicl::dataset_manifest(config.world, windows, config.split.train_subjects, config.split.test_subjects));
  std::cout << "wrote " << windows.size() << " windows to " << (dir / "dataset.bin").string() << '\n';
  return 0;
}

int cmd_pretrain(const Common& c, const std::optional<std::string>& data,
                 const std::optional<std::string>& dump_anchors) {
  const sicl::RunConfig config = resolve(c);
  const fs::path dir = prepare_out(c.out, config);
  const sicl::Experiment exp = load_experiment(config, data);
  const sicl::PretrainResult result = sicl::pretrain(config, exp);
  save_encoders(dir / "checkpoint.bin", result.model);

  std::ostringstream curve;
  curve << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) curve << e << ',' << csv_number(result.loss_curve[e]) << '\n';
  write_text(dir / "loss_curve.csv", curve.str());

  const std::size_t leaks = result.audit.violations(config.split.test_subjects);
  write_json(dir / "audit.json", {{"windows_consumed", result.audit.consumed().size()},
                                  {"held_out_windows_consumed", leaks}});
  if (dump_anchors) {
    std::ofstream os(*dump_anchors);
    if (!os) throw std::runtime_error("cannot write " + *dump_anchors);
    sicl::write_anchor_csv(os, result.last_anchors);
  }
  std::cout << "final loss " << result.loss_curve.back() << ", checkpoint " << (dir / "checkpoint.bin").string()
            << '\n';
  return leaks == 0 ? 0 : 1;
}

int cmd_linear_eval(const Common& c, const std::string& checkpoint, const std::optional<std::string>& data) {
  const sicl::RunConfig config = resolve(c);
  const sicl::EncoderSet model = load_encoders(checkpoint);
  const fs::path dir = prepare_out(c.out, config);
  const sicl::EvalReport report = sicl::linear_eval(model, config, load_experiment(config, data));
  write_report(dir, report);
  std::cout << "mean class accuracy " << report.mean_class_accuracy << '\n';
  return 0;
}

int cmd_finetune(const Common& c, const std::optional<std::string>& checkpoint,
                 const std::optional<std::string>& data) {
  const sicl::RunConfig config = resolve(c);
  std::optional<sicl::EncoderSet> init;
  if (checkpoint) init = load_encoders(*checkpoint);
  const fs::path dir = prepare_out(c.out, config);
  const sicl::FinetuneResult result = sicl::finetune(init, config, load_experiment(config, data));
  write_report(dir, result.report);
  save_encoders(dir / "checkpoint.bin", result.model);
  std::cout << result.report.tag << " mean class accuracy " << result.report.mean_class_accuracy << '\n';
  return 0;
}

int cmd_analyze(const Common& c, const std::string& checkpoint, const std::optional<std::string>& data) {
  const sicl::RunConfig config = resolve(c);
  const sicl::EncoderSet model = load_encoders(checkpoint);
  const fs::path dir = prepare_out(c.out, config);
  const sicl::Experiment exp = load_experiment(config, data);
  const sicl::SimStats stats =
      sicl::analyze_similarities(model.encoders[0], sicl::select_modality(exp.split.test, sicl::Modality::kInertial),
                                 sicl::derive_seed(config.seed, "similarity"), config.max_similarity_pairs);
  json j = sicl::to_json(stats);
  j["config"] = config;
  write_json(dir / "sim_stats.json", j);
  write_histogram(dir / "histogram.csv", stats);
  std::cout << "mean_all " << stats.mean_all << " mean_intra_subject " << stats.mean_intra_subject << " gap "
            << stats.gap << '\n';
  return 0;
}

int cmd_matrix(const Common& c, const std::vector<std::string>& losses, const std::vector<std::uint64_t>& seeds,
               int jobs) {
  const sicl::RunConfig base = resolve(c);
  std::vector<sicl::RunConfig> configs;
  for (const auto& name : losses) {
    const sicl::LossKind kind = sicl::parse_loss(name);
    for (const std::uint64_t s : seeds) {
      sicl::RunConfig cell = base;
      cell.loss = kind;
      cell.seed = s;
      cell.validate();
      configs.push_back(cell);
    }
  }
  const fs::path dir = prepare_out(c.out, base);
  write_json(dir / "matrix_spec.json", {{"losses", losses}, {"seeds", seeds}});
  const auto rows = sicl::run_matrix(configs, jobs, [](const sicl::MatrixRow& row) {
    std::cerr << sicl::loss_name(row.loss) << " seed " << row.seed << ": "
              << (row.error ? "error: " + *row.error : "accuracy " + std::to_string(row.mean_class_accuracy))
              << '\n';
  });
  std::ostringstream os;
  os << "loss,seed,mean_class_accuracy,gap\n";
  bool failed = false;
  for (const auto& row : rows) {
    os << sicl::loss_name(row.loss) << ',' << row.seed << ',' << csv_number(row.mean_class_accuracy) << ','
       << csv_number(row.gap) << '\n';
    failed |= row.error.has_value();
  }
  write_text(dir / "matrix.csv", os.str());
  return failed ? 1 : 0;
}

int cmd_verify(const std::optional<std::string>& out) {
  json results = json::array();
  bool ok = true;
  for (const auto& r : sicl::verify::run_verify()) {
    std::printf("%s %-20s worst=%.3g tol=%.3g (%.1fs) %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.measured,
                r.tolerance, r.seconds, r.detail.c_str());
    std::fflush(stdout);
    ok &= r.passed;
    results.push_back({{"name", r.name}, {"passed", r.passed}, {"measured", r.measured},
                       {"tolerance", r.tolerance}, {"detail", r.detail}});
  }
  if (out) {
    fs::create_directories(*out);
    write_json(fs::path(*out) / "verify.json", results);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  sicl::tune_allocator();
  CLI::App app{"Subject-invariant contrastive learning on synthetic wearable-sensor data"};
  app.require_subcommand(1);

  Common gen_opts, pre_opts, lin_opts, ft_opts, an_opts, mx_opts;
  std::optional<std::string> data, checkpoint, dump_anchors, verify_out;
  std::string required_checkpoint;
  std::vector<std::string> losses{"nce", "sicl"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int jobs = 1;

  auto* gen = app.add_subcommand("gen", "generate the synthetic dataset and its manifest");
  add_common(gen, gen_opts);

  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining on training subjects");
  add_common(pre, pre_opts);
  pre->add_option("--data", data, "dataset file from `gen` (default: generate from the config)");
  pre->add_option("--dump-anchors", dump_anchors, "CSV of per-anchor p, q and loss for the final batch");

  auto* lin = app.add_subcommand("linear-eval", "frozen-encoder linear evaluation on held-out subjects");
  add_common(lin, lin_opts);
  lin->add_option("--checkpoint", required_checkpoint, "encoder checkpoint")->required();
  lin->add_option("--data", data, "dataset file");

  auto* ft = app.add_subcommand("finetune", "end-to-end supervised fine-tuning");
  add_common(ft, ft_opts);
  ft->add_option("--checkpoint", checkpoint, "initial encoder (default: random initialization)");
  ft->add_option("--data", data, "dataset file");

  auto* an = app.add_subcommand("analyze", "cosine-similarity populations of held-out embeddings");
  add_common(an, an_opts);
  an->add_option("--checkpoint", required_checkpoint, "encoder checkpoint")->required();
  an->add_option("--data", data, "dataset file");

  auto* mx = app.add_subcommand("matrix", "pretrain + linear-eval over losses x seeds");
  add_common(mx, mx_opts);
  mx->add_option("--losses", losses, "loss names")->delimiter(',');
  mx->add_option("--seeds", seeds, "run seeds")->delimiter(',');
  mx->add_option("--jobs", jobs, "concurrent cells")->check(CLI::PositiveNumber);

  auto* ver = app.add_subcommand("verify", "oracle, gradient, reduction and determinism checks");
  ver->add_option("--out", verify_out, "directory for verify.json");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen(gen_opts);
    if (pre->parsed()) return cmd_pretrain(pre_opts, data, dump_anchors);
    if (lin->parsed()) return cmd_linear_eval(lin_opts, required_checkpoint, data);
    if (ft->parsed()) return cmd_finetune(ft_opts, checkpoint, data);
    if (an->parsed()) return cmd_analyze(an_opts, required_checkpoint, data);
    if (mx->parsed()) return cmd_matrix(mx_opts, losses, seeds, jobs);
    if (ver->parsed()) return cmd_verify(verify_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
