#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sybilfl/experiment.hpp"
#include "sybilfl/plot.hpp"

namespace fs = std::filesystem;
using namespace sybilfl;

namespace {

std::string kebab(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// --config plus one --kebab-case flag per config key.
struct ConfigFlags {
  std::string config_path;
  std::string output_root;
  std::vector<std::pair<std::string, std::unique_ptr<std::string>>> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--output-root", output_root, "root for run directories (overrides SYBILFL_OUTPUT_ROOT)");
    for (const auto& key : config_keys()) {
      values.emplace_back(key, std::make_unique<std::string>());
      options.emplace_back(key, app.add_option("--" + kebab(key), *values.back().second));
    }
  }

  ExperimentConfig resolve() const {
    ConfigOverrides overrides;
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i].second->count() > 0) overrides.emplace_back(options[i].first, *values[i].second);
    }
    return parse_config(config_path, overrides);
  }

  fs::path run_dir(const ExperimentConfig& cfg) const {
    return resolve_output_dir(cfg, output_root.empty() ? std::nullopt : std::optional<fs::path>(output_root));
  }
};

std::string pct(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("-"); }

int cmd_run(const ConfigFlags& flags) {
  const ExperimentConfig cfg = flags.resolve();
  const fs::path dir = flags.run_dir(cfg);
  const auto result = run_experiment(cfg, dir);
  const auto& last = result.history.back();
  fmt::print("{}\nfinal round {}: mta {} tta {} gma {}\n", dir.string(), last.round, pct(last.mta), pct(last.tta),
             pct(last.gma));
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const fs::path out_dir = out.empty() ? output_root() / "compare" : fs::path(out);
  const auto cmp = compare_runs(paths, out_dir);
  fmt::print("{:<8} {:>10} {:>10}  {}\n", "method", "final_mta", "final_tta", "run");
  for (const auto& r : cmp.rows) {
    fmt::print("{:<8} {:>10} {:>10}  {}\n", r.label, pct(r.final_mta), pct(r.final_tta), r.dir.string());
  }
  fmt::print("wrote {}\n", (out_dir / "compare.svg").string());
  return 0;
}

int cmd_partition(const ConfigFlags& flags) {
  const ExperimentConfig cfg = flags.resolve();
  const ExperimentData data = load_experiment_data(cfg);
  const std::size_t malicious = cfg.attack ? malicious_count(cfg.num_clients, cfg.m_pct) : 0;
  fmt::print("{:>6} {:>9} {:>6}", "client", "role", "n");
  for (std::size_t c = 0; c < cfg.num_classes(); ++c) fmt::print(" {:>5}", c);
  fmt::print("\n");
  for (std::size_t i = 0; i < data.clients.size(); ++i) {
    const auto hist = class_histogram(data.clients[i]);
    fmt::print("{:>6} {:>9} {:>6}", i, i < malicious ? "malicious" : "benign", data.clients[i].size());
    for (auto h : hist) fmt::print(" {:>5}", h);
    fmt::print("\n");
  }
  return 0;
}

int cmd_poison_preview(const std::string& run_dir, const std::string& out) {
  const fs::path dir(run_dir);
  const LabeledDataset poisoned = read_poison_container(dir / "poison.spb");
  const LabeledDataset base = read_poison_container(dir / "poison_base.spb");
  if (base.size() != poisoned.size() || base.image_shape != poisoned.image_shape) {
    throw std::runtime_error(fmt::format("'{}' base and poisoned containers do not match", dir.string()));
  }
  fmt::print("{} poisoned images of shape {}, label {}\n", poisoned.size(), shape_string(poisoned.image_shape),
             poisoned.labels.empty() ? -1 : poisoned.labels.front());
  fmt::print("{:>5} {:>10} {:>10}\n", "image", "linf", "l2");
  for (std::size_t i = 0; i < poisoned.size(); ++i) {
    const auto a = base.image(i), b = poisoned.image(i);
    double linf = 0, l2 = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = b[k] - a[k];
      linf = std::max(linf, std::abs(d));
      l2 += d * d;
    }
    fmt::print("{:>5} {:>10.4f} {:>10.4f}\n", i, linf, std::sqrt(l2));
  }

  std::ifstream trace(dir / "poison_trace.csv");
  std::vector<double> values;
  std::string line;
  std::getline(trace, line);
  while (std::getline(trace, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (!values.empty()) {
    fmt::print("objective trace: {} values, first {:.6f}, last {:.6f}, min {:.6f}\n", values.size(), values.front(),
               values.back(), *std::min_element(values.begin(), values.end()));
  }

  const fs::path svg = out.empty() ? dir / "poison_preview.svg" : fs::path(out);
  const std::vector<const LabeledDataset*> rows{&base, &poisoned};
  const std::vector<std::string> names{"base", "poisoned"};
  std::ofstream f(svg, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", svg.string()));
  f << plot::render_images_svg(rows, names);
  fmt::print("wrote {}\n", svg.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sybil-based virtual data poisoning experiments on federated learning"};
  app.require_subcommand(1);

  ConfigFlags run_flags, part_flags;
  auto* run = app.add_subcommand("run", "run one federated experiment and write its result directory");
  run_flags.attach(*run);

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "overlay curves and tabulate final MTA/TTA of several runs");
  compare->add_option("dirs", compare_dirs, "run directories")->required()->expected(2, -1);
  compare->add_option("--out", compare_out, "output directory (default <output root>/compare)");

  auto* partition = app.add_subcommand("partition-inspect", "print per-client class histograms");
  part_flags.attach(*partition);

  std::string preview_dir, preview_out;
  auto* preview = app.add_subcommand("poison-preview", "dump base vs poisoned images and the objective trace");
  preview->add_option("run_dir", preview_dir, "run directory holding poison.spb")->required();
  preview->add_option("--out", preview_out, "svg path (default <run_dir>/poison_preview.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fmt::print(stderr, "error: {}\n", e.what());
    return e.get_exit_code();
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*compare) return cmd_compare(compare_dirs, compare_out);
    if (*partition) return cmd_partition(part_flags);
    if (*preview) return cmd_poison_preview(preview_dir, preview_out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    fmt::print(stderr, "error: {}\n", msg);
    return 1;
  }
  return 1;
}
