#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sybilfl/attack.hpp"
#include "sybilfl/data.hpp"
#include "sybilfl/federation.hpp"
#include "sybilfl/metrics.hpp"

namespace sybilfl {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what) : std::invalid_argument(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  std::string dataset = "mnist";  // mnist | fmnist | synthetic
  std::string model = "auto";     // auto picks fc-mnist, or cnn-fmnist for fmnist
  std::filesystem::path data_dir = "data";
  std::size_t synthetic_per_class = 200;
  std::size_t synthetic_test_per_class = 100;
  std::size_t synthetic_side = 8;
  double synthetic_noise = 0.6;

  std::size_t num_clients = 50;
  double m_pct = 40.0;
  std::size_t sybils_per_malicious = 5;
  double alpha = 0.5;
  std::size_t rounds = 300;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double participation = 1.0;

  bool attack = true;
  std::string method = "ours";
  std::string scheme = "online-global";
  std::size_t offline_rounds = 20;
  std::optional<RoundWindow> attack_window;  // unset: the last 50 rounds
  std::size_t poison_steps = 300;
  double poison_lr = 1.0;
  double epsilon = std::numeric_limits<double>::infinity();
  std::size_t poison_count = 32;
  int y_tar = 1;
  int y_adv = 7;
  bool reverse_direction = false;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir;  // empty: <output root>/<dataset>-<method or clean>-s<seed>
  std::filesystem::path gma_baseline;

  RoundWindow window() const;
  std::string model_name() const;
  std::string label() const;  // method name, or "clean" without attack
  std::size_t num_classes() const { return 10; }
  FederationConfig federation() const;
  std::optional<AttackConfig> attack_config() const;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

// Every accepted key, in snapshot order.
const std::vector<std::string>& config_keys();

// Applies one `key = value` assignment; unknown keys and malformed values throw ConfigError.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

ExperimentConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides = {});

/// defaults <- file <- overrides. An empty path skips the file layer.
ExperimentConfig parse_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

// Flat `key = value` text that parse_config_text reads back to the same config.
std::string config_snapshot(const ExperimentConfig& config);

std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::filesystem::path>& root = std::nullopt);

struct ExperimentData {
  LabeledDataset train;
  LabeledDataset test;
  PartitionSpec partition;
  std::vector<LabeledDataset> clients;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

inline constexpr const char* kMetricsHeader = "round,mta,tta,gma,train_loss,adv_loss";

std::string metrics_csv(const std::vector<MetricsRecord>& history);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<MetricsRecord> history;
  ParamVector final_params;
  std::optional<PoisonBatch> last_poison;
};

/// Full run: data, partition, roster, R rounds of federation. Writes
/// config.txt, metrics.csv, params.bin, plot.svg and, when any poison was
/// crafted, poison.spb / poison_base.spb / poison_trace.csv into `dir`.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& dir);

// Metrics trajectory only; nothing touches the filesystem except dataset loading.
std::vector<MetricsRecord> simulate(const ExperimentConfig& config, ParamVector* final_params = nullptr,
                                    std::optional<PoisonBatch>* last_poison = nullptr);

// Overall accuracy per round from the clean counterpart of `config`.
std::vector<double> gma_run(const ExperimentConfig& config);

void write_params(const std::filesystem::path& path, const ParamVector& params);
std::vector<double> read_params(const std::filesystem::path& path);

struct ComparisonRow {
  std::string label;
  std::filesystem::path dir;
  std::optional<double> final_mta;
  std::optional<double> final_tta;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::string table;  // csv: label,dir,final_mta,final_tta
};

// Writes compare.svg and summary.csv into `out_dir`; rejects mismatched round counts.
Comparison compare_runs(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir);

}  // namespace sybilfl
