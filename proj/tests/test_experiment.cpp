#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sybilfl/experiment.hpp"
#include "support.hpp"

using namespace sybilfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sybilfl_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(std::uint64_t seed = 0) {
  return parse_config_text(
      "dataset = synthetic\n"
      "synthetic_per_class = 12\n"
      "synthetic_test_per_class = 6\n"
      "num_clients = 5\n"
      "m_pct = 40\n"
      "sybils_per_malicious = 2\n"
      "rounds = 4\n"
      "epochs = 1\n"
      "batch_size = 16\n"
      "attack_window = 2:4\n"
      "poison_steps = 5\n",
      {{"seed", std::to_string(seed)}});
}

std::string config_error_key(const std::string& text) {
  try {
    parse_config_text(text).validate();
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = parse_config_text("");
  const ExperimentConfig d;
  EXPECT_EQ(config_snapshot(c), config_snapshot(d));
  EXPECT_EQ(c.num_clients, 50u);
  EXPECT_EQ(c.rounds, 300u);
  EXPECT_EQ(c.window().begin, 250u);
  EXPECT_EQ(c.window().end, 300u);
  EXPECT_EQ(c.model_name(), "fc-mnist");
  EXPECT_EQ(parse_config({}, {}).rounds, 300u);
}

TEST(Config, OverrideBeatsFile) {
  const auto dir = scratch("override");
  {
    std::ofstream out(dir / "c.txt");
    out << "# comment\nrounds = 12\nlr = 0.5\n";
  }
  const auto c = parse_config(dir / "c.txt", {{"rounds", "7"}});
  EXPECT_EQ(c.rounds, 7u);
  EXPECT_DOUBLE_EQ(c.lr, 0.5);
  EXPECT_THROW(parse_config(dir / "missing.txt"), std::runtime_error);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_EQ(config_error_key("bogus_key = 3\n"), "bogus_key");
  EXPECT_EQ(config_error_key("rounds = many\n"), "rounds");
  EXPECT_EQ(config_error_key("alpha = 0\n"), "alpha");
  EXPECT_EQ(config_error_key("m_pct = 33\n"), "m_pct");
  try {
    parse_config_text("y_tar = 3\ny_adv = 3\n").validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("y_tar"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("y_adv"), std::string::npos);
  }
}

TEST(Config, SnapshotRoundTrips) {
  auto c = tiny(5);
  c.epsilon = 0.125;
  c.reverse_direction = true;
  c.method = "lm";
  const auto text = config_snapshot(c);
  EXPECT_EQ(config_snapshot(parse_config_text(text)), text);
  for (const auto& key : config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(Config, OutputDirectory) {
  const auto c = tiny(3);
  EXPECT_EQ(resolve_output_dir(c, fs::path("elsewhere")), fs::path("elsewhere") / "synthetic-ours-s3");
  ::setenv("SYBILFL_OUTPUT_ROOT", "/tmp/root_from_env", 1);
  EXPECT_EQ(resolve_output_dir(c), fs::path("/tmp/root_from_env") / "synthetic-ours-s3");
  EXPECT_EQ(resolve_output_dir(c, fs::path("flag")), fs::path("flag") / "synthetic-ours-s3");
  ::unsetenv("SYBILFL_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir(c), fs::path("runs") / "synthetic-ours-s3");
  auto pinned = c;
  pinned.output_dir = "pinned";
  EXPECT_EQ(resolve_output_dir(pinned, fs::path("flag")), fs::path("pinned"));
}

TEST(Experiment, WritesArtifactsWithExactHeader) {
  const auto dir = scratch("artifacts");
  const auto res = run_experiment(tiny(1), dir);
  for (const char* f : {"config.txt", "metrics.csv", "params.bin", "plot.svg"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto csv = slurp(dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  ASSERT_EQ(res.history.size(), 4u);
  for (std::size_t r = 0; r < res.history.size(); ++r) EXPECT_EQ(res.history[r].round, r);
  EXPECT_EQ(read_metrics_csv(dir / "metrics.csv").size(), 4u);
  EXPECT_EQ(read_params(dir / "params.bin"), std::vector<double>(res.final_params.data().begin(),
                                                                 res.final_params.data().end()));
}

TEST(Experiment, SameSeedGivesByteIdenticalCsv) {
  const auto a = scratch("same_a"), b = scratch("same_b");
  run_experiment(tiny(2), a);
  run_experiment(tiny(2), b);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "params.bin"), slurp(b / "params.bin"));
}

TEST(Experiment, GmaFromCleanBaseline) {
  auto clean = tiny(4);
  clean.attack = false;
  const auto cdir = scratch("gma_clean");
  const auto base = run_experiment(clean, cdir);
  for (const auto& rec : base.history) EXPECT_TRUE(rec.gma);

  auto attacked = tiny(4);
  const auto plain = run_experiment(attacked, scratch("gma_none"));
  for (const auto& rec : plain.history) EXPECT_FALSE(rec.gma);

  attacked.gma_baseline = cdir;
  const auto filled = run_experiment(attacked, scratch("gma_filled"));
  for (std::size_t r = 0; r < filled.history.size(); ++r) {
    ASSERT_TRUE(filled.history[r].gma);
    EXPECT_NEAR(*filled.history[r].gma, *base.history[r].gma, 1e-6);
  }

  auto longer = tiny(4);
  longer.rounds = 5;
  longer.gma_baseline = cdir;
  EXPECT_THROW(run_experiment(longer, scratch("gma_mismatch")), std::runtime_error);
}

TEST(Compare, RowsLabelsAndRoundMismatch) {
  auto clean = tiny(6);
  clean.attack = false;
  const auto a = scratch("cmp_clean"), b = scratch("cmp_ours"), c = scratch("cmp_short");
  run_experiment(clean, a);
  run_experiment(tiny(6), b);
  const auto out = scratch("cmp_out");
  const auto cmp = compare_runs({a, b}, out);
  ASSERT_EQ(cmp.rows.size(), 2u);
  EXPECT_EQ(cmp.rows[0].label, "clean");
  EXPECT_EQ(cmp.rows[1].label, "ours");
  EXPECT_TRUE(fs::exists(out / "compare.svg"));
  EXPECT_EQ(cmp.table.substr(0, cmp.table.find('\n')), "label,dir,final_mta,final_tta");

  auto shorter = tiny(6);
  shorter.rounds = 3;
  shorter.attack_window = RoundWindow{1, 3};
  run_experiment(shorter, c);
  EXPECT_THROW(compare_runs({a, c}, out), std::invalid_argument);
  EXPECT_THROW(compare_runs({a}, out), std::invalid_argument);
}
