#include "sybilfl/experiment.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "sybilfl/plot.hpp"

namespace sybilfl {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key, fmt::format("{}: expected {}, got '{}'", key, expected, value));
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if (!value.empty() && value.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty()) bad_value(key, value, expected);
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return parse_number<std::size_t>(key, v, "a non-negative integer");
}

double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity" || v == "unbounded") return std::numeric_limits<double>::infinity();
  const double x = parse_number<double>(key, v, "a number");
  if (std::isnan(x)) bad_value(key, v, "a number");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string show(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{}", x);
}

struct KeyDef {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_KEY(field) \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_size(#field, v); }, \
         [](const ExperimentConfig& c) { return fmt::format("{}", c.field); }}
#define REAL_KEY(field) \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_real(#field, v); }, \
         [](const ExperimentConfig& c) { return show(c.field); }}
#define BOOL_KEY(field) \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }, \
         [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define TEXT_KEY(field) \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
         [](const ExperimentConfig& c) { return std::string(c.field); }}
#define PATH_KEY(field) \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
         [](const ExperimentConfig& c) { return c.field.string(); }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      TEXT_KEY(dataset),
      TEXT_KEY(model),
      PATH_KEY(data_dir),
      SIZE_KEY(synthetic_per_class),
      SIZE_KEY(synthetic_test_per_class),
      SIZE_KEY(synthetic_side),
      REAL_KEY(synthetic_noise),
      SIZE_KEY(num_clients),
      REAL_KEY(m_pct),
      SIZE_KEY(sybils_per_malicious),
      REAL_KEY(alpha),
      SIZE_KEY(rounds),
      SIZE_KEY(epochs),
      SIZE_KEY(batch_size),
      REAL_KEY(lr),
      REAL_KEY(momentum),
      REAL_KEY(participation),
      BOOL_KEY(attack),
      TEXT_KEY(method),
      TEXT_KEY(scheme),
      SIZE_KEY(offline_rounds),
      KeyDef{"attack_window",
             [](ExperimentConfig& c, const std::string& v) {
               if (v == "auto") {
                 c.attack_window.reset();
                 return;
               }
               const auto colon = v.find(':');
               if (colon == std::string::npos) bad_value("attack_window", v, "begin:end or auto");
               c.attack_window = RoundWindow{parse_size("attack_window", trim(v.substr(0, colon))),
                                             parse_size("attack_window", trim(v.substr(colon + 1)))};
             },
             [](const ExperimentConfig& c) {
               return c.attack_window ? fmt::format("{}:{}", c.attack_window->begin, c.attack_window->end)
                                      : std::string("auto");
             }},
      SIZE_KEY(poison_steps),
      REAL_KEY(poison_lr),
      REAL_KEY(epsilon),
      SIZE_KEY(poison_count),
      KeyDef{"y_tar",
             [](ExperimentConfig& c, const std::string& v) { c.y_tar = parse_number<int>("y_tar", v, "a class index"); },
             [](const ExperimentConfig& c) { return fmt::format("{}", c.y_tar); }},
      KeyDef{"y_adv",
             [](ExperimentConfig& c, const std::string& v) { c.y_adv = parse_number<int>("y_adv", v, "a class index"); },
             [](const ExperimentConfig& c) { return fmt::format("{}", c.y_adv); }},
      BOOL_KEY(reverse_direction),
      KeyDef{"seed",
             [](ExperimentConfig& c, const std::string& v) {
               c.seed = parse_number<std::uint64_t>("seed", v, "a non-negative integer");
             },
             [](const ExperimentConfig& c) { return fmt::format("{}", c.seed); }},
      PATH_KEY(output_dir),
      PATH_KEY(gma_baseline),
  };
  return table;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef BOOL_KEY
#undef TEXT_KEY
#undef PATH_KEY

void apply_text(ExperimentConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(body, fmt::format("line {}: expected 'key = value', got '{}'", lineno, body));
    }
    set_config_value(config, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string opt_field(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); }

std::optional<double> parse_opt_field(const std::string& s, const fs::path& path, std::size_t line) {
  if (s.empty()) return std::nullopt;
  double x = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error(fmt::format("'{}' line {}: bad number '{}'", path.string(), line, s));
  }
  return x;
}

double nan_if_absent(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

// ---- config -------------------------------------------------------------------

RoundWindow ExperimentConfig::window() const {
  if (attack_window) return *attack_window;
  return {rounds > 50 ? rounds - 50 : 0, rounds};
}

std::string ExperimentConfig::model_name() const {
  if (model != "auto") return model;
  return dataset == "fmnist" ? "cnn-fmnist" : "fc-mnist";
}

std::string ExperimentConfig::label() const { return attack ? method : "clean"; }

FederationConfig ExperimentConfig::federation() const {
  FederationConfig fc;
  fc.train = TrainParams{epochs, batch_size, lr, momentum};
  fc.selection.fraction = participation;
  fc.seed = seed;
  fc.eval_y_tar = y_tar;
  fc.eval_y_adv = y_adv;
  return fc;
}

std::optional<AttackConfig> ExperimentConfig::attack_config() const {
  if (!attack) return std::nullopt;
  AttackConfig a;
  a.y_tar = y_tar;
  a.y_adv = y_adv;
  a.m_pct = m_pct;
  a.sybils_per_malicious = sybils_per_malicious;
  a.steps = poison_steps;
  a.poison_lr = poison_lr;
  a.epsilon = epsilon;
  a.poison_count = poison_count;
  a.scheme = parse_scheme(scheme);
  a.offline_rounds = offline_rounds;
  a.window = window();
  a.method = parse_method(method);
  a.reverse_direction = reverse_direction;
  return a;
}

void ExperimentConfig::validate() const {
  if (dataset != "mnist" && dataset != "fmnist" && dataset != "synthetic") {
    throw ConfigError("dataset", fmt::format("dataset: expected mnist, fmnist or synthetic, got '{}'", dataset));
  }
  if (model != "auto" && model != "fc-mnist" && model != "cnn-fmnist") {
    throw ConfigError("model", fmt::format("model: expected auto, fc-mnist or cnn-fmnist, got '{}'", model));
  }
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, fmt::format("{}: {}", key, what));
  };
  require(synthetic_per_class >= 1, "synthetic_per_class", "must be at least 1");
  require(synthetic_test_per_class >= 1, "synthetic_test_per_class", "must be at least 1");
  require(synthetic_side >= 1, "synthetic_side", "must be at least 1");
  require(synthetic_noise >= 0 && std::isfinite(synthetic_noise), "synthetic_noise", "must be finite and >= 0");
  require(num_clients >= 1, "num_clients", "must be at least 1");
  require(m_pct >= 0 && m_pct <= 100, "m_pct", fmt::format("must lie in [0, 100], got {}", show(m_pct)));
  require(alpha > 0 && std::isfinite(alpha), "alpha", fmt::format("must be positive and finite, got {}", show(alpha)));
  require(rounds >= 1, "rounds", "must be at least 1");
  require(epochs >= 1, "epochs", "must be at least 1");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(lr > 0 && std::isfinite(lr), "lr", fmt::format("must be positive, got {}", show(lr)));
  require(momentum >= 0 && momentum < 1, "momentum", fmt::format("must lie in [0, 1), got {}", show(momentum)));
  require(participation > 0 && participation <= 1, "participation",
          fmt::format("must lie in (0, 1], got {}", show(participation)));
  require(poison_lr > 0 && std::isfinite(poison_lr), "poison_lr", "must be positive and finite");
  require(epsilon > 0, "epsilon", fmt::format("must be positive or inf, got {}", show(epsilon)));
  require(poison_count >= 1, "poison_count", "must be at least 1");
  const int nc = static_cast<int>(num_classes());
  require(y_tar >= 0 && y_tar < nc, "y_tar", fmt::format("must lie in [0, {}), got {}", nc, y_tar));
  require(y_adv >= 0 && y_adv < nc, "y_adv", fmt::format("must lie in [0, {}), got {}", nc, y_adv));
  if (y_tar == y_adv) throw ConfigError("y_tar", fmt::format("y_tar and y_adv must differ, both are {}", y_tar));
  try {
    parse_method(method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("method", fmt::format("method: {}", e.what()));
  }
  try {
    parse_scheme(scheme);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("scheme", fmt::format("scheme: {}", e.what()));
  }
  if (attack_window) {
    require(attack_window->begin <= attack_window->end, "attack_window", "begin must not exceed end");
    require(attack_window->end <= rounds, "attack_window",
            fmt::format("ends at {} but the run has {} rounds", attack_window->end, rounds));
  }
  if (attack) {
    try {
      malicious_count(num_clients, m_pct);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("m_pct", fmt::format("m_pct: {}", e.what()));
    }
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.emplace_back(k.name);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (key == k.name) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError(key, fmt::format("unknown config key '{}'", key));
}

ExperimentConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides) {
  ExperimentConfig config;
  apply_text(config, text);
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  config.validate();
  return config;
}

ExperimentConfig parse_config(const fs::path& path, const ConfigOverrides& overrides) {
  return parse_config_text(path.empty() ? std::string() : read_text(path), overrides);
}

std::string config_snapshot(const ExperimentConfig& config) {
  std::string out = "# sybilfl experiment\n";
  for (const auto& k : key_table()) out += fmt::format("{} = {}\n", k.name, k.get(config));
  return out;
}

fs::path output_root() {
  const char* env = std::getenv("SYBILFL_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

fs::path resolve_output_dir(const ExperimentConfig& config, const std::optional<fs::path>& root) {
  if (!config.output_dir.empty()) return config.output_dir;
  return (root ? *root : output_root()) / fmt::format("{}-{}-s{}", config.dataset, config.label(), config.seed);
}

// ---- data ---------------------------------------------------------------------

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData out;
  if (config.dataset == "synthetic") {
    SyntheticSpec spec;
    spec.num_classes = config.num_classes();
    spec.per_class = config.synthetic_per_class;
    spec.image_shape = {1, config.synthetic_side, config.synthetic_side};
    spec.noise = config.synthetic_noise;
    spec.seed = config.seed;
    out.train = make_synthetic(spec, 0);
    spec.per_class = config.synthetic_test_per_class;
    out.test = make_synthetic(spec, 1);
  } else {
    const fs::path& d = config.data_dir;
    out.train = load_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte", config.num_classes());
    out.test = load_idx(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte", config.num_classes());
  }
  out.partition =
      dirichlet_partition(out.train.labels, config.num_classes(), config.num_clients, config.alpha, config.seed);
  out.clients.reserve(config.num_clients);
  for (const auto& idx : out.partition.assignments) out.clients.push_back(out.train.subset(idx));
  return out;
}

// ---- metrics file -------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRecord>& history) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : history) {
    out += fmt::format("{},{},{},{},{:.6f},{:.6f}\n", r.round, opt_field(r.mta), opt_field(r.tta), opt_field(r.gma),
                       r.train_loss, r.adv_loss);
  }
  return out;
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsHeader) {
    throw std::runtime_error(fmt::format("'{}' does not start with the metrics header", path.string()));
  }
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) {
      throw std::runtime_error(fmt::format("'{}' line {}: expected 6 fields, got {}", path.string(), lineno, cells.size()));
    }
    MetricsRecord r;
    const auto round = parse_opt_field(cells[0], path, lineno);
    if (!round) throw std::runtime_error(fmt::format("'{}' line {}: missing round", path.string(), lineno));
    r.round = static_cast<std::size_t>(*round);
    r.mta = parse_opt_field(cells[1], path, lineno);
    r.tta = parse_opt_field(cells[2], path, lineno);
    r.gma = parse_opt_field(cells[3], path, lineno);
    r.train_loss = parse_opt_field(cells[4], path, lineno).value_or(0.0);
    r.adv_loss = parse_opt_field(cells[5], path, lineno).value_or(0.0);
    out.push_back(r);
  }
  return out;
}

// ---- params file --------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kParamsMagic{'S', 'P', 'V', '1'};

template <class T>
void put_le(std::ofstream& out, T v) {
  std::array<unsigned char, sizeof(T)> raw{};
  std::memcpy(raw.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
}

template <class T>
T get_le(std::ifstream& in, const fs::path& path) {
  std::array<unsigned char, sizeof(T)> raw{};
  if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size())) {
    throw std::runtime_error(fmt::format("'{}' is truncated", path.string()));
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T v;
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

}  // namespace

void write_params(const fs::path& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out.write(kParamsMagic.data(), kParamsMagic.size());
  put_le<std::uint64_t>(out, params.size());
  for (double v : params.data()) put_le<double>(out, v);
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

std::vector<double> read_params(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kParamsMagic) throw std::runtime_error(fmt::format("'{}' is not a parameter file", path.string()));
  const auto n = get_le<std::uint64_t>(in, path);
  std::vector<double> out(n);
  for (auto& v : out) v = get_le<double>(in, path);
  return out;
}

// ---- runs ---------------------------------------------------------------------

std::vector<MetricsRecord> simulate(const ExperimentConfig& config, ParamVector* final_params,
                                    std::optional<PoisonBatch>* last_poison) {
  config.validate();
  ExperimentData data = load_experiment_data(config);
  Model model = model_by_name(config.model_name(), data.train.image_shape, config.num_classes());
  const auto attack = config.attack_config();
  const std::size_t malicious = attack ? malicious_count(config.num_clients, config.m_pct) : 0;
  const std::size_t sybils = attack ? config.sybils_per_malicious : 0;

  Federation fed(model, config.federation(), attack, std::move(data.test));
  FederationState state =
      fed.initial_state(build_roster(std::move(data.clients), malicious, sybils), init_params(model, config.seed));
  for (std::size_t r = 0; r < config.rounds; ++r) {
    RoundReport report;
    state = fed.run_round(std::move(state), last_poison != nullptr ? &report : nullptr);
    if (last_poison != nullptr && !report.poisons.empty()) *last_poison = std::move(report.poisons.front().second);
  }
  if (final_params != nullptr) *final_params = state.global;
  return std::move(state.history);
}

std::vector<double> gma_run(const ExperimentConfig& config) {
  ExperimentConfig clean = config;
  clean.attack = false;
  std::vector<double> out;
  for (const auto& r : simulate(clean)) out.push_back(r.gma.value_or(std::numeric_limits<double>::quiet_NaN()));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

  ExperimentResult result{dir, {}, {}, std::nullopt};
  result.history = simulate(config, &result.final_params, &result.last_poison);

  if (!config.gma_baseline.empty()) {
    const auto baseline = read_metrics_csv(config.gma_baseline / "metrics.csv");
    if (baseline.size() != result.history.size()) {
      throw std::runtime_error(fmt::format("gma baseline '{}' has {} rounds, this run has {}",
                                           config.gma_baseline.string(), baseline.size(), result.history.size()));
    }
    for (std::size_t i = 0; i < baseline.size(); ++i) {
      if (!baseline[i].gma) {
        throw std::runtime_error(
            fmt::format("gma baseline '{}' has no gma value in round {}", config.gma_baseline.string(), i));
      }
      result.history[i].gma = baseline[i].gma;
    }
  }

  write_text(dir / "config.txt", config_snapshot(config));
  write_text(dir / "metrics.csv", metrics_csv(result.history));
  write_params(dir / "params.bin", result.final_params);

  plot::Chart chart;
  chart.title = fmt::format("{} on {} (seed {})", config.label(), config.dataset, config.seed);
  plot::Series mta{"MTA", {}, {}}, tta{"TTA", {}, {}, true}, gma{"GMA", {}, {}};
  for (const auto& r : result.history) {
    const auto x = static_cast<double>(r.round);
    mta.x.push_back(x), mta.y.push_back(nan_if_absent(r.mta));
    tta.x.push_back(x), tta.y.push_back(nan_if_absent(r.tta));
    gma.x.push_back(x), gma.y.push_back(nan_if_absent(r.gma));
  }
  chart.series = {mta, tta};
  if (std::any_of(result.history.begin(), result.history.end(), [](const auto& r) { return r.gma.has_value(); })) {
    chart.series.push_back(gma);
  }
  write_text(dir / "plot.svg", plot::render_svg(chart));

  if (result.last_poison) {
    const auto& batch = *result.last_poison;
    write_poison_container(dir / "poison.spb", batch.poisoned());
    write_poison_container(dir / "poison_base.spb", batch.base);
    std::string trace = "step,objective\n";
    for (std::size_t t = 0; t < batch.trace.size(); ++t) trace += fmt::format("{},{:.9f}\n", t, batch.trace[t]);
    write_text(dir / "poison_trace.csv", trace);
  }
  return result;
}

Comparison compare_runs(const std::vector<fs::path>& dirs, const fs::path& out_dir) {
  if (dirs.size() < 2) throw std::invalid_argument("compare needs at least two run directories");
  Comparison cmp;
  std::vector<std::vector<MetricsRecord>> histories;
  for (const auto& d : dirs) {
    const ExperimentConfig cfg = parse_config(d / "config.txt");
    histories.push_back(read_metrics_csv(d / "metrics.csv"));
    const auto& h = histories.back();
    if (h.size() != histories.front().size()) {
      throw std::invalid_argument(fmt::format("'{}' has {} rounds but '{}' has {}", d.string(), h.size(),
                                              dirs.front().string(), histories.front().size()));
    }
    ComparisonRow row{cfg.label(), d, std::nullopt, std::nullopt};
    if (!h.empty()) row.final_mta = h.back().mta, row.final_tta = h.back().tta;
    cmp.rows.push_back(row);
  }

  cmp.table = "label,dir,final_mta,final_tta\n";
  for (const auto& r : cmp.rows) {
    cmp.table += fmt::format("{},{},{},{}\n", r.label, r.dir.string(), opt_field(r.final_mta), opt_field(r.final_tta));
  }

  plot::Chart chart;
  chart.title = "MTA (solid) and TTA (dashed) per run";
  for (std::size_t k = 0; k < cmp.rows.size(); ++k) {
    plot::Series mta{fmt::format("{} MTA", cmp.rows[k].label), {}, {}};
    plot::Series tta{fmt::format("{} TTA", cmp.rows[k].label), {}, {}, true};
    for (const auto& r : histories[k]) {
      mta.x.push_back(static_cast<double>(r.round)), mta.y.push_back(nan_if_absent(r.mta));
      tta.x.push_back(static_cast<double>(r.round)), tta.y.push_back(nan_if_absent(r.tta));
    }
    chart.series.push_back(std::move(mta));
    chart.series.push_back(std::move(tta));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));
  write_text(out_dir / "compare.svg", plot::render_svg(chart));
  write_text(out_dir / "summary.csv", cmp.table);
  return cmp;
}

}  // namespace sybilfl
