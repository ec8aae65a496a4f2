#include "aplc/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "aplc/benchmark.hpp"
#include "aplc/corpus.hpp"
#include "aplc/errors.hpp"
#include "aplc/eval.hpp"
#include "aplc/model.hpp"
#include "aplc/numerics.hpp"
#include "aplc/partition.hpp"

namespace aplc {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw UsageError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  // from_chars for floating point is not available in every libstdc++ we
  // target, strtod is fine here.
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(out)) {
    throw UsageError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + value + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& p : split(value, ',')) out.push_back(parse_double(key, p));
  if (out.empty()) throw UsageError(key + ": empty list");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  for (const auto& p : split(value, ',')) {
    const auto k = parse_u64(key, p);
    if (k == 0) throw UsageError(key + ": values must be >= 1");
    out.push_back(k);
  }
  if (out.empty()) throw UsageError(key + ": empty list");
  return out;
}

struct KeyHandler {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> apply;
};

#define APLC_KEY(name, def, help, body)                                              \
  KeyHandler {                                                                       \
    ConfigKey{name, def, help}, [](RunConfig& c, const std::string& v) {             \
      [[maybe_unused]] const std::string k = name;                                   \
      body;                                                                          \
    }                                                                                \
  }

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      APLC_KEY("train_path", "", "training data (repository format, optionally gzip)",
               c.train_path = v),
      APLC_KEY("test_path", "", "test data", c.test_path = v),
      APLC_KEY("input_path", "", "samples to predict", c.input_path = v),
      APLC_KEY("model_path", "model.bin", "model file written by train, read otherwise",
               c.model_path = v),
      APLC_KEY("log_path", "", "training log CSV (step,lr_x,lr_h,lr_a,loss)", c.log_path = v),
      APLC_KEY("checkpoint_path", "", "checkpoint written after every epoch",
               c.train.checkpoint_path = v),
      APLC_KEY("resume", "false", "continue from checkpoint_path", c.resume = parse_bool(k, v)),
      APLC_KEY("metrics_csv", "", "metrics CSV written by evaluate", c.metrics_csv = v),
      APLC_KEY("output_path", "", "predictions (predict) or cost report CSV (benchmark)",
               c.output_path = v),
      APLC_KEY("coverage_csv", "", "label coverage curve written by inspect-partition",
               c.coverage_csv = v),
      APLC_KEY("batch_size", "12", "mini-batch size", c.train.batch_size = parse_u64(k, v)),
      APLC_KEY("epochs", "8", "training epochs", c.train.epochs = parse_u64(k, v)),
      APLC_KEY("eta_x", "5e-05", "peak learning rate of the encoder input map",
               c.train.rates.encoder = parse_double(k, v)),
      APLC_KEY("eta_h", "0.0001", "peak learning rate of the hidden layer",
               c.train.rates.hidden = parse_double(k, v)),
      APLC_KEY("eta_a", "0.002", "peak learning rate of the APLC layer",
               c.train.rates.aplc = parse_double(k, v)),
      APLC_KEY("warmup_steps", "0", "warm-up steps", c.train.warmup_steps = parse_u64(k, v)),
      APLC_KEY("proportions", "0.5,0.5", "cluster proportions, head first",
               c.train.partition.proportions = parse_doubles(k, v)),
      APLC_KEY("decay", "2", "hidden dimension decay factor q",
               c.train.partition.decay = parse_double(k, v)),
      APLC_KEY("hidden_dim", "768", "hidden dimension d",
               c.train.partition.head_dim = parse_u64(k, v)),
      APLC_KEY("embedding_dim", "256", "encoder embedding dimension",
               c.train.embedding_dim = parse_u64(k, v)),
      APLC_KEY("seed", "1", "seed for initialisation, shuffling and benchmarks",
               c.train.seed = parse_u64(k, v)),
      APLC_KEY("eval_every", "1", "validation every n epochs (0 disables)",
               c.train.eval_every = parse_u64(k, v)),
      APLC_KEY("clip_norm", "0", "global gradient norm clip (0 disables)",
               c.train.clip_norm = parse_double(k, v)),
      APLC_KEY("gate_supervision", "false", "add BCE terms on the tail gates",
               c.train.gate_supervision = parse_bool(k, v)),
      APLC_KEY("weight_decay", "0", "decoupled weight decay",
               c.train.adamw.weight_decay = parse_double(k, v)),
      APLC_KEY("beta1", "0.9", "AdamW beta1", c.train.adamw.beta1 = parse_double(k, v)),
      APLC_KEY("beta2", "0.999", "AdamW beta2", c.train.adamw.beta2 = parse_double(k, v)),
      APLC_KEY("epsilon", "1e-08", "AdamW epsilon", c.train.adamw.epsilon = parse_double(k, v)),
      APLC_KEY("validation_fraction", "0.1", "trailing share of train data held out",
               c.train.validation_fraction = parse_double(k, v)),
      APLC_KEY("k", "1,3,5", "k values for P@k; predict uses the largest",
               c.train.eval_k = parse_sizes(k, v)),
      APLC_KEY("inference", "exact", "exact or pruned:<m>",
               c.train.inference = parse_inference_mode(v)),
      APLC_KEY("threads", "1", "worker threads (also APLC_THREADS)", {
        c.threads = parse_u64(k, v);
        if (c.threads == 0) throw UsageError("threads must be >= 1");
      }),
      APLC_KEY("format", "text", "text or csv", {
        if (v != "text" && v != "csv") throw UsageError("format: expected text or csv");
        c.format = v;
      }),
      APLC_KEY("benchmark_steps", "0", "benchmark steps (0 = one epoch)",
               c.benchmark_steps = parse_u64(k, v)),
      APLC_KEY("benchmark_backward", "true", "include the backward pass in benchmark steps",
               c.benchmark_backward = parse_bool(k, v)),
      APLC_KEY("ablation", "none", "none, clusters, proportions or all", {
        if (v != "none") ablation_grid(v);
        c.ablation = v;
      }),
      APLC_KEY("ablation_csv", "ablation.csv", "ablation results", c.ablation_csv = v),
  };
  return table;
}

#undef APLC_KEY

void require_file(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!std::filesystem::exists(path)) {
    throw DataError(std::string(what) + " not found: " + path.string());
  }
}

std::size_t max_k(const RunConfig& c) {
  return *std::max_element(c.train.eval_k.begin(), c.train.eval_k.end());
}

std::string join(const std::vector<double>& values) {
  std::ostringstream s;
  for (std::size_t i = 0; i < values.size(); ++i) s << (i ? ";" : "") << values[i];
  return s.str();
}

std::vector<std::vector<LabelId>> truth_of(const Dataset& d) {
  std::vector<std::vector<LabelId>> truth;
  truth.reserve(d.size());
  for (const auto& s : d.samples) truth.push_back(s.labels);
  return truth;
}

void check_dims(const Model& model, const Dataset& data, const char* what) {
  if (model.encoder.dims().input != data.num_features ||
      model.layer.clusters().num_labels() != data.num_labels) {
    throw DataError(std::string(what) + " dimensions (D=" + std::to_string(data.num_features) +
                    ", L=" + std::to_string(data.num_labels) + ") do not match the model (D=" +
                    std::to_string(model.encoder.dims().input) + ", L=" +
                    std::to_string(model.layer.clusters().num_labels()) + ")");
  }
}

int run_ablation(const RunConfig& c, const Dataset& train, std::ostream& err) {
  require_file(c.test_path, "test data");
  const Dataset test = load_dataset(c.test_path);
  std::ofstream csv(c.ablation_csv);
  if (!csv) throw DataError("cannot write " + c.ablation_csv.string());
  csv << "run,num_clusters,proportions,p_at_1,train_seconds\n";
  const auto grid = ablation_grid(c.ablation);
  for (std::size_t r = 0; r < grid.size(); ++r) {
    TrainConfig tc = c.train;
    tc.partition.proportions = grid[r];
    tc.checkpoint_path.clear();
    err << "ablation run " << r + 1 << "/" << grid.size() << " proportions=" << join(grid[r])
        << '\n';
    const auto start = std::chrono::steady_clock::now();
    FitResult fitted;
    try {
      fitted = fit(train, tc, FitOptions{nullptr, std::nullopt, &err});
    } catch (const DataError& e) {
      throw DataError("ablation proportions " + join(grid[r]) + ": " + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check_dims(fitted.model, test, "test data");
    const auto preds = predict_labels(fitted.model, test, 1, tc.inference);
    const auto truth = truth_of(test);
    csv << r << ',' << grid[r].size() << ',' << join(grid[r]) << ',' << std::setprecision(10)
        << precision_at_k(preds, truth, 1) << ',' << std::setprecision(6) << seconds << '\n';
    csv.flush();
  }
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_file(c.train_path, "training data");
  const Dataset train = load_dataset(c.train_path);
  if (c.ablation != "none") return run_ablation(c, train, err);

  std::optional<LoadedModel> resume;
  FitOptions options;
  options.progress = &err;
  if (c.resume) {
    if (c.train.checkpoint_path.empty()) throw UsageError("resume needs checkpoint_path");
    if (std::filesystem::exists(c.train.checkpoint_path)) {
      resume = load_model(c.train.checkpoint_path);
      options.resume = &*resume;
      err << "resuming from " << c.train.checkpoint_path.string() << " at epoch "
          << resume->state->epoch << '\n';
    }
  }
  const FitResult result = fit(train, c.train, options);
  save_model(c.model_path, result.model);
  if (!c.log_path.empty()) {
    std::ofstream log(c.log_path);
    if (!log) throw DataError("cannot write " + c.log_path.string());
    write_training_log(result.steps, log);
  }
  out << "model written to " << c.model_path.string() << " (" << result.state.step
      << " steps)\n";

  if (!c.test_path.empty()) {
    require_file(c.test_path, "test data");
    const Dataset test = load_dataset(c.test_path);
    check_dims(result.model, test, "test data");
    const std::size_t k = std::min(max_k(c), test.num_labels);
    const auto preds = predict_labels(result.model, test, k, c.train.inference);
    std::vector<std::size_t> ks;
    for (auto v : c.train.eval_k) {
      if (v <= k) ks.push_back(v);
    }
    const auto report = evaluate_predictions(preds, truth_of(test), ks);
    write_metrics_text(report, out);
  }
  return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  require_file(c.model_path, "model");
  require_file(c.test_path, "test data");
  const LoadedModel loaded = load_model(c.model_path);
  const Dataset test = load_dataset(c.test_path);
  check_dims(loaded.model, test, "test data");
  const std::size_t k = max_k(c);
  if (k > test.num_labels) throw UsageError("k exceeds the number of labels");
  const auto preds = predict_labels(loaded.model, test, k, c.train.inference);
  const auto report = evaluate_predictions(preds, truth_of(test), c.train.eval_k);
  if (c.format == "csv") {
    write_metrics_csv(report, out);
  } else {
    write_metrics_text(report, out);
  }
  if (!c.metrics_csv.empty()) {
    std::ofstream csv(c.metrics_csv);
    if (!csv) throw DataError("cannot write " + c.metrics_csv.string());
    write_metrics_csv(report, csv);
  }
  return 0;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  require_file(c.model_path, "model");
  require_file(c.input_path, "input");
  const LoadedModel loaded = load_model(c.model_path);
  const Dataset input = load_dataset(c.input_path);
  check_dims(loaded.model, input, "input");
  const std::size_t k = max_k(c);

  std::ofstream file;
  std::ostream* dest = &out;
  if (!c.output_path.empty()) {
    file.open(c.output_path);
    if (!file) throw DataError("cannot write " + c.output_path.string());
    dest = &file;
  }
  *dest << std::fixed << std::setprecision(6);
  std::vector<const SparseVector*> rows;
  for (std::size_t begin = 0; begin < input.size(); begin += 256) {
    const std::size_t end = std::min(input.size(), begin + 256);
    rows.clear();
    for (std::size_t i = begin; i < end; ++i) rows.push_back(&input.samples[i].features);
    for (const auto& ranked : loaded.model.predict(rows, k, c.train.inference)) {
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        *dest << (r ? " " : "") << ranked[r].label << ':' << ranked[r].prob;
      }
      *dest << '\n';
    }
  }
  return 0;
}

int cmd_benchmark(const RunConfig& c, std::ostream& out) {
  require_file(c.train_path, "benchmark data");
  const Dataset data = load_dataset(c.train_path);
  BenchmarkConfig bc;
  bc.spec = c.train.partition;
  bc.batch_size = c.train.batch_size;
  bc.seed = c.train.seed;
  bc.max_steps = c.benchmark_steps;
  bc.backward = c.benchmark_backward;
  const CostModelReport report = benchmark(data, bc);
  if (c.format == "csv") {
    write_cost_report_csv(report, out);
  } else {
    write_cost_report_markdown(report, out);
  }
  if (!c.output_path.empty()) {
    std::ofstream csv(c.output_path);
    if (!csv) throw DataError("cannot write " + c.output_path.string());
    write_cost_report_csv(report, csv);
  }
  return 0;
}

int cmd_inspect(const RunConfig& c, std::ostream& out) {
  require_file(c.train_path, "training data");
  const Dataset data = load_dataset(c.train_path);
  // Same split the trainer partitions on.
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(data.size()) * c.train.validation_fraction));
  const Dataset train = data.slice(0, data.size() - n_val);
  const LabelStats stats = compute_label_stats(train);
  const LabelClusters clusters = partition_by_frequency(stats, c.train.partition);
  write_partition_table(clusters, stats, c.format == "csv", out);
  if (!c.coverage_csv.empty()) {
    std::ofstream csv(c.coverage_csv);
    if (!csv) throw DataError("cannot write " + c.coverage_csv.string());
    write_coverage_csv(stats, 101, csv);
  }
  return 0;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& h : handlers()) k.push_back(h.key);
    return k;
  }();
  return keys;
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& h : handlers()) {
    if (h.key.name == key) {
      h.apply(config, trim(value));
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    try {
      apply_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

InferenceMode parse_inference_mode(const std::string& text) {
  if (text == "exact") return InferenceMode::exact();
  if (text.rfind("pruned:", 0) == 0) {
    const auto m = parse_u64("inference", text.substr(7));
    if (m == 0) throw UsageError("inference: pruned needs m >= 1");
    return InferenceMode::top_tails(m);
  }
  throw UsageError("inference: expected exact or pruned:<m>, got '" + text + "'");
}

std::vector<std::vector<double>> ablation_grid(const std::string& which) {
  std::vector<std::vector<double>> grid;
  const bool clusters = which == "clusters" || which == "all";
  const bool proportions = which == "proportions" || which == "all";
  if (!clusters && !proportions) {
    throw UsageError("ablation: expected clusters, proportions or all, got '" + which + "'");
  }
  if (clusters) {
    for (std::size_t n = 2; n <= 6; ++n) grid.emplace_back(n, 1.0 / static_cast<double>(n));
  }
  if (proportions) {
    grid.push_back({0.7, 0.2, 0.1});
    grid.push_back({0.33, 0.33, 0.34});
    grid.push_back({0.1, 0.2, 0.7});
  }
  return grid;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive probabilistic label clusters for extreme multi-label classification",
               "aplc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct Command {
    const char* name;
    const char* help;
    const char* data_key;  // target of --data
  };
  const Command commands[] = {
      {"train", "Train a model", "train_path"},
      {"evaluate", "Report P@k of a model on test data", "test_path"},
      {"predict", "Write top-k labels with probabilities for each input sample", "input_path"},
      {"benchmark", "Compare APLC and dense output layer cost", "train_path"},
      {"inspect-partition", "Show the frequency partition of a dataset", "train_path"},
  };

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::map<std::string, std::string> values;

  struct Bound {
    CLI::App* sub;
    CLI::Option* option;
    std::string key;
  };
  std::vector<Bound> bound;
  std::vector<CLI::App*> subs;

  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "flat key=value config file");
    for (const auto& key : config_keys()) {
      std::string names = "--" + key.name;
      std::string dashed = key.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key.name) names += ",--" + dashed;
      if (key.name == "model_path") names += ",--model";
      if (key.name == "input_path") names += ",--input";
      if (key.name == cmd.data_key) names += ",--data";
      auto* opt = sub->add_option(names, values[std::string(cmd.name) + "/" + key.name],
                                  key.help + " [default: " + key.default_value + "]");
      bound.push_back({sub, opt, key.name});
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App* active = nullptr;
  for (auto* sub : subs) {
    if (sub->parsed()) active = sub;
  }

  try {
    RunConfig config;
    config.command = active->get_name();
    if (!config_path.empty()) apply_config_file(config, config_path);
    bool threads_flag = false;
    for (const auto& b : bound) {
      if (b.sub == active && b.key == "threads") threads_flag = b.option->count() > 0;
    }
    // The environment variable stands in for --threads; the flag wins.
    if (const char* env = std::getenv("APLC_THREADS");
        !threads_flag && env != nullptr && *env != '\0') {
      apply_config_value(config, "threads", env);
    }
    for (const auto& b : bound) {
      if (b.sub == active && b.option->count() > 0) {
        apply_config_value(config, b.key, values[config.command + "/" + b.key]);
      }
    }
    config.train.validate();
    set_num_threads(config.threads);

    if (config.command == "train") return cmd_train(config, out, err);
    if (config.command == "evaluate") return cmd_evaluate(config, out);
    if (config.command == "predict") return cmd_predict(config, out);
    if (config.command == "benchmark") return cmd_benchmark(config, out);
    return cmd_inspect(config, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace aplc
