#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unistd.h>

#include "aplc/errors.hpp"
#include "aplc/eval.hpp"
#include "aplc/synthetic.hpp"
#include "aplc/trainer.hpp"

using namespace aplc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("aplc_trainer_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset small_dataset(std::size_t n = 200) {
  SyntheticConfig cfg;
  cfg.num_samples = n;
  cfg.num_labels = 16;
  cfg.num_features = 128;
  cfg.max_labels = 2;
  cfg.noise_features = 1;
  cfg.seed = 11;
  return make_synthetic_dataset(cfg);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 5;
  c.partition = PartitionSpec{{0.5, 0.5}, 2.0, 16};
  c.embedding_dim = 8;
  c.rates = GroupRates{5e-2, 2e-2, 2e-2};
  c.eval_k = {1};
  return c;
}

}  // namespace

TEST_CASE("training lowers the loss on a separable synthetic set") {
  const auto data = small_dataset();
  const auto result = fit(data, small_config());
  REQUIRE(result.epochs.size() == 5);
  CHECK(result.epochs.back().mean_loss < result.epochs.front().mean_loss);
  CHECK(result.steps.size() == 5 * 23);  // 180 training samples, batches of 8
  CHECK(result.steps.front().lr_aplc == 2e-2);
  CHECK(result.steps.back().step == result.steps.size() - 1);
  CHECK(result.epochs.back().validation_p_at_k.size() == 1);
}

TEST_CASE("zero epochs returns the initial model") {
  const auto data = small_dataset(50);
  auto cfg = small_config();
  cfg.epochs = 0;
  const auto result = fit(data, cfg);
  const Model init = initial_model(data.slice(0, 45), cfg);
  CHECK(result.model.layer.head_weights() == init.layer.head_weights());
  CHECK(result.model.encoder.input_weights() == init.encoder.input_weights());
  CHECK(result.steps.empty());
}

TEST_CASE("identical seeds give bitwise identical checkpoints") {
  TempDir dir;
  const auto data = small_dataset(100);
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.checkpoint_path = dir.path / "a.bin";
  fit(data, cfg);
  cfg.checkpoint_path = dir.path / "b.bin";
  fit(data, cfg);
  const auto a = slurp(dir.path / "a.bin"), b = slurp(dir.path / "b.bin");
  CHECK(!a.empty());
  CHECK(a == b);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  TempDir dir;
  const auto data = small_dataset(100);
  auto cfg = small_config();
  cfg.epochs = 4;
  const auto full = fit(data, cfg);
  save_model(dir.path / "full.bin", full.model);

  cfg.checkpoint_path = dir.path / "ckpt.bin";
  FitOptions stop;
  stop.stop_after_epochs = 2;
  const auto half = fit(data, cfg, stop);
  CHECK(half.state.epoch == 2);
  const auto loaded = load_model(cfg.checkpoint_path);
  REQUIRE(loaded.state.has_value());
  FitOptions resume;
  resume.resume = &loaded;
  const auto rest = fit(data, cfg, resume);
  CHECK(rest.state.step == full.state.step);
  save_model(dir.path / "resumed.bin", rest.model);
  CHECK(slurp(dir.path / "full.bin") == slurp(dir.path / "resumed.bin"));

  auto other = cfg;
  other.seed = 99;
  CHECK_THROWS_AS(fit(data, other, resume), UsageError);
}

TEST_CASE("model files") {
  TempDir dir;
  const auto data = small_dataset(60);
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.gate_supervision = true;
  const auto result = fit(data, cfg);
  const auto path = dir.path / "m.bin";
  save_model(path, result.model, &result.state);

  SUBCASE("round trip keeps predictions") {
    const auto loaded = load_model(path);
    CHECK(loaded.model.layer.options().gate_supervision);
    CHECK(loaded.model.layer.clusters() == result.model.layer.clusters());
    CHECK(loaded.state->step == result.state.step);
    CHECK(predict_labels(loaded.model, data, 5) == predict_labels(result.model, data, 5));
  }
  SUBCASE("bad magic") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(dir.path / "bad.bin", std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_model(dir.path / "bad.bin"), doctest::Contains("magic"), DataError);
  }
  SUBCASE("older format version") {
    auto bytes = slurp(path);
    const std::uint32_t old = 0;
    std::memcpy(bytes.data() + 8, &old, 4);
    std::ofstream(dir.path / "old.bin", std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_model(dir.path / "old.bin"),
                         doctest::Contains("unsupported model format version 0"), DataError);
  }
  SUBCASE("truncated file") {
    const auto bytes = slurp(path);
    std::ofstream(dir.path / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_model(dir.path / "cut.bin"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(dir.path / "none.bin"), DataError); }
}

TEST_CASE("dimension mismatch on resume") {
  TempDir dir;
  const auto data = small_dataset(60);
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.checkpoint_path = dir.path / "c.bin";
  fit(data, cfg);
  const auto loaded = load_model(cfg.checkpoint_path);
  Dataset wider = data;
  wider.num_features += 1;
  FitOptions resume;
  resume.resume = &loaded;
  CHECK_THROWS_AS(fit(wider, cfg, resume), DataError);
}

TEST_CASE("diverging training reports the step") {
  const auto data = small_dataset(60);
  auto cfg = small_config();
  cfg.rates = GroupRates{1e30, 1e30, 1e30};
  cfg.epochs = 3;
  CHECK_THROWS_AS(fit(data, cfg), NumericError);
}

TEST_CASE("config validation and fingerprint") {
  auto cfg = small_config();
  CHECK(cfg.fingerprint() == small_config().fingerprint());
  auto other = cfg;
  other.rates.aplc = 1e-3;
  CHECK(other.fingerprint() != cfg.fingerprint());
  other = cfg;
  other.batch_size = 0;
  CHECK_THROWS_AS(other.validate(), UsageError);
  other = cfg;
  other.validation_fraction = 1.0;
  CHECK_THROWS_AS(other.validate(), UsageError);
}

TEST_CASE("training log csv") {
  const std::vector<StepLog> steps = {{0, 5e-5, 1e-4, 2e-3, 0.5}, {1, 2.5e-5, 5e-5, 1e-3, 0.25}};
  std::ostringstream out;
  write_training_log(steps, out);
  CHECK(out.str() == "step,lr_x,lr_h,lr_a,loss\n0,5e-05,0.0001,0.002,0.5\n1,2.5e-05,5e-05,0.001,0.25\n");
}
