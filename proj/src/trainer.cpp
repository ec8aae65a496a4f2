#include "aplc/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "aplc/encoder.hpp"
#include "aplc/errors.hpp"
#include "aplc/eval.hpp"
#include "aplc/layer.hpp"

namespace aplc {
namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(epoch) + 1);
}

template <typename T>
double squared_norm(const ParamView<T>& p) {
  double sum = 0.0;
  if (p.row_sparse) {
    for (auto r : p.active_rows) {
      for (std::size_t j = 0; j < p.row_width; ++j) {
        const double g = p.grad[r * p.row_width + j];
        sum += g * g;
      }
    }
  } else {
    for (T g : p.grad) sum += static_cast<double>(g) * g;
  }
  return sum;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  if (embedding_dim == 0) throw UsageError("embedding_dim must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw UsageError("validation_fraction must lie in [0, 1)");
  }
  if (clip_norm < 0.0) throw UsageError("clip_norm must be >= 0");
  for (auto k : eval_k) {
    if (k == 0) throw UsageError("k values must be >= 1");
  }
  rates.validate();
  partition.validate();
}

std::uint64_t TrainConfig::fingerprint() const {
  std::ostringstream s;
  s << std::setprecision(17) << batch_size << '|' << epochs << '|' << rates.encoder << '|'
    << rates.hidden << '|' << rates.aplc << '|' << warmup_steps << '|';
  for (double p : partition.proportions) s << p << ',';
  s << '|' << partition.decay << '|' << partition.head_dim << '|' << embedding_dim << '|'
    << seed << '|' << clip_norm << '|' << gate_supervision << '|' << adamw.beta1 << '|'
    << adamw.beta2 << '|' << adamw.epsilon << '|' << adamw.weight_decay << '|'
    << validation_fraction;
  return fnv1a(s.str());
}

Model initial_model(const Dataset& train_part, const TrainConfig& config) {
  config.validate();
  const auto stats = compute_label_stats(train_part);
  Model model;
  model.spec = config.partition;
  model.layer = AplcLayer<float>(partition_by_frequency(stats, config.partition), config.seed + 1,
                                 AplcOptions{config.gate_supervision});
  model.encoder = EncoderStack<float>(
      EncoderDims{train_part.num_features, config.embedding_dim, config.partition.head_dim},
      config.seed);
  return model;
}

FitResult fit(const Dataset& dataset, const TrainConfig& config, const FitOptions& options) {
  config.validate();
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(dataset.size()) * config.validation_fraction));
  const Dataset train = dataset.slice(0, dataset.size() - n_val);
  const Dataset validation = dataset.slice(dataset.size() - n_val, dataset.size());
  if (train.size() == 0) throw DataError("fit: no training samples");

  FitResult result;
  Model& model = result.model;
  TrainState& state = result.state;
  if (options.resume != nullptr) {
    if (!options.resume->state) throw DataError("fit: resume file carries no training state");
    if (options.resume->state->config_fingerprint != config.fingerprint()) {
      throw UsageError("fit: checkpoint was produced with a different configuration");
    }
    model = options.resume->model;
    state.step = options.resume->state->step;
    state.epoch = options.resume->state->epoch;
    for (const auto& saved : options.resume->state->optimizers) {
      AdamW<float> opt(saved.group(), config.adamw);
      opt.first_moments() = saved.first_moments();
      opt.second_moments() = saved.second_moments();
      opt.set_steps(saved.steps());
      state.optimizers.push_back(std::move(opt));
    }
    if (state.optimizers.size() != 3) throw DataError("fit: checkpoint needs three optimizer groups");
  } else {
    model = initial_model(train, config);
    for (const char* group : {"encoder", "hidden", "aplc"}) {
      state.optimizers.emplace_back(group, config.adamw);
    }
  }
  state.config_fingerprint = config.fingerprint();
  if (model.encoder.dims().input != dataset.num_features ||
      model.layer.clusters().num_labels() != dataset.num_labels) {
    throw DataError("fit: dataset dimensions (D=" + std::to_string(dataset.num_features) +
                    ", L=" + std::to_string(dataset.num_labels) + ") do not match the model");
  }
  if (config.epochs == 0) return result;

  const SlantedTriangular shape{
      1.0, config.warmup_steps,
      total_training_steps(train.size(), config.batch_size, config.epochs)};
  shape.validate();

  const auto& clusters = model.layer.clusters();
  std::vector<const SparseVector*> features;
  std::vector<std::vector<LabelId>> labels;
  EncoderCache<float> encoder_cache;

  for (std::size_t epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const BatchPlan plan(train.size(), config.batch_size, epoch_seed(config.seed, epoch));
    double loss_sum = 0.0;
    for (const auto batch : plan) {
      features.clear();
      labels.clear();
      for (auto i : batch) {
        features.push_back(&train.samples[i].features);
        labels.push_back(train.samples[i].labels);
      }
      const Matrix hidden = model.encoder.encode(features, &encoder_cache);
      const AccessSet access = build_access_set(labels, clusters);
      auto fwd = model.layer.forward(hidden, access);
      const double loss = model.layer.loss(fwd.log_probs, access, labels);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(state.step));
      }
      const Matrix grad_hidden = model.layer.backward(fwd.cache, access, labels);
      model.encoder.backward(encoder_cache, grad_hidden);

      auto groups = parameter_groups(model.encoder, model.layer);
      double scale = 1.0;
      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : groups) {
          for (const auto& p : g.params) sq += squared_norm(p);
        }
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) scale = config.clip_norm / norm;
      }
      const GroupLr lr = group_lr(config.rates, shape, state.step);
      const double group_rates[3] = {lr.encoder, lr.hidden, lr.aplc};
      for (std::size_t g = 0; g < groups.size(); ++g) {
        state.optimizers[g].step(groups[g].params, group_rates[g], scale);
      }
      result.steps.push_back({state.step, lr.encoder, lr.hidden, lr.aplc, loss});
      loss_sum += loss;
      ++state.step;
    }
    state.epoch = epoch + 1;

    EpochLog log;
    log.epoch = epoch + 1;
    log.mean_loss = loss_sum / static_cast<double>(std::max<std::size_t>(plan.num_batches(), 1));
    if (config.eval_every > 0 && validation.size() > 0 && !config.eval_k.empty() &&
        (epoch + 1) % config.eval_every == 0) {
      std::size_t kmax = 0;
      for (auto k : config.eval_k) kmax = std::max(kmax, k);
      kmax = std::min(kmax, dataset.num_labels);
      const auto preds = predict_labels(model, validation, kmax, config.inference);
      std::vector<std::vector<LabelId>> truth;
      for (const auto& s : validation.samples) truth.push_back(s.labels);
      for (auto k : config.eval_k) {
        log.validation_p_at_k.push_back(k <= kmax ? precision_at_k(preds, truth, k) : 0.0);
      }
    }
    if (options.progress != nullptr) {
      *options.progress << "epoch " << log.epoch << "/" << config.epochs
                        << " mean_loss=" << log.mean_loss;
      for (std::size_t i = 0; i < log.validation_p_at_k.size(); ++i) {
        *options.progress << " val_P@" << config.eval_k[i] << '=' << log.validation_p_at_k[i];
      }
      *options.progress << '\n';
    }
    result.epochs.push_back(std::move(log));

    if (!config.checkpoint_path.empty()) save_model(config.checkpoint_path, model, &state);
    if (options.stop_after_epochs && state.epoch >= *options.stop_after_epochs) break;
  }
  return result;
}

void write_training_log(std::span<const StepLog> steps, std::ostream& out) {
  out << "step,lr_x,lr_h,lr_a,loss\n" << std::setprecision(9);
  for (const auto& s : steps) {
    out << s.step << ',' << s.lr_encoder << ',' << s.lr_hidden << ',' << s.lr_aplc << ','
        << s.loss << '\n';
  }
}

}  // namespace aplc
