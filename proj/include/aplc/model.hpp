#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "aplc/encoder.hpp"
#include "aplc/layer.hpp"
#include "aplc/optimizer.hpp"
#include "aplc/partition.hpp"

namespace aplc {

/// Encoder stack plus APLC output layer, trained and persisted together.
struct Model {
  PartitionSpec spec;
  EncoderStack<float> encoder;
  AplcLayer<float> layer;

  /// Hidden states for a batch of feature vectors.
  Matrix hidden(std::span<const SparseVector* const> batch) const { return encoder.encode(batch); }

  std::vector<std::vector<ScoredLabel<float>>> predict(std::span<const SparseVector* const> batch,
                                                       std::size_t k,
                                                       InferenceMode mode = {}) const {
    return layer.predict_topk(hidden(batch), k, mode);
  }
};

/// Optimizer and progress state stored alongside a model in a checkpoint.
struct TrainState {
  std::vector<AdamW<float>> optimizers;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t config_fingerprint = 0;
};

inline constexpr char kModelMagic[8] = {'A', 'P', 'L', 'C', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary container, little-endian throughout:
///
///   magic "APLCMODL" | u32 version | u32 flags (bit 0: training state)
///   PartitionSpec    u32 n, f64 proportions[n], f64 q, u64 d
///   options          u8 gate_supervision
///   LabelClusters    u64 L, u32 clusters, {u64 size, u32 ids[size]}*, u64 dims[clusters]
///   APLC matrices    u32 count, {u64 rows, u64 cols, f32 data[rows*cols]}*
///   encoder          u64 D, u64 d_e, u64 d_h, three matrices (W_in, W_h, b)
///   [training state] "TRST", u64 step, u64 epoch, u64 fingerprint, u32 groups,
///                    {u32 len, name, u64 t, u32 tensors, {u64 n, f32 m[n], f32 v[n]}*}*
void save_model(const std::filesystem::path& path, const Model& model,
                const TrainState* state = nullptr);

struct LoadedModel {
  Model model;
  std::optional<TrainState> state;
};

/// Throws DataError on bad magic, unsupported version, truncation, or a
/// stored APLC weight count that disagrees with the parameter-count formula.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace aplc
