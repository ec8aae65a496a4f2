#include "aplc/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "aplc/errors.hpp"

namespace aplc {
namespace {

static_assert(std::endian::native == std::endian::little,
              "model container I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  template <typename Int>
  void put(Int v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void matrix(const Matrix& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    bytes(m.data(), m.size() * sizeof(float));
  }
  void floats(const std::vector<float>& v) {
    put<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(float));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw DataError("write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError("truncated model file");
  }
  template <typename Int>
  Int get() {
    Int v{};
    bytes(&v, sizeof(v));
    return v;
  }
  std::uint64_t count(std::uint64_t limit, const char* what) {
    const auto n = get<std::uint64_t>();
    if (n > limit) throw DataError(std::string("corrupt model file: implausible ") + what);
    return n;
  }
  Matrix matrix() {
    const auto rows = count(kMaxElements, "matrix rows");
    const auto cols = count(kMaxElements, "matrix cols");
    if (rows * cols > kMaxElements) throw DataError("corrupt model file: matrix too large");
    Matrix m(rows, cols);
    bytes(m.data(), m.size() * sizeof(float));
    return m;
  }
  std::vector<float> floats() {
    std::vector<float> v(count(kMaxElements, "tensor size"));
    bytes(v.data(), v.size() * sizeof(float));
    return v;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  static constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

 private:
  std::ifstream in_;
};

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DataError("model file: " + what + " has shape " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

}  // namespace

void save_model(const std::filesystem::path& path, const Model& model, const TrainState* state) {
  Writer w(path);
  w.bytes(kModelMagic, sizeof(kModelMagic));
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint32_t>(state != nullptr ? 1u : 0u);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.spec.proportions.size()));
  for (double p : model.spec.proportions) w.put<double>(p);
  w.put<double>(model.spec.decay);
  w.put<std::uint64_t>(model.spec.head_dim);
  w.put<std::uint8_t>(model.layer.options().gate_supervision ? 1 : 0);

  const auto& clusters = model.layer.clusters();
  w.put<std::uint64_t>(clusters.num_labels());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(clusters.num_clusters()));
  for (const auto& c : clusters.clusters()) {
    w.put<std::uint64_t>(c.size());
    w.bytes(c.data(), c.size() * sizeof(LabelId));
  }
  for (auto d : clusters.dims()) w.put<std::uint64_t>(d);

  const auto matrices = model.layer.weight_matrices();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(matrices.size()));
  for (const auto* m : matrices) w.matrix(*m);

  const auto& dims = model.encoder.dims();
  w.put<std::uint64_t>(dims.input);
  w.put<std::uint64_t>(dims.embedding);
  w.put<std::uint64_t>(dims.hidden);
  w.matrix(model.encoder.input_weights());
  w.matrix(model.encoder.hidden_weights());
  w.matrix(model.encoder.bias());

  if (state != nullptr) {
    w.bytes("TRST", 4);
    w.put<std::uint64_t>(state->step);
    w.put<std::uint64_t>(state->epoch);
    w.put<std::uint64_t>(state->config_fingerprint);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state->optimizers.size()));
    for (const auto& opt : state->optimizers) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(opt.group().size()));
      w.bytes(opt.group().data(), opt.group().size());
      w.put<std::uint64_t>(opt.steps());
      w.put<std::uint32_t>(static_cast<std::uint32_t>(opt.first_moments().size()));
      for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        w.floats(opt.first_moments()[i]);
        w.floats(opt.second_moments()[i]);
      }
    }
  }
  w.finish(path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof(kModelMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw DataError("not an APLC model file (bad magic) in " + path.string());
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version) +
                    " (this build reads version " + std::to_string(kModelFormatVersion) + ")");
  }
  const auto flags = r.get<std::uint32_t>();

  LoadedModel out;
  Model& model = out.model;
  const auto n_props = r.get<std::uint32_t>();
  if (n_props == 0 || n_props > 4096) throw DataError("corrupt model file: cluster count");
  model.spec.proportions.resize(n_props);
  for (auto& p : model.spec.proportions) p = r.get<double>();
  model.spec.decay = r.get<double>();
  model.spec.head_dim = r.get<std::uint64_t>();
  AplcOptions options;
  options.gate_supervision = r.get<std::uint8_t>() != 0;

  const auto num_labels = r.count(std::uint64_t{1} << 32, "label count");
  const auto num_clusters = r.get<std::uint32_t>();
  if (num_clusters != n_props) throw DataError("model file: cluster count disagrees with spec");
  std::vector<std::vector<LabelId>> layout(num_clusters);
  for (auto& c : layout) {
    c.resize(r.count(num_labels, "cluster size"));
    r.bytes(c.data(), c.size() * sizeof(LabelId));
  }
  std::vector<std::size_t> dims(num_clusters);
  for (auto& d : dims) d = r.count(std::uint64_t{1} << 24, "hidden dim");
  LabelClusters clusters(std::move(layout), std::move(dims));
  if (clusters.num_labels() != num_labels) throw DataError("model file: label count mismatch");

  model.layer = AplcLayer<float>(clusters, options);
  const auto n_matrices = r.get<std::uint32_t>();
  auto targets = model.layer.weight_matrices();
  if (n_matrices != targets.size()) {
    throw DataError("model file: expected " + std::to_string(targets.size()) +
                    " APLC matrices, found " + std::to_string(n_matrices));
  }
  std::uint64_t stored = 0;
  for (auto* target : targets) {
    Matrix m = r.matrix();
    stored += m.size();
    expect_shape(m, target->rows(), target->cols(), "APLC matrix");
    *target = std::move(m);
  }
  if (stored != model.layer.parameter_count()) {
    throw DataError("model file: stored APLC weights (" + std::to_string(stored) +
                    ") differ from parameter count (" +
                    std::to_string(model.layer.parameter_count()) + ")");
  }

  EncoderDims edims;
  edims.input = r.count(std::uint64_t{1} << 32, "encoder input dim");
  edims.embedding = r.count(std::uint64_t{1} << 24, "encoder embedding dim");
  edims.hidden = r.count(std::uint64_t{1} << 24, "encoder hidden dim");
  if (edims.hidden != model.spec.head_dim) throw DataError("model file: encoder/APLC width mismatch");
  model.encoder = EncoderStack<float>(edims);
  Matrix w_in = r.matrix(), w_h = r.matrix(), b = r.matrix();
  expect_shape(w_in, edims.input, edims.embedding, "encoder input map");
  expect_shape(w_h, edims.embedding, edims.hidden, "hidden layer");
  expect_shape(b, 1, edims.hidden, "hidden bias");
  model.encoder.input_weights() = std::move(w_in);
  model.encoder.hidden_weights() = std::move(w_h);
  model.encoder.bias() = std::move(b);

  if (flags & 1u) {
    char tag[4];
    r.bytes(tag, 4);
    if (std::memcmp(tag, "TRST", 4) != 0) throw DataError("model file: bad training-state tag");
    TrainState state;
    state.step = r.get<std::uint64_t>();
    state.epoch = r.get<std::uint64_t>();
    state.config_fingerprint = r.get<std::uint64_t>();
    const auto groups = r.get<std::uint32_t>();
    if (groups > 64) throw DataError("corrupt model file: optimizer group count");
    for (std::uint32_t g = 0; g < groups; ++g) {
      std::string name(r.get<std::uint32_t>(), '\0');
      if (name.size() > 256) throw DataError("corrupt model file: group name");
      r.bytes(name.data(), name.size());
      AdamW<float> opt(name);
      opt.set_steps(r.get<std::uint64_t>());
      const auto tensors = r.get<std::uint32_t>();
      for (std::uint32_t t = 0; t < tensors; ++t) {
        opt.first_moments().push_back(r.floats());
        opt.second_moments().push_back(r.floats());
      }
      state.optimizers.push_back(std::move(opt));
    }
    out.state = std::move(state);
  }
  return out;
}

}  // namespace aplc
