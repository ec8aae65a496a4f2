#include "aplc/corpus.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>

#include "aplc/errors.hpp"

namespace aplc {
namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

template <typename Int>
Int parse_int(std::string_view token, std::size_t line, const char* what) {
  Int value{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || token.empty()) {
    fail_at(line, std::string("non-numeric ") + what + " '" +
                      std::string(token) + "'");
  }
  return value;
}

float parse_float(std::string_view token, std::size_t line) {
  float value{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || token.empty() || !std::isfinite(value)) {
    fail_at(line, "non-numeric feature value '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Sample parse_sample(std::string_view text, std::size_t line, std::size_t num_features,
                    std::size_t num_labels) {
  Sample sample;
  for (std::string_view token : split_ws(text)) {
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) {
      if (!sample.features.indices.empty()) {
        fail_at(line, "label token '" + std::string(token) + "' after features");
      }
      std::size_t start = 0;
      while (start <= token.size()) {
        auto comma = token.find(',', start);
        if (comma == std::string_view::npos) comma = token.size();
        std::string_view id = token.substr(start, comma - start);
        if (!id.empty()) {
          auto label = parse_int<std::uint64_t>(id, line, "label");
          if (label >= num_labels) {
            fail_at(line, "label " + std::to_string(label) + " >= L=" +
                              std::to_string(num_labels));
          }
          sample.labels.push_back(static_cast<LabelId>(label));
        }
        start = comma + 1;
      }
      continue;
    }
    auto index = parse_int<std::uint64_t>(token.substr(0, colon), line, "feature index");
    if (index >= num_features) {
      fail_at(line, "feature index " + std::to_string(index) + " >= D=" +
                        std::to_string(num_features));
    }
    float value = parse_float(token.substr(colon + 1), line);
    if (value == 0.0f) continue;
    sample.features.indices.push_back(static_cast<FeatureId>(index));
    sample.features.values.push_back(value);
  }

  std::sort(sample.labels.begin(), sample.labels.end());
  sample.labels.erase(std::unique(sample.labels.begin(), sample.labels.end()),
                      sample.labels.end());

  auto& f = sample.features;
  if (!std::is_sorted(f.indices.begin(), f.indices.end())) {
    std::vector<std::size_t> perm(f.indices.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return f.indices[a] < f.indices[b]; });
    SparseVector sorted;
    for (auto p : perm) {
      sorted.indices.push_back(f.indices[p]);
      sorted.values.push_back(f.values[p]);
    }
    f = std::move(sorted);
  }
  if (std::adjacent_find(f.indices.begin(), f.indices.end()) != f.indices.end()) {
    fail_at(line, "duplicate feature index");
  }
  return sample;
}

}  // namespace

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& f = s.features;
    auto bad = [&](const std::string& what) {
      throw DataError("sample " + std::to_string(i) + ": " + what);
    };
    if (f.indices.size() != f.values.size()) bad("indices/values length mismatch");
    for (std::size_t k = 0; k < f.indices.size(); ++k) {
      if (f.indices[k] >= num_features) bad("feature index out of range");
      if (k > 0 && f.indices[k] <= f.indices[k - 1]) bad("feature indices not increasing");
      if (f.values[k] == 0.0f || !std::isfinite(f.values[k])) bad("zero or non-finite value");
    }
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      if (s.labels[k] >= num_labels) bad("label out of range");
      if (k > 0 && s.labels[k] <= s.labels[k - 1]) bad("labels not increasing");
    }
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, samples.size());
  begin = std::min(begin, end);
  Dataset out;
  out.num_features = num_features;
  out.num_labels = num_labels;
  out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset parse_repository_format(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail_at(1, "missing header");
  auto header = split_ws(line);
  if (header.size() != 3) fail_at(1, "malformed header, expected 'N D L'");
  Dataset ds;
  const auto n = parse_int<std::uint64_t>(header[0], 1, "header field");
  ds.num_features = parse_int<std::uint64_t>(header[1], 1, "header field");
  ds.num_labels = parse_int<std::uint64_t>(header[2], 1, "header field");
  ds.samples.reserve(n);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (ds.samples.size() == n) {
      if (split_ws(line).empty()) continue;
      fail_at(line_no, "more samples than the header's N=" + std::to_string(n));
    }
    ds.samples.push_back(parse_sample(line, line_no, ds.num_features, ds.num_labels));
  }
  if (ds.samples.size() != n) {
    fail_at(line_no, "header declares N=" + std::to_string(n) + " but found " +
                         std::to_string(ds.samples.size()) + " samples");
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("cannot open " + path.string());
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();

  if (magic[0] == 0x1f && magic[1] == 0x8b) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr) throw DataError("cannot open " + path.string());
    std::string text;
    char buffer[1 << 16];
    int got = 0;
    while ((got = gzread(gz, buffer, sizeof(buffer))) > 0) text.append(buffer, got);
    const bool failed = got < 0;
    gzclose(gz);
    if (failed) throw DataError("gzip decode failed for " + path.string());
    std::istringstream in(std::move(text));
    return parse_repository_format(in);
  }
  std::ifstream in(path);
  return parse_repository_format(in);
}

void write_repository_format(const Dataset& dataset, std::ostream& out) {
  out << dataset.size() << ' ' << dataset.num_features << ' ' << dataset.num_labels
      << '\n';
  char buf[64];
  for (const auto& s : dataset.samples) {
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      if (k > 0) out << ',';
      out << s.labels[k];
    }
    for (std::size_t k = 0; k < s.features.nnz(); ++k) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), s.features.values[k]);
      (void)ec;
      out << ' ' << s.features.indices[k] << ':' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  }
}

std::uint64_t LabelStats::total() const {
  return std::accumulate(frequency.begin(), frequency.end(), std::uint64_t{0});
}

LabelStats compute_label_stats(const Dataset& dataset) {
  LabelStats stats;
  stats.frequency.assign(dataset.num_labels, 0);
  std::uint64_t assignments = 0;
  for (const auto& s : dataset.samples) {
    if (s.labels.empty()) ++stats.empty_label_samples;
    for (auto l : s.labels) ++stats.frequency[l];
    assignments += s.labels.size();
  }
  stats.order.resize(dataset.num_labels);
  std::iota(stats.order.begin(), stats.order.end(), LabelId{0});
  std::stable_sort(stats.order.begin(), stats.order.end(), [&](LabelId a, LabelId b) {
    return stats.frequency[a] > stats.frequency[b];
  });
  stats.mean_labels_per_sample =
      dataset.samples.empty() ? 0.0
                              : static_cast<double>(assignments) /
                                    static_cast<double>(dataset.samples.size());
  return stats;
}

double cumulative_coverage(const LabelStats& stats, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw UsageError("coverage fraction must lie in [0, 1]");
  }
  const std::uint64_t total = stats.total();
  if (total == 0) throw DataError("empty label distribution");
  const auto top = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(stats.num_labels()) - 1e-9));
  std::uint64_t mass = 0;
  for (std::size_t r = 0; r < std::min(top, stats.order.size()); ++r) {
    mass += stats.frequency[stats.order[r]];
  }
  return static_cast<double>(mass) / static_cast<double>(total);
}

void write_coverage_csv(const LabelStats& stats, std::size_t points, std::ostream& out) {
  out << "fraction,mass\n";
  points = std::max<std::size_t>(points, 2);
  for (std::size_t p = 0; p < points; ++p) {
    const double f = static_cast<double>(p) / static_cast<double>(points - 1);
    out << f << ',' << cumulative_coverage(stats, f) << '\n';
  }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Lemire's multiply-shift with rejection: uniform in [0, i).
    const std::uint64_t bound = i;
    const std::uint64_t threshold = (0 - bound) % bound;
    unsigned __int128 m;
    do {
      m = static_cast<unsigned __int128>(rng()) * bound;
    } while (static_cast<std::uint64_t>(m) < threshold);
    const auto j = static_cast<std::size_t>(m >> 64);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

BatchPlan::BatchPlan(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed)
    : order_(seeded_permutation(num_samples, seed)), batch_size_(batch_size) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  num_batches_ = (num_samples + batch_size - 1) / batch_size;
}

std::span<const std::size_t> BatchPlan::batch(std::size_t b) const {
  const std::size_t begin = b * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  return std::span<const std::size_t>(order_).subspan(begin, end - begin);
}

BatchPlan batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed) {
  return BatchPlan(dataset.size(), batch_size, seed);
}

}  // namespace aplc
