#include "wmvqa/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

std::string_view to_string(HeadAggregation h) { return h == HeadAggregation::Mean ? "mean" : "max"; }

HeadAggregation parse_head_aggregation(std::string_view s) {
  if (s == "mean") return HeadAggregation::Mean;
  if (s == "max") return HeadAggregation::Max;
  throw ValidationError("head aggregation must be 'mean' or 'max', got '" + std::string(s) + "'");
}

AttentionDelta attention_delta(const TensorDump& clean, const TensorDump& marked, HeadAggregation heads) {
  clean.validate();
  marked.validate();
  if (clean.meta.kind != DumpKind::Attention || marked.meta.kind != DumpKind::Attention)
    throw AnalysisInputError("attention_delta needs two attention dumps");
  if (clean.shape != marked.shape)
    throw AnalysisInputError("attention shapes differ between '" + clean.name + "' and '" + marked.name + "'");
  if (clean.meta.layer_index != marked.meta.layer_index)
    throw AnalysisInputError("attention dumps come from different layers");
  if (clean.meta.patch_grid != marked.meta.patch_grid || clean.meta.patch_offset != marked.meta.patch_offset)
    throw AnalysisInputError("attention dumps disagree on the patch grid");

  const std::size_t H = clean.shape[0], S = clean.shape[1];
  // reduced[q * S + k]: head-reduced |diff|
  std::vector<double> reduced(S * S, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t base = h * S * S;
    for (std::size_t i = 0; i < S * S; ++i) {
      const double d = std::abs(static_cast<double>(marked.data[base + i]) - static_cast<double>(clean.data[base + i]));
      if (heads == HeadAggregation::Mean) reduced[i] += d;
      else reduced[i] = std::max(reduced[i], d);
    }
  }
  if (heads == HeadAggregation::Mean)
    for (double& v : reduced) v /= static_cast<double>(H);

  std::vector<double> per_key(S, 0.0);
  for (std::size_t q = 0; q < S; ++q)
    for (std::size_t k = 0; k < S; ++k) per_key[k] += reduced[q * S + k];
  for (double& v : per_key) v /= static_cast<double>(S);

  AttentionDelta out;
  out.layer = clean.meta.layer_index;
  out.heads = heads;
  if (clean.meta.patch_grid) {
    const auto [rows, cols] = *clean.meta.patch_grid;
    if (rows < 1 || cols < 1) throw AnalysisInputError("patch grid dimensions must be positive");
    const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (clean.meta.patch_offset + n > S) throw AnalysisInputError("patch grid does not fit the sequence");
    out.rows = rows;
    out.cols = cols;
    out.values.assign(per_key.begin() + static_cast<std::ptrdiff_t>(clean.meta.patch_offset),
                      per_key.begin() + static_cast<std::ptrdiff_t>(clean.meta.patch_offset + n));
  } else {
    out.rows = 1;
    out.cols = static_cast<int>(S);
    out.values = std::move(per_key);
  }
  return out;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw AnalysisInputError("percentile of an empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

std::size_t count_above(std::span<const double> values, double threshold) {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [&](double v) { return v > threshold; }));
}

std::vector<double> embedding_summary(const TensorDump& embedding) {
  embedding.validate();
  if (embedding.meta.kind != DumpKind::Embedding) throw AnalysisInputError("embedding_summary needs an embedding dump");
  const std::size_t S = embedding.shape[0], D = embedding.shape[1];
  const std::size_t n = embedding.meta.valid_length.value_or(S);
  std::vector<double> out(D, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t d = 0; d < D; ++d) out[d] += embedding.data[s * D + d];
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw AnalysisInputError("cosine similarity of vectors with different lengths");
  if (a.empty()) throw AnalysisInputError("cosine similarity of empty vectors");
  // Scale by the max magnitude first so huge or tiny inputs neither overflow
  // nor underflow.
  double ma = 0, mb = 0;
  for (double v : a) ma = std::max(ma, std::abs(v));
  for (double v : b) mb = std::max(mb, std::abs(v));
  if (ma == 0 || mb == 0) throw AnalysisInputError("cosine similarity of a zero-norm vector");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] / ma, y = b[i] / mb;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

// Nine evenly spaced samples of matplotlib's viridis.
constexpr std::array<std::array<double, 3>, 9> kViridis{{{68, 1, 84},
                                                         {71, 44, 122},
                                                         {59, 81, 139},
                                                         {44, 113, 142},
                                                         {33, 144, 141},
                                                         {39, 173, 129},
                                                         {92, 200, 99},
                                                         {170, 220, 50},
                                                         {253, 231, 37}}};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

}  // namespace

Rgb colormap(double t) {
  if (!(t >= 0)) t = 0;  // also catches NaN
  t = std::min(t, 1.0);
  const double pos = t * (kViridis.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), kViridis.size() - 2);
  const double f = pos - static_cast<double>(i);
  const auto& a = kViridis[i];
  const auto& b = kViridis[i + 1];
  return {to_byte(a[0] + (b[0] - a[0]) * f), to_byte(a[1] + (b[1] - a[1]) * f), to_byte(a[2] + (b[2] - a[2]) * f)};
}

void render_heatmap(const AttentionDelta& delta, const std::filesystem::path& out_stem, const HeatmapOptions& options) {
  if (delta.rows < 1 || delta.cols < 1 ||
      delta.values.size() != static_cast<std::size_t>(delta.rows) * static_cast<std::size_t>(delta.cols))
    throw AnalysisInputError("heatmap values do not match rows x cols");
  if (options.cell_px < 1) throw ValidationError("heatmap cell size must be >= 1");
  const auto [mn_it, mx_it] = std::minmax_element(delta.values.begin(), delta.values.end());
  const double mn = *mn_it, mx = *mx_it;
  const double range = mx - mn;

  const int cp = options.cell_px;
  DocumentImage img(delta.cols * cp, delta.rows * cp);
  for (int r = 0; r < delta.rows; ++r)
    for (int c = 0; c < delta.cols; ++c) {
      const double t = range > 0 ? (delta.at(r, c) - mn) / range : 0.0;
      const Rgb color = colormap(t);
      for (int y = r * cp; y < (r + 1) * cp; ++y)
        for (int x = c * cp; x < (c + 1) * cp; ++x) img.set(x, y, color);
    }

  // Condition ids contain dots, so only a known artifact extension is dropped.
  auto stem = out_stem;
  if (const auto ext = stem.extension(); ext == ".png" || ext == ".json" || ext == ".csv") stem.replace_extension();
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  write_png(img, std::filesystem::path(stem.string() + ".png"));

  nlohmann::json stops = nlohmann::json::array();
  for (int i = 0; i <= 8; ++i) {
    const double t = i / 8.0;
    const Rgb c = colormap(t);
    stops.push_back({{"t", t}, {"value", mn + t * range}, {"rgb", {c.r, c.g, c.b}}});
  }
  const nlohmann::json side{{"colormap", "viridis"},
                            {"normalization", "min-max"},
                            {"min", mn},
                            {"max", mx},
                            {"rows", delta.rows},
                            {"cols", delta.cols},
                            {"layer", delta.layer},
                            {"head_aggregation", std::string(to_string(delta.heads))},
                            {"colorbar", stops}};
  write_file_atomic(std::filesystem::path(stem.string() + ".json"), side.dump(2) + "\n");

  std::ostringstream csv;
  csv.precision(9);
  for (int r = 0; r < delta.rows; ++r) {
    for (int c = 0; c < delta.cols; ++c) csv << (c ? "," : "") << delta.at(r, c);
    csv << '\n';
  }
  write_file_atomic(std::filesystem::path(stem.string() + ".csv"), csv.str());
}

void render_scatter(std::span<const double> coords, std::span<const std::string> labels,
                    const std::filesystem::path& out_png, int size_px) {
  if (coords.size() != 2 * labels.size()) throw AnalysisInputError("scatter needs one label per 2-D point");
  if (labels.empty()) throw AnalysisInputError("scatter of zero points");
  if (size_px < 32) throw ValidationError("scatter size must be >= 32 px");

  // tab10
  static constexpr std::array<Rgb, 10> palette{{{31, 119, 180},
                                                {255, 127, 14},
                                                {44, 160, 44},
                                                {214, 39, 40},
                                                {148, 103, 189},
                                                {140, 86, 75},
                                                {227, 119, 194},
                                                {127, 127, 127},
                                                {188, 189, 34},
                                                {23, 190, 207}}};
  std::map<std::string, std::size_t> label_index;
  for (const auto& l : labels) label_index.emplace(l, 0);
  std::size_t k = 0;
  for (auto& [_, idx] : label_index) idx = k++;

  double xmin = coords[0], xmax = coords[0], ymin = coords[1], ymax = coords[1];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    xmin = std::min(xmin, coords[2 * i]);
    xmax = std::max(xmax, coords[2 * i]);
    ymin = std::min(ymin, coords[2 * i + 1]);
    ymax = std::max(ymax, coords[2 * i + 1]);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double margin = 0.08 * size_px;
  const double scale = (size_px - 2 * margin) / span;

  DocumentImage img(size_px, size_px);
  const int radius = std::max(2, size_px / 128);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double cx = margin + (coords[2 * i] - xmin) * scale;
    const double cy = size_px - margin - (coords[2 * i + 1] - ymin) * scale;
    const Rgb color = palette[label_index.at(labels[i]) % palette.size()];
    for (int y = static_cast<int>(cy) - radius; y <= static_cast<int>(cy) + radius; ++y)
      for (int x = static_cast<int>(cx) - radius; x <= static_cast<int>(cx) + radius; ++x) {
        if (x < 0 || y < 0 || x >= size_px || y >= size_px) continue;
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= radius * radius) img.set(x, y, color);
      }
  }
  if (out_png.has_parent_path()) std::filesystem::create_directories(out_png.parent_path());
  write_png(img, out_png);
}

}  // namespace wmvqa
