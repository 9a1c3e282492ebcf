#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wmvqa/image.hpp"
#include "wmvqa/tensor_dump.hpp"

namespace wmvqa {

enum class HeadAggregation { Mean, Max };
std::string_view to_string(HeadAggregation h);
HeadAggregation parse_head_aggregation(std::string_view s);

// Per-key-position attention shift. With a patch grid the values cover the
// image tokens only, laid out rows x cols; otherwise rows == 1, cols == seq.
struct AttentionDelta {
  std::vector<double> values;
  int rows = 0, cols = 0;
  int layer = 0;
  HeadAggregation heads = HeadAggregation::Mean;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

// |A_marked - A_clean| reduced over heads, then averaged over the query axis.
// Throws AnalysisInputError on kind/shape/layer/grid mismatch.
AttentionDelta attention_delta(const TensorDump& clean, const TensorDump& marked,
                               HeadAggregation heads = HeadAggregation::Mean);

// Linear-interpolated percentile, p in [0, 100].
double percentile(std::span<const double> values, double p);
std::size_t count_above(std::span<const double> values, double threshold);

// Mean over the first valid_length (default: all) sequence positions.
std::vector<double> embedding_summary(const TensorDump& embedding);

// Throws AnalysisInputError on length mismatch or a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Perceptually ordered (viridis-like) colormap, t clamped to [0, 1].
Rgb colormap(double t);

struct HeatmapOptions {
  int cell_px = 16;
};

// Writes <out>.png, <out>.json (colorbar/range sidecar) and <out>.csv, where
// <out> is `out_stem` minus a trailing .png/.json/.csv. Min-max normalised; a flat
// input renders in the lowest colour.
void render_heatmap(const AttentionDelta& delta, const std::filesystem::path& out_stem,
                    const HeatmapOptions& options = {});

// 2-D scatter of labelled points (N x 2 row-major coords) to PNG.
void render_scatter(std::span<const double> coords, std::span<const std::string> labels,
                    const std::filesystem::path& out_png, int size_px = 512);

}  // namespace wmvqa
