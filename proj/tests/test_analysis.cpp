#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wmvqa/analysis.hpp"
#include "wmvqa/errors.hpp"
#include "wmvqa/harness.hpp"
#include "wmvqa/tensor_dump.hpp"
#include "wmvqa/tsne.hpp"

using namespace wmvqa;
using nlohmann::json;
using wmvqa::testing::fixture_dir;
using wmvqa::testing::TempDir;

namespace {

const std::string kCenter = "center_text-MARK_a0.50_r0.10_c000000_d0";
const std::string kScattered = "scattered_text-MARK_a0.50_r0.10_c000000_d0";

TensorDump attention(std::size_t heads, std::size_t seq, std::vector<float> data, std::string cond = "clean") {
  TensorDump d;
  d.name = "attn";
  d.shape = {heads, seq, seq};
  d.data = std::move(data);
  d.meta.model_name = "m";
  d.meta.item_id = "doc";
  d.meta.condition_id = std::move(cond);
  d.meta.layer_index = 2;
  d.meta.kind = DumpKind::Attention;
  return d;
}

// Row-stochastic attention from random logits.
TensorDump random_attention(std::mt19937_64& rng, std::size_t heads, std::size_t seq) {
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<float> data(heads * seq * seq);
  for (std::size_t r = 0; r < heads * seq; ++r) {
    std::vector<double> logits(seq);
    double mx = -1e300, sum = 0;
    for (auto& l : logits) mx = std::max(mx, l = n(rng));
    for (auto& l : logits) sum += (l = std::exp(l - mx));
    for (std::size_t c = 0; c < seq; ++c) data[r * seq + c] = static_cast<float>(logits[c] / sum);
  }
  return attention(heads, seq, std::move(data));
}

json expected() { return json::parse(read_file_text(fixture_dir() / "expected.json")); }

}  // namespace

TEST(Tdump, RoundTrip) {
  TempDir tmp("tdump");
  auto d = attention(2, 3, {0.1f, 0.2f, 0.7f, 1, 0, 0, 0.5f, 0.5f, 0, 0, 0, 1, 0.25f, 0.25f, 0.5f, -0.0f, 3e-8f, 1});
  d.meta.patch_grid = std::array<int, 2>{1, 2};
  d.meta.patch_offset = 1;
  const auto path = tmp / tdump_filename(d.meta);
  write_tdump(d, path);
  EXPECT_EQ(path.filename(), "doc__clean__attention__L2.tdump");
  EXPECT_EQ(read_tdump(path), d);
  const auto bytes = encode_tdump(d);
  EXPECT_EQ(bytes.size(), kTdumpHeaderBytes + 4 * d.data.size());
  EXPECT_EQ(bytes[kTdumpHeaderBytes - 1], '\n');
}

TEST(Tdump, HeaderLimitAndCorruption) {
  auto d = attention(1, 2, {1, 0, 0, 1});
  d.meta.model_name = std::string(300, 'm');
  EXPECT_THROW(encode_tdump(d), AnalysisInputError);
  d.meta.model_name = "m";
  auto bytes = encode_tdump(d);
  bytes.pop_back();
  EXPECT_THROW(decode_tdump(bytes), AnalysisInputError);
  EXPECT_THROW(decode_tdump(std::vector<std::uint8_t>(10, ' ')), AnalysisInputError);
  auto wrong = attention(1, 2, {1, 0, 0});
  EXPECT_THROW(wrong.validate(), AnalysisInputError);
}

TEST(Tdump, FilenameParsing) {
  const auto n = parse_tdump_filename("doc01__" + kCenter + "__embedding__L11.tdump");
  ASSERT_TRUE(n.has_value());
  EXPECT_EQ(n->item_id, "doc01");
  EXPECT_EQ(n->condition_id, kCenter);
  EXPECT_EQ(n->kind, DumpKind::Embedding);
  EXPECT_EQ(n->layer, 11);
  EXPECT_FALSE(parse_tdump_filename("doc01__clean__attention__L11.bin"));
  EXPECT_FALSE(parse_tdump_filename("doc01__clean__logits__L1.tdump"));
}

TEST(AttentionDelta, SwappedRowsGiveOnes) {
  const auto clean = attention(1, 2, {1, 0, 0, 1});
  const auto marked = attention(1, 2, {0, 1, 1, 0}, "x");
  const auto d = attention_delta(clean, marked);
  EXPECT_EQ(d.rows, 1);
  EXPECT_EQ(d.cols, 2);
  EXPECT_EQ(d.values, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(d.layer, 2);
}

TEST(AttentionDelta, IdenticalInputsGiveZeroAndSwapIsSymmetric) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_attention(rng, 2, 6);
    const auto d = attention_delta(a, a);
    ASSERT_TRUE(std::all_of(d.values.begin(), d.values.end(), [](double v) { return v == 0.0; }));
  }
  const auto a = random_attention(rng, 3, 5), b = random_attention(rng, 3, 5);
  for (auto h : {HeadAggregation::Mean, HeadAggregation::Max})
    EXPECT_EQ(attention_delta(a, b, h).values, attention_delta(b, a, h).values);
}

TEST(AttentionDelta, MaxDominatesMean) {
  std::mt19937_64 rng(5);
  const auto a = random_attention(rng, 4, 7), b = random_attention(rng, 4, 7);
  const auto mean = attention_delta(a, b, HeadAggregation::Mean);
  const auto mx = attention_delta(a, b, HeadAggregation::Max);
  for (std::size_t i = 0; i < mean.values.size(); ++i) EXPECT_GE(mx.values[i], mean.values[i]);
}

TEST(AttentionDelta, MismatchesAreRejected) {
  const auto a = attention(1, 2, {1, 0, 0, 1});
  auto other_layer = a;
  other_layer.meta.layer_index = 3;
  EXPECT_THROW(attention_delta(a, other_layer), AnalysisInputError);
  EXPECT_THROW(attention_delta(a, attention(1, 3, std::vector<float>(9, 0.f))), AnalysisInputError);
  auto emb = a;
  emb.meta.kind = DumpKind::Embedding;
  emb.shape = {2, 2};
  EXPECT_THROW(attention_delta(a, emb), AnalysisInputError);

  const auto clean = read_tdump(fixture_dir() / "bad/doc01__clean__attention__L11.tdump");
  const auto marked = read_tdump(fixture_dir() / ("bad/doc01__" + kCenter + "__attention__L11.tdump"));
  EXPECT_THROW(attention_delta(clean, marked), AnalysisInputError);
}

TEST(AttentionDelta, FixtureValuesMatchOracle) {
  const auto ex = expected();
  const auto clean = read_tdump(fixture_dir() / "dumps/doc01__clean__attention__L11.tdump");
  std::vector<double> pooled;
  std::map<std::string, AttentionDelta> deltas;
  for (const auto& cond : {kCenter, kScattered}) {
    deltas[cond] = attention_delta(clean, read_tdump(fixture_dir() / ("dumps/doc01__" + cond + "__attention__L11.tdump")));
    EXPECT_EQ(deltas[cond].rows, 8);
    EXPECT_EQ(deltas[cond].cols, 8);
    pooled.insert(pooled.end(), deltas[cond].values.begin(), deltas[cond].values.end());
  }
  const double thr = percentile(pooled, 90);
  EXPECT_NEAR(thr, ex.at("attention_p90").get<double>(), 1e-9);
  for (const auto& cond : {kCenter, kScattered}) {
    SCOPED_TRACE(cond);
    const auto& v = deltas[cond].values;
    const auto& e = ex.at("attention").at(cond);
    const auto mx = std::max_element(v.begin(), v.end());
    EXPECT_EQ(mx - v.begin(), e.at("argmax").get<long>());
    EXPECT_NEAR(*mx, e.at("max").get<double>(), 1e-9);
    double sum = 0;
    for (double x : v) sum += x;
    EXPECT_NEAR(sum / v.size(), e.at("mean").get<double>(), 1e-9);
    EXPECT_EQ(count_above(v, thr), e.at("above_p90").get<std::size_t>());
  }
  // Spread-out marks move attention over more patches than a single central one.
  EXPECT_GT(count_above(deltas[kScattered].values, thr), count_above(deltas[kCenter].values, thr));
}

TEST(Stats, PercentileInterpolates) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(percentile(v, 0), 1);
  EXPECT_DOUBLE_EQ(percentile(v, 100), 4);
  EXPECT_DOUBLE_EQ(percentile(v, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile(v, 90), 3.7);
  EXPECT_EQ(count_above(v, 2.5), 2u);
  EXPECT_THROW(percentile(std::vector<double>{}, 50), AnalysisInputError);
}

TEST(Cosine, Properties) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(32), b(32);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    const double base = cosine_similarity(a, b);
    for (double k : {1e-6, 3.0, 1e6}) {
      std::vector<double> kb = b;
      for (auto& x : kb) x *= k;
      EXPECT_NEAR(cosine_similarity(a, kb), base, 1e-12);
    }
    EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(b, a), 1e-15);
  }
  const std::vector<double> x{1, 2}, zero{0, 0}, three{1, 2, 3};
  EXPECT_THROW(cosine_similarity(x, zero), AnalysisInputError);
  EXPECT_THROW(cosine_similarity(x, three), AnalysisInputError);
  EXPECT_NEAR(cosine_similarity(x, std::vector<double>{-2, 1}), 0.0, 1e-15);
}

TEST(Cosine, FixtureEmbeddingsMatchOracle) {
  const auto ex = expected().at("cosine");
  for (const auto& [key, value] : ex.items()) {
    const auto slash = key.find('/');
    const std::string item = key.substr(0, slash), cond = key.substr(slash + 1);
    const auto clean = embedding_summary(read_tdump(fixture_dir() / ("dumps/" + item + "__clean__embedding__L11.tdump")));
    const auto marked =
        embedding_summary(read_tdump(fixture_dir() / ("dumps/" + item + "__" + cond + "__embedding__L11.tdump")));
    EXPECT_NEAR(cosine_similarity(clean, marked), value.get<double>(), 1e-9) << key;
  }
}

TEST(Heatmap, ColormapEndpoints) {
  EXPECT_EQ(colormap(0.0), colormap(-1.0));
  EXPECT_EQ(colormap(1.0), colormap(2.0));
  EXPECT_NE(colormap(0.0), colormap(1.0));
  // Brightness rises along the map.
  auto luma = [](Rgb c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; };
  for (double t = 0.0; t < 1.0; t += 0.05) EXPECT_LT(luma(colormap(t)), luma(colormap(t + 0.05)));
}

TEST(Heatmap, UniformHotCellAndSidecar) {
  TempDir tmp("heatmap");
  AttentionDelta flat{std::vector<double>(12, 0.3), 3, 4, 11, HeadAggregation::Mean};
  render_heatmap(flat, tmp / "flat", {4});
  const auto img = load_image(tmp / "flat.png");
  EXPECT_EQ(img.width(), 16);
  EXPECT_EQ(img.height(), 12);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) ASSERT_EQ(img.at(x, y), colormap(0.0));

  AttentionDelta hot{std::vector<double>(12, 0.0), 3, 4, 11, HeadAggregation::Max};
  hot.values[1 * 4 + 2] = 0.5;
  render_heatmap(hot, tmp / "hot.png", {4});
  const auto h = load_image(tmp / "hot.png");
  EXPECT_EQ(h.at(2 * 4 + 1, 1 * 4 + 1), colormap(1.0));
  EXPECT_EQ(h.at(0, 0), colormap(0.0));
  const auto side = json::parse(read_file_text(tmp / "hot.json"));
  EXPECT_EQ(side.at("min"), 0.0);
  EXPECT_EQ(side.at("max"), 0.5);
  EXPECT_EQ(side.at("rows"), 3);
  EXPECT_EQ(side.at("cols"), 4);
  EXPECT_EQ(side.at("layer"), 11);
  EXPECT_EQ(side.at("head_aggregation"), "max");
  EXPECT_TRUE(std::filesystem::exists(tmp / "hot.csv"));
}

TEST(Heatmap, GoldenChecksum) {
  TempDir tmp("heatmap-golden");
  const auto clean = read_tdump(fixture_dir() / "dumps/doc01__clean__attention__L11.tdump");
  const auto d = attention_delta(clean, read_tdump(fixture_dir() / ("dumps/doc01__" + kCenter + "__attention__L11.tdump")));
  render_heatmap(d, tmp / "g");
  // Recorded from the first render.
  EXPECT_EQ(sha256_hex(load_image(tmp / "g.png").pixels()), "d945771b1a5f77baded3a2a52cb6a24f59c5d2a0bb3de27fa0c19148861790ec");
}

namespace {

std::vector<double> two_clusters(std::uint64_t seed, int per_cluster, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> pts;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_cluster; ++i)
      for (std::size_t k = 0; k < dim; ++k) pts.push_back(n(rng) + (c == 1 && k < 4 ? 8.0 : 0.0));
  return pts;
}

}  // namespace

TEST(Tsne, SeparatesTwoClusters) {
  const auto pts = two_clusters(3, 30, 16);
  const auto r = tsne(pts, 16, {.seed = 42});
  ASSERT_EQ(r.coords.size(), 120u);
  const auto nn = nearest_neighbours(r.coords, 2);
  int same = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) same += (i < 30) == (nn[i] < 30);
  EXPECT_GE(same, 57);  // >= 95% of 60
  EXPECT_LE(r.kl_final, r.kl_after_exaggeration);
  EXPECT_GE(r.kl_final, 0.0);
  for (double p : r.perplexities) EXPECT_NEAR(p, 5.0, 1e-3);
}

TEST(Tsne, DeterministicUnderSeed) {
  const auto pts = two_clusters(9, 10, 8);
  TsneOptions o;
  o.iterations = 300;
  o.seed = 5;
  const auto a = tsne(pts, 8, o), b = tsne(pts, 8, o);
  EXPECT_EQ(a.coords, b.coords);
  o.seed = 6;
  EXPECT_NE(tsne(pts, 8, o).coords, a.coords);
}

TEST(Tsne, ToleratesDuplicatePoints) {
  auto pts = two_clusters(4, 6, 3);
  std::copy(pts.begin(), pts.begin() + 3, pts.begin() + 3);  // row 1 = row 0
  TsneOptions o;
  o.perplexity = 2;
  o.iterations = 250;
  const auto r = tsne(pts, 3, o);
  for (double v : r.coords) EXPECT_TRUE(std::isfinite(v));
}

TEST(Tsne, RejectsBadInput) {
  EXPECT_THROW(tsne(std::vector<double>(6, 1.0), 2), AnalysisInputError);  // N = 3
  EXPECT_THROW(tsne(std::vector<double>(20, 1.0), 2), AnalysisInputError);  // identical
  auto pts = two_clusters(1, 5, 2);
  EXPECT_THROW(tsne(pts, 2, {.perplexity = 3.0}), AnalysisInputError);      // (10-1)/3
  pts[3] = std::nan("");
  EXPECT_THROW(tsne(pts, 2, {.perplexity = 2.0}), AnalysisInputError);
  EXPECT_THROW(tsne(pts, 3), AnalysisInputError);                           // ragged
}

TEST(Tsne, NearestNeighbours) {
  const std::vector<double> pts{0, 0, 5, 5, 1, 0, 5, 6};
  EXPECT_EQ(nearest_neighbours(pts, 2), (std::vector<std::size_t>{2, 3, 0, 1}));
}

TEST(AnalyzeDumps, EndToEndOnFixtures) {
  TempDir tmp("analyze");
  AnalyzeOptions o;
  o.dumps_dir = fixture_dir() / "dumps";
  o.out_dir = tmp.path();
  o.tsne.iterations = 400;
  const auto r = analyze_dumps(o);
  const auto ex = expected();
  EXPECT_EQ(r.layer, 11);
  ASSERT_EQ(r.attention.size(), 2u);
  for (const auto& row : r.attention) {
    const auto& e = ex.at("attention").at(row.condition_id);
    EXPECT_EQ(row.above, e.at("above_p90").get<std::size_t>());
    EXPECT_NEAR(row.max, e.at("max").get<double>(), 1e-9);
    EXPECT_NEAR(row.threshold, ex.at("attention_p90").get<double>(), 1e-9);
  }
  ASSERT_EQ(r.similarity.size(), 15u);
  for (const auto& s : r.similarity)
    EXPECT_NEAR(s.cosine, ex.at("cosine").at(s.item_id + "/" + s.condition_id).get<double>(), 1e-9);
  ASSERT_TRUE(r.tsne.has_value());
  EXPECT_EQ(r.tsne->coords.size(), 40u);
  for (const char* f : {"attention_summary.csv", "similarity.csv", "tsne.csv", "tsne.png", "analysis.json"})
    EXPECT_TRUE(std::filesystem::exists(tmp / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(tmp / ("heatmaps/doc01__" + kCenter + ".png")));
}

TEST(AnalyzeDumps, ShallowLayerOnRequest) {
  TempDir tmp("analyze-l3");
  AnalyzeOptions o;
  o.dumps_dir = fixture_dir() / "dumps";
  o.out_dir = tmp.path();
  o.layer = 3;
  const auto r = analyze_dumps(o);
  EXPECT_EQ(r.layer, 3);
  EXPECT_TRUE(r.attention.empty());  // only the clean dump exists at L3
  EXPECT_FALSE(r.tsne.has_value());
}

TEST(AnalyzeDumps, MismatchedFixturesFail) {
  TempDir tmp("analyze-bad");
  AnalyzeOptions o;
  o.dumps_dir = fixture_dir() / "bad";
  o.out_dir = tmp.path();
  EXPECT_THROW(analyze_dumps(o), AnalysisInputError);
  o.dumps_dir = tmp / "nothing-here";
  EXPECT_THROW(analyze_dumps(o), AnalysisInputError);
}
