#include <gtest/gtest.h>

#include "test_support.hpp"
#include "wmvqa/config.hpp"
#include "wmvqa/errors.hpp"

using namespace wmvqa;
using wmvqa::testing::TempDir;

namespace {

const char* kToml = R"(
seed = 7
output = "runs/x"
sample_size = 3
max_in_flight = 2

[datasets]
texts = "data/texts/manifest.jsonl"

[grid]
positions = ["center", "scattered"]
contents = ["MARK", "symbol:###", "mask"]
opacity = [0.5, 0.8]
color = ["black", "#ff8000"]

[[model]]
name = "remote"
kind = "http"
base_url = "http://127.0.0.1:8000/v1"
model = "vlm-7b"
api_key_env = "VLM_API_KEY"
max_retries = 5

[[model]]
name = "probe"
behavior = "flip-if-darkened"
regions = [[0.1, 0.1, 0.2, 0.2]]
threshold = 4.5
)";

}  // namespace

TEST(Presets, SweepOneProperty) {
  EXPECT_EQ(preset_names().size(), 7u);
  auto values = [](const ExperimentConfig& c, auto field) {
    std::vector<double> out;
    for (const auto& s : c.grid.expand()) out.push_back(s.*field);
    return out;
  };
  EXPECT_EQ(values(preset("opacity"), &WatermarkSpec::opacity), (std::vector<double>{0.2, 0.5, 0.8}));
  EXPECT_EQ(values(preset("rotation"), &WatermarkSpec::angle), (std::vector<double>{0, 45, 90}));
  EXPECT_EQ(values(preset("area-ratio"), &WatermarkSpec::area_ratio).size(), 8u);

  const auto pos = preset("positions").grid.expand();
  ASSERT_EQ(pos.size(), 3u);
  EXPECT_EQ(pos[0].position, PositionMode::Center);
  EXPECT_EQ(pos[1].position, PositionMode::TopLeft);
  EXPECT_EQ(pos[2].position, PositionMode::Scattered);

  const auto contents = preset("contents").grid.expand();
  ASSERT_EQ(contents.size(), 3u);
  EXPECT_EQ(contents[2].content.kind, ContentKind::Mask);

  EXPECT_EQ(preset("colors").grid.expand().size(), 9u);
  EXPECT_EQ(preset("jpeg-defense").jpeg_quality, 30);
  EXPECT_EQ(preset("positions").jpeg_quality, 0);
  for (const auto& n : preset_names())
    for (const auto& s : preset(n).grid.expand()) EXPECT_NO_THROW(s.validate()) << n;
}

TEST(Presets, UnknownNameListsKnownOnes) {
  try {
    preset("bogus");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("jpeg-defense"), std::string::npos);
  }
}

TEST(ConfigParse, ReadsEverySection) {
  const auto c = parse_config(kToml, "/base");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.output, "/base/runs/x");
  EXPECT_EQ(c.sample_size, 3u);
  EXPECT_EQ(c.max_in_flight, 2);
  EXPECT_EQ(c.datasets.at("texts"), "/base/data/texts/manifest.jsonl");
  EXPECT_EQ(c.grid.expand().size(), 2u * 3 * 2 * 2);
  EXPECT_EQ(c.grid.colors[1], (Rgb{255, 128, 0}));
  ASSERT_EQ(c.models.size(), 2u);
  EXPECT_EQ(c.models[0].kind, ModelConfig::Kind::Http);
  EXPECT_EQ(c.models[0].endpoint.model_name, "vlm-7b");
  EXPECT_EQ(c.models[0].endpoint.api_key_env, "VLM_API_KEY");
  EXPECT_EQ(c.models[0].endpoint.max_retries, 5);
  EXPECT_EQ(c.models[1].kind, ModelConfig::Kind::Mock);
  const auto& f = std::get<FlipIfDarkened>(c.models[1].behavior);
  EXPECT_EQ(f.threshold, 4.5);
  ASSERT_EQ(f.regions.size(), 1u);
  EXPECT_EQ(f.regions[0].w, 0.2);
}

TEST(ConfigParse, PresetThenOverride) {
  const auto c = parse_config("preset = \"positions\"\n[grid]\nopacity = [0.3]\n");
  const auto specs = c.grid.expand();
  ASSERT_EQ(specs.size(), 3u);
  for (const auto& s : specs) EXPECT_EQ(s.opacity, 0.3);
  EXPECT_EQ(c.preset, "positions");
}

TEST(ConfigParse, RejectsUnknownAndSecretKeys) {
  EXPECT_THROW(parse_config("sed = 7\n"), ValidationError);
  EXPECT_THROW(parse_config("[grid]\nposition = [\"center\"]\n"), ValidationError);
  EXPECT_THROW(parse_config("[[model]]\nname = \"m\"\nkind = \"http\"\napi_key = \"sk-1\"\n"), ValidationError);
  try {
    parse_config("token = \"abc\"\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("api_key_env"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("abc"), std::string::npos);
  }
}

TEST(ConfigParse, RejectsMalformedValues) {
  EXPECT_THROW(parse_config("seed = \"seven\"\n"), ValidationError);
  EXPECT_THROW(parse_config("[grid]\nopacity = []\n"), ValidationError);
  EXPECT_THROW(parse_config("[grid]\npositions = [\"middle\"]\n"), ValidationError);
  EXPECT_THROW(parse_config("[[model]]\nname = \"m\"\nbehavior = \"flip-if-darkened\"\n"), ValidationError);
  EXPECT_THROW(parse_config("[[model]]\nname = \"m\"\nkind = \"grpc\"\n"), ValidationError);
  try {
    parse_config("seed = 1\nthis is not toml\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ConfigValidate, ChecksDatasetsModelsAndGrid) {
  TempDir tmp("cfg");
  write_file_atomic(tmp / "m.jsonl", "");
  ExperimentConfig c = preset("positions");
  EXPECT_THROW(c.validate(), ValidationError);  // no datasets
  c.datasets["d"] = tmp / "m.jsonl";
  EXPECT_THROW(c.validate(), ValidationError);  // no models
  ModelConfig m;
  m.name = "mock";
  c.models = {m, m};
  EXPECT_THROW(c.validate(), ValidationError);  // duplicate
  c.models.pop_back();
  EXPECT_NO_THROW(c.validate());
  c.grid.opacities = {1.5};
  EXPECT_THROW(c.validate(), ValidationError);
  c.grid.opacities = {0.5};
  c.jpeg_quality = 101;
  EXPECT_THROW(c.validate(), ValidationError);
  c.jpeg_quality = 0;
  c.datasets["d"] = tmp / "absent.jsonl";
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ConfigToml, RoundTrips) {
  const auto c = parse_config(kToml, "/base");
  const auto again = parse_config(config_to_toml(c), "/elsewhere");
  EXPECT_EQ(again.seed, c.seed);
  EXPECT_EQ(again.output, c.output);
  EXPECT_EQ(again.datasets, c.datasets);
  EXPECT_EQ(again.grid.expand(), c.grid.expand());
  EXPECT_EQ(again.sample_size, c.sample_size);
  ASSERT_EQ(again.models.size(), 2u);
  EXPECT_EQ(again.models[0].endpoint.base_url, c.models[0].endpoint.base_url);
  EXPECT_EQ(again.models[0].endpoint.api_key_env, "VLM_API_KEY");
  EXPECT_EQ(std::get<FlipIfDarkened>(again.models[1].behavior).regions.size(), 1u);
  EXPECT_EQ(config_to_toml(again), config_to_toml(c));
}

TEST(ConfigLoad, MissingFileIsValidationError) {
  EXPECT_THROW(load_config("/nonexistent/config.toml"), ValidationError);
}

TEST(ValueParsing, Contents) {
  EXPECT_EQ(parse_content("MARK"), WatermarkContent::Text("MARK"));
  EXPECT_EQ(parse_content("###"), WatermarkContent::Symbol("###"));
  EXPECT_EQ(parse_content("symbol:@"), WatermarkContent::Symbol("@"));
  EXPECT_EQ(parse_content("text:a b"), WatermarkContent::Text("a b"));
  EXPECT_EQ(parse_content("mask"), WatermarkContent::Mask());
  EXPECT_EQ(parse_content("mask:"), WatermarkContent::Mask(""));
  EXPECT_THROW(parse_content("glyph:x"), ValidationError);
  for (const auto& c : {WatermarkContent::Text(), WatermarkContent::Symbol(), WatermarkContent::Mask("AB")})
    EXPECT_EQ(parse_content(content_to_string(c)), c);
}

TEST(ValueParsing, Colors) {
  EXPECT_EQ(parse_color("red"), (Rgb{255, 0, 0}));
  EXPECT_EQ(parse_color("#0a0B0c"), (Rgb{10, 11, 12}));
  EXPECT_EQ(color_to_string({10, 11, 12}), "#0a0b0c");
  EXPECT_THROW(parse_color("#12345"), ValidationError);
  EXPECT_THROW(parse_color("mauve"), ValidationError);
}
