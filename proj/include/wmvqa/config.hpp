#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wmvqa/model_client.hpp"
#include "wmvqa/watermark.hpp"

namespace wmvqa {

struct ModelConfig {
  std::string name;
  enum class Kind { Http, Mock } kind = Kind::Mock;
  ModelEndpoint endpoint;  // Http only; endpoint.model_name defaults to `name`
  MockBehavior behavior = AlwaysCorrect{};
};

// Cartesian product of per-property value lists.
struct ConditionGrid {
  std::vector<PositionMode> positions{PositionMode::Center};
  std::vector<WatermarkContent> contents{WatermarkContent::Text()};
  std::vector<double> opacities{0.5};
  std::vector<double> area_ratios{0.1};
  std::vector<double> angles{0.0};
  std::vector<Rgb> colors{Rgb{0, 0, 0}};
  std::vector<Vec2> scattered_anchors = default_scattered_anchors();

  // Order: position, content, opacity, area, angle, color (outermost first);
  // duplicates dropped.
  std::vector<WatermarkSpec> expand() const;
};

struct ExperimentConfig {
  std::map<std::string, std::filesystem::path> datasets;  // name -> manifest
  std::vector<ModelConfig> models;
  std::string preset;  // informational once applied
  ConditionGrid grid;
  int jpeg_quality = 0;  // 0: no JPEG defense
  std::filesystem::path output = "runs/default";
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;  // per dataset; 0 keeps every item
  int max_in_flight = 4;
  unsigned render_workers = 4;

  // Grid nonempty, manifests exist, model names unique, endpoints valid.
  // Throws ValidationError.
  void validate() const;
};

// TOML subset understood by parse_config:
//
//   seed = 7
//   output = "runs/positions"
//   preset = "positions"          # optional, fills [grid] and jpeg_quality
//   jpeg_quality = 0
//   sample_size = 0
//   max_in_flight = 4
//   render_workers = 4
//   [datasets]
//   texts = "data/texts/manifest.jsonl"
//   [grid]
//   positions = ["center", "top-left", "scattered"]
//   contents = ["MARK", "symbol:###", "mask"]
//   opacity = [0.5]
//   area_ratio = [0.1]
//   angle = [0]
//   color = ["black", "#ff0000"]
//   scattered_anchors = [[0.25, 0.25], ...]
//   [[model]]
//   name = "docowl2"
//   kind = "http"                 # or "mock"
//   base_url = "http://127.0.0.1:8000/v1"
//   api_key_env = "VLM_API_KEY"   # the key itself never appears in a config
//   behavior = "flip-if-darkened" # mock: always-correct | always-wrong | flip-if-darkened
//   regions = [[x, y, w, h], ...] # image fractions
//   threshold = 10.0
//
// Relative paths resolve against `base_dir`. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);
// Round-trips through parse_config (paths written absolute).
std::string config_to_toml(const ExperimentConfig& config);

// Grid (and jpeg_quality) of a named experiment: positions, contents,
// opacity, rotation, colors, area-ratio, jpeg-defense.
ExperimentConfig preset(std::string_view name);
std::vector<std::string> preset_names();
void apply_preset(ExperimentConfig& config, std::string_view name);

WatermarkContent parse_content(std::string_view s);  // "MARK", "text:..", "symbol:..", "mask", "mask:<anchor>"
std::string content_to_string(const WatermarkContent& c);
Rgb parse_color(std::string_view s);  // names or #rrggbb
std::string color_to_string(Rgb c);

}  // namespace wmvqa
