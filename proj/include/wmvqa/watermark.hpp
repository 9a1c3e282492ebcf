#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wmvqa/corpus.hpp"
#include "wmvqa/font.hpp"
#include "wmvqa/geometry.hpp"
#include "wmvqa/image.hpp"

namespace wmvqa {

inline constexpr std::string_view kEngineVersion = "wmvqa-engine/1";

// Smallest text height (pixels) considered legible. Placements that would
// shrink a Text/Symbol watermark below it are rejected.
inline constexpr double kMinGlyphHeightPx = 8.0;

enum class ContentKind { Text, Symbol, Mask };

struct WatermarkContent {
  ContentKind kind = ContentKind::Text;
  // Text/Symbol: the string rendered. Mask: the text whose box the mask
  // occupies (empty means a free-standing 4:1 rectangle).
  std::string text = "MARK";

  static WatermarkContent Text(std::string s = "MARK") { return {ContentKind::Text, std::move(s)}; }
  static WatermarkContent Symbol(std::string s = "###") { return {ContentKind::Symbol, std::move(s)}; }
  static WatermarkContent Mask(std::string anchor = "MARK") { return {ContentKind::Mask, std::move(anchor)}; }

  // Table label: the string itself for Text/Symbol, "MASK" for masks.
  std::string label() const { return kind == ContentKind::Mask ? "MASK" : text; }
  friend bool operator==(const WatermarkContent&, const WatermarkContent&) = default;
};

enum class PositionMode { Center, TopLeft, Scattered };

std::string_view to_string(PositionMode p);
PositionMode parse_position(std::string_view s);  // "center" | "top-left" | "scattered"
std::string_view to_string(ContentKind k);

// Quadrant centers plus the image center, as fractions of (width, height).
std::vector<Vec2> default_scattered_anchors();

struct WatermarkSpec {
  WatermarkContent content;
  PositionMode position = PositionMode::Center;
  Rgb color{0, 0, 0};
  double opacity = 0.5;     // alpha
  double angle = 0.0;       // degrees, counterclockwise, about each box center
  double area_ratio = 0.1;  // total watermark box area / image area
  std::vector<Vec2> scattered_anchors = default_scattered_anchors();

  // Throws ValidationError when a parameter is outside its domain.
  void validate() const;
  // Stable, filename-safe identifier, e.g. "center_text-MARK_a0.50_r0.10_c000000_d0".
  std::string condition_id() const;

  friend bool operator==(const WatermarkSpec&, const WatermarkSpec&) = default;
};

void to_json(nlohmann::json& j, const WatermarkSpec& s);
void from_json(const nlohmann::json& j, WatermarkSpec& s);

struct PlacementBox {
  double x = 0, y = 0, w = 0, h = 0;  // top-left corner and size, pixels
  double angle = 0;                   // degrees about the box center

  Vec2 center() const { return {x + w / 2, y + h / 2}; }
  double area() const { return w * h; }
};

struct GlyphFit {
  double scale = 0;           // pixels per font unit (Mask: pixels per unit height)
  double width = 0;           // rendered bounding box, pixels
  double height = 0;
  double area() const { return width * height; }
};

// Scale at which `content` renders with a bounding box of ~target_area px².
// Text/Symbol: bisection on the measured raster bounding box (<= 40 steps,
// 2% relative tolerance). Mask: closed form. Throws ValidationError when the
// target is below the minimum legible glyph size.
GlyphFit solve_glyph_scale(const WatermarkContent& content, double target_area,
                           const Font& font = Font::bundled());

std::vector<PlacementBox> compute_placement(int width, int height, const WatermarkSpec& spec,
                                            const Font& font = Font::bundled());

// Outline of all watermark content for `spec` on a width x height image,
// pixel coordinates. Rotation is applied to the content about each box center.
Path watermark_path(int width, int height, const WatermarkSpec& spec, const Font& font = Font::bundled());

// out = round_half_up(a*c*color + (1 - a*c)*in) per channel, c = coverage.
DocumentImage composite(const DocumentImage& image, const WatermarkSpec& spec,
                        const Font& font = Font::bundled());

// JSON for condition.json: the spec plus engine version and font checksum.
nlohmann::json condition_descriptor(const WatermarkSpec& spec, const Font& font = Font::bundled());

struct RenderOptions {
  unsigned workers = 4;
  // JPEG-compress each composited image before writing (defense stage).
  int jpeg_quality = 0;  // 0 = off
};

// Composites every item of `dataset` into out_dir/images/, writes
// out_dir/manifest.jsonl and out_dir/condition.json and returns the new
// dataset (rooted at out_dir). Per-item failures are collected and thrown
// together as one IoError naming the item ids.
EvalDataset render_condition(const EvalDataset& dataset, const WatermarkSpec& spec,
                             const std::filesystem::path& out_dir, RenderOptions opts = {});

// Re-encode as JPEG at `quality` (1..100) and decode again.
DocumentImage jpeg_defense(const DocumentImage& image, int quality);

// Filename-safe rendering of an arbitrary id.
std::string safe_file_stem(std::string_view id);

}  // namespace wmvqa
