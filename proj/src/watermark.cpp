#include "wmvqa/watermark.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"
#include "wmvqa/raster.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

using nlohmann::json;

std::string_view to_string(PositionMode p) {
  switch (p) {
    case PositionMode::Center: return "center";
    case PositionMode::TopLeft: return "top-left";
    case PositionMode::Scattered: return "scattered";
  }
  return "?";
}

PositionMode parse_position(std::string_view s) {
  if (s == "center") return PositionMode::Center;
  if (s == "top-left" || s == "topleft") return PositionMode::TopLeft;
  if (s == "scattered") return PositionMode::Scattered;
  throw ValidationError("unknown position '" + std::string(s) + "'");
}

std::string_view to_string(ContentKind k) {
  switch (k) {
    case ContentKind::Text: return "text";
    case ContentKind::Symbol: return "symbol";
    case ContentKind::Mask: return "mask";
  }
  return "?";
}

std::vector<Vec2> default_scattered_anchors() {
  return {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}, {0.5, 0.5}};
}

namespace {

void validate_text(const std::string& s, bool allow_empty) {
  if (s.empty()) {
    if (allow_empty) return;
    throw ValidationError("watermark text must be nonempty");
  }
  bool any_ink = false;
  for (unsigned char c : s) {
    if (c < 0x20 || c > 0x7E) throw ValidationError("watermark text must be printable ASCII");
    any_ink |= c != ' ';
  }
  if (!any_ink) throw ValidationError("watermark text must contain a visible character");
}

std::string slug(std::string_view s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('x');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

// Text outline with its tight bounds, y up, font units.
struct TextShape {
  Path outline;
  Bounds bounds;
};

TextShape text_shape(const Font& font, const std::string& text) {
  TextShape t{font.layout(text), {}};
  t.bounds = t.outline.tight_bounds();
  if (t.bounds.empty() || t.bounds.width() <= 0 || t.bounds.height() <= 0)
    throw ValidationError("watermark text '" + text + "' has no visible outline");
  return t;
}

// Maps the text's tight bounds onto the box (y flipped), stretching if the
// box aspect differs from the text's.
Affine text_to_box(const Bounds& b, const PlacementBox& box) {
  const double sx = box.w / b.width(), sy = box.h / b.height();
  return Affine{sx, 0, box.x - sx * b.x_min, 0, -sy, box.y + sy * b.y_max};
}

struct Measured {
  double width = 0, height = 0;
  double area() const { return width * height; }
};

Measured measure_text(const TextShape& t, double scale) {
  const Affine m{scale, 0, -scale * t.bounds.x_min, 0, -scale, scale * t.bounds.y_max};
  const int cw = static_cast<int>(std::ceil(scale * t.bounds.width())) + 2;
  const int ch = static_cast<int>(std::ceil(scale * t.bounds.height())) + 2;
  const auto mask = rasterize(t.outline.transformed(m), cw, ch);
  const auto pb = mask.pixel_bounds(0.0);
  return {pb.width(), pb.height()};
}

}  // namespace

void WatermarkSpec::validate() const {
  validate_text(content.text, content.kind == ContentKind::Mask);
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw ValidationError("opacity must be in [0,1]");
  if (!(area_ratio >= 0.10 - 1e-12 && area_ratio <= 0.80 + 1e-12))
    throw ValidationError("area_ratio must be in [0.10, 0.80]");
  if (!(angle >= 0.0 && angle < 360.0)) throw ValidationError("angle must be in [0, 360)");
  if (scattered_anchors.size() != 5) throw ValidationError("scattered placement needs exactly 5 anchors");
  for (const auto& a : scattered_anchors)
    if (!(a.x >= 0 && a.x <= 1 && a.y >= 0 && a.y <= 1))
      throw ValidationError("scattered anchors are fractions of the image size in [0,1]");
}

std::string WatermarkSpec::condition_id() const {
  std::string content_part;
  switch (content.kind) {
    case ContentKind::Text: content_part = "text-" + slug(content.text); break;
    case ContentKind::Symbol: content_part = "symbol-" + slug(content.text); break;
    case ContentKind::Mask: content_part = content.text == "MARK" ? "mask" : "mask-" + slug(content.text); break;
  }
  char color_hex[8];
  std::snprintf(color_hex, sizeof color_hex, "%02x%02x%02x", color.r, color.g, color.b);
  std::string id = std::string(to_string(position)) + "_" + content_part + "_a" + format_fixed(opacity, 2) +
                   "_r" + format_fixed(area_ratio, 2) + "_c" + color_hex + "_d" + format_fixed(angle, 0);
  if (scattered_anchors != default_scattered_anchors()) {
    json j = json::array();
    for (const auto& a : scattered_anchors) j.push_back({a.x, a.y});
    id += "_k" + sha256_hex(j.dump()).substr(0, 8);
  }
  return id;
}

void to_json(json& j, const WatermarkSpec& s) {
  json anchors = json::array();
  for (const auto& a : s.scattered_anchors) anchors.push_back({a.x, a.y});
  j = json{{"content", {{"kind", std::string(to_string(s.content.kind))}, {"text", s.content.text}}},
           {"position", std::string(to_string(s.position))},
           {"color", {s.color.r, s.color.g, s.color.b}},
           {"opacity", s.opacity},
           {"angle", s.angle},
           {"area_ratio", s.area_ratio},
           {"scattered_anchors", anchors}};
}

void from_json(const json& j, WatermarkSpec& s) {
  s = WatermarkSpec{};
  try {
    if (j.contains("content")) {
      const auto& c = j.at("content");
      const auto kind = c.at("kind").get<std::string>();
      if (kind == "text") s.content = WatermarkContent::Text(c.value("text", std::string("MARK")));
      else if (kind == "symbol") s.content = WatermarkContent::Symbol(c.value("text", std::string("###")));
      else if (kind == "mask") s.content = WatermarkContent::Mask(c.value("text", std::string("MARK")));
      else throw ValidationError("unknown content kind '" + kind + "'");
    }
    if (j.contains("position")) s.position = parse_position(j.at("position").get<std::string>());
    if (j.contains("color")) {
      const auto& c = j.at("color");
      s.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()};
    }
    s.opacity = j.value("opacity", s.opacity);
    s.angle = j.value("angle", s.angle);
    s.area_ratio = j.value("area_ratio", s.area_ratio);
    if (j.contains("scattered_anchors")) {
      s.scattered_anchors.clear();
      for (const auto& a : j.at("scattered_anchors")) s.scattered_anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid watermark spec: ") + e.what());
  }
  s.validate();
}

GlyphFit solve_glyph_scale(const WatermarkContent& content, double target_area, const Font& font) {
  if (!(target_area > 0)) throw ValidationError("target area must be positive");
  if (content.kind == ContentKind::Mask && content.text.empty()) {
    // Free-standing 4:1 rectangle; "scale" is its height.
    const double h = std::sqrt(target_area / 4.0);
    return {h, 4.0 * h, h};
  }
  const TextShape shape = text_shape(font, content.text);
  const double min_scale = kMinGlyphHeightPx / shape.bounds.height();
  const Measured at_min = measure_text(shape, min_scale);
  if (target_area < at_min.area() / 1.02)
    throw ValidationError("target area " + format_fixed(target_area, 1) +
                          " px^2 is below the minimum legible glyph box (" + format_fixed(at_min.area(), 1) + " px^2)");
  if (target_area <= at_min.area()) return {min_scale, at_min.width, at_min.height};

  // Bracket on the octave grid min_scale * 2^k, so the bisection points do not
  // depend on the target and the solution is monotone in it.
  double lo = min_scale, hi = 2 * min_scale;
  Measured m_lo = at_min, m_hi = measure_text(shape, hi);
  while (m_hi.area() < target_area) {
    lo = hi;
    m_lo = m_hi;
    hi *= 2;
    m_hi = measure_text(shape, hi);
  }
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Measured m = measure_text(shape, mid);
    if (m.area() < target_area) {
      lo = mid;
      m_lo = m;
    } else {
      hi = mid;
      m_hi = m;
    }
    if (std::abs(m_hi.area() - target_area) <= 0.02 * target_area && hi - lo < 1e-3 * hi) break;
  }
  // Closer of the two sides of the step.
  if (target_area - m_lo.area() < m_hi.area() - target_area) return {lo, m_lo.width, m_lo.height};
  return {hi, m_hi.width, m_hi.height};
}

std::vector<PlacementBox> compute_placement(int width, int height, const WatermarkSpec& spec, const Font& font) {
  spec.validate();
  if (width < 16 || height < 16) throw ValidationError("image must be at least 16x16 to host a watermark");
  const double W = width, H = height;
  const int n_boxes = spec.position == PositionMode::Scattered ? 5 : 1;
  const double target = spec.area_ratio * W * H / n_boxes;
  const double margin = 0.02 * std::min(W, H);

  GlyphFit fit = solve_glyph_scale(spec.content, target, font);
  double w = fit.width, h = fit.height;

  double max_w = W, max_h = H;
  if (spec.position == PositionMode::TopLeft) {
    max_w = W - margin;
    max_h = H - margin;
  } else if (spec.position == PositionMode::Scattered) {
    max_w = W / 2;
    max_h = H / 2;
  }
  // Boxes that would not fit keep their area and give up aspect ratio.
  if (w > max_w) {
    w = max_w;
    h = fit.area() / w;
  }
  if (h > max_h) {
    h = max_h;
    w = fit.area() / h;
    if (w > max_w) throw ValidationError("image too small to host area ratio " + format_fixed(spec.area_ratio, 2));
  }
  if (spec.content.kind != ContentKind::Mask && h < kMinGlyphHeightPx)
    throw ValidationError("image too small to host area ratio at minimum glyph size");

  std::vector<PlacementBox> boxes;
  switch (spec.position) {
    case PositionMode::Center:
      boxes.push_back({W / 2 - w / 2, H / 2 - h / 2, w, h, spec.angle});
      break;
    case PositionMode::TopLeft:
      boxes.push_back({margin, margin, w, h, spec.angle});
      break;
    case PositionMode::Scattered:
      for (const auto& a : spec.scattered_anchors)
        boxes.push_back({a.x * W - w / 2, a.y * H - h / 2, w, h, spec.angle});
      break;
  }
  return boxes;
}

Path watermark_path(int width, int height, const WatermarkSpec& spec, const Font& font) {
  const auto boxes = compute_placement(width, height, spec, font);
  const bool is_mask = spec.content.kind == ContentKind::Mask;
  std::optional<TextShape> shape;
  if (!is_mask) shape = text_shape(font, spec.content.text);
  Path out;
  for (const auto& box : boxes) {
    const Affine rot = Affine::rotate_ccw_screen(box.angle, box.center());
    Path p = is_mask ? Path::rectangle(box.x, box.y, box.w, box.h)
                     : shape->outline.transformed(text_to_box(shape->bounds, box));
    out.append(box.angle == 0.0 ? p : p.transformed(rot));
  }
  return out;
}

DocumentImage composite(const DocumentImage& image, const WatermarkSpec& spec, const Font& font) {
  const Path path = watermark_path(image.width(), image.height(), spec, font);
  DocumentImage out = image;
  if (spec.opacity == 0.0) return out;
  const CoverageMask cov = rasterize(path, image.width(), image.height());
  const double col[3] = {static_cast<double>(spec.color.r), static_cast<double>(spec.color.g),
                         static_cast<double>(spec.color.b)};
  auto px = out.pixels();
  for (int y = cov.y0; y < cov.y0 + cov.height; ++y)
    for (int x = cov.x0; x < cov.x0 + cov.width; ++x) {
      const double c = cov.at(x, y);
      if (c <= 0.0) continue;
      const double a = spec.opacity * c;
      std::uint8_t* p = &px[(static_cast<std::size_t>(y) * image.width() + x) * 3];
      for (int ch = 0; ch < 3; ++ch) {
        const double v = a * col[ch] + (1.0 - a) * p[ch];
        p[ch] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  return out;
}

json condition_descriptor(const WatermarkSpec& spec, const Font& font) {
  return json{{"condition_id", spec.condition_id()},
              {"engine_version", std::string(kEngineVersion)},
              {"font_sha256", font.checksum()},
              {"spec", spec}};
}

std::string safe_file_stem(std::string_view id) {
  std::string out;
  bool changed = false;
  for (char c : id) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      out.push_back(c);
    } else {
      out.push_back('_');
      changed = true;
    }
  }
  if (out.empty() || out[0] == '.') changed = true, out.insert(out.begin(), '_');
  if (changed) out += "-" + sha256_hex(id).substr(0, 8);
  return out;
}

EvalDataset render_condition(const EvalDataset& dataset, const WatermarkSpec& spec,
                             const std::filesystem::path& out_dir, RenderOptions opts) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  EvalDataset out{dataset.name, out_dir, dataset.items};
  std::vector<std::string> failures(dataset.items.size());
  std::atomic<std::size_t> next{0};
  const Font& font = Font::bundled();

  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.items.size(); i = next++) {
      const auto& item = dataset.items[i];
      try {
        DocumentImage img = composite(load_image(dataset.image_file(item)), spec, font);
        if (opts.jpeg_quality > 0) img = jpeg_defense(img, opts.jpeg_quality);
        const std::string rel = "images/" + safe_file_stem(item.id) + ".png";
        write_png(img, out_dir / rel);
        out.items[i].image_path = rel;
      } catch (const std::exception& e) {
        failures[i] = item.id + ": " + e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(dataset.items.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }

  std::string report;
  std::size_t n_failed = 0;
  for (const auto& f : failures)
    if (!f.empty()) {
      report += "\n  " + f;
      ++n_failed;
    }
  if (n_failed) throw IoError("render failed for " + std::to_string(n_failed) + " item(s):" + report);

  write_manifest(out, out_dir / "manifest.jsonl");
  json desc = condition_descriptor(spec, font);
  if (opts.jpeg_quality > 0) desc["jpeg_quality"] = opts.jpeg_quality;
  write_file_atomic(out_dir / "condition.json", desc.dump(2) + "\n");
  return out;
}

DocumentImage jpeg_defense(const DocumentImage& image, int quality) {
  return decode_jpeg(encode_jpeg(image, quality));
}

}  // namespace wmvqa
