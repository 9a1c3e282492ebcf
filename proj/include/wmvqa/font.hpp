#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmvqa/geometry.hpp"

namespace wmvqa {

// SHA-256 of data/fonts/DejaVuSans.ttf, the font compiled into the library.
inline constexpr std::string_view kBundledFontSha256 =
    "690243adfefe0ce154b547db6205794bd30ac4277275179517a90994f4980648";

// Minimal TrueType reader: cmap (formats 4 and 12), hmtx and glyf outlines,
// including composite glyphs. No hinting, no kerning.
class Font {
 public:
  // Parses a TrueType file held in `data`. The bytes must outlive the Font.
  explicit Font(std::span<const std::uint8_t> data);

  // DejaVu Sans, embedded at build time and checked against kBundledFontSha256.
  static const Font& bundled();

  int units_per_em() const { return units_per_em_; }
  const std::string& checksum() const { return checksum_; }

  // Outline of `text` set on a single line: origin at the pen start on the
  // baseline, font units, y pointing up. Throws ValidationError for
  // characters the font cannot map.
  Path layout(std::string_view text) const;

  std::uint16_t glyph_index(char32_t codepoint) const;
  int advance_width(std::uint16_t glyph) const;
  Path glyph_outline(std::uint16_t glyph) const;

 private:
  void glyph_outline_into(std::uint16_t glyph, const Affine& m, Path& out, int depth) const;
  std::span<const std::uint8_t> glyph_data(std::uint16_t glyph) const;

  std::span<const std::uint8_t> data_;
  std::string checksum_;
  int units_per_em_ = 0;
  int num_glyphs_ = 0;
  int num_hmetrics_ = 0;
  bool long_loca_ = false;
  std::size_t cmap_sub_ = 0, cmap_format_ = 0;
  std::size_t loca_ = 0, glyf_ = 0, hmtx_ = 0;
};

}  // namespace wmvqa
