#include <gtest/gtest.h>

#include <cmath>

#include "wmvqa/errors.hpp"
#include "wmvqa/font.hpp"
#include "wmvqa/raster.hpp"
#include "wmvqa/util.hpp"

using namespace wmvqa;

namespace {

// Reference metrics on the bundled DejaVuSans.ttf: bounds and advances from
// fontTools 4.63, ink area as the union of the outline (shapely 2.1, curves
// flattened to 64 segments). AreaPen would double-count overlapping
// components of composites such as the cedilla under C.
struct GlyphRef {
  char32_t cp;
  int advance;
  double x_min, y_min, x_max, y_max;
  double area;  // filled area, font units²
};

constexpr GlyphRef kRefs[] = {
    {U'M', 1767, 201, 0, 1567, 1493, 977835.0},
    {U'A', 1401, 16, 0, 1384, 1493, 678360.0},
    {U'R', 1423, 201, 0, 1364, 1493, 762711.1412353516},
    {U'K', 1343, 201, 0, 1386, 1493, 688893.5},
    {U'#', 1716, 158, 0, 1559, 1470, 769362.0},
    {U'%', 1946, 113, -29, 1833, 1520, 821717.2918701172},
    // Composite glyphs.
    {U'Ä', 1401, 16, 0, 1384, 1870, 760778.0},
    {U'Ç', 1430, 115, -395, 1319, 1520, 652320.9364147413},
};

double coverage_sum(const CoverageMask& m) {
  double s = 0;
  for (double v : m.values) s += v;
  return s;
}

}  // namespace

TEST(Font, BundledFontChecksum) {
  const Font& f = Font::bundled();
  EXPECT_EQ(f.checksum(), kBundledFontSha256);
  EXPECT_EQ(f.units_per_em(), 2048);
  EXPECT_EQ(f.checksum(), sha256_hex(read_file_bytes(WMVQA_FIXTURE_DIR "/../../data/fonts/DejaVuSans.ttf")));
}

TEST(Font, GlyphMetricsMatchReference) {
  const Font& f = Font::bundled();
  for (const auto& r : kRefs) {
    SCOPED_TRACE(static_cast<int>(r.cp));
    const auto g = f.glyph_index(r.cp);
    ASSERT_NE(g, 0);
    EXPECT_EQ(f.advance_width(g), r.advance);
    const Bounds b = f.glyph_outline(g).tight_bounds();
    EXPECT_NEAR(b.x_min, r.x_min, 1e-9);
    EXPECT_NEAR(b.y_min, r.y_min, 1e-9);
    EXPECT_NEAR(b.x_max, r.x_max, 1e-9);
    EXPECT_NEAR(b.y_max, r.y_max, 1e-9);
  }
}

TEST(Font, LayoutAdvancesPen) {
  const Bounds b = Font::bundled().layout("MARK").tight_bounds();
  // M ink starts at 201; K starts at 1767 + 1401 + 1423 and ends 1386 later.
  EXPECT_NEAR(b.x_min, 201, 1e-9);
  EXPECT_NEAR(b.x_max, 1767 + 1401 + 1423 + 1386, 1e-9);
  EXPECT_NEAR(b.y_max, 1493, 1e-9);
}

TEST(Font, UnmappedCharacterRejected) {
  EXPECT_THROW(Font::bundled().layout("MA\x01RK"), ValidationError);
}

TEST(Raster, RectangleCoverageIsExact) {
  // Half-pixel offsets: edge pixels are half covered, corners a quarter.
  const auto m = rasterize(Path::rectangle(2.5, 3.5, 4.0, 2.0), 16, 16);
  EXPECT_NEAR(m.at(2, 3), 0.25, 1e-12);
  EXPECT_NEAR(m.at(3, 3), 0.5, 1e-12);
  EXPECT_NEAR(m.at(3, 4), 1.0, 1e-12);
  EXPECT_NEAR(m.at(6, 5), 0.25, 1e-12);
  EXPECT_EQ(m.at(7, 4), 0.0);
  EXPECT_NEAR(coverage_sum(m), 8.0, 1e-12);
}

TEST(Raster, ClipsToImage) {
  const auto m = rasterize(Path::rectangle(-5, -5, 10, 10), 4, 4);
  EXPECT_NEAR(coverage_sum(m), 16.0, 1e-12);
  const auto none = rasterize(Path::rectangle(20, 20, 5, 5), 4, 4);
  EXPECT_TRUE(none.pixel_bounds().empty());
}

TEST(Raster, OverlapDoesNotExceedFullCoverage) {
  Path p = Path::rectangle(0, 0, 4, 4);
  p.append(Path::rectangle(0, 0, 4, 4));
  const auto m = rasterize(p, 8, 8);
  EXPECT_NEAR(m.at(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(coverage_sum(m), 16.0, 1e-12);
}

TEST(Raster, GlyphInkMatchesOutlineArea) {
  const Font& f = Font::bundled();
  const double s = 0.06;  // px per font unit; glyphs ~90 px tall
  for (const auto& r : kRefs) {
    SCOPED_TRACE(static_cast<int>(r.cp));
    const Path p = f.glyph_outline(f.glyph_index(r.cp))
                       .transformed(Affine::translate(10 - r.x_min * s, 10 + r.y_max * s)
                                        .then_after(Affine::scale(1, 1))
                                        .then_after(Affine{s, 0, 0, 0, -s, 0}));
    const auto m = rasterize(p, 200, 200);
    EXPECT_NEAR(coverage_sum(m), r.area * s * s, 0.005 * r.area * s * s);
    const Bounds pb = m.pixel_bounds();
    EXPECT_NEAR(pb.width(), (r.x_max - r.x_min) * s, 1.0);
    EXPECT_NEAR(pb.height(), (r.y_max - r.y_min) * s, 1.0);
  }
}
