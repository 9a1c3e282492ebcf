#include "wmvqa/font.hpp"

#include <cstring>
#include <optional>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

// The bundled font is linked into the binary with .incbin; WMVQA_FONT_FILE is
// the absolute path set by CMake.
#ifndef WMVQA_FONT_FILE
#error "WMVQA_FONT_FILE must name the TrueType file to embed"
#endif

asm(".section .rodata\n"
    ".global wmvqa_bundled_font_begin\n"
    ".balign 16\n"
    "wmvqa_bundled_font_begin:\n"
    ".incbin \"" WMVQA_FONT_FILE "\"\n"
    ".global wmvqa_bundled_font_end\n"
    "wmvqa_bundled_font_end:\n"
    ".previous\n");

extern "C" const std::uint8_t wmvqa_bundled_font_begin[];
extern "C" const std::uint8_t wmvqa_bundled_font_end[];

namespace wmvqa {

namespace {

struct Reader {
  std::span<const std::uint8_t> d;

  void need(std::size_t off, std::size_t n) const {
    if (off > d.size() || n > d.size() - off) throw IoError("truncated TrueType data");
  }
  std::uint8_t u8(std::size_t off) const {
    need(off, 1);
    return d[off];
  }
  std::uint16_t u16(std::size_t off) const {
    need(off, 2);
    return static_cast<std::uint16_t>(d[off] << 8 | d[off + 1]);
  }
  std::int16_t i16(std::size_t off) const { return static_cast<std::int16_t>(u16(off)); }
  std::uint32_t u32(std::size_t off) const {
    need(off, 4);
    return static_cast<std::uint32_t>(d[off]) << 24 | static_cast<std::uint32_t>(d[off + 1]) << 16 |
           static_cast<std::uint32_t>(d[off + 2]) << 8 | d[off + 3];
  }
};

std::size_t find_table(const Reader& r, const char* tag) {
  const int n = r.u16(4);
  for (int i = 0; i < n; ++i) {
    const std::size_t rec = 12 + 16 * static_cast<std::size_t>(i);
    r.need(rec, 16);
    if (std::memcmp(r.d.data() + rec, tag, 4) == 0) return r.u32(rec + 8);
  }
  throw IoError(std::string("TrueType table missing: ") + tag);
}

// F2Dot14 fixed point used by composite glyph transforms.
double f2dot14(std::int16_t v) { return v / 16384.0; }

}  // namespace

Font::Font(std::span<const std::uint8_t> data) : data_(data), checksum_(sha256_hex(data)) {
  const Reader r{data_};
  const auto version = r.u32(0);
  if (version != 0x00010000 && version != 0x74727565) throw IoError("not a TrueType outline font");

  const auto head = find_table(r, "head");
  units_per_em_ = r.u16(head + 18);
  long_loca_ = r.i16(head + 50) != 0;
  num_glyphs_ = r.u16(find_table(r, "maxp") + 4);
  num_hmetrics_ = r.u16(find_table(r, "hhea") + 34);
  hmtx_ = find_table(r, "hmtx");
  loca_ = find_table(r, "loca");
  glyf_ = find_table(r, "glyf");
  if (units_per_em_ <= 0 || num_hmetrics_ <= 0) throw IoError("invalid TrueType metrics");

  const auto cmap = find_table(r, "cmap");
  const int n = r.u16(cmap + 2);
  std::size_t best = 0, best_format = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t rec = cmap + 4 + 8 * static_cast<std::size_t>(i);
    const int platform = r.u16(rec), encoding = r.u16(rec + 2);
    const std::size_t sub = cmap + r.u32(rec + 4);
    const int format = r.u16(sub);
    const bool unicode = platform == 0 || (platform == 3 && (encoding == 1 || encoding == 10));
    if (!unicode) continue;
    if (format == 12 || (format == 4 && best_format != 12)) {
      best = sub;
      best_format = static_cast<std::size_t>(format);
    }
  }
  if (best_format == 0) throw IoError("no Unicode cmap subtable");
  cmap_sub_ = best;
  cmap_format_ = best_format;
}

const Font& Font::bundled() {
  static const Font font = [] {
    const std::span<const std::uint8_t> bytes(
        wmvqa_bundled_font_begin, static_cast<std::size_t>(wmvqa_bundled_font_end - wmvqa_bundled_font_begin));
    Font f(bytes);
    if (f.checksum() != kBundledFontSha256)
      throw IoError("bundled font checksum mismatch: " + f.checksum());
    return f;
  }();
  return font;
}

std::uint16_t Font::glyph_index(char32_t cp) const {
  const Reader r{data_};
  if (cmap_format_ == 12) {
    const auto groups = r.u32(cmap_sub_ + 12);
    for (std::uint32_t g = 0; g < groups; ++g) {
      const std::size_t rec = cmap_sub_ + 16 + 12 * static_cast<std::size_t>(g);
      const auto lo = r.u32(rec), hi = r.u32(rec + 4);
      if (cp >= lo && cp <= hi) return static_cast<std::uint16_t>(r.u32(rec + 8) + (cp - lo));
    }
    return 0;
  }
  if (cp > 0xFFFF) return 0;
  const std::size_t seg2 = r.u16(cmap_sub_ + 6);
  const std::size_t ends = cmap_sub_ + 14;
  const std::size_t starts = ends + seg2 + 2;
  const std::size_t deltas = starts + seg2;
  const std::size_t ranges = deltas + seg2;
  for (std::size_t i = 0; i < seg2; i += 2) {
    if (cp > r.u16(ends + i)) continue;
    const auto start = r.u16(starts + i);
    if (cp < start) return 0;
    const auto delta = r.u16(deltas + i);
    const auto range = r.u16(ranges + i);
    if (range == 0) return static_cast<std::uint16_t>(cp + delta);
    const auto g = r.u16(ranges + i + range + 2 * (cp - start));
    return g == 0 ? 0 : static_cast<std::uint16_t>(g + delta);
  }
  return 0;
}

int Font::advance_width(std::uint16_t glyph) const {
  const Reader r{data_};
  const int i = std::min<int>(glyph, num_hmetrics_ - 1);
  return r.u16(hmtx_ + 4 * static_cast<std::size_t>(i));
}

std::span<const std::uint8_t> Font::glyph_data(std::uint16_t glyph) const {
  if (glyph >= num_glyphs_) throw IoError("glyph index out of range");
  const Reader r{data_};
  std::size_t a, b;
  if (long_loca_) {
    a = r.u32(loca_ + 4 * static_cast<std::size_t>(glyph));
    b = r.u32(loca_ + 4 * static_cast<std::size_t>(glyph) + 4);
  } else {
    a = 2 * static_cast<std::size_t>(r.u16(loca_ + 2 * static_cast<std::size_t>(glyph)));
    b = 2 * static_cast<std::size_t>(r.u16(loca_ + 2 * static_cast<std::size_t>(glyph) + 2));
  }
  if (b < a) throw IoError("corrupt loca table");
  r.need(glyf_ + a, b - a);
  return data_.subspan(glyf_ + a, b - a);
}

Path Font::glyph_outline(std::uint16_t glyph) const {
  Path p;
  glyph_outline_into(glyph, Affine{}, p, 0);
  return p;
}

void Font::glyph_outline_into(std::uint16_t glyph, const Affine& m, Path& out, int depth) const {
  if (depth > 8) throw IoError("composite glyph nesting too deep");
  const auto g = glyph_data(glyph);
  if (g.empty()) return;  // e.g. space
  const Reader r{g};
  const int n_contours = r.i16(0);

  if (n_contours < 0) {
    constexpr std::uint16_t kWords = 0x1, kXY = 0x2, kScale = 0x8, kMore = 0x20, kXYScale = 0x40,
                            kTwoByTwo = 0x80;
    std::size_t off = 10;
    std::uint16_t flags;
    do {
      flags = r.u16(off);
      const auto component = r.u16(off + 2);
      off += 4;
      double dx = 0, dy = 0;
      if (flags & kWords) {
        dx = r.i16(off);
        dy = r.i16(off + 2);
        off += 4;
      } else {
        dx = static_cast<std::int8_t>(r.u8(off));
        dy = static_cast<std::int8_t>(r.u8(off + 1));
        off += 2;
      }
      if (!(flags & kXY)) dx = dy = 0;  // point matching is not supported
      Affine c;
      if (flags & kScale) {
        c.xx = c.yy = f2dot14(r.i16(off));
        off += 2;
      } else if (flags & kXYScale) {
        c.xx = f2dot14(r.i16(off));
        c.yy = f2dot14(r.i16(off + 2));
        off += 4;
      } else if (flags & kTwoByTwo) {
        c.xx = f2dot14(r.i16(off));
        c.yx = f2dot14(r.i16(off + 2));
        c.xy = f2dot14(r.i16(off + 4));
        c.yy = f2dot14(r.i16(off + 6));
        off += 8;
      }
      c.tx = dx;
      c.ty = dy;
      glyph_outline_into(component, m.then_after(c), out, depth + 1);
    } while (flags & kMore);
    return;
  }

  std::vector<std::uint16_t> end_pts(static_cast<std::size_t>(n_contours));
  for (int i = 0; i < n_contours; ++i) end_pts[static_cast<std::size_t>(i)] = r.u16(10 + 2 * static_cast<std::size_t>(i));
  const std::size_t n_points = n_contours == 0 ? 0 : static_cast<std::size_t>(end_pts.back()) + 1;
  std::size_t off = 10 + 2 * static_cast<std::size_t>(n_contours);
  off += 2 + r.u16(off);  // skip instructions

  std::vector<std::uint8_t> flags;
  flags.reserve(n_points);
  while (flags.size() < n_points) {
    const auto f = r.u8(off++);
    flags.push_back(f);
    if (f & 0x8) {
      const auto repeat = r.u8(off++);
      for (int k = 0; k < repeat && flags.size() < n_points; ++k) flags.push_back(f);
    }
  }
  std::vector<Vec2> pts(n_points);
  int acc = 0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const auto f = flags[i];
    if (f & 0x2) {
      const int d = r.u8(off++);
      acc += (f & 0x10) ? d : -d;
    } else if (!(f & 0x10)) {
      acc += r.i16(off);
      off += 2;
    }
    pts[i].x = acc;
  }
  acc = 0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const auto f = flags[i];
    if (f & 0x4) {
      const int d = r.u8(off++);
      acc += (f & 0x20) ? d : -d;
    } else if (!(f & 0x20)) {
      acc += r.i16(off);
      off += 2;
    }
    pts[i].y = acc;
  }

  std::size_t first = 0;
  for (int c = 0; c < n_contours; ++c) {
    const std::size_t last = end_pts[static_cast<std::size_t>(c)];
    if (last < first || last >= n_points) throw IoError("corrupt glyph contour");
    const std::size_t count = last - first + 1;
    auto on = [&](std::size_t k) { return (flags[first + k % count] & 0x1) != 0; };
    auto pt = [&](std::size_t k) { return m(pts[first + k % count]); };

    // Start from an on-curve point, or the implied midpoint of two off-curve ones.
    std::size_t start = 0;
    while (start < count && !on(start)) ++start;
    Vec2 start_pt;
    if (start == count) {
      start = 0;
      start_pt = 0.5 * (pt(0) + pt(1));
    } else {
      start_pt = pt(start);
    }

    PathContour contour;
    Vec2 cur = start_pt;
    std::optional<Vec2> pending;
    for (std::size_t k = 1; k <= count; ++k) {
      const std::size_t idx = start + k;
      const Vec2 p = pt(idx);
      if (on(idx)) {
        if (pending) {
          contour.push_back({cur, *pending, p, true});
          pending.reset();
        } else {
          contour.push_back({cur, cur, p, false});
        }
        cur = p;
      } else {
        if (pending) {
          const Vec2 mid = 0.5 * (*pending + p);
          contour.push_back({cur, *pending, mid, true});
          cur = mid;
        }
        pending = p;
      }
    }
    if (pending) contour.push_back({cur, *pending, start_pt, true});
    else if (!(cur == start_pt)) contour.push_back({cur, cur, start_pt, false});
    if (!contour.empty()) out.contours.push_back(std::move(contour));
    first = last + 1;
  }
}

Path Font::layout(std::string_view text) const {
  Path out;
  double pen = 0;
  for (unsigned char ch : text) {
    if (ch >= 0x80) throw ValidationError("only ASCII watermark text is supported");
    const auto g = glyph_index(ch);
    if (g == 0 && ch != ' ') throw ValidationError(std::string("font has no glyph for '") + static_cast<char>(ch) + "'");
    Path glyph;
    glyph_outline_into(g, Affine::translate(pen, 0), glyph, 0);
    out.append(glyph);
    pen += advance_width(g);
  }
  return out;
}

}  // namespace wmvqa
