#include "wmvqa/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

std::vector<WatermarkSpec> ConditionGrid::expand() const {
  std::vector<WatermarkSpec> out;
  std::set<std::string> seen;
  for (auto pos : positions)
    for (const auto& content : contents)
      for (double a : opacities)
        for (double r : area_ratios)
          for (double d : angles)
            for (Rgb c : colors) {
              WatermarkSpec s;
              s.position = pos;
              s.content = content;
              s.opacity = a;
              s.area_ratio = r;
              s.angle = d;
              s.color = c;
              s.scattered_anchors = scattered_anchors;
              if (seen.insert(s.condition_id()).second) out.push_back(std::move(s));
            }
  return out;
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ValidationError("config lists no datasets");
  for (const auto& [name, path] : datasets) {
    if (name.empty() || name.find_first_of("/\\") != std::string::npos)
      throw ValidationError("invalid dataset name '" + name + "'");
    if (!std::filesystem::is_regular_file(path))
      throw ValidationError("manifest for dataset '" + name + "' not found: " + path.string());
  }
  if (models.empty()) throw ValidationError("config lists no models");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (m.name.empty()) throw ValidationError("every model needs a name");
    if (!names.insert(m.name).second) throw ValidationError("duplicate model name '" + m.name + "'");
    if (m.kind == ModelConfig::Kind::Http) m.endpoint.validate();
  }
  const auto specs = grid.expand();
  if (specs.empty()) throw ValidationError("condition grid is empty");
  for (const auto& s : specs) s.validate();
  if (jpeg_quality != 0 && (jpeg_quality < 1 || jpeg_quality > 100))
    throw ValidationError("jpeg_quality must be 0 (off) or in [1, 100]");
  if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  if (render_workers < 1) throw ValidationError("render_workers must be >= 1");
}

// ---- value parsing ----

WatermarkContent parse_content(std::string_view s) {
  const auto colon = s.find(':');
  const std::string head(s.substr(0, colon));
  std::string lower = head;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (colon != std::string_view::npos) {
    const std::string rest(s.substr(colon + 1));
    if (lower == "text") return WatermarkContent::Text(rest);
    if (lower == "symbol") return WatermarkContent::Symbol(rest);
    if (lower == "mask") return WatermarkContent::Mask(rest);
    throw ValidationError("unknown content kind '" + head + "'");
  }
  if (lower == "mask") return WatermarkContent::Mask();
  if (s.empty()) throw ValidationError("empty watermark content");
  const bool alnum = std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == ' '; });
  return alnum ? WatermarkContent::Text(std::string(s)) : WatermarkContent::Symbol(std::string(s));
}

std::string content_to_string(const WatermarkContent& c) {
  return std::string(to_string(c.kind)) + ":" + c.text;
}

Rgb parse_color(std::string_view s) {
  static const std::map<std::string, Rgb, std::less<>> named{
      {"black", {0, 0, 0}},   {"white", {255, 255, 255}}, {"red", {255, 0, 0}},
      {"green", {0, 255, 0}}, {"blue", {0, 0, 255}},      {"gray", {128, 128, 128}}};
  if (auto it = named.find(s); it != named.end()) return it->second;
  if (s.size() == 7 && s[0] == '#' &&
      std::all_of(s.begin() + 1, s.end(), [](unsigned char c) { return std::isxdigit(c); })) {
    const auto v = std::stoul(std::string(s.substr(1)), nullptr, 16);
    return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  }
  throw ValidationError("unknown color '" + std::string(s) + "' (use a name or #rrggbb)");
}

std::string color_to_string(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

// ---- presets ----

std::vector<std::string> preset_names() {
  return {"positions", "contents", "opacity", "rotation", "colors", "area-ratio", "jpeg-defense"};
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  auto& g = c.grid;
  const std::vector<WatermarkContent> three_contents{WatermarkContent::Text(), WatermarkContent::Symbol(),
                                                     WatermarkContent::Mask()};
  if (name == "positions") {
    g.positions = {PositionMode::Center, PositionMode::TopLeft, PositionMode::Scattered};
  } else if (name == "contents") {
    g.contents = three_contents;
  } else if (name == "opacity") {
    g.opacities = {0.2, 0.5, 0.8};
  } else if (name == "rotation") {
    g.angles = {0.0, 45.0, 90.0};
  } else if (name == "colors") {
    g.positions = {PositionMode::Scattered};
    g.contents = three_contents;
    g.colors = {{0, 0, 0}, {255, 0, 0}, {0, 255, 0}};
  } else if (name == "area-ratio") {
    g.area_ratios = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  } else if (name == "jpeg-defense") {
    g.positions = {PositionMode::Center, PositionMode::TopLeft, PositionMode::Scattered};
    c.jpeg_quality = 30;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return c;
}

void apply_preset(ExperimentConfig& config, std::string_view name) {
  const auto p = preset(name);
  config.preset = p.preset;
  config.grid = p.grid;
  config.jpeg_quality = p.jpeg_quality;
}

// ---- TOML ----

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

void check_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, _] : t) {
    const std::string_view key = k.str();
    if (key == "api_key" || key == "key" || key == "token" || key == "secret")
      bad(where, "secrets are read from environment variables only; use api_key_env");
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      bad(where, "unknown key '" + std::string(key) + "'");
  }
}

template <class T>
T get(const toml::table& t, std::string_view key, const std::string& where, T fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, std::string>) {
    if (!node->is_string()) bad(where, std::string(key) + " must be a string");
    return node->value<std::string>().value();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!node->is_number()) bad(where, std::string(key) + " must be a number");
    return node->value<double>().value();
  } else {
    if (!node->is_integer()) bad(where, std::string(key) + " must be an integer");
    return static_cast<T>(node->value<std::int64_t>().value());
  }
}

const toml::array& array_of(const toml::node& n, const std::string& where) {
  const auto* arr = n.as_array();
  if (!arr) bad(where, "expected an array");
  if (arr->empty()) bad(where, "list must not be empty");
  return *arr;
}

std::vector<double> numbers(const toml::node& n, const std::string& where) {
  std::vector<double> out;
  for (const auto& el : array_of(n, where)) {
    if (!el.is_number()) bad(where, "expected numbers");
    out.push_back(el.value<double>().value());
  }
  return out;
}

std::vector<std::string> strings(const toml::node& n, const std::string& where) {
  std::vector<std::string> out;
  for (const auto& el : array_of(n, where)) {
    if (!el.is_string()) bad(where, "expected strings");
    out.push_back(el.value<std::string>().value());
  }
  return out;
}

std::vector<std::vector<double>> tuples(const toml::node& n, const std::string& where, std::size_t arity) {
  std::vector<std::vector<double>> out;
  for (const auto& el : array_of(n, where)) {
    auto v = numbers(el, where);
    if (v.size() != arity) bad(where, "each entry needs " + std::to_string(arity) + " numbers");
    out.push_back(std::move(v));
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ModelConfig parse_model(const toml::table& t, std::size_t index) {
  const std::string where = "model[" + std::to_string(index) + "]";
  check_keys(t, where,
             {"name", "kind", "base_url", "model", "api_key_env", "timeout_s", "max_retries", "max_in_flight",
              "backoff_initial_s", "backoff_max_s", "requests_per_minute", "behavior", "regions", "threshold"});
  ModelConfig m;
  m.name = get<std::string>(t, "name", where, "");
  const auto kind = get<std::string>(t, "kind", where, "mock");
  if (kind == "http") {
    m.kind = ModelConfig::Kind::Http;
    auto& e = m.endpoint;
    e.base_url = get<std::string>(t, "base_url", where, "");
    e.model_name = get<std::string>(t, "model", where, m.name);
    e.api_key_env = get<std::string>(t, "api_key_env", where, "");
    e.timeout_s = get<double>(t, "timeout_s", where, e.timeout_s);
    e.max_retries = get<int>(t, "max_retries", where, e.max_retries);
    e.max_in_flight = get<int>(t, "max_in_flight", where, e.max_in_flight);
    e.backoff_initial_s = get<double>(t, "backoff_initial_s", where, e.backoff_initial_s);
    e.backoff_max_s = get<double>(t, "backoff_max_s", where, e.backoff_max_s);
    e.requests_per_minute = get<double>(t, "requests_per_minute", where, e.requests_per_minute);
  } else if (kind == "mock") {
    m.kind = ModelConfig::Kind::Mock;
    const auto behavior = get<std::string>(t, "behavior", where, "always-correct");
    if (behavior == "always-correct") {
      m.behavior = AlwaysCorrect{};
    } else if (behavior == "always-wrong") {
      m.behavior = AlwaysWrong{};
    } else if (behavior == "flip-if-darkened") {
      FlipIfDarkened f;
      f.threshold = get<double>(t, "threshold", where, f.threshold);
      const auto* regions = t.get("regions");
      if (!regions) bad(where, "flip-if-darkened needs regions");
      for (const auto& r : tuples(*regions, where + ".regions", 4)) f.regions.push_back({r[0], r[1], r[2], r[3]});
      m.behavior = std::move(f);
    } else {
      bad(where, "unknown mock behavior '" + behavior + "'");
    }
  } else {
    bad(where, "kind must be 'http' or 'mock'");
  }
  return m;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config line " << e.source().begin.line << ": " << e.description();
    throw ValidationError(msg.str());
  }
  check_keys(root, "config",
             {"seed", "output", "preset", "jpeg_quality", "sample_size", "max_in_flight", "render_workers",
              "datasets", "grid", "model"});

  ExperimentConfig c;
  if (const auto p = get<std::string>(root, "preset", "config", ""); !p.empty()) apply_preset(c, p);
  c.seed = get<std::uint64_t>(root, "seed", "config", c.seed);
  c.output = resolve(base_dir, get<std::string>(root, "output", "config", c.output.string()));
  c.jpeg_quality = get<int>(root, "jpeg_quality", "config", c.jpeg_quality);
  c.sample_size = get<std::size_t>(root, "sample_size", "config", c.sample_size);
  c.max_in_flight = get<int>(root, "max_in_flight", "config", c.max_in_flight);
  c.render_workers = get<unsigned>(root, "render_workers", "config", c.render_workers);

  if (const auto* ds = root.get_as<toml::table>("datasets")) {
    for (const auto& [k, v] : *ds) {
      if (!v.is_string()) bad("datasets", std::string(k.str()) + " must be a manifest path");
      c.datasets[std::string(k.str())] = resolve(base_dir, v.value<std::string>().value());
    }
  } else if (root.contains("datasets")) {
    bad("config", "datasets must be a table of name = manifest path");
  }

  if (const auto* g = root.get_as<toml::table>("grid")) {
    check_keys(*g, "grid", {"positions", "contents", "opacity", "area_ratio", "angle", "color", "scattered_anchors"});
    auto& grid = c.grid;
    if (const auto* n = g->get("positions")) {
      grid.positions.clear();
      for (const auto& s : strings(*n, "grid.positions")) grid.positions.push_back(parse_position(s));
    }
    if (const auto* n = g->get("contents")) {
      grid.contents.clear();
      for (const auto& s : strings(*n, "grid.contents")) grid.contents.push_back(parse_content(s));
    }
    if (const auto* n = g->get("opacity")) grid.opacities = numbers(*n, "grid.opacity");
    if (const auto* n = g->get("area_ratio")) grid.area_ratios = numbers(*n, "grid.area_ratio");
    if (const auto* n = g->get("angle")) grid.angles = numbers(*n, "grid.angle");
    if (const auto* n = g->get("color")) {
      grid.colors.clear();
      for (const auto& s : strings(*n, "grid.color")) grid.colors.push_back(parse_color(s));
    }
    if (const auto* n = g->get("scattered_anchors")) {
      grid.scattered_anchors.clear();
      for (const auto& a : tuples(*n, "grid.scattered_anchors", 2)) grid.scattered_anchors.push_back({a[0], a[1]});
    }
  } else if (root.contains("grid")) {
    bad("config", "grid must be a table");
  }

  if (const auto* n = root.get("model")) {
    const auto* arr = n->as_array();
    if (!arr) bad("config", "models are declared as [[model]] tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (!t) bad("config", "models are declared as [[model]] tables");
      c.models.push_back(parse_model(*t, i));
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const IoError& e) {
    throw ValidationError(e.what());
  }
  return parse_config(text, std::filesystem::absolute(path).parent_path());
}

std::string config_to_toml(const ExperimentConfig& c) {
  toml::table root;
  root.insert("seed", static_cast<std::int64_t>(c.seed));
  root.insert("output", std::filesystem::absolute(c.output).lexically_normal().string());
  root.insert("jpeg_quality", c.jpeg_quality);
  root.insert("sample_size", static_cast<std::int64_t>(c.sample_size));
  root.insert("max_in_flight", c.max_in_flight);
  root.insert("render_workers", static_cast<std::int64_t>(c.render_workers));

  toml::table ds;
  for (const auto& [name, path] : c.datasets) ds.insert(name, std::filesystem::absolute(path).lexically_normal().string());
  root.insert("datasets", std::move(ds));

  toml::table g;
  toml::array positions, contents, opacity, area, angle, color, anchors;
  for (auto p : c.grid.positions) positions.push_back(std::string(to_string(p)));
  for (const auto& ct : c.grid.contents) contents.push_back(content_to_string(ct));
  for (double v : c.grid.opacities) opacity.push_back(v);
  for (double v : c.grid.area_ratios) area.push_back(v);
  for (double v : c.grid.angles) angle.push_back(v);
  for (Rgb v : c.grid.colors) color.push_back(color_to_string(v));
  for (const auto& a : c.grid.scattered_anchors) anchors.push_back(toml::array{a.x, a.y});
  g.insert("positions", std::move(positions));
  g.insert("contents", std::move(contents));
  g.insert("opacity", std::move(opacity));
  g.insert("area_ratio", std::move(area));
  g.insert("angle", std::move(angle));
  g.insert("color", std::move(color));
  g.insert("scattered_anchors", std::move(anchors));
  root.insert("grid", std::move(g));

  toml::array models;
  for (const auto& m : c.models) {
    toml::table t;
    t.insert("name", m.name);
    if (m.kind == ModelConfig::Kind::Http) {
      const auto& e = m.endpoint;
      t.insert("kind", "http");
      t.insert("base_url", e.base_url);
      t.insert("model", e.model_name);
      if (!e.api_key_env.empty()) t.insert("api_key_env", e.api_key_env);
      t.insert("timeout_s", e.timeout_s);
      t.insert("max_retries", e.max_retries);
      t.insert("max_in_flight", e.max_in_flight);
      t.insert("backoff_initial_s", e.backoff_initial_s);
      t.insert("backoff_max_s", e.backoff_max_s);
      t.insert("requests_per_minute", e.requests_per_minute);
    } else {
      t.insert("kind", "mock");
      std::visit(
          [&](const auto& b) {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, AlwaysCorrect>) {
              t.insert("behavior", "always-correct");
            } else if constexpr (std::is_same_v<B, AlwaysWrong>) {
              t.insert("behavior", "always-wrong");
            } else {
              t.insert("behavior", "flip-if-darkened");
              t.insert("threshold", b.threshold);
              toml::array regions;
              for (const auto& r : b.regions) regions.push_back(toml::array{r.x, r.y, r.w, r.h});
              t.insert("regions", std::move(regions));
            }
          },
          m.behavior);
    }
    models.push_back(std::move(t));
  }
  root.insert("model", std::move(models));

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace wmvqa
