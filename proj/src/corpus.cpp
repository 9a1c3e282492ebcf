#include "wmvqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"

namespace wmvqa {

using nlohmann::json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::TextS: return "TextS";
    case Category::ChartS: return "ChartS";
    case Category::ChartM: return "ChartM";
    case Category::TableS: return "TableS";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view s) {
  if (s == "TextS") return Category::TextS;
  if (s == "ChartS") return Category::ChartS;
  if (s == "ChartM") return Category::ChartM;
  if (s == "TableS") return Category::TableS;
  return std::nullopt;
}

AnswerSet AnswerSet::from_letters(std::string_view letters) {
  AnswerSet s;
  for (char c : letters) {
    if (c == ',' || c == ' ') continue;
    if (c < 'A' || c > 'D') throw ValidationError(std::string("invalid option letter '") + c + "'");
    s.insert(c);
  }
  return s;
}

std::string AnswerSet::letters() const {
  std::string out;
  for (char c : kOptionLetters)
    if (contains(c)) out.push_back(c);
  return out;
}

void validate_item(const VqaItem& item) {
  if (item.id.empty()) throw ValidationError("empty id");
  if (item.image_path.empty()) throw ValidationError(item.id + ": empty image_path");
  for (std::size_t i = 0; i < item.options.size(); ++i)
    if (item.options[i].empty())
      throw ValidationError(item.id + ": option " + kOptionLetters[i] + " is empty");
  if (item.answer.empty()) throw ValidationError(item.id + ": empty answer set");
  const int n = item.answer.size();
  if (is_multi_answer(item.category) ? n < 2 : n != 1)
    throw ValidationError(item.id + ": answer cardinality " + std::to_string(n) +
                          " inconsistent with category " + std::string(to_string(item.category)));
}

namespace {

VqaItem item_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  auto str_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ValidationError(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  VqaItem item;
  item.id = str_field("id");
  item.image_path = str_field("image_path");
  item.question = str_field("question");
  const auto cat = str_field("category");
  const auto parsed = parse_category(cat);
  if (!parsed) throw ValidationError("unknown category '" + cat + "'");
  item.category = *parsed;

  auto opts = j.find("options");
  if (opts == j.end() || !opts->is_object()) throw ValidationError("missing object field 'options'");
  if (opts->size() != 4) throw ValidationError("option count must be exactly 4, got " + std::to_string(opts->size()));
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string key(1, kOptionLetters[i]);
    auto o = opts->find(key);
    if (o == opts->end() || !o->is_string()) throw ValidationError("option count/keys must be exactly A-D (missing " + key + ")");
    item.options[i] = o->get<std::string>();
  }

  auto ans = j.find("answer");
  if (ans == j.end() || !ans->is_array()) throw ValidationError("missing array field 'answer'");
  for (const auto& a : *ans) {
    if (!a.is_string() || a.get<std::string>().size() != 1) throw ValidationError("answer entries must be single letters");
    const char c = a.get<std::string>()[0];
    if (c < 'A' || c > 'D') throw ValidationError(std::string("answer letter '") + c + "' outside A-D");
    if (item.answer.contains(c)) throw ValidationError(std::string("duplicate answer letter '") + c + "'");
    item.answer.insert(c);
  }
  validate_item(item);
  return item;
}

json item_to_json(const VqaItem& item) {
  json opts = json::object();
  for (std::size_t i = 0; i < 4; ++i) opts[std::string(1, kOptionLetters[i])] = item.options[i];
  json ans = json::array();
  for (char c : item.answer.letters()) ans.push_back(std::string(1, c));
  return json{{"id", item.id},
              {"image_path", item.image_path},
              {"category", std::string(to_string(item.category))},
              {"question", item.question},
              {"options", opts},
              {"answer", ans}};
}

bool looks_like_image(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return false;
  unsigned char m[8] = {};
  f.read(reinterpret_cast<char*>(m), 8);
  if (f.gcount() < 3) return false;
  const bool png = f.gcount() == 8 && m[0] == 0x89 && m[1] == 'P' && m[2] == 'N' && m[3] == 'G';
  const bool jpg = m[0] == 0xFF && m[1] == 0xD8 && m[2] == 0xFF;
  return png || jpg;
}

}  // namespace

EvalDataset parse_manifest(std::string_view text, std::string name, std::filesystem::path root,
                           ManifestOptions opts) {
  EvalDataset ds{std::move(name), std::move(root), {}};
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    VqaItem item;
    try {
      item = item_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(item.id).second)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate id '" + item.id + "'");
    if (opts.check_images && !looks_like_image(ds.root / item.image_path))
      throw IoError("line " + std::to_string(line_no) + ": missing or unreadable image file '" +
                    (ds.root / item.image_path).string() + "'");
    ds.items.push_back(std::move(item));
  }
  return ds;
}

EvalDataset load_manifest(const std::filesystem::path& path, ManifestOptions opts) {
  const auto text = read_file_text(path);
  return parse_manifest(text, path.stem().string(), path.parent_path(), opts);
}

std::string serialize_manifest(const EvalDataset& dataset) {
  std::string out;
  for (const auto& item : dataset.items) {
    out += item_to_json(item).dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const EvalDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_manifest(dataset));
}

EvalDataset sample(const EvalDataset& dataset, std::size_t n, std::uint64_t seed) {
  const std::size_t total = dataset.items.size();
  if (n < 1 || n > total)
    throw ValidationError("sample size " + std::to_string(n) + " out of range [1, " + std::to_string(total) + "]");
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Prng rng(seed);
  // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  EvalDataset out{dataset.name, dataset.root, {}};
  out.items.reserve(n);
  for (auto i : idx) out.items.push_back(dataset.items[i]);
  return out;
}

}  // namespace wmvqa
