#include "wmvqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"

namespace wmvqa {

using nlohmann::json;

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

struct Token {
  std::string_view text;
  bool word;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const bool w = is_word_char(s[i]);
    std::size_t j = i;
    while (j < s.size() && is_word_char(s[j]) == w) ++j;
    out.push_back({s.substr(i, j - i), w});
    i = j;
  }
  return out;
}

bool is_letter_token(const Token& t) { return t.word && t.text.size() == 1 && t.text[0] >= 'A' && t.text[0] <= 'D'; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

bool is_conjunction(const Token& t) { return t.word && (iequals(t.text, "and") || iequals(t.text, "or")); }

bool is_list_separator(const Token& t) {
  if (t.word) return is_conjunction(t);
  return std::all_of(t.text.begin(), t.text.end(), [](char c) {
    return c == ',' || c == '&' || c == '/' || std::isspace(static_cast<unsigned char>(c));
  });
}

// "A chart ..." : capital A followed by whitespace and a lowercase word.
bool is_article(const std::vector<Token>& toks, std::size_t i) {
  if (toks[i].text != "A" || i + 2 >= toks.size()) return false;
  const auto& gap = toks[i + 1];
  if (gap.word || !std::all_of(gap.text.begin(), gap.text.end(), [](char c) { return c == ' ' || c == '\t'; }))
    return false;
  const auto& next = toks[i + 2];
  return next.word && std::islower(static_cast<unsigned char>(next.text[0])) && !is_conjunction(next);
}

std::vector<char> rule_letter_run(std::string_view raw) {
  const auto toks = tokenize(raw);
  std::size_t i = 0;
  while (i < toks.size() && !(is_letter_token(toks[i]) && !is_article(toks, i))) ++i;
  std::vector<char> letters;
  if (i == toks.size()) return letters;
  letters.push_back(toks[i].text[0]);
  std::size_t j = i + 1;
  while (j < toks.size()) {
    std::size_t k = j;
    while (k < toks.size() && is_list_separator(toks[k])) ++k;
    if (k == j || k >= toks.size() || !is_letter_token(toks[k]) || is_article(toks, k)) break;
    letters.push_back(toks[k].text[0]);
    j = k + 1;
  }
  return letters;
}

std::vector<char> rule_line_start(std::string_view raw) {
  std::vector<char> letters;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto line = raw.substr(pos, nl - pos);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && first + 1 < line.size()) {
      const char c = line[first], d = line[first + 1];
      if (c >= 'A' && c <= 'D' && (d == '.' || d == ')')) letters.push_back(c);
    }
    pos = nl + 1;
  }
  return letters;
}

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<char> rule_option_text(std::string_view raw, std::span<const std::string> options) {
  auto r = trim(raw);
  if (!r.empty() && r.back() == '.') r = trim(r.substr(0, r.size() - 1));
  for (std::size_t i = 0; i < options.size() && i < 4; ++i) {
    auto o = trim(options[i]);
    if (!o.empty() && o.back() == '.') o = trim(o.substr(0, o.size() - 1));
    if (!o.empty() && iequals(r, o)) return {kOptionLetters[i]};
  }
  return {};
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : "nan";
}

}  // namespace

AnswerSet parse_answer(std::string_view raw_text, Category category, std::span<const std::string> options) {
  std::vector<char> letters = rule_letter_run(raw_text);
  if (letters.empty()) letters = rule_line_start(raw_text);
  if (letters.empty()) letters = rule_option_text(raw_text, options);
  AnswerSet out;
  if (letters.empty()) return out;
  if (!is_multi_answer(category)) {
    out.insert(letters.front());
    return out;
  }
  for (char c : letters) out.insert(c);
  return out;
}

EvalRecord grade(const VqaItem& item, const ModelReply& reply, std::string model, std::string dataset) {
  EvalRecord r{std::move(model), std::move(dataset), item.id, reply.condition_id, {}, false, reply.unanswered};
  if (r.unanswered) return r;
  r.parsed = parse_answer(reply.raw_text, item.category, item.options);
  r.correct = r.parsed == item.answer;
  return r;
}

double accuracy(std::span<const EvalRecord> records) {
  long graded = 0, correct = 0;
  for (const auto& r : records) {
    if (r.unanswered) continue;
    ++graded;
    correct += r.correct ? 1 : 0;
  }
  if (graded == 0) throw ValidationError("accuracy undefined: no graded records");
  return static_cast<double>(correct) / static_cast<double>(graded);
}

double pdr(double acc_clean, double acc_watermarked) {
  if (!(acc_clean > 0)) throw ValidationError("PDR undefined: clean accuracy is 0");
  return 100.0 * (acc_clean - acc_watermarked) / acc_clean;
}

std::string format_percent(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return "n/a";
  const long r = std::lround(*v);
  return std::to_string(r);
}

namespace {

// Position columns follow the Center | Scattered | Top-left order.
int position_rank(std::string_view p) {
  if (p == "center") return 0;
  if (p == "scattered") return 1;
  if (p == "top-left") return 2;
  return 3;
}

int content_rank(std::string_view label) {
  if (label == "MARK") return 0;
  if (label == "###") return 1;
  if (label == "MASK") return 2;
  return 3;
}

template <typename KeyFn, typename RankFn>
PdrTable build_table(std::string title, const std::vector<ConditionCell>& cells,
                     const std::vector<std::string>& models, const std::vector<std::string>& datasets,
                     const std::map<std::string, WatermarkSpec>& specs, KeyFn key_of, RankFn rank) {
  PdrTable t;
  t.title = std::move(title);
  t.datasets = datasets;
  std::set<std::string> keys;
  for (const auto& [id, spec] : specs) keys.insert(key_of(spec));
  t.columns.assign(keys.begin(), keys.end());
  std::stable_sort(t.columns.begin(), t.columns.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  const std::size_t nc = t.columns.size(), nd = datasets.size();

  auto col_index = [&](const std::string& k) {
    return static_cast<std::size_t>(std::find(t.columns.begin(), t.columns.end(), k) - t.columns.begin());
  };
  auto ds_index = [&](const std::string& d) {
    return static_cast<std::size_t>(std::find(datasets.begin(), datasets.end(), d) - datasets.begin());
  };

  for (const auto& model : models) {
    std::vector<std::vector<double>> acc(nd * nc);
    for (const auto& c : cells) {
      if (c.model != model || !c.pdr) continue;
      const auto it = specs.find(c.condition_id);
      if (it == specs.end()) continue;
      acc[ds_index(c.dataset) * nc + col_index(key_of(it->second))].push_back(*c.pdr);
    }
    std::vector<std::optional<double>> row(nd * nc);
    for (std::size_t i = 0; i < row.size(); ++i)
      if (!acc[i].empty()) row[i] = mean(acc[i]);
    t.rows.push_back(model);
    t.values.push_back(std::move(row));
  }
  std::vector<std::optional<double>> avg(nd * nc);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    std::vector<double> v;
    for (std::size_t r = 0; r < models.size(); ++r)
      if (t.values[r][i]) v.push_back(*t.values[r][i]);
    if (!v.empty()) avg[i] = mean(v);
  }
  t.rows.push_back("AVG");
  t.values.push_back(std::move(avg));

  for (const auto& row : t.values) {
    std::vector<bool> flags(nd * nc, false);
    for (std::size_t d = 0; d < nd; ++d) {
      std::optional<double> best;
      for (std::size_t c = 0; c < nc; ++c)
        if (const auto v = row[d * nc + c]; v && (!best || *v > *best)) best = v;
      for (std::size_t c = 0; c < nc; ++c)
        if (const auto v = row[d * nc + c]; v && best && *v == *best) flags[d * nc + c] = true;
    }
    t.is_max.push_back(std::move(flags));
  }
  return t;
}

}  // namespace

std::string PdrTable::to_csv() const {
  std::string out = "model";
  for (const auto& d : datasets)
    for (const auto& c : columns) out += "," + d + "/" + c;
  out += '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += rows[r];
    for (const auto& v : values[r]) out += "," + format_percent(v);
    out += '\n';
  }
  return out;
}

std::string PdrTable::to_text() const {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> h1{""}, h2{"Model"};
  for (const auto& d : datasets)
    for (std::size_t c = 0; c < columns.size(); ++c) {
      h1.push_back(c == 0 ? d : "");
      h2.push_back(columns[c]);
    }
  grid.push_back(h1);
  grid.push_back(h2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<std::string> line{rows[r]};
    for (std::size_t i = 0; i < values[r].size(); ++i)
      line.push_back(format_percent(values[r][i]) + (is_max[r][i] ? "*" : ""));
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(grid[1].size(), 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::string out = title + "\n";
  for (std::size_t l = 0; l < grid.size(); ++l) {
    for (std::size_t i = 0; i < grid[l].size(); ++i) {
      out += grid[l][i];
      if (i + 1 < grid[l].size()) out += std::string(width[i] - grid[l][i].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

RunReport aggregate(const AggregateInput& input) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, ConditionCell> by_key;
  std::set<std::string> model_set, dataset_set;
  for (const auto& r : input.records) {
    auto& c = by_key[{r.model, r.dataset, r.condition_id}];
    c.model = r.model;
    c.dataset = r.dataset;
    c.condition_id = r.condition_id;
    if (r.unanswered) {
      ++c.unanswered;
    } else {
      ++c.graded;
      c.correct += r.correct ? 1 : 0;
    }
    model_set.insert(r.model);
    dataset_set.insert(r.dataset);
  }
  for (auto& [k, c] : by_key)
    if (c.graded > 0) c.accuracy = static_cast<double>(c.correct) / static_cast<double>(c.graded);

  const std::vector<std::string> models(model_set.begin(), model_set.end());
  const std::vector<std::string> datasets(dataset_set.begin(), dataset_set.end());

  RunReport report;
  for (const auto& m : models)
    for (const auto& d : datasets) {
      const auto clean_it = by_key.find({m, d, std::string(kCleanCondition)});
      if (clean_it == by_key.end())
        throw ValidationError("no clean baseline for model '" + m + "' on dataset '" + d + "'");
      const auto clean_acc = clean_it->second.accuracy;
      report.cells.push_back(clean_it->second);
      for (auto& [k, c] : by_key) {
        if (std::get<0>(k) != m || std::get<1>(k) != d || std::get<2>(k) == kCleanCondition) continue;
        if (clean_acc && *clean_acc > 0 && c.accuracy) c.pdr = pdr(*clean_acc, *c.accuracy);
        report.cells.push_back(c);
      }
    }

  report.position_table = build_table(
      "PDR (%) by watermark position", report.cells, models, datasets, input.conditions,
      [](const WatermarkSpec& s) { return std::string(to_string(s.position)); }, position_rank);
  report.content_table = build_table(
      "PDR (%) by watermark content", report.cells, models, datasets, input.conditions,
      [](const WatermarkSpec& s) { return s.content.label(); }, content_rank);
  return report;
}

namespace {

json table_json(const PdrTable& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    json vals = json::array(), flags = json::array();
    for (std::size_t i = 0; i < t.values[r].size(); ++i) {
      vals.push_back(t.values[r][i] ? json(*t.values[r][i]) : json(nullptr));
      flags.push_back(static_cast<bool>(t.is_max[r][i]));
    }
    rows.push_back({{"row", t.rows[r]}, {"pdr", vals}, {"is_max", flags}});
  }
  return {{"title", t.title}, {"datasets", t.datasets}, {"columns", t.columns}, {"rows", rows}};
}

json opt_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json report_to_json(const RunReport& report, const json& metadata) {
  json cells = json::array();
  for (const auto& c : report.cells)
    cells.push_back({{"model", c.model},
                     {"dataset", c.dataset},
                     {"condition_id", c.condition_id},
                     {"correct", c.correct},
                     {"graded", c.graded},
                     {"unanswered", c.unanswered},
                     {"accuracy", opt_json(c.accuracy)},
                     {"pdr", opt_json(c.pdr)}});
  return {{"metadata", metadata},
          {"conditions", cells},
          {"position_table", table_json(report.position_table)},
          {"content_table", table_json(report.content_table)}};
}

std::string cells_to_csv(const RunReport& report) {
  std::string out = "model,dataset,condition_id,correct,graded,unanswered,accuracy,pdr\n";
  for (const auto& c : report.cells) {
    out += c.model + "," + c.dataset + "," + c.condition_id + "," + std::to_string(c.correct) + "," +
           std::to_string(c.graded) + "," + std::to_string(c.unanswered) + "," +
           (c.accuracy ? shortest(*c.accuracy) : "n/a") + "," + (c.pdr ? shortest(*c.pdr) : "n/a") + "\n";
  }
  return out;
}

}  // namespace wmvqa
