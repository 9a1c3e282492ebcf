#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wmvqa/corpus.hpp"
#include "wmvqa/model_client.hpp"
#include "wmvqa/watermark.hpp"

namespace wmvqa {

inline constexpr std::string_view kCleanCondition = "clean";

// Option letters extracted from a free-form reply. Rules, first match wins:
//  1. the first run of standalone capital letters A-D joined by commas,
//     whitespace, "and", "&" or "/" (a capital "A" used as an article is
//     skipped);
//  2. lines opening with "X." or "X)";
//  3. the whole reply equal to one option's text (case-insensitive).
// Single-choice categories keep the first letter found; ChartM keeps all.
// Unparseable replies give the empty set.
AnswerSet parse_answer(std::string_view raw_text, Category category,
                       std::span<const std::string> options = {});

struct EvalRecord {
  std::string model;
  std::string dataset;
  std::string item_id;
  std::string condition_id;
  AnswerSet parsed;
  bool correct = false;
  bool unanswered = false;
};

// Exact-set grading; unanswered replies are never correct.
EvalRecord grade(const VqaItem& item, const ModelReply& reply, std::string model, std::string dataset);

// correct / graded, unanswered records excluded. Throws ValidationError when
// nothing was graded.
double accuracy(std::span<const EvalRecord> records);

// 100 * (clean - marked) / clean. Throws ValidationError when clean <= 0.
double pdr(double acc_clean, double acc_watermarked);

struct ConditionCell {
  std::string model, dataset, condition_id;
  long correct = 0, graded = 0, unanswered = 0;
  std::optional<double> accuracy;  // nullopt: nothing graded
  std::optional<double> pdr;       // nullopt: clean condition or undefined
};

// Model x (dataset, column) PDR table with an AVG row, in the layout of
// "PDR per watermark position / content" tables.
struct PdrTable {
  std::string title;
  std::vector<std::string> datasets;
  std::vector<std::string> columns;  // e.g. center, scattered, top-left
  std::vector<std::string> rows;     // model names, then "AVG"
  // values[row][dataset_index * columns.size() + column_index]
  std::vector<std::vector<std::optional<double>>> values;
  std::vector<std::vector<bool>> is_max;  // per-row, per-dataset argmax flags

  std::string to_csv() const;
  std::string to_text() const;  // rounded, '*' on the per-dataset maxima
};

struct RunReport {
  std::vector<ConditionCell> cells;
  PdrTable position_table;
  PdrTable content_table;
};

struct AggregateInput {
  std::vector<EvalRecord> records;
  // Condition id -> spec for every watermarked condition present.
  std::map<std::string, WatermarkSpec> conditions;
};

// Groups records by (model, dataset, condition); PDR against the clean
// condition of the same model and dataset. Throws ValidationError when a
// (model, dataset) has no clean records.
RunReport aggregate(const AggregateInput& input);

// Deterministic JSON (no timestamps); `metadata` is embedded verbatim.
nlohmann::json report_to_json(const RunReport& report, const nlohmann::json& metadata);
std::string cells_to_csv(const RunReport& report);
std::string format_percent(std::optional<double> v);  // rounded integer or "n/a"

}  // namespace wmvqa
