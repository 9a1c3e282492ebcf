#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <random>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wmvqa/errors.hpp"
#include "wmvqa/metrics.hpp"

using namespace wmvqa;
using wmvqa::testing::make_item;

namespace {

struct ParseCase {
  const char* reply;
  Category category;
  const char* expected;  // letters, "" for unparseable
};

const std::vector<std::string> kOptions{"alpha", "beta", "gamma", "delta"};

// Hand-labelled replies.
const ParseCase kCases[] = {
    {"B", Category::TextS, "B"},
    {"B.", Category::TextS, "B"},
    {"(C)", Category::TextS, "C"},
    {"[B]", Category::ChartS, "B"},
    {"The answer is D.", Category::TextS, "D"},
    {"Answer: A", Category::TableS, "A"},
    {"A", Category::TextS, "A"},
    {"A chart shows that the answer is C", Category::ChartS, "C"},
    {"It's C", Category::TextS, "C"},
    {"Choice C.", Category::TextS, "C"},
    {"I think B", Category::TextS, "B"},
    {"Answer: B and C", Category::TextS, "B"},
    {"Answer: B and C", Category::ChartM, "BC"},
    {"A, C", Category::ChartM, "AC"},
    {"A and C", Category::ChartM, "AC"},
    {"C, B", Category::ChartM, "BC"},
    {"B/D", Category::ChartM, "BD"},
    {"B & D", Category::ChartM, "BD"},
    {"A, B, C, D", Category::ChartM, "ABCD"},
    {"C\nD", Category::ChartM, "CD"},
    {"B;C", Category::ChartM, "B"},
    {"The answer is B, or maybe C", Category::ChartM, "B"},
    {"D) delta", Category::TextS, "D"},
    {"alpha", Category::TextS, "A"},
    {"Gamma.", Category::TableS, "C"},
    {"  DELTA  ", Category::TextS, "D"},
    {"BD", Category::ChartM, ""},
    {"B1", Category::TextS, ""},
    {"The chart shows a dip", Category::ChartS, ""},
    {"", Category::TextS, ""},
};

ModelReply reply_of(const std::string& text, bool unanswered = false) {
  return {"x", "clean", text, 0.0, 1, unanswered, {}};
}

EvalRecord rec(std::string model, std::string ds, std::string cond, bool correct, bool unanswered = false) {
  EvalRecord r;
  r.model = std::move(model);
  r.dataset = std::move(ds);
  r.item_id = "i";
  r.condition_id = std::move(cond);
  r.correct = correct;
  r.unanswered = unanswered;
  return r;
}

}  // namespace

TEST(ParseAnswer, HandLabelledCorpus) {
  ASSERT_EQ(std::size(kCases), 30u);
  for (const auto& c : kCases) {
    SCOPED_TRACE(c.reply);
    EXPECT_EQ(parse_answer(c.reply, c.category, kOptions).letters(), c.expected);
  }
}

TEST(ParseAnswer, OptionTextNeedsOptions) {
  EXPECT_TRUE(parse_answer("alpha", Category::TextS).empty());
}

TEST(Grade, ChartMExhaustiveSubsets) {
  // Every answer key against every parsed subset: correct iff the sets match.
  for (unsigned key = 1; key < 16; ++key) {
    auto item = make_item("m", Category::ChartM, "x");
    std::string key_letters;
    for (int b = 0; b < 4; ++b)
      if (key & (1u << b)) key_letters += static_cast<char>('A' + b);
    item.answer = AnswerSet::from_letters(key_letters);
    for (unsigned sub = 0; sub < 16; ++sub) {
      std::string reply;
      for (int b = 0; b < 4; ++b)
        if (sub & (1u << b)) reply += std::string(reply.empty() ? "" : ", ") + static_cast<char>('A' + b);
      if (reply.empty()) reply = "none of these";
      const auto r = grade(item, reply_of(reply), "m", "d");
      EXPECT_EQ(r.parsed.letters().size(), static_cast<std::size_t>(std::popcount(sub))) << reply;
      EXPECT_EQ(r.correct, sub == key) << key_letters << " vs " << reply;
      EXPECT_FALSE(r.unanswered);
    }
  }
}

TEST(Grade, UnansweredIsNeverCorrect) {
  const auto item = make_item("s", Category::TextS, "x");
  const auto r = grade(item, reply_of("C", true), "m", "d");
  EXPECT_TRUE(r.unanswered);
  EXPECT_FALSE(r.correct);
  EXPECT_TRUE(grade(item, reply_of("C"), "m", "d").correct);
  const auto wrong = grade(item, reply_of("gibberish"), "m", "d");
  EXPECT_FALSE(wrong.correct);
  EXPECT_FALSE(wrong.unanswered);
}

TEST(Pdr, Identities) {
  for (double a : {0.01, 0.3, 0.5, 1.0}) {
    EXPECT_DOUBLE_EQ(pdr(a, a), 0.0);
    EXPECT_DOUBLE_EQ(pdr(a, 0.0), 100.0);
  }
  EXPECT_NEAR(pdr(0.50, 0.32), 36.0, 1e-12);
  EXPECT_LT(pdr(0.5, 0.6), 0.0);
  EXPECT_THROW(pdr(0.0, 0.0), ValidationError);
}

TEST(Accuracy, CountsAndExcludesUnanswered) {
  std::vector<EvalRecord> rs{rec("m", "d", "c", true), rec("m", "d", "c", false), rec("m", "d", "c", true),
                             rec("m", "d", "c", false, true)};
  EXPECT_NEAR(accuracy(rs), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(accuracy(std::span<const EvalRecord>{}), ValidationError);
  std::vector<EvalRecord> none{rec("m", "d", "c", false, true)};
  EXPECT_THROW(accuracy(none), ValidationError);
}

TEST(Accuracy, PermutationInvariant) {
  std::mt19937 rng(42);
  std::vector<EvalRecord> rs;
  for (int i = 0; i < 97; ++i) rs.push_back(rec("m", "d", "c", rng() % 3 == 0, rng() % 7 == 0));
  const double base = accuracy(rs);
  for (int t = 0; t < 50; ++t) {
    std::shuffle(rs.begin(), rs.end(), rng);
    EXPECT_EQ(accuracy(rs), base);
  }
}

namespace {

AggregateInput example_input() {
  AggregateInput in;
  WatermarkSpec center, scattered;
  scattered.position = PositionMode::Scattered;
  in.conditions[center.condition_id()] = center;
  in.conditions[scattered.condition_id()] = scattered;
  for (const std::string model : {"m1", "m2"})
    for (const std::string ds : {"docs", "charts"})
      for (int i = 0; i < 10; ++i) {
        in.records.push_back(rec(model, ds, "clean", i < 8));
        in.records.push_back(rec(model, ds, center.condition_id(), i < 6));
        // m1 degrades more under scattered marks than m2 does.
        in.records.push_back(rec(model, ds, scattered.condition_id(), i < (model == "m1" ? 4 : 7)));
      }
  return in;
}

}  // namespace

TEST(Aggregate, ComputesCellsAndTables) {
  const auto report = aggregate(example_input());
  ASSERT_EQ(report.cells.size(), 12u);
  const auto& c = report.cells[1];
  EXPECT_EQ(report.cells[0].condition_id, "clean");
  EXPECT_FALSE(report.cells[0].pdr.has_value());
  EXPECT_EQ(c.graded, 10);
  EXPECT_NEAR(*c.accuracy, 0.6, 1e-12);
  EXPECT_NEAR(*c.pdr, 25.0, 1e-12);

  const auto& t = report.position_table;
  EXPECT_EQ(t.datasets, (std::vector<std::string>{"charts", "docs"}));
  EXPECT_EQ(t.columns, (std::vector<std::string>{"center", "scattered"}));
  EXPECT_EQ(t.rows, (std::vector<std::string>{"m1", "m2", "AVG"}));
  EXPECT_NEAR(*t.values[0][1], 50.0, 1e-12);   // m1 charts scattered
  EXPECT_NEAR(*t.values[1][1], 12.5, 1e-12);   // m2 charts scattered
  EXPECT_NEAR(*t.values[2][1], 31.25, 1e-12);  // AVG
  EXPECT_NEAR(*t.values[2][0], 25.0, 1e-12);
  EXPECT_TRUE(t.is_max[0][1]);
  EXPECT_FALSE(t.is_max[0][0]);
  EXPECT_TRUE(t.is_max[1][0]);
  const auto text = t.to_text();
  EXPECT_NE(text.find("50*"), std::string::npos);
  EXPECT_NE(text.find("31*"), std::string::npos);
  EXPECT_EQ(t.to_csv().substr(0, t.to_csv().find('\n')),
            "model,charts/center,charts/scattered,docs/center,docs/scattered");

  // Both conditions carry the MARK label in the content table.
  EXPECT_EQ(report.content_table.columns, (std::vector<std::string>{"MARK"}));
  EXPECT_NEAR(*report.content_table.values[0][0], 37.5, 1e-12);
}

TEST(Aggregate, ZeroCleanAccuracyGivesNa) {
  AggregateInput in;
  WatermarkSpec center;
  in.conditions[center.condition_id()] = center;
  for (int i = 0; i < 4; ++i) {
    in.records.push_back(rec("m", "d", "clean", false));
    in.records.push_back(rec("m", "d", center.condition_id(), false));
  }
  const auto report = aggregate(in);
  EXPECT_FALSE(report.cells[1].pdr.has_value());
  EXPECT_FALSE(report.position_table.values[0][0].has_value());
  EXPECT_NE(report.position_table.to_text().find("n/a"), std::string::npos);
  EXPECT_NE(cells_to_csv(report).find(",0,n/a\n"), std::string::npos);
}

TEST(Aggregate, MissingCleanBaselineRejected) {
  AggregateInput in;
  in.records.push_back(rec("m", "d", "center_x", true));
  EXPECT_THROW(aggregate(in), ValidationError);
}

TEST(Aggregate, ReportJsonIsDeterministic) {
  const auto a = report_to_json(aggregate(example_input()), {{"seed", 7}}).dump();
  const auto b = report_to_json(aggregate(example_input()), {{"seed", 7}}).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(nlohmann::json::parse(a).at("metadata").at("seed"), 7);
}

TEST(Aggregate, FormatPercentRounds) {
  EXPECT_EQ(format_percent(36.0), "36");
  EXPECT_EQ(format_percent(12.5), "13");
  EXPECT_EQ(format_percent(-3.4), "-3");
  EXPECT_EQ(format_percent(std::nullopt), "n/a");
}
