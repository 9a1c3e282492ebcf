#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wmvqa/analysis.hpp"
#include "wmvqa/config.hpp"
#include "wmvqa/metrics.hpp"
#include "wmvqa/tsne.hpp"

namespace wmvqa {

using LogFn = std::function<void(const std::string&)>;

// sha256 over item, dataset, condition descriptor, model and prompt template
// version.
std::string reply_cache_key(const std::string& item_id, const std::string& dataset, const nlohmann::json& descriptor,
                            const std::string& model, int template_version = kPromptTemplateVersion);

struct CachedReply {
  std::string key;
  std::string model;
  std::string dataset;
  ModelReply reply;
};

// Append-only JSONL reply log that doubles as the resume cache. Lines are
// flushed one at a time; a torn final line from a killed run is ignored.
// Later lines win. Unanswered replies are logged but never served as hits.
class ReplyCache {
 public:
  explicit ReplyCache(std::filesystem::path path);

  std::optional<ModelReply> find(const std::string& key) const;
  void append(const CachedReply& entry);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, ModelReply> entries_;
};

using ClientFactory = std::function<std::unique_ptr<ModelClient>(const ModelConfig&)>;
std::unique_ptr<ModelClient> make_client(const ModelConfig& config);

struct RunOptions {
  ClientFactory factory;  // default: make_client
  LogFn log;
  // Grade from the reply log only; missing replies count as unanswered.
  bool cache_only = false;
};

struct RunStats {
  long queries = 0;     // model calls made by this invocation
  long cache_hits = 0;  // replies served from the log
  long unanswered = 0;
};

struct RunResult {
  RunReport report;
  RunStats stats;
  std::filesystem::path out_dir;
  std::string summary;
};

struct RenderedCondition {
  std::string dataset;
  std::string condition_id;
  std::optional<WatermarkSpec> spec;  // nullopt: clean
  EvalDataset data;
  nlohmann::json descriptor;
};

// Renders every (dataset, condition) under <output>/conditions, reusing
// directories whose condition.json already matches. Clean entries point at
// the source images.
std::vector<RenderedCondition> render_conditions(const ExperimentConfig& config, const LogFn& log = {});

// Artifacts in config.output:
//   config.toml, conditions/<dataset>/<condition>/..., replies.jsonl,
//   report.json (deterministic), run_metadata.json (timestamps, counters),
//   position_table.csv, content_table.csv, conditions.csv, summary.txt
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Re-grade a finished or interrupted run directory without querying.
RunResult regrade(const std::filesystem::path& run_dir, const LogFn& log = {});

struct AnalyzeOptions {
  std::filesystem::path dumps_dir;
  std::filesystem::path out_dir;
  std::string clean_condition = "clean";
  int layer = -1;  // -1: deepest layer present
  HeadAggregation heads = HeadAggregation::Mean;
  TsneOptions tsne;
};

struct AttentionRow {
  std::string item_id, condition_id;
  double mean = 0, max = 0;
  double threshold = 0;  // 90th percentile of all of this item's deltas
  std::size_t above = 0;
};

struct SimilarityRow {
  std::string item_id, condition_id;
  double cosine = 0;
};

struct AnalyzeResult {
  int layer = 0;
  std::vector<AttentionRow> attention;
  std::vector<SimilarityRow> similarity;
  std::optional<TsneResult> tsne;
  std::string tsne_skipped;  // reason, when tsne is empty
};

// Reads <item>__<condition>__<kind>__L<layer>.tdump files and writes
// heatmaps/, attention_summary.csv, similarity.csv, tsne.csv, tsne.png and
// analysis.json. Throws AnalysisInputError.
AnalyzeResult analyze_dumps(const AnalyzeOptions& options, const LogFn& log = {});

}  // namespace wmvqa
