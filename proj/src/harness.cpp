#include "wmvqa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json clean_descriptor(int jpeg_quality) {
  json d{{"condition_id", std::string(kCleanCondition)}};
  if (jpeg_quality > 0) d["jpeg_quality"] = jpeg_quality;
  return d;
}

json reply_to_json(const CachedReply& e) {
  const auto& r = e.reply;
  return {{"key", e.key},
          {"model", e.model},
          {"dataset", e.dataset},
          {"item_id", r.item_id},
          {"condition_id", r.condition_id},
          {"raw_text", r.raw_text},
          {"latency_s", r.latency_s},
          {"attempt_count", r.attempt_count},
          {"unanswered", r.unanswered},
          {"error", r.error}};
}

}  // namespace

std::string reply_cache_key(const std::string& item_id, const std::string& dataset, const json& descriptor,
                            const std::string& model, int template_version) {
  const json k{{"item", item_id},
               {"dataset", dataset},
               {"condition", descriptor},
               {"model", model},
               {"prompt_template", template_version}};
  return sha256_hex(k.dump());
}

// ---- reply cache ----

ReplyCache::ReplyCache(fs::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ModelReply r{j.at("item_id").get<std::string>(),
                   j.at("condition_id").get<std::string>(),
                   j.at("raw_text").get<std::string>(),
                   j.value("latency_s", 0.0),
                   j.value("attempt_count", 0),
                   j.value("unanswered", false),
                   j.value("error", "")};
      const auto key = j.at("key").get<std::string>();
      if (r.unanswered) entries_.erase(key);
      else entries_[key] = std::move(r);
    } catch (const json::exception&) {
      // Torn write from an interrupted run.
    }
  }
}

std::optional<ModelReply> ReplyCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplyCache::append(const CachedReply& entry) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << reply_to_json(entry).dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to reply log " + path_.string());
  if (!entry.reply.unanswered) entries_[entry.key] = entry.reply;
}

std::size_t ReplyCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::unique_ptr<ModelClient> make_client(const ModelConfig& config) {
  if (config.kind == ModelConfig::Kind::Http) {
    auto e = config.endpoint;
    if (e.model_name.empty()) e.model_name = config.name;
    return std::make_unique<HttpModelClient>(e);
  }
  return std::make_unique<MockModelClient>(config.behavior, config.name);
}

// ---- rendering ----

namespace {

std::vector<std::pair<std::string, EvalDataset>> load_datasets(const ExperimentConfig& config, bool check_images) {
  std::vector<std::pair<std::string, EvalDataset>> out;
  for (const auto& [name, path] : config.datasets) {
    auto ds = load_manifest(path, {check_images});
    ds.name = name;
    if (config.sample_size > 0 && config.sample_size < ds.items.size())
      ds = sample(ds, config.sample_size, config.seed);
    out.emplace_back(name, std::move(ds));
  }
  return out;
}

std::optional<EvalDataset> reuse_rendered(const fs::path& dir, const json& descriptor, const EvalDataset& source,
                                          bool check_images) {
  try {
    if (!fs::is_regular_file(dir / "condition.json") || !fs::is_regular_file(dir / "manifest.jsonl")) return std::nullopt;
    if (json::parse(read_file_text(dir / "condition.json")) != descriptor) return std::nullopt;
    auto ds = load_manifest(dir / "manifest.jsonl", {check_images});
    if (ds.items.size() != source.items.size()) return std::nullopt;
    for (std::size_t i = 0; i < ds.items.size(); ++i)
      if (ds.items[i].id != source.items[i].id) return std::nullopt;
    ds.name = source.name;
    return ds;
  } catch (const Error&) {
    return std::nullopt;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::vector<RenderedCondition> prepare_conditions(const ExperimentConfig& config, const LogFn& log, bool render) {
  const auto specs = config.grid.expand();
  std::vector<RenderedCondition> out;
  for (auto& [name, ds] : load_datasets(config, render)) {
    out.push_back({name, std::string(kCleanCondition), std::nullopt, ds, clean_descriptor(config.jpeg_quality)});
    for (const auto& spec : specs) {
      const auto id = spec.condition_id();
      const fs::path dir = config.output / "conditions" / safe_file_stem(name) / id;
      json desc = condition_descriptor(spec);
      if (config.jpeg_quality > 0) desc["jpeg_quality"] = config.jpeg_quality;
      auto rendered = reuse_rendered(dir, desc, ds, render);
      if (!rendered) {
        if (!render) throw ValidationError("rendered condition missing or stale: " + dir.string());
        say(log, "render " + name + " / " + id);
        rendered = render_condition(ds, spec, dir, {config.render_workers, config.jpeg_quality});
        rendered->name = name;
      }
      out.push_back({name, id, spec, std::move(*rendered), std::move(desc)});
    }
  }
  return out;
}

}  // namespace

std::vector<RenderedCondition> render_conditions(const ExperimentConfig& config, const LogFn& log) {
  config.validate();
  return prepare_conditions(config, log, true);
}

// ---- run ----

namespace {

struct Task {
  std::size_t model;
  const RenderedCondition* cond;
  const VqaItem* item;
  std::string key;
};

std::string build_summary(const RunReport& report, const RunStats& stats) {
  std::ostringstream s;
  s << report.position_table.to_text() << '\n' << report.content_table.to_text() << '\n';
  s << "queries: " << stats.queries << "  cache hits: " << stats.cache_hits << "  unanswered: " << stats.unanswered
    << '\n';
  return s.str();
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  // Re-grading never contacts an endpoint, so missing API keys are fine then.
  if (!options.cache_only) config.validate();
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(config.output);
  if (!options.cache_only) write_file_atomic(config.output / "config.toml", config_to_toml(config));

  const auto conditions = prepare_conditions(config, options.log, !options.cache_only);

  std::vector<std::unique_ptr<ModelClient>> clients;
  if (!options.cache_only) {
    const auto& factory = options.factory ? options.factory : ClientFactory(make_client);
    for (const auto& m : config.models) {
      clients.push_back(factory(m));
      for (const auto& c : conditions)
        if (!c.spec) clients.back()->prepare(c.data);
    }
  }

  ReplyCache cache(config.output / "replies.jsonl");
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < config.models.size(); ++m)
    for (const auto& c : conditions)
      for (const auto& item : c.data.items)
        tasks.push_back({m, &c, &item, reply_cache_key(item.id, c.dataset, c.descriptor, config.models[m].name)});

  RunStats stats;
  std::vector<std::optional<ModelReply>> replies(tasks.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    replies[i] = cache.find(tasks[i].key);
    if (replies[i]) ++stats.cache_hits;
    else pending.push_back(i);
  }
  say(options.log, std::to_string(tasks.size()) + " queries planned, " + std::to_string(stats.cache_hits) +
                       " served from the reply log");

  if (!options.cache_only && !pending.empty()) {
    std::atomic<std::size_t> next{0};
    std::atomic<long> issued{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      while (!stop) {
        const std::size_t p = next++;
        if (p >= pending.size()) return;
        const auto& t = tasks[pending[p]];
        try {
          DocumentImage img = load_image(t.cond->data.image_file(*t.item));
          if (!t.cond->spec && config.jpeg_quality > 0) img = jpeg_defense(img, config.jpeg_quality);
          ++issued;
          ModelReply r = clients[t.model]->query(*t.item, img, t.cond->condition_id);
          cache.append({t.key, config.models[t.model].name, t.cond->dataset, r});
          replies[pending[p]] = std::move(r);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          stop = true;
        }
      }
    };
    {
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), pending.size());
      std::vector<std::jthread> pool;
      for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    stats.queries = issued;
    if (failure) std::rethrow_exception(failure);
  }

  AggregateInput input;
  for (const auto& c : conditions)
    if (c.spec) input.conditions.emplace(c.condition_id, *c.spec);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    ModelReply r = replies[i].value_or(ModelReply{t.item->id, t.cond->condition_id, {}, 0.0, 0, true, "no reply"});
    if (r.unanswered) ++stats.unanswered;
    input.records.push_back(grade(*t.item, r, config.models[t.model].name, t.cond->dataset));
  }
  const RunReport report = aggregate(input);

  json meta{{"engine_version", std::string(kEngineVersion)},
            {"font_sha256", Font::bundled().checksum()},
            {"prompt_template_version", kPromptTemplateVersion},
            {"prng", std::string(kPrngName)},
            {"seed", config.seed},
            {"sample_size", config.sample_size},
            {"jpeg_quality", config.jpeg_quality}};
  json models = json::array();
  for (const auto& m : config.models) models.push_back(m.name);
  meta["models"] = models;
  json datasets = json::object();
  json cond_ids = json::array();
  for (const auto& c : conditions) {
    if (!c.spec) datasets[c.dataset] = {{"items", c.data.items.size()}};
    else if (c.dataset == conditions.front().dataset) cond_ids.push_back(c.condition_id);
  }
  meta["datasets"] = datasets;
  meta["conditions"] = cond_ids;

  const fs::path& out = config.output;
  write_file_atomic(out / "report.json", report_to_json(report, meta).dump(2) + "\n");
  write_file_atomic(out / "position_table.csv", report.position_table.to_csv());
  write_file_atomic(out / "content_table.csv", report.content_table.to_csv());
  write_file_atomic(out / "conditions.csv", cells_to_csv(report));
  RunResult result{report, stats, out, build_summary(report, stats)};
  write_file_atomic(out / "summary.txt", result.summary);

  const json run_meta{{"started_at", started},
                      {"finished_at", utc_now()},
                      {"duration_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                      {"mode", options.cache_only ? "regrade" : "run"},
                      {"queries", stats.queries},
                      {"cache_hits", stats.cache_hits},
                      {"unanswered", stats.unanswered}};
  write_file_atomic(out / "run_metadata.json", run_meta.dump(2) + "\n");
  return result;
}

RunResult regrade(const fs::path& run_dir, const LogFn& log) {
  auto config = load_config(run_dir / "config.toml");
  config.output = run_dir;
  return run_experiment(config, {{}, log, true});
}

// ---- analyze ----

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

AnalyzeResult analyze_dumps(const AnalyzeOptions& opt, const LogFn& log) {
  if (!fs::is_directory(opt.dumps_dir)) throw AnalysisInputError("dump directory not found: " + opt.dumps_dir.string());

  // kind -> item -> condition -> layer -> path
  std::map<DumpKind, std::map<std::string, std::map<std::string, std::map<int, fs::path>>>> found;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(opt.dumps_dir))
    if (e.is_regular_file() && e.path().extension() == ".tdump") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto n = parse_tdump_filename(f.filename().string());
    if (!n) {
      say(log, "skipping unrecognised dump name " + f.filename().string());
      continue;
    }
    found[n->kind][n->item_id][n->condition_id][n->layer] = f;
  }
  if (found.empty()) throw AnalysisInputError("no .tdump files in " + opt.dumps_dir.string());

  AnalyzeResult result;
  int layer = opt.layer;
  if (layer < 0) {
    for (const auto& [kind, items] : found)
      for (const auto& [item, conds] : items)
        for (const auto& [cond, layers] : conds) layer = std::max(layer, layers.rbegin()->first);
  }
  result.layer = layer;
  fs::create_directories(opt.out_dir);

  auto path_for = [&](DumpKind k, const std::string& item, const std::string& cond) -> const fs::path* {
    const auto ki = found.find(k);
    if (ki == found.end()) return nullptr;
    const auto ii = ki->second.find(item);
    if (ii == ki->second.end()) return nullptr;
    const auto ci = ii->second.find(cond);
    if (ci == ii->second.end()) return nullptr;
    const auto li = ci->second.find(layer);
    return li == ci->second.end() ? nullptr : &li->second;
  };

  // Attention deltas.
  if (const auto it = found.find(DumpKind::Attention); it != found.end()) {
    for (const auto& [item, conds] : it->second) {
      const fs::path* clean_path = path_for(DumpKind::Attention, item, opt.clean_condition);
      if (!clean_path) {
        say(log, "no clean attention dump for " + item + " at layer " + std::to_string(layer));
        continue;
      }
      const auto clean = read_tdump(*clean_path);
      std::vector<std::pair<std::string, AttentionDelta>> deltas;
      for (const auto& [cond, _] : conds) {
        if (cond == opt.clean_condition) continue;
        const fs::path* p = path_for(DumpKind::Attention, item, cond);
        if (!p) continue;
        deltas.emplace_back(cond, attention_delta(clean, read_tdump(*p), opt.heads));
      }
      std::vector<double> pooled;
      for (const auto& [_, d] : deltas) pooled.insert(pooled.end(), d.values.begin(), d.values.end());
      if (pooled.empty()) continue;
      const double threshold = percentile(pooled, 90.0);
      for (const auto& [cond, d] : deltas) {
        render_heatmap(d, opt.out_dir / "heatmaps" / (safe_file_stem(item) + "__" + safe_file_stem(cond)));
        double sum = 0;
        for (double v : d.values) sum += v;
        result.attention.push_back({item, cond, sum / static_cast<double>(d.values.size()),
                                    *std::max_element(d.values.begin(), d.values.end()), threshold,
                                    count_above(d.values, threshold)});
      }
    }
  }

  // Embedding similarity and t-SNE.
  std::vector<double> points;
  std::size_t dim = 0;
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, std::string>> point_ids;
  if (const auto it = found.find(DumpKind::Embedding); it != found.end()) {
    for (const auto& [item, conds] : it->second) {
      std::map<std::string, std::vector<double>> summaries;
      for (const auto& [cond, _] : conds)
        if (const fs::path* p = path_for(DumpKind::Embedding, item, cond))
          summaries[cond] = embedding_summary(read_tdump(*p));
      for (const auto& [cond, v] : summaries) {
        if (dim == 0) dim = v.size();
        if (v.size() != dim) throw AnalysisInputError("embedding dumps disagree on hidden size");
        points.insert(points.end(), v.begin(), v.end());
        labels.push_back(cond);
        point_ids.emplace_back(item, cond);
      }
      const auto clean = summaries.find(opt.clean_condition);
      if (clean == summaries.end()) continue;
      for (const auto& [cond, v] : summaries)
        if (cond != opt.clean_condition) result.similarity.push_back({item, cond, cosine_similarity(clean->second, v)});
    }
  }
  const std::size_t n = labels.size();
  if (n < 4) {
    result.tsne_skipped = "t-SNE needs at least 4 embedding summaries, found " + std::to_string(n);
  } else if (!(opt.tsne.perplexity < (static_cast<double>(n) - 1) / 3)) {
    result.tsne_skipped = "perplexity too large for " + std::to_string(n) + " points";
  } else {
    result.tsne = tsne(points, dim, opt.tsne);
  }
  if (!result.tsne_skipped.empty()) say(log, result.tsne_skipped);

  std::string att = "item_id,condition_id,layer,heads,mean,max,p90_threshold,above_p90\n";
  for (const auto& r : result.attention)
    att += csv_quote(r.item_id) + "," + csv_quote(r.condition_id) + "," + std::to_string(layer) + "," +
           std::string(to_string(opt.heads)) + "," + num(r.mean) + "," + num(r.max) + "," + num(r.threshold) + "," +
           std::to_string(r.above) + "\n";
  write_file_atomic(opt.out_dir / "attention_summary.csv", att);

  std::string sim = "item_id,condition_id,layer,cosine\n";
  for (const auto& r : result.similarity)
    sim += csv_quote(r.item_id) + "," + csv_quote(r.condition_id) + "," + std::to_string(layer) + "," +
           num(r.cosine) + "\n";
  write_file_atomic(opt.out_dir / "similarity.csv", sim);

  json meta{{"layer", layer},
            {"head_aggregation", std::string(to_string(opt.heads))},
            {"clean_condition", opt.clean_condition},
            {"attention_pairs", result.attention.size()},
            {"similarity_pairs", result.similarity.size()}};
  if (result.tsne) {
    const int exag = opt.tsne.exaggeration_iterations >= 0 ? opt.tsne.exaggeration_iterations : opt.tsne.iterations / 4;
    meta["tsne"] = {{"points", n},
                    {"perplexity", opt.tsne.perplexity},
                    {"iterations", opt.tsne.iterations},
                    {"early_exaggeration", opt.tsne.early_exaggeration},
                    {"exaggeration_iterations", exag},
                    {"learning_rate", opt.tsne.learning_rate},
                    {"seed", opt.tsne.seed},
                    {"prng", std::string(kPrngName)},
                    {"kl_after_exaggeration", result.tsne->kl_after_exaggeration},
                    {"kl_final", result.tsne->kl_final}};
    std::string csv = "item_id,condition_id,x,y\n";
    for (std::size_t i = 0; i < n; ++i)
      csv += csv_quote(point_ids[i].first) + "," + csv_quote(point_ids[i].second) + "," +
             num(result.tsne->coords[2 * i]) + "," + num(result.tsne->coords[2 * i + 1]) + "\n";
    write_file_atomic(opt.out_dir / "tsne.csv", csv);
    render_scatter(result.tsne->coords, labels, opt.out_dir / "tsne.png");
  } else {
    meta["tsne"] = {{"skipped", result.tsne_skipped}};
  }
  write_file_atomic(opt.out_dir / "analysis.json", meta.dump(2) + "\n");
  return result;
}

}  // namespace wmvqa
