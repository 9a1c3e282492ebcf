// wmvqa: render watermark conditions, query models, grade and report PDR
// tables, and analyze probe dumps.
//
// Exit codes: 0 success, 1 validation, 2 transport, 3 analysis input.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wmvqa/config.hpp"
#include "wmvqa/corpus.hpp"
#include "wmvqa/errors.hpp"
#include "wmvqa/harness.hpp"
#include "wmvqa/watermark.hpp"

namespace {

using namespace wmvqa;

enum Exit { kOk = 0, kValidation = 1, kTransport = 2, kAnalysis = 3 };

void log_line(const std::string& s) { std::cerr << "wmvqa: " << s << '\n'; }

ExperimentConfig load_with_overrides(const std::string& path, const std::string& preset_name,
                                     const std::string& out_dir) {
  auto cfg = load_config(path);
  if (!preset_name.empty()) apply_preset(cfg, preset_name);
  if (!out_dir.empty()) cfg.output = out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark robustness harness for document VQA models"};
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "Check a config (and its manifests) or standalone manifests");
  std::string validate_config;
  std::vector<std::string> validate_manifests;
  validate->add_option("config", validate_config, "Experiment config (TOML)");
  validate->add_option("--manifest", validate_manifests, "JSONL manifest to check");

  // render
  auto* render = app.add_subcommand("render", "Render watermarked copies of a corpus");
  std::string render_config, render_preset, render_manifest, render_out;
  std::string position = "center", content = "MARK", color = "black";
  double opacity = 0.5, area_ratio = 0.1, angle = 0.0;
  int jpeg_quality = 0;
  render->add_option("config", render_config, "Experiment config; renders its whole grid");
  render->add_option("--preset", render_preset, "Replace the config grid with a named preset");
  render->add_option("--manifest", render_manifest, "Single-condition mode: source manifest");
  render->add_option("--out", render_out, "Output directory");
  render->add_option("--position", position, "center | top-left | scattered")->capture_default_str();
  render->add_option("--content", content, "MARK, symbol:###, mask, ...")->capture_default_str();
  render->add_option("--opacity", opacity, "Alpha in [0, 1]")->capture_default_str();
  render->add_option("--area-ratio", area_ratio, "Watermark area / image area")->capture_default_str();
  render->add_option("--angle", angle, "Degrees, counterclockwise")->capture_default_str();
  render->add_option("--color", color, "Name or #rrggbb")->capture_default_str();
  render->add_option("--jpeg-quality", jpeg_quality, "JPEG defense quality, 0 = off")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Render, query, grade and aggregate");
  std::string run_config, run_preset, run_out;
  bool quiet = false;
  run->add_option("config", run_config, "Experiment config (TOML)")->required();
  run->add_option("--preset", run_preset, "Replace the config grid with a named preset");
  run->add_option("--out", run_out, "Override the output directory");
  run->add_flag("--quiet", quiet, "Do not print the summary tables");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Attention deltas, cosine similarity and t-SNE from probe dumps");
  AnalyzeOptions aopt;
  std::string dumps, aout, heads = "mean";
  analyze->add_option("--dumps", dumps, "Directory of .tdump files")->required();
  analyze->add_option("--out", aout, "Output directory")->required();
  analyze->add_option("--clean", aopt.clean_condition, "Clean condition id")->capture_default_str();
  analyze->add_option("--layer", aopt.layer, "Layer index, -1 = deepest present")->capture_default_str();
  analyze->add_option("--heads", heads, "Head aggregation: mean | max")->capture_default_str();
  analyze->add_option("--perplexity", aopt.tsne.perplexity, "t-SNE perplexity")->capture_default_str();
  analyze->add_option("--iterations", aopt.tsne.iterations, "t-SNE iterations")->capture_default_str();
  analyze->add_option("--seed", aopt.tsne.seed, "t-SNE seed")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Re-grade a run directory from its reply log");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "Directory written by `run`")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*validate) {
      if (validate_config.empty() && validate_manifests.empty())
        throw ValidationError("give a config or at least one --manifest");
      if (!validate_config.empty()) {
        const auto cfg = load_config(validate_config);
        cfg.validate();
        std::size_t items = 0;
        for (const auto& [name, path] : cfg.datasets) items += load_manifest(path).items.size();
        std::cout << "ok: " << cfg.datasets.size() << " dataset(s), " << items << " item(s), "
                  << cfg.grid.expand().size() << " condition(s), " << cfg.models.size() << " model(s)\n";
      }
      for (const auto& m : validate_manifests) {
        const auto ds = load_manifest(m);
        std::cout << "ok: " << m << ": " << ds.items.size() << " item(s)\n";
      }
    } else if (*render) {
      if (!render_config.empty()) {
        auto cfg = load_with_overrides(render_config, render_preset, render_out);
        const auto conds = render_conditions(cfg, log_line);
        std::cout << "rendered " << conds.size() << " dataset-condition pair(s) under " << cfg.output.string()
                  << "/conditions\n";
      } else {
        if (render_manifest.empty() || render_out.empty())
          throw ValidationError("render needs a config, or --manifest and --out");
        WatermarkSpec spec;
        spec.position = parse_position(position);
        spec.content = parse_content(content);
        spec.color = parse_color(color);
        spec.opacity = opacity;
        spec.area_ratio = area_ratio;
        spec.angle = angle;
        const auto ds = load_manifest(render_manifest);
        render_condition(ds, spec, render_out, {4, jpeg_quality});
        std::cout << spec.condition_id() << ": " << ds.items.size() << " image(s) -> " << render_out << "\n";
      }
    } else if (*run) {
      const auto cfg = load_with_overrides(run_config, run_preset, run_out);
      const auto result = run_experiment(cfg, {{}, quiet ? LogFn{} : LogFn(log_line), false});
      if (!quiet) std::cout << result.summary;
      std::cout << "report: " << (result.out_dir / "report.json").string() << "\n";
    } else if (*analyze) {
      aopt.dumps_dir = dumps;
      aopt.out_dir = aout;
      aopt.heads = parse_head_aggregation(heads);
      const auto r = analyze_dumps(aopt, log_line);
      std::cout << "layer " << r.layer << ": " << r.attention.size() << " attention delta(s), " << r.similarity.size()
                << " similarity pair(s), t-SNE " << (r.tsne ? "written" : "skipped") << "\n";
    } else if (*report) {
      const auto result = regrade(run_dir, log_line);
      std::cout << result.summary;
    }
  } catch (const AnalysisInputError& e) {
    log_line(std::string("analysis input error: ") + e.what());
    return kAnalysis;
  } catch (const TransportError& e) {
    log_line(std::string("transport error: ") + e.what());
    return kTransport;
  } catch (const Error& e) {
    log_line(std::string("error: ") + e.what());
    return kValidation;
  } catch (const std::exception& e) {
    log_line(std::string("unexpected error: ") + e.what());
    return kValidation;
  }
  return kOk;
}
