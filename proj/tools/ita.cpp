// ita: evaluate, inspect and generate crop/segment matching runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ita/datasets.hpp"
#include "ita/eval.hpp"
#include "ita/geometry.hpp"
#include "ita/llm.hpp"
#include "ita/synthctrl.hpp"
#include "ita/textseg.hpp"

namespace {

std::filesystem::path default_seed_file() {
#ifdef ITA_RESOURCE_DIR
  return std::filesystem::path(ITA_RESOURCE_DIR) / "llm_replay_seed.jsonl";
#else
  return {};
#endif
}

int run_eval(ita::RunConfig cfg) {
  if (const char* env = std::getenv("ITA_CACHE_DIR"); env && *env) cfg.cache_dir = env;
  if (cfg.llm_seed.empty()) cfg.llm_seed = default_seed_file();
  if (cfg.output.empty()) throw ita::Error(ita::ErrorKind::kInvalidConfig, "--out is required");
  const auto manifest = ita::load_manifest(cfg.manifest);
  ita::Evaluator ev(cfg);
  std::vector<ita::InstanceResult> partial;
  try {
    const auto result = ev.run(manifest, &partial);
    ita::write_outputs(cfg.output, result, cfg);
    const auto& r = result.report;
    std::cout << result.fingerprint << '\n'
              << "n=" << r.n_instances << " I2T=" << r.i2t.percent << " T2I=" << r.t2i.percent
              << " Group=" << r.group.percent << '\n';
  } catch (...) {
    std::filesystem::create_directories(cfg.output);
    ita::write_matches(cfg.output / "matches.partial.jsonl", partial);
    std::cerr << "partial results (" << partial.size() << " instances) written to "
              << (cfg.output / "matches.partial.jsonl").string() << '\n';
    throw;
  }
  return 0;
}

int run_crops(const std::string& mode, int side, const std::string& out) {
  ita::CropConfig cfg;
  cfg.mode = ita::crop_mode_from_string(mode);
  cfg.image_side = side;
  const auto lattice = ita::generate_lattice(cfg);
  if (out.empty() || out == "-") {
    ita::write_lattice_csv(std::cout, lattice);
  } else {
    std::ofstream f(out);
    if (!f) throw ita::Error(ita::ErrorKind::kIo, "cannot write " + out);
    ita::write_lattice_csv(f, lattice);
  }
  return 0;
}

int run_segment(const std::string& caption, const std::string& granularity, const std::string& scene_graph,
                const std::string& replay, const std::string& llm_url) {
  const auto g = ita::granularity_from_string(granularity);
  ita::SegmentSet set;
  if (!scene_graph.empty()) {
    std::ifstream in(scene_graph);
    if (!in) throw ita::Error(ita::ErrorKind::kIo, "cannot open " + scene_graph);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ita::Error(ita::ErrorKind::kSchema, scene_graph + ": " + e.what());
    }
    set = ita::segments_from_scene_graph(ita::scene_graph_from_json(j), g);
  } else {
    if (caption.empty()) throw ita::Error(ita::ErrorKind::kInvalidConfig, "--caption or --scene-graph required");
    auto store = std::make_shared<ita::ReplayStore>(std::filesystem::path(replay));
    store->load(default_seed_file());
    std::shared_ptr<ita::LlmClient> upstream;
    if (!llm_url.empty()) upstream = std::make_shared<ita::HttpLlmClient>(ita::HttpLlmOptions{llm_url});
    ita::ReplayingLlmClient client(store, upstream);
    set = ita::segments_from_llm(caption, g, client);
  }
  nlohmann::json out{{"caption", set.caption},
                     {"granularity", ita::to_string(set.granularity)},
                     {"provenance", ita::to_string(set.provenance)},
                     {"segments", set.segments}};
  if (!set.raw_text.empty()) out["raw_text"] = set.raw_text;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_synth(const std::string& variant, std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto m = ita::synth::emit_manifest(ita::synth::variant_from_string(variant), n, seed, out);
  std::cout << "wrote " << m.size() << " instances (" << 2 * m.size() << " images) to "
            << (std::filesystem::path(out) / (variant + ".jsonl")).string() << '\n';
  return 0;
}

int run_simdump(ita::RunConfig cfg, const std::string& id) {
  if (cfg.llm_seed.empty()) cfg.llm_seed = default_seed_file();
  if (const char* env = std::getenv("ITA_CACHE_DIR"); env && *env) cfg.cache_dir = env;
  const auto manifest = ita::load_manifest(cfg.manifest);
  ita::Evaluator ev(cfg);
  for (const auto& inst : manifest.instances) {
    if (!id.empty() && inst.id != id) continue;
    std::cout << ita::instance_json(ev.evaluate(inst, manifest.base_dir)).dump() << '\n';
    if (!id.empty()) return 0;
  }
  if (!id.empty()) throw ita::Error(ita::ErrorKind::kSchema, "no instance with id '" + id + "'");
  return 0;
}

void add_run_options(CLI::App* cmd, ita::RunConfig& cfg) {
  cmd->add_option("--manifest", cfg.manifest, "Manifest JSONL")->required();
  cmd->add_option("--backend", cfg.backend, "synthetic-bound | synthetic-bag | http:URL")->capture_default_str();
  cmd->add_option("--crops", cfg.crops, "none | grid | overlap")->capture_default_str();
  cmd->add_option("--segments", cfg.segments, "none | scene-graph:<g> | llm:<g> | file:<g>:<path>")
      ->capture_default_str();
  cmd->add_option("--cache-dir", cfg.cache_dir, "Persistent embedding cache (ITA_CACHE_DIR overrides)");
  cmd->add_option("--llm-url", cfg.llm_url, "LLM segmentation endpoint, http://host:port");
  cmd->add_option("--llm-replay", cfg.llm_replay, "LLM replay store (JSONL)");
  cmd->add_option("--large-extent", cfg.synthetic.large_extent, "Synthetic apparent-size threshold")
      ->capture_default_str();
  cmd->add_option("--visible-fraction", cfg.synthetic.visible_fraction, "Synthetic visibility threshold")
      ->capture_default_str();
  cmd->add_option("--batch", cfg.embed.batch_size, "Embedding batch size")->capture_default_str();
  cmd->add_option("--in-flight", cfg.embed.max_in_flight, "Concurrent embedding batches")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crop/segment matching for image-text retrieval"};
  app.require_subcommand(1);

  ita::RunConfig eval_cfg;
  auto* eval = app.add_subcommand("eval", "Score a manifest and write reports");
  add_run_options(eval, eval_cfg);
  eval->add_option("--out", eval_cfg.output, "Output directory")->required();
  eval->add_option("--jobs", eval_cfg.parallelism, "Instance workers")->capture_default_str();
  eval->add_option("--hist-bins", eval_cfg.histogram_bins, "Histogram bins")->capture_default_str();
  eval->add_option("--hist-scale", eval_cfg.histogram_scale, "Histogram-only similarity scale")
      ->capture_default_str();
  eval->add_option("--hist-bias", eval_cfg.histogram_bias, "Histogram-only similarity bias")->capture_default_str();

  std::string crop_mode = "overlap", crop_out;
  int side = ita::kWorkingSide;
  auto* crops = app.add_subcommand("crops", "Dump the crop lattice as CSV");
  crops->add_option("--mode", crop_mode, "grid | overlap")->capture_default_str();
  crops->add_option("--side", side, "Working image side")->capture_default_str();
  crops->add_option("--out", crop_out, "CSV path (default stdout)");

  std::string caption, granularity = "coarse", scene_graph, replay, llm_url;
  auto* segment = app.add_subcommand("segment", "Segment a caption (LLM replay/endpoint or scene graph)");
  segment->add_option("--caption", caption, "Caption text");
  segment->add_option("--granularity", granularity, "fine | mid | coarse")->capture_default_str();
  segment->add_option("--scene-graph", scene_graph, "Scene graph JSON file");
  segment->add_option("--llm-replay", replay, "LLM replay store (JSONL)");
  segment->add_option("--llm-url", llm_url, "LLM segmentation endpoint, http://host:port");

  std::string variant = "color", synth_out = ".";
  std::size_t n = 10;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic swap suite");
  synth->add_option("--variant", variant, "color | size | material | quantity")->capture_default_str();
  synth->add_option("--n", n, "Instances")->capture_default_str();
  synth->add_option("--seed", seed, "Suite seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

  ita::RunConfig dump_cfg;
  std::string dump_id;
  auto* simdump = app.add_subcommand("simdump", "Print per-instance similarity tables and matches");
  add_run_options(simdump, dump_cfg);
  simdump->add_option("--id", dump_id, "Only this instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*eval) return run_eval(eval_cfg);
    if (*crops) return run_crops(crop_mode, side, crop_out);
    if (*segment) return run_segment(caption, granularity, scene_graph, replay, llm_url);
    if (*synth) return run_synth(variant, n, seed, synth_out);
    if (*simdump) return run_simdump(dump_cfg, dump_id);
  } catch (const ita::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ita::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
