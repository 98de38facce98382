#include "cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "exifcons/checkpoint.hpp"
#include "exifcons/combiner.hpp"
#include "exifcons/config.hpp"
#include "exifcons/consistency_net.hpp"
#include "exifcons/errors.hpp"
#include "exifcons/evaluator.hpp"
#include "exifcons/localizer.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/pair_sampler.hpp"
#include "exifcons/synth.hpp"

namespace exifcons::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config);
  if (g.workers > 0) cfg.workers = g.workers;
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

/// "<artifact>.run.json" next to artifacts whose own format has no room for
/// the config echo.
void write_run_manifest(const fs::path& artifact, const std::string& command,
                        const ExperimentConfig& cfg) {
  json j;
  j["command"] = command;
  j["artifact"] = artifact.filename().string();
  j["tool_version"] = version();
  j["config"] = json::parse(cfg.to_json());
  write_text(fs::path(artifact.string() + ".run.json"), j.dump(2) + "\n");
}

std::vector<PhotoRecord> load_records(const fs::path& path) {
  auto records = read_records(path);
  spdlog::info("read {} records from {}", records.size(), path.string());
  return records;
}

void set_output_dim(ModelConfig& model, const AttributeVocabulary& vocab,
                    const std::string& camera_attribute) {
  switch (model.objective) {
    case Objective::kExif:
      model.output_dim = int(label_dim(vocab));
      break;
    case Objective::kCamera: {
      const auto attr = vocab.attribute_index(camera_attribute);
      if (!attr) throw InputError("vocabulary has no '" + camera_attribute + "' attribute");
      model.output_dim = int(vocab.values[*attr].size());
      break;
    }
    default:
      model.output_dim = 1;
  }
}

std::pair<int, int> parse_size(const std::string& s) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || !in.eof() || w <= 0 || h <= 0) {
    throw UsageError("--size must look like 512x384, got '" + s + "'");
  }
  return {w, h};
}

// ---- subcommands ------------------------------------------------------------

struct IngestArgs {
  std::string manifest, out;
};

void cmd_ingest(const Globals& g, const IngestArgs& a) {
  const auto cfg = load_config(g);
  const auto entries = read_manifest(a.manifest);
  std::vector<PhotoRecord> records(entries.size());
  parallel_for(entries.size(), cfg.workers, [&](std::size_t i) {
    records[i] = extract_metadata(entries[i].path, entries[i].sidecar);
    records[i].photo_id = entries[i].photo_id;
  });
  write_records(a.out, records);
  write_run_manifest(a.out, "ingest", cfg);
  spdlog::info("wrote {} records to {}", records.size(), a.out);
}

struct VocabArgs {
  std::string records, out;
  std::optional<std::size_t> min_attr, min_value;
};

void cmd_vocab(const Globals& g, const VocabArgs& a) {
  auto cfg = load_config(g);
  if (a.min_attr) cfg.min_attr_count = *a.min_attr;
  if (a.min_value) cfg.min_value_count = *a.min_value;
  cfg.validate();
  const auto records = load_records(a.records);
  const auto vocab = build_vocabulary(records, cfg.min_attr_count, cfg.min_value_count);
  write_text(a.out, vocab.to_json());
  write_run_manifest(a.out, "vocab", cfg);
  spdlog::info("vocabulary: {} attributes, label dimension {}", vocab.size(), label_dim(vocab));
}

struct TrainArgs {
  std::string records, vocab, out;
  std::optional<int> iterations, batch_size;
};

void cmd_train(const Globals& g, const TrainArgs& a) {
  auto cfg = load_config(g);
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  const auto records = load_records(a.records);
  const auto vocab = AttributeVocabulary::from_json(read_text(a.vocab));
  auto options = cfg.train_options();
  set_output_dim(cfg.model, vocab, options.camera_attribute);
  cfg.validate();
  const auto index = index_corpus(records, vocab);
  PhotoStore store;
  ConsistencyNet<float> net(cfg.model, cfg.seed);
  const auto ckpt_path = resolve_checkpoint_path(a.out);
  const std::string experiment = cfg.to_json();
  spdlog::info("training {} objective, output_dim {}, {} iterations of batch {}",
               to_string(cfg.model.objective), cfg.model.output_dim, cfg.iterations,
               cfg.batch_size);
  double running = 0.0;
  options.on_step = [&](int step, double loss) {
    running = step == 1 ? loss : 0.98 * running + 0.02 * loss;
    if (step % 100 == 0 || step == cfg.iterations) {
      spdlog::info("step {} loss {:.4f} (smoothed {:.4f})", step, loss, running);
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.iterations) {
      write_checkpoint(ckpt_path, make_checkpoint(net, vocab, step, experiment));
    }
  };
  const auto state = train(net, options, index, vocab, store);
  write_checkpoint(ckpt_path, make_checkpoint(net, vocab, state.step, experiment));
  spdlog::info("wrote {}", ckpt_path.string());
}

struct EvalAttrsArgs {
  std::string ckpt, records, out;
  std::optional<int> pairs;
};

void cmd_eval_attrs(const Globals& g, const EvalAttrsArgs& a) {
  auto cfg = load_config(g);
  if (a.pairs) cfg.pairs_per_attribute = *a.pairs;
  cfg.validate();
  const auto ckpt = read_checkpoint(resolve_checkpoint_path(a.ckpt));
  const auto net = restore_model(ckpt);
  const auto records = load_records(a.records);
  const auto index = index_corpus(records, ckpt.vocab);
  PhotoStore store;
  const auto table = evaluate_attribute_accuracy(*net, index, ckpt.vocab, store,
                                                 cfg.pairs_per_attribute, cfg.seed, cfg.workers);
  json j;
  j["tool_version"] = version();
  j["config"] = json::parse(cfg.to_json());
  j["attributes"] = json::array();
  for (const auto& row : table) {
    j["attributes"].push_back({{"attribute", row.attribute},
                               {"accuracy", row.accuracy ? json(*row.accuracy) : json(nullptr)},
                               {"pairs", row.pairs}});
    if (row.accuracy) {
      std::printf("%-32s %6.4f  (%d pairs)\n", row.attribute.c_str(), *row.accuracy, row.pairs);
    } else {
      std::printf("%-32s    n/a  (no pairs)\n", row.attribute.c_str());
    }
  }
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
}

struct TrainCombinerArgs {
  std::string ckpt, records, out;
  std::optional<int> iterations;
};

void cmd_train_combiner(const Globals& g, const TrainCombinerArgs& a) {
  auto cfg = load_config(g);
  if (a.iterations) cfg.combiner_iterations = *a.iterations;
  cfg.validate();
  auto ckpt = read_checkpoint(resolve_checkpoint_path(a.ckpt));
  const auto net = restore_model(ckpt);
  const auto records = load_records(a.records);
  const auto index = index_corpus(records, ckpt.vocab);
  PhotoStore store;
  auto options = cfg.combiner_options();
  options.on_step = [&](int step, double loss) {
    if (step % 500 == 0 || step == options.iterations) {
      spdlog::info("combiner step {} loss {:.4f}", step, loss);
    }
  };
  const auto combiner = train_combiner(*net, index, store, options, cfg.workers);
  attach_combiner(ckpt, combiner, options.iterations);
  ckpt.experiment_json = cfg.to_json();
  const auto out = resolve_checkpoint_path(a.out);
  write_checkpoint(out, ckpt);
  spdlog::info("wrote {}", out.string());
}

struct Model {
  Checkpoint ckpt;
  std::unique_ptr<ConsistencyNet<float>> net;
  std::unique_ptr<Combiner> combiner;
};

Model load_model(const std::string& path) {
  Model m;
  m.ckpt = read_checkpoint(resolve_checkpoint_path(path));
  m.net = restore_model(m.ckpt);
  m.combiner = restore_combiner(m.ckpt);
  return m;
}

std::vector<std::pair<std::string, fs::path>> collect_images(
    const std::vector<std::string>& images, const std::string& manifest) {
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& i : images) out.emplace_back(fs::path(i).stem().string(), i);
  if (!manifest.empty()) {
    for (const auto& e : read_manifest(manifest)) {
      out.emplace_back(e.path.stem().string(), e.path);
    }
  }
  if (out.empty()) throw UsageError("no input images: pass --image or --manifest");
  return out;
}

struct LocalizeArgs {
  std::vector<std::string> images;
  std::string manifest, ckpt, out;
  std::optional<int> n_longest;
  bool dump_affinity = false;
};

void cmd_localize(const Globals& g, const LocalizeArgs& a) {
  auto cfg = load_config(g);
  if (a.n_longest) cfg.n_longest = *a.n_longest;
  cfg.validate();
  const auto inputs = collect_images(a.images, a.manifest);
  const auto model = load_model(a.ckpt);
  const ModelScorer scorer(*model.net, *model.combiner);
  const auto options = cfg.localizer_options();
  const auto echo = cfg.to_json();
  for (const auto& [stem, path] : inputs) {
    const auto result = localize(load_image(path), scorer, options);
    write_splice_result(a.out, stem, result, a.dump_affinity, echo);
    spdlog::info("{}: score {:.4f}, {} patches{}", stem, result.score, result.grid.size(),
                 result.flags.empty() ? "" : ", flags: " + result.flags.front());
  }
}

struct DetectArgs {
  std::string ckpt, manifest, out, maps;
  std::optional<int> n_longest;
};

void cmd_detect(const Globals& g, const DetectArgs& a) {
  auto cfg = load_config(g);
  if (a.n_longest) cfg.n_longest = *a.n_longest;
  cfg.validate();
  const auto entries = read_manifest(a.manifest);
  const auto model = load_model(a.ckpt);
  const ModelScorer scorer(*model.net, *model.combiner);
  const auto options = cfg.localizer_options();
  const auto echo = cfg.to_json();
  json j;
  j["tool_version"] = version();
  j["config"] = json::parse(echo);
  j["scores"] = json::array();
  for (const auto& e : entries) {
    const auto result = localize(load_image(e.path), scorer, options);
    if (!a.maps.empty()) write_splice_result(a.maps, e.path.stem().string(), result, false, echo);
    j["scores"].push_back({{"photo_id", e.photo_id}, {"detection_score", result.score}});
    spdlog::info("{}: {:.4f}", e.photo_id, result.score);
  }
  write_text(a.out, j.dump(2) + "\n");
}

struct EvaluateArgs {
  std::string pred, dataset, root, out, csv;
  std::optional<int> boundary_ignore;
};

void cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  auto cfg = load_config(g);
  if (a.boundary_ignore) cfg.boundary_ignore = *a.boundary_ignore;
  cfg.validate();
  const auto items = load_benchmark(a.dataset, a.root);
  const auto report = evaluate_predictions(a.dataset, items, a.pred, cfg.evaluation_options());
  write_report(a.out, report, cfg.to_json());
  if (!a.csv.empty()) write_report_csv(a.csv, report);
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v) {
      std::printf("%-18s %.4f\n", name, *v);
    } else {
      std::printf("%-18s n/a\n", name);
    }
  };
  show("detection mAP", report.detection_map);
  show("localization mAP", report.localization_map);
  show("p-mAP", report.permuted_map);
  show("cIOU", report.ciou);
  show("MCC", report.mcc);
  show("F1", report.f1);
}

struct SynthArgs {
  std::string profiles, size = "512x384", out;
  int n = 50;
  std::optional<std::uint64_t> seed;
  bool write_profiles_only = false;
};

void cmd_synth(const Globals& g, const SynthArgs& a) {
  auto cfg = load_config(g);
  if (a.seed) cfg.seed = *a.seed;
  const auto [w, h] = parse_size(a.size);
  const auto profiles = a.profiles.empty() ? default_profiles() : read_profiles(a.profiles);
  if (a.n < 1) throw UsageError("--n must be positive");
  gen_corpus(profiles, a.n, w, h, cfg.seed, a.out, cfg.workers);
  write_run_manifest(fs::path(a.out) / "manifest.jsonl", "synth", cfg);
  spdlog::info("wrote {} photos from {} profiles to {}", std::size_t(a.n) * profiles.size(),
               profiles.size(), a.out);
}

struct SynthSplicesArgs {
  std::string corpus, out;
  int n = 40;
  double fraction = 0.15;
  std::optional<std::uint64_t> seed;
};

void cmd_synth_splices(const Globals& g, const SynthSplicesArgs& a) {
  auto cfg = load_config(g);
  if (a.seed) cfg.seed = *a.seed;
  const auto corpus = read_synth_corpus(a.corpus);
  gen_splice_set(corpus, a.n, a.fraction, cfg.seed, a.out);
  write_run_manifest(fs::path(a.out) / "manifest.jsonl", "synth-splices", cfg);
  spdlog::info("wrote {} spliced and {} authentic images to {}", a.n, a.n, a.out);
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return 1;
    case ErrorKind::kData:
      return 2;
    case ErrorKind::kRuntime:
      return 3;
  }
  return 3;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Splice detection and localization from learned EXIF self-consistency",
               "exifcons"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string("exifcons ") + version());

  Globals g;
  app.add_option("--config", g.config, "Experiment config JSON (flags override it)")
      ->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "Cap on data-loading threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_flag("--quiet,-q", g.quiet, "Only log warnings and errors");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Extract metadata records from a manifest");
  c_ingest->add_option("--manifest", ingest.manifest, "JSON-lines photo manifest")->required();
  c_ingest->add_option("--out", ingest.out, "records.jsonl to write")->required();

  VocabArgs vocab;
  auto* c_vocab = app.add_subcommand("vocab", "Build the pruned attribute vocabulary");
  c_vocab->add_option("--records", vocab.records)->required();
  c_vocab->add_option("--min-attr", vocab.min_attr, "Keep attributes in more than K photos");
  c_vocab->add_option("--min-value", vocab.min_value, "Keep values seen at least V times");
  c_vocab->add_option("--out", vocab.out)->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the consistency network");
  c_train->add_option("--records", tr.records)->required();
  c_train->add_option("--vocab", tr.vocab)->required();
  c_train->add_option("--out", tr.out, "Checkpoint directory or file")->required();
  c_train->add_option("--iterations", tr.iterations);
  c_train->add_option("--batch-size", tr.batch_size);

  EvalAttrsArgs ea;
  auto* c_ea = app.add_subcommand("eval-attrs", "Per-attribute pair accuracy on held-out photos");
  c_ea->add_option("--ckpt", ea.ckpt)->required();
  c_ea->add_option("--records", ea.records)->required();
  c_ea->add_option("--pairs", ea.pairs, "Pairs per attribute");
  c_ea->add_option("--out", ea.out, "Optional JSON table");

  TrainCombinerArgs tc;
  auto* c_tc = app.add_subcommand("train-combiner", "Train the overall-consistency combiner");
  c_tc->add_option("--ckpt", tc.ckpt)->required();
  c_tc->add_option("--records", tc.records)->required();
  c_tc->add_option("--out", tc.out)->required();
  c_tc->add_option("--iterations", tc.iterations);

  LocalizeArgs lo;
  auto* c_lo = app.add_subcommand("localize", "Consistency map, splice mask and score per image");
  c_lo->add_option("--ckpt", lo.ckpt)->required();
  c_lo->add_option("--image", lo.images, "Image file (repeatable)");
  c_lo->add_option("--manifest", lo.manifest, "JSON-lines manifest of images");
  c_lo->add_option("--out", lo.out, "Output directory")->required();
  c_lo->add_option("--n-longest", lo.n_longest, "Patches along the longest side");
  c_lo->add_flag("--dump-affinity", lo.dump_affinity, "Also write the raw affinity matrix");

  DetectArgs de;
  auto* c_de = app.add_subcommand("detect", "Detection scores for every image of a manifest");
  c_de->add_option("--ckpt", de.ckpt)->required();
  c_de->add_option("--manifest", de.manifest)->required();
  c_de->add_option("--out", de.out, "scores.json")->required();
  c_de->add_option("--maps", de.maps, "Also write localization outputs here");
  c_de->add_option("--n-longest", de.n_longest);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score predictions against a benchmark");
  c_ev->add_option("--pred", ev.pred, "Directory written by localize")->required();
  c_ev->add_option("--dataset", ev.dataset)->required();
  c_ev->add_option("--root", ev.root, "Dataset root")->required();
  c_ev->add_option("--out", ev.out, "report.json")->required();
  c_ev->add_option("--csv", ev.csv, "Per-image CSV table");
  c_ev->add_option("--boundary-ignore", ev.boundary_ignore, "Ignore band around mask edges (px)");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Generate a synthetic multi-camera corpus");
  c_sy->add_option("--profiles", sy.profiles, "Camera profiles JSON (built-in set if omitted)");
  c_sy->add_option("--n", sy.n, "Photos per profile");
  c_sy->add_option("--size", sy.size, "WIDTHxHEIGHT");
  c_sy->add_option("--seed", sy.seed);
  c_sy->add_option("--out", sy.out)->required();

  SynthSplicesArgs ss;
  auto* c_ss = app.add_subcommand("synth-splices", "Splice a synthetic corpus into a benchmark");
  c_ss->add_option("--corpus", ss.corpus)->required();
  c_ss->add_option("--n", ss.n, "Spliced images (and as many authentic ones)");
  c_ss->add_option("--fraction", ss.fraction, "Splice area as a fraction of the image");
  c_ss->add_option("--seed", ss.seed);
  c_ss->add_option("--out", ss.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return 1;
  }

  auto logger = spdlog::stderr_color_st("exifcons");
  spdlog::set_default_logger(logger);
  spdlog::set_level(g.quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] %v");

  try {
    if (*c_ingest) cmd_ingest(g, ingest);
    if (*c_vocab) cmd_vocab(g, vocab);
    if (*c_train) cmd_train(g, tr);
    if (*c_ea) cmd_eval_attrs(g, ea);
    if (*c_tc) cmd_train_combiner(g, tc);
    if (*c_lo) cmd_localize(g, lo);
    if (*c_de) cmd_detect(g, de);
    if (*c_ev) cmd_evaluate(g, ev);
    if (*c_sy) cmd_synth(g, sy);
    if (*c_ss) cmd_synth_splices(g, ss);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    spdlog::drop("exifcons");
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    spdlog::drop("exifcons");
    return 3;
  }
  spdlog::drop("exifcons");
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"exifcons"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(int(argv.size()), argv.data());
}

}  // namespace exifcons::cli
