#include "exifcons/config.hpp"

#include <nlohmann/json.hpp>
#include <set>

#include "exifcons/errors.hpp"

#ifndef EXIFCONS_VERSION
#define EXIFCONS_VERSION "0.0.0"
#endif

namespace exifcons {

using json = nlohmann::ordered_json;

const char* version() { return EXIFCONS_VERSION; }

namespace {

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> known) {
  const std::set<std::string> names(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    if (!names.count(k)) {
      throw InputError("config: unknown key \"" + k + "\"" +
                       (where.empty() ? "" : " in \"" + where + "\""));
    }
  }
}

template <typename T>
void set_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  auto positive = [](long long v, const char* name) {
    if (v <= 0) throw InputError(std::string("config: ") + name + " must be positive");
  };
  positive(iterations, "train.iterations");
  positive(combiner_iterations, "combiner.iterations");
  if (batch_size < 2 || combiner_batch_size < 2) {
    throw InputError("config: batch sizes must be at least 2");
  }
  positive(combiner_hidden, "combiner.hidden");
  positive(crops_per_photo, "combiner.crops_per_photo");
  positive(n_longest, "localizer.n_longest");
  positive(pairs_per_attribute, "eval.pairs_per_attribute");
  positive(workers, "workers");
  positive(mean_shift_max_iterations, "localizer.max_iterations");
  if (min_attr_count < 1 || min_value_count < 1) {
    throw InputError("config: vocabulary thresholds must be at least 1");
  }
  if (!(learning_rate > 0) || !(combiner_learning_rate > 0)) {
    throw InputError("config: learning rates must be positive");
  }
  if (checkpoint_every < 0) throw InputError("config: train.checkpoint_every must be >= 0");
  if (thresholds < 2) throw InputError("config: eval.thresholds must be at least 2");
  if (boundary_ignore < 0) throw InputError("config: eval.boundary_ignore must be >= 0");
  if (!(mask_threshold >= 0 && mask_threshold <= 1)) {
    throw InputError("config: localizer.mask_threshold must be in [0, 1]");
  }
  if (bandwidth && !(*bandwidth >= 0)) throw InputError("config: bandwidth must be >= 0");
  const auto& a = augmentation;
  if (!(a.op_probability >= 0 && a.op_probability <= 1) ||
      !(a.same_probability >= 0 && a.same_probability <= 1)) {
    throw InputError("config: augmentation probabilities must be in [0, 1]");
  }
  if (a.jpeg_qualities.empty() || a.blur_sigmas.empty() || a.resize_factors.empty()) {
    throw InputError("config: augmentation parameter sets must be non-empty");
  }
  for (int q : a.jpeg_qualities) {
    if (q < 1 || q > 100) throw InputError("config: jpeg qualities must be in [1, 100]");
  }
  for (double s : a.blur_sigmas) {
    if (!(s > 0)) throw InputError("config: blur sigmas must be positive");
  }
  for (double f : a.resize_factors) {
    if (!(f > 0)) throw InputError("config: resize factors must be positive");
  }
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["workers"] = workers;
  j["model"] = json::parse(model.to_json());
  j["train"] = {{"iterations", iterations},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"checkpoint_every", checkpoint_every}};
  j["augmentation"] = {{"enabled", augmentation.enabled},
                       {"jpeg_qualities", augmentation.jpeg_qualities},
                       {"blur_sigmas", augmentation.blur_sigmas},
                       {"resize_factors", augmentation.resize_factors},
                       {"op_probability", augmentation.op_probability},
                       {"same_probability", augmentation.same_probability}};
  j["vocab"] = {{"min_attr_count", min_attr_count}, {"min_value_count", min_value_count}};
  j["combiner"] = {{"iterations", combiner_iterations},
                   {"batch_size", combiner_batch_size},
                   {"learning_rate", combiner_learning_rate},
                   {"hidden", combiner_hidden},
                   {"crops_per_photo", crops_per_photo}};
  j["localizer"] = {{"n_longest", n_longest},
                    {"mask_threshold", mask_threshold},
                    {"bandwidth", bandwidth ? json(*bandwidth) : json(nullptr)},
                    {"tolerance", mean_shift_tolerance},
                    {"max_iterations", mean_shift_max_iterations}};
  j["eval"] = {{"pairs_per_attribute", pairs_per_attribute},
               {"thresholds", thresholds},
               {"boundary_ignore", boundary_ignore}};
  j["paths"] = json(paths);
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text,
                                             const ExperimentConfig& base) {
  ExperimentConfig c = base;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw InputError("config: top level must be a JSON object");
    reject_unknown(j, "", {"seed", "workers", "model", "train", "augmentation", "vocab",
                           "combiner", "localizer", "eval", "paths", "tool_version"});
    set_if(j, "seed", c.seed);
    set_if(j, "workers", c.workers);
    if (j.contains("model")) {
      auto merged = json::parse(c.model.to_json());
      const auto& m = j.at("model");
      // Switching to the full backbone starts from the full-scale shape.
      if (m.contains("backbone") && m.at("backbone") == "full") {
        merged = json::parse(ModelConfig::full_scale(c.model.output_dim).to_json());
      }
      for (const auto& [k, v] : m.items()) merged[k] = v;
      c.model = ModelConfig::from_json(merged.dump());
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, "train", {"iterations", "batch_size", "learning_rate", "checkpoint_every"});
      set_if(t, "iterations", c.iterations);
      set_if(t, "batch_size", c.batch_size);
      set_if(t, "learning_rate", c.learning_rate);
      set_if(t, "checkpoint_every", c.checkpoint_every);
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      reject_unknown(a, "augmentation", {"enabled", "jpeg_qualities", "blur_sigmas",
                                         "resize_factors", "op_probability", "same_probability"});
      set_if(a, "enabled", c.augmentation.enabled);
      set_if(a, "jpeg_qualities", c.augmentation.jpeg_qualities);
      set_if(a, "blur_sigmas", c.augmentation.blur_sigmas);
      set_if(a, "resize_factors", c.augmentation.resize_factors);
      set_if(a, "op_probability", c.augmentation.op_probability);
      set_if(a, "same_probability", c.augmentation.same_probability);
    }
    if (j.contains("vocab")) {
      const auto& v = j.at("vocab");
      reject_unknown(v, "vocab", {"min_attr_count", "min_value_count"});
      set_if(v, "min_attr_count", c.min_attr_count);
      set_if(v, "min_value_count", c.min_value_count);
    }
    if (j.contains("combiner")) {
      const auto& m = j.at("combiner");
      reject_unknown(m, "combiner",
                     {"iterations", "batch_size", "learning_rate", "hidden", "crops_per_photo"});
      set_if(m, "iterations", c.combiner_iterations);
      set_if(m, "batch_size", c.combiner_batch_size);
      set_if(m, "learning_rate", c.combiner_learning_rate);
      set_if(m, "hidden", c.combiner_hidden);
      set_if(m, "crops_per_photo", c.crops_per_photo);
    }
    if (j.contains("localizer")) {
      const auto& l = j.at("localizer");
      reject_unknown(l, "localizer",
                     {"n_longest", "mask_threshold", "bandwidth", "tolerance", "max_iterations"});
      set_if(l, "n_longest", c.n_longest);
      set_if(l, "mask_threshold", c.mask_threshold);
      if (l.contains("bandwidth")) {
        const auto& b = l.at("bandwidth");
        if (b.is_null() || b == "median") {
          c.bandwidth.reset();
        } else {
          c.bandwidth = b.get<double>();
        }
      }
      set_if(l, "tolerance", c.mean_shift_tolerance);
      set_if(l, "max_iterations", c.mean_shift_max_iterations);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e, "eval", {"pairs_per_attribute", "thresholds", "boundary_ignore"});
      set_if(e, "pairs_per_attribute", c.pairs_per_attribute);
      set_if(e, "thresholds", c.thresholds);
      set_if(e, "boundary_ignore", c.boundary_ignore);
    }
    if (j.contains("paths")) {
      for (const auto& [k, v] : j.at("paths").items()) c.paths[k] = v.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  return from_json(text, ExperimentConfig{});
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(read_text(path));
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions o;
  o.iterations = iterations;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.seed = seed;
  o.workers = workers;
  o.augmentation = augmentation;
  return o;
}

CombinerOptions ExperimentConfig::combiner_options() const {
  CombinerOptions o;
  o.iterations = combiner_iterations;
  o.batch_size = combiner_batch_size;
  o.learning_rate = combiner_learning_rate;
  o.hidden = combiner_hidden;
  o.crops_per_photo = crops_per_photo;
  o.seed = seed;
  return o;
}

LocalizerOptions ExperimentConfig::localizer_options() const {
  LocalizerOptions o;
  o.n_longest = n_longest;
  o.mask_threshold = mask_threshold;
  o.mean_shift.bandwidth = bandwidth;
  o.mean_shift.tolerance = mean_shift_tolerance;
  o.mean_shift.max_iterations = mean_shift_max_iterations;
  return o;
}

EvaluationOptions ExperimentConfig::evaluation_options() const {
  EvaluationOptions o;
  o.thresholds = thresholds;
  o.boundary_ignore = boundary_ignore;
  return o;
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return to_json() == other.to_json();
}

}  // namespace exifcons
