#include "selftune/config.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <set>

#include "selftune/error.hpp"

namespace selftune {

namespace fs = std::filesystem;

namespace {

// Reads the keys of one JSON object and rejects anything it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected a JSON object", where_));
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}.{}: {}", where_, key, e.what()));
    }
  }

  void get_path(const char* key, fs::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  // Returns the sub-object for `key`, or nullptr when absent.
  const Json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return fmt::format("{}.{}", where_, key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, k));
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  }
}

ModelSpec model_spec_at(const Json& j, const std::string& where) {
  ModelSpec v;
  ObjectReader r(j, where);
  r.get("input_size", v.input_size);
  r.get("base_channels", v.base_channels);
  r.get("depth", v.depth);
  r.get("dilations", v.dilations);
  r.get("gated", v.gated);
  r.get("use_discriminator", v.use_discriminator);
  r.get("kernel_size", v.kernel_size);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

FreeformSpec freeform_at(const Json& j, const std::string& where) {
  FreeformSpec v;
  ObjectReader r(j, where);
  r.get("strokes_min", v.strokes_min);
  r.get("strokes_max", v.strokes_max);
  r.get("vertices_min", v.vertices_min);
  r.get("vertices_max", v.vertices_max);
  r.get("width_min", v.width_min);
  r.get("width_max", v.width_max);
  r.get("length_min", v.length_min);
  r.get("length_max", v.length_max);
  r.get("angle_jitter", v.angle_jitter);
  r.get("coverage_min", v.coverage_min);
  r.get("coverage_max", v.coverage_max);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

RectSpec rect_at(const Json& j, const std::string& where) {
  RectSpec v;
  ObjectReader r(j, where);
  r.get("rect_height", v.rect_height);
  r.get("rect_width", v.rect_width);
  if (const Json* o = r.child("origin"); o && !o->is_null()) {
    RectOrigin origin;
    ObjectReader ro(*o, r.path("origin"));
    ro.get("y", origin.y);
    ro.get("x", origin.x);
    ro.finish();
    v.origin = origin;
  }
  r.finish();
  return v;
}

LossWeights weights_at(const Json& j, const std::string& where) {
  LossWeights v;
  ObjectReader r(j, where);
  r.get("rec", v.rec);
  r.get("adv", v.adv);
  r.finish();
  return v;
}

StopPolicy stop_policy_at(const Json& j, const std::string& where) {
  StopPolicy v;
  ObjectReader r(j, where);
  r.get("window", v.window);
  r.get("patience", v.patience);
  r.get("min_evals", v.min_evals);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

DatasetSpec dataset_at(const Json& j, const std::string& where) {
  DatasetSpec v;
  ObjectReader r(j, where);
  if (const Json* f = r.child("families")) {
    if (!f->is_array()) throw ConfigError(fmt::format("{}.families: expected an array", where));
    v.families.clear();
    for (const auto& name : *f) {
      if (!name.is_string()) throw ConfigError(fmt::format("{}.families: expected strings", where));
      v.families.push_back(parse_family(name.get<std::string>()));
    }
  }
  r.get("period_min", v.period_min);
  r.get("period_max", v.period_max);
  r.get("colors_min", v.colors_min);
  r.get("colors_max", v.colors_max);
  r.get("min_color_distance", v.min_color_distance);
  r.get("count", v.count);
  r.get("image_size", v.image_size);
  if (const Json* f = r.child("real_folder"); f && !f->is_null()) {
    if (!f->is_string()) throw ConfigError(fmt::format("{}.real_folder: expected a string", where));
    v.real_folder = f->get<std::string>();
  }
  r.get("real_fraction", v.real_fraction);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

TrainConfig train_at(const Json& j, const std::string& where) {
  TrainConfig v;
  ObjectReader r(j, where);
  r.get("epochs", v.epochs);
  r.get("batch_size", v.batch_size);
  r.get("lr", v.lr);
  r.get("seed", v.seed);
  if (const Json* w = r.child("weights")) v.weights = weights_at(*w, r.path("weights"));
  if (const Json* m = r.child("mask")) v.mask = freeform_at(*m, r.path("mask"));
  r.get("flips", v.flips);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

// {"freeform": {...}} or {"rect": {...}}
CorruptionSpec corruption_at(const Json& j, const std::string& where) {
  if (!j.is_object() || j.size() != 1)
    throw ConfigError(fmt::format("{}: expected {{\"freeform\": {{...}}}} or {{\"rect\": {{...}}}}", where));
  const auto& [kind, body] = *j.items().begin();
  if (kind == "freeform") return freeform_at(body, where + ".freeform");
  if (kind == "rect") return rect_at(body, where + ".rect");
  throw ConfigError(fmt::format("{}: unknown mask kind '{}'", where, kind));
}

FinetuneConfig finetune_at(const Json& j, const std::string& where) {
  FinetuneConfig v;
  ObjectReader r(j, where);
  r.get("iterations", v.iterations);
  r.get("lr", v.lr);
  r.get("batch", v.batch);
  if (const Json* m = r.child("mask")) v.mask_spec = corruption_at(*m, r.path("mask"));
  r.get("augment", v.augment);
  if (const Json* w = r.child("weights")) v.weights = weights_at(*w, r.path("weights"));
  if (const Json* a = r.child("auto_stop"); a && !a->is_null()) v.auto_stop = stop_policy_at(*a, r.path("auto_stop"));
  r.get("eval_every", v.eval_every);
  r.get("seed", v.seed);
  r.get("checkpoints", v.checkpoints);
  r.finish();
  guarded([&] { validate(v); return 0; });
  return v;
}

Metric parse_metric(const std::string& s) {
  if (s == "psnr") return Metric::psnr;
  if (s == "ssim") return Metric::ssim;
  if (s == "fid") return Metric::fid;
  throw ConfigError(fmt::format("unknown metric '{}'", s));
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::psnr: return "psnr";
    case Metric::ssim: return "ssim";
    case Metric::fid: return "fid";
  }
  return "?";
}

void validate(const ExperimentConfig& c) {
  if (c.checkpoints.empty() || c.checkpoints.front() != 0)
    throw ConfigError("experiment: checkpoints must start with 0");
  if (!std::is_sorted(c.checkpoints.begin(), c.checkpoints.end()) ||
      std::adjacent_find(c.checkpoints.begin(), c.checkpoints.end()) != c.checkpoints.end())
    throw ConfigError("experiment: checkpoints must be strictly increasing");
  if (c.workers < 1) throw ConfigError("experiment: workers must be >= 1");
  if (c.weights.empty()) throw ConfigError("experiment: weights path is required");
  FinetuneConfig ft = c.finetune;
  ft.iterations = c.checkpoints.back();
  ft.checkpoints = c.checkpoints;
  guarded([&] {
    validate(ft);
    validate(c.holes);
    if (c.image_folder.empty()) validate(c.dataset);
    return 0;
  });
}

Json to_json(const ModelSpec& v) {
  return {{"input_size", v.input_size}, {"base_channels", v.base_channels}, {"depth", v.depth},
          {"dilations", v.dilations},   {"gated", v.gated},                 {"use_discriminator", v.use_discriminator},
          {"kernel_size", v.kernel_size}};
}

Json to_json(const FreeformSpec& v) {
  return {{"strokes_min", v.strokes_min},   {"strokes_max", v.strokes_max},   {"vertices_min", v.vertices_min},
          {"vertices_max", v.vertices_max}, {"width_min", v.width_min},       {"width_max", v.width_max},
          {"length_min", v.length_min},     {"length_max", v.length_max},     {"angle_jitter", v.angle_jitter},
          {"coverage_min", v.coverage_min}, {"coverage_max", v.coverage_max}};
}

Json to_json(const RectSpec& v) {
  Json j{{"rect_height", v.rect_height}, {"rect_width", v.rect_width}, {"origin", nullptr}};
  if (v.origin) j["origin"] = {{"y", v.origin->y}, {"x", v.origin->x}};
  return j;
}

Json to_json(const DatasetSpec& v) {
  Json families = Json::array();
  for (auto f : v.families) families.push_back(std::string(to_string(f)));
  return {{"families", families},
          {"period_min", v.period_min},
          {"period_max", v.period_max},
          {"colors_min", v.colors_min},
          {"colors_max", v.colors_max},
          {"min_color_distance", v.min_color_distance},
          {"count", v.count},
          {"image_size", v.image_size},
          {"real_folder", v.real_folder ? Json(v.real_folder->string()) : Json(nullptr)},
          {"real_fraction", v.real_fraction}};
}

Json to_json(const TrainConfig& v) {
  return {{"epochs", v.epochs},
          {"batch_size", v.batch_size},
          {"lr", v.lr},
          {"seed", v.seed},
          {"weights", {{"rec", v.weights.rec}, {"adv", v.weights.adv}}},
          {"mask", to_json(v.mask)},
          {"flips", v.flips}};
}

Json to_json(const StopPolicy& v) {
  return {{"window", v.window}, {"patience", v.patience}, {"min_evals", v.min_evals}};
}

Json to_json(const FinetuneConfig& v) {
  Json mask = std::holds_alternative<FreeformSpec>(v.mask_spec)
                  ? Json{{"freeform", to_json(std::get<FreeformSpec>(v.mask_spec))}}
                  : Json{{"rect", to_json(std::get<RectSpec>(v.mask_spec))}};
  return {{"iterations", v.iterations},
          {"lr", v.lr},
          {"batch", v.batch},
          {"mask", mask},
          {"augment", v.augment},
          {"weights", {{"rec", v.weights.rec}, {"adv", v.weights.adv}}},
          {"auto_stop", v.auto_stop ? to_json(*v.auto_stop) : Json(nullptr)},
          {"eval_every", v.eval_every},
          {"seed", v.seed},
          {"checkpoints", v.checkpoints}};
}

Json to_json(const PretrainConfig& v) {
  return {{"model", to_json(v.model)}, {"dataset", to_json(v.dataset)}, {"train", to_json(v.train)}};
}

Json to_json(const ExperimentConfig& v) {
  Json ft = to_json(v.finetune);
  ft.erase("iterations");
  ft.erase("checkpoints");
  ft.erase("seed");
  Json metrics = Json::array();
  for (auto m : v.metrics) metrics.push_back(std::string(to_string(m)));
  return {{"weights", v.weights.string()},
          {"model", v.model.string()},
          {"image_folder", v.image_folder.string()},
          {"dataset", to_json(v.dataset)},
          {"mask_folder", v.mask_folder.string()},
          {"holes", to_json(v.holes)},
          {"finetune", ft},
          {"metrics", metrics},
          {"checkpoints", v.checkpoints},
          {"output_dir", v.output_dir.string()},
          {"seed", v.seed},
          {"timing", v.timing},
          {"workers", v.workers}};
}

ModelSpec model_spec_from_json(const Json& j) { return model_spec_at(j, "model"); }
FreeformSpec freeform_from_json(const Json& j) { return freeform_at(j, "mask"); }
DatasetSpec dataset_from_json(const Json& j) { return dataset_at(j, "dataset"); }
TrainConfig train_from_json(const Json& j) { return train_at(j, "train"); }
FinetuneConfig finetune_from_json(const Json& j) { return finetune_at(j, "finetune"); }

PretrainConfig pretrain_config_from_json(const Json& j) {
  PretrainConfig v;
  ObjectReader r(j, "pretrain");
  if (const Json* m = r.child("model")) v.model = model_spec_at(*m, "model");
  if (const Json* d = r.child("dataset")) v.dataset = dataset_at(*d, "dataset");
  if (const Json* t = r.child("train")) v.train = train_at(*t, "train");
  r.finish();
  if (v.dataset.image_size != v.model.input_size)
    throw ConfigError(fmt::format("dataset.image_size {} differs from model.input_size {}", v.dataset.image_size,
                                  v.model.input_size));
  return v;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig v;
  ObjectReader r(j, "experiment");
  r.get_path("weights", v.weights);
  r.get_path("model", v.model);
  r.get_path("image_folder", v.image_folder);
  if (const Json* d = r.child("dataset")) v.dataset = dataset_at(*d, "dataset");
  r.get_path("mask_folder", v.mask_folder);
  if (const Json* h = r.child("holes")) v.holes = freeform_at(*h, "holes");
  if (const Json* f = r.child("finetune")) {
    for (const char* key : {"iterations", "checkpoints", "seed"})
      if (f->is_object() && f->contains(key))
        throw ConfigError(fmt::format("experiment.finetune.{} is derived; set it at the top level", key));
    v.finetune = finetune_at(*f, "experiment.finetune");
  }
  if (const Json* m = r.child("metrics")) {
    if (!m->is_array()) throw ConfigError("experiment.metrics: expected an array");
    v.metrics.clear();
    for (const auto& name : *m) {
      if (!name.is_string()) throw ConfigError("experiment.metrics: expected strings");
      v.metrics.push_back(parse_metric(name.get<std::string>()));
    }
  }
  r.get("checkpoints", v.checkpoints);
  r.get_path("output_dir", v.output_dir);
  r.get("seed", v.seed);
  r.get("timing", v.timing);
  r.get("workers", v.workers);
  r.finish();
  validate(v);
  return v;
}

Json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot read '{}'", path.string()));
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << j.dump(2) << '\n';
}

PretrainConfig load_pretrain_config(const fs::path& path) {
  PretrainConfig c = pretrain_config_from_json(read_json(path));
  if (c.dataset.real_folder) c.dataset.real_folder = resolve(path.parent_path(), *c.dataset.real_folder);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  ExperimentConfig c = experiment_config_from_json(read_json(path));
  const fs::path base = path.parent_path();
  c.weights = resolve(base, c.weights);
  c.model = resolve(base, c.model);
  c.image_folder = resolve(base, c.image_folder);
  c.mask_folder = resolve(base, c.mask_folder);
  c.output_dir = resolve(base, c.output_dir);
  if (c.dataset.real_folder) c.dataset.real_folder = resolve(base, *c.dataset.real_folder);
  if (!fs::is_regular_file(c.weights)) throw ConfigError(fmt::format("weights '{}' not found", c.weights.string()));
  if (!c.model.empty() && !fs::is_regular_file(c.model))
    throw ConfigError(fmt::format("model spec '{}' not found", c.model.string()));
  if (!c.image_folder.empty() && !fs::is_directory(c.image_folder))
    throw ConfigError(fmt::format("image folder '{}' not found", c.image_folder.string()));
  if (!c.mask_folder.empty() && !fs::is_directory(c.mask_folder))
    throw ConfigError(fmt::format("mask folder '{}' not found", c.mask_folder.string()));
  return c;
}

fs::path spec_sidecar(const fs::path& weights) { return fs::path(weights.string() + ".spec.json"); }

ModelSpec resolve_model_spec(const fs::path& weights, const fs::path& model_file) {
  if (!model_file.empty()) return model_spec_from_json(read_json(model_file));
  const fs::path side = spec_sidecar(weights);
  if (fs::is_regular_file(side)) return model_spec_from_json(read_json(side));
  return ModelSpec{};
}

}  // namespace selftune
