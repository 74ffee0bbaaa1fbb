#include "ccldc/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "ccldc/errors.hpp"

namespace ccldc {

using nlohmann::json;

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::er_baseline: return "er_baseline";
    case TrainMode::er_untrained_distill: return "er_untrained_distill";
    case TrainMode::er_multiview: return "er_multiview";
    case TrainMode::ccl_only: return "ccl_only";
    case TrainMode::ccl_dc: return "ccl_dc";
    case TrainMode::sdc: return "sdc";
  }
  return "unknown";
}

std::vector<TrainMode> all_train_modes() {
  return {TrainMode::er_baseline, TrainMode::er_untrained_distill, TrainMode::er_multiview,
          TrainMode::ccl_only,    TrainMode::ccl_dc,               TrainMode::sdc};
}

TrainMode train_mode_from_string(std::string_view name) {
  for (TrainMode m : all_train_modes()) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected er_baseline, er_untrained_distill, er_multiview, ccl_only, "
                    "ccl_dc or sdc)");
}

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::independent: return "independent";
    case EvalMode::ensemble: return "ensemble";
    case EvalMode::both: return "both";
  }
  return "unknown";
}

EvalMode eval_mode_from_string(std::string_view name) {
  if (name == "independent") return EvalMode::independent;
  if (name == "ensemble") return EvalMode::ensemble;
  if (name == "both") return EvalMode::both;
  throw ConfigError("unknown eval_mode '" + std::string(name) +
                    "' (expected independent, ensemble or both)");
}

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw ConfigError("config field '" + path + "': " + msg);
}

// Walks one JSON object, converting known keys and rejecting the rest.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) field_error(display(), "expected an object");
  }

  /// Rejects keys that were never looked up.
  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) field_error(child(item.key()), "unknown key");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) field_error(child(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) {
        field_error(child(key), "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) field_error(child(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void read_seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) out = as_seed(*v, child(key));
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) field_error(child(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) field_error(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <typename Enum, typename Parse>
  void read_enum(const std::string& key, Enum& out, Parse parse) {
    std::string name;
    read(key, name);
    if (name.empty()) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      field_error(child(key), e.what());
    }
  }

  static std::uint64_t as_seed(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0)) {
      field_error(path, "expected a non-negative integer seed");
    }
    return v.get<std::uint64_t>();
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void validate_field(const std::string& path, const std::function<void()>& check) {
  try {
    check();
  } catch (const Error& e) {
    field_error(path, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (source != "synthetic" && source != "idx") {
    field_error("data.source", "expected 'synthetic' or 'idx', got '" + source + "'");
  }
  if (source == "synthetic") validate_field("data.synthetic", [&] { synthetic.validate(); });
  if (source == "idx") {
    const std::pair<const char*, const std::string*> paths[] = {
        {"train_images", &idx.train_images}, {"train_labels", &idx.train_labels},
        {"test_images", &idx.test_images},   {"test_labels", &idx.test_labels}};
    for (const auto& [key, value] : paths) {
      if (value->empty()) field_error(std::string("data.idx.") + key, "path required");
    }
  }
  if (tasks < 1) field_error("tasks", "must be >= 1");
  if (classes_per_task < 1) field_error("classes_per_task", "must be >= 1");
  if (stream_batch < 1) field_error("stream_batch", "must be >= 1");
  if (memory_batch < 1) field_error("memory_batch", "must be >= 1");
  if (seeds.empty()) field_error("seeds", "must list at least one seed");
  validate_field("loss", [&] { loss.validate(); });
  validate_field("chain", [&] { chain.validate(); });
  validate_field("optimizer", [&] { optimizer.validate(); });
  if (!std::isfinite(input_offset)) field_error("model.input_offset", "must be finite");
  if (!(std::isfinite(input_gain) && input_gain > 0.0)) {
    field_error("model.input_gain", "must be finite and > 0");
  }
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] == 0) field_error("model.hidden[" + std::to_string(i) + "]", "must be > 0");
  }
  if (diagnostics.probe_every < 1) field_error("diagnostics.probe_every", "must be >= 1");
  if (source == "synthetic" && synthetic.classes != tasks * classes_per_task) {
    field_error("tasks", std::to_string(tasks) + " tasks of " + std::to_string(classes_per_task) +
                             " classes do not cover the " + std::to_string(synthetic.classes) +
                             " synthetic classes");
  }
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  ObjectReader root(j, "");

  if (const json* data = root.find("data")) {
    ObjectReader d(*data, "data");
    d.read("source", cfg.source);
    if (const json* syn = d.find("synthetic")) {
      ObjectReader s(*syn, "data.synthetic");
      s.read("classes", cfg.synthetic.classes);
      s.read("train_per_class", cfg.synthetic.train_per_class);
      s.read("test_per_class", cfg.synthetic.test_per_class);
      s.read("channels", cfg.synthetic.shape.channels);
      s.read("height", cfg.synthetic.shape.height);
      s.read("width", cfg.synthetic.shape.width);
      s.read("noise", cfg.synthetic.noise);
      s.read("grid", cfg.synthetic.grid);
      s.read_seed("seed", cfg.synthetic.seed);
      s.finish();
    }
    if (const json* idx = d.find("idx")) {
      ObjectReader s(*idx, "data.idx");
      s.read("train_images", cfg.idx.train_images);
      s.read("train_labels", cfg.idx.train_labels);
      s.read("test_images", cfg.idx.test_images);
      s.read("test_labels", cfg.idx.test_labels);
      s.finish();
    }
    d.finish();
  }

  root.read("tasks", cfg.tasks);
  root.read("classes_per_task", cfg.classes_per_task);
  root.read("memory_size", cfg.memory_size);
  root.read("stream_batch", cfg.stream_batch);
  root.read("memory_batch", cfg.memory_batch);
  root.read_enum("mode", cfg.mode, train_mode_from_string);
  root.read_enum("scheme", cfg.scheme, scheme_from_string);
  root.read_enum("kl_direction", cfg.kl_direction, kl_direction_from_string);
  root.read_enum("augmentation", cfg.augmentation, aug_strategy_from_string);
  root.read_enum("eval_mode", cfg.eval_mode, eval_mode_from_string);

  if (const json* loss = root.find("loss")) {
    ObjectReader l(*loss, "loss");
    l.read("lambda1", cfg.loss.lambda1);
    l.read("lambda2", cfg.loss.lambda2);
    l.read("tau", cfg.loss.tau);
    l.finish();
  }

  if (const json* chain = root.find("chain")) {
    ObjectReader c(*chain, "chain");
    c.read("stages", cfg.chain.stages);
    c.read("n_ops", cfg.chain.policy.n_ops);
    c.read("magnitude", cfg.chain.policy.magnitude);
    c.read("crop_prob", cfg.chain.geometric.crop_prob);
    c.read("pad", cfg.chain.geometric.pad);
    c.read("flip_prob", cfg.chain.geometric.flip_prob);
    if (const json* ops = c.find("ops")) {
      if (!ops->is_array()) field_error("chain.ops", "expected an array of op names");
      cfg.chain.policy.op_set.clear();
      for (std::size_t i = 0; i < ops->size(); ++i) {
        const std::string path = "chain.ops[" + std::to_string(i) + "]";
        if (!(*ops)[i].is_string()) field_error(path, "expected a string");
        try {
          cfg.chain.policy.op_set.push_back(aug_op_from_string((*ops)[i].get<std::string>()));
        } catch (const ConfigError& e) {
          field_error(path, e.what());
        }
      }
    }
    c.finish();
  }

  if (const json* model = root.find("model")) {
    ObjectReader m(*model, "model");
    if (const json* hidden = m.find("hidden")) {
      if (!hidden->is_array()) field_error("model.hidden", "expected an array of widths");
      cfg.hidden.clear();
      for (std::size_t i = 0; i < hidden->size(); ++i) {
        const json& w = (*hidden)[i];
        if (!w.is_number_integer() || w.get<long long>() <= 0) {
          field_error("model.hidden[" + std::to_string(i) + "]", "expected a positive integer");
        }
        cfg.hidden.push_back(w.get<std::size_t>());
      }
    }
    m.read("input_offset", cfg.input_offset);
    m.read("input_gain", cfg.input_gain);
    m.finish();
  }

  if (const json* opt = root.find("optimizer")) {
    ObjectReader o(*opt, "optimizer");
    std::string kind;
    o.read("kind", kind);
    if (kind == "sgd") {
      cfg.optimizer.kind = OptimizerKind::sgd;
    } else if (kind == "adamw") {
      cfg.optimizer.kind = OptimizerKind::adamw;
    } else if (!kind.empty()) {
      field_error("optimizer.kind", "expected 'sgd' or 'adamw', got '" + kind + "'");
    }
    o.read("lr", cfg.optimizer.lr);
    o.read("momentum", cfg.optimizer.momentum);
    o.read("weight_decay", cfg.optimizer.weight_decay);
    o.read("beta1", cfg.optimizer.beta1);
    o.read("beta2", cfg.optimizer.beta2);
    o.read("eps", cfg.optimizer.eps);
    o.finish();
  }

  if (const json* seeds = root.find("seeds")) {
    if (!seeds->is_array()) field_error("seeds", "expected an array of integers");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < seeds->size(); ++i) {
      cfg.seeds.push_back(ObjectReader::as_seed((*seeds)[i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  if (const json* ms = root.find("model_seeds"); ms && !ms->is_null()) {
    if (!ms->is_array() || ms->size() != 2) field_error("model_seeds", "expected [seed1, seed2]");
    cfg.model_seeds = std::array<std::uint64_t, 2>{
        ObjectReader::as_seed((*ms)[0], "model_seeds[0]"),
        ObjectReader::as_seed((*ms)[1], "model_seeds[1]")};
  }

  if (const json* diag = root.find("diagnostics")) {
    ObjectReader d(*diag, "diagnostics");
    d.read("loss_probe", cfg.diagnostics.loss_probe);
    d.read("probe_every", cfg.diagnostics.probe_every);
    d.read("entropy", cfg.diagnostics.entropy);
    d.read("ncm", cfg.diagnostics.ncm);
    d.read("step_records", cfg.diagnostics.step_records);
    std::string ref;
    d.read("ncm_reference", ref);
    if (ref == "buffer") {
      cfg.diagnostics.ncm_reference = NcmReference::buffer;
    } else if (ref == "train") {
      cfg.diagnostics.ncm_reference = NcmReference::train;
    } else if (!ref.empty()) {
      field_error("diagnostics.ncm_reference", "expected 'buffer' or 'train', got '" + ref + "'");
    }
    d.finish();
  }
  root.finish();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json ops = json::array();
  for (AugOp op : cfg.chain.policy.op_set) ops.push_back(std::string(to_string(op)));
  json j = {
      {"data",
       {{"source", cfg.source},
        {"synthetic",
         {{"classes", cfg.synthetic.classes},
          {"train_per_class", cfg.synthetic.train_per_class},
          {"test_per_class", cfg.synthetic.test_per_class},
          {"channels", cfg.synthetic.shape.channels},
          {"height", cfg.synthetic.shape.height},
          {"width", cfg.synthetic.shape.width},
          {"noise", cfg.synthetic.noise},
          {"grid", cfg.synthetic.grid},
          {"seed", cfg.synthetic.seed}}},
        {"idx",
         {{"train_images", cfg.idx.train_images},
          {"train_labels", cfg.idx.train_labels},
          {"test_images", cfg.idx.test_images},
          {"test_labels", cfg.idx.test_labels}}}}},
      {"tasks", cfg.tasks},
      {"classes_per_task", cfg.classes_per_task},
      {"memory_size", cfg.memory_size},
      {"stream_batch", cfg.stream_batch},
      {"memory_batch", cfg.memory_batch},
      {"mode", std::string(to_string(cfg.mode))},
      {"scheme", std::string(to_string(cfg.scheme))},
      {"kl_direction", std::string(to_string(cfg.kl_direction))},
      {"loss", {{"lambda1", cfg.loss.lambda1}, {"lambda2", cfg.loss.lambda2}, {"tau", cfg.loss.tau}}},
      {"chain",
       {{"stages", cfg.chain.stages},
        {"n_ops", cfg.chain.policy.n_ops},
        {"magnitude", cfg.chain.policy.magnitude},
        {"ops", ops},
        {"crop_prob", cfg.chain.geometric.crop_prob},
        {"pad", cfg.chain.geometric.pad},
        {"flip_prob", cfg.chain.geometric.flip_prob}}},
      {"augmentation", std::string(to_string(cfg.augmentation))},
      {"model",
       {{"hidden", cfg.hidden},
        {"input_offset", cfg.input_offset},
        {"input_gain", cfg.input_gain}}},
      {"optimizer",
       {{"kind", cfg.optimizer.kind == OptimizerKind::sgd ? "sgd" : "adamw"},
        {"lr", cfg.optimizer.lr},
        {"momentum", cfg.optimizer.momentum},
        {"weight_decay", cfg.optimizer.weight_decay},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"eps", cfg.optimizer.eps}}},
      {"seeds", cfg.seeds},
      {"model_seeds", nullptr},
      {"eval_mode", std::string(to_string(cfg.eval_mode))},
      {"diagnostics",
       {{"loss_probe", cfg.diagnostics.loss_probe},
        {"probe_every", cfg.diagnostics.probe_every},
        {"entropy", cfg.diagnostics.entropy},
        {"ncm", cfg.diagnostics.ncm},
        {"ncm_reference",
         cfg.diagnostics.ncm_reference == NcmReference::buffer ? "buffer" : "train"},
        {"step_records", cfg.diagnostics.step_records}}}};
  if (cfg.model_seeds) j["model_seeds"] = {(*cfg.model_seeds)[0], (*cfg.model_seeds)[1]};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      throw ConfigError("override key '" + key + "': '" + part + "' is below a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace ccldc
