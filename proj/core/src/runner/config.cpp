#include "bitsearch/runner/config.hpp"

#include "bitsearch/error.hpp"
#include "bitsearch/rng.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace bitsearch::runner {

using json = nlohmann::ordered_json;

RewardMode RunConfig::resolved_reward_mode() const {
  switch (reward_mode) {
    case RewardModeChoice::per_step: return RewardMode::per_step;
    case RewardModeChoice::deferred: return RewardMode::deferred;
    case RewardModeChoice::automatic: break;
  }
  return network.layers.size() <= deferred_layer_threshold ? RewardMode::per_step : RewardMode::deferred;
}

std::uint64_t RunConfig::agent_seed() const { return ppo_seed_set ? ppo.seed : child_seed(seed, "agent"); }

EnvConfig RunConfig::env_config() const {
  EnvConfig env;
  env.bitwidth_set = bitwidth_set;
  env.cost = cost;
  env.reward = reward;
  env.reward_mode = resolved_reward_mode();
  env.action_mode = action_mode;
  return env;
}

SearchConfig RunConfig::search_config() const {
  SearchConfig s;
  s.env = env_config();
  s.ppo = ppo;
  s.ppo.seed = agent_seed();
  s.arch.recurrent = recurrent_agent;
  return s;
}

FinetuneBudget RunConfig::short_budget() const {
  FinetuneBudget b;
  b.train = short_retrain.train;
  b.train_subsample = short_retrain.train_subsample ? short_retrain.train_subsample : SIZE_MAX;
  b.eval_subsample = short_retrain.eval_subsample ? short_retrain.eval_subsample : SIZE_MAX;
  return b;
}

namespace {

ConfigError field_error(const std::string& field, const std::string& what) {
  return ConfigError(fmt::format("config field '{}': {}", field, what));
}

void validate_train(const TrainConfig& t, const std::string& field) {
  try {
    t.validate();
  } catch (const Error& e) {
    throw field_error(field, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw field_error("schema_version", fmt::format("unsupported version {} (expected {})", schema_version, kConfigSchemaVersion));
  }
  try {
    build_spec(network);
  } catch (const Error& e) {
    throw field_error("network", e.what());
  }
  try {
    cost.validate();
  } catch (const Error& e) {
    throw field_error("cost", e.what());
  }
  try {
    validate_bitwidth_set(bitwidth_set, cost.max_bits);
  } catch (const Error& e) {
    throw field_error("bitwidth_set", e.what());
  }
  try {
    reward.validate();
  } catch (const Error& e) {
    throw field_error("reward", e.what());
  }
  try {
    ppo.validate();
  } catch (const Error& e) {
    throw field_error("ppo", e.what());
  }
  validate_train(baseline, "baseline_training");
  validate_train(short_retrain.train, "short_retrain");
  validate_train(long_retrain.train, "long_retrain");
  if (dataset.source == DatasetSource::synthetic) {
    if (dataset.train_size < 2) throw field_error("dataset.train_size", "must be at least 2");
    if (dataset.test_size < 2) throw field_error("dataset.test_size", "must be at least 2");
  }
  if (dataset.validation_size < 1) throw field_error("dataset.validation_size", "must be at least 1");
  if (enumeration_cap < 1) throw field_error("enumeration.cap", "must be at least 1");
  if (eps_quant < 0.0) throw field_error("validation.eps_quant", "must be non-negative");
  if (eps_acc < 0.0) throw field_error("validation.eps_acc", "must be non-negative");
}

namespace {

// Reads one JSON object, remembering which keys were consumed so unknown
// keys can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw field_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v->is_number()) throw field_error(field(key), "expected a number");
        out = v->get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw field_error(field(key), "expected true or false");
        out = v->get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw field_error(field(key), "expected an integer");
        if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0) {
          throw field_error(field(key), "must be non-negative");
        }
        out = v->get<T>();
      } else {
        if (!v->is_string()) throw field_error(field(key), "expected a string");
        out = v->get<std::string>();
      }
    } catch (const json::exception& e) {
      throw field_error(field(key), e.what());
    }
  }

  std::optional<ObjectReader> object(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return ObjectReader(*v, field(key));
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) throw field_error(field(it.key()), "unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

Shape read_shape(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) throw field_error(field, "expected a non-empty array of positive integers");
  Shape s;
  for (const auto& d : v) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
      throw field_error(field, "expected a non-empty array of positive integers");
    }
    s.push_back(d.get<std::size_t>());
  }
  return s;
}

Architecture read_network(ObjectReader r) {
  Architecture a;
  r.get("name", a.name);
  const json* input = r.find("input");
  if (!input) throw field_error(r.field("input"), "required");
  a.input = read_shape(*input, r.field("input"));
  const json* layers = r.find("layers");
  if (!layers || !layers->is_array() || layers->empty()) throw field_error(r.field("layers"), "expected a non-empty array");
  for (std::size_t i = 0; i < layers->size(); ++i) {
    ObjectReader lr((*layers)[i], fmt::format("{}[{}]", r.field("layers"), i));
    std::string kind;
    lr.get("kind", kind);
    LayerDef def;
    try {
      def.kind = parse_layer_kind(kind);
    } catch (const Error&) {
      throw field_error(lr.field("kind"), fmt::format("expected dense or conv2d, got '{}'", kind));
    }
    if (def.kind == LayerKind::dense) {
      lr.get("units", def.width);
      if (def.width == 0) throw field_error(lr.field("units"), "required positive integer");
    } else {
      lr.get("filters", def.width);
      lr.get("kernel", def.kernel);
      if (def.width == 0) throw field_error(lr.field("filters"), "required positive integer");
      if (def.kernel == 0) throw field_error(lr.field("kernel"), "required positive integer");
    }
    lr.finish();
    a.layers.push_back(def);
  }
  r.finish();
  return a;
}

DatasetConfig read_dataset(ObjectReader r) {
  DatasetConfig d;
  std::string source = "synthetic";
  r.get("source", source);
  if (source == "idx") {
    d.source = DatasetSource::idx;
    std::string ti, tl, si, sl;
    r.get("train_images", ti);
    r.get("train_labels", tl);
    r.get("test_images", si);
    r.get("test_labels", sl);
    for (auto [name, value] : {std::pair{"train_images", &ti}, {"train_labels", &tl}, {"test_images", &si},
                               {"test_labels", &sl}}) {
      if (value->empty()) throw field_error(r.field(name), "required for idx datasets");
    }
    d.train_images = ti;
    d.train_labels = tl;
    d.test_images = si;
    d.test_labels = sl;
    d.validation_size = 5000;
  } else if (source == "synthetic") {
    d.source = DatasetSource::synthetic;
    std::string gen = to_string(d.generator);
    r.get("generator", gen);
    try {
      d.generator = parse_synth_kind(gen);
    } catch (const Error&) {
      throw field_error(r.field("generator"), fmt::format("expected blobs, moons, or glyphs, got '{}'", gen));
    }
    r.get("train_size", d.train_size);
    r.get("test_size", d.test_size);
    r.get("classes", d.synth.classes);
    r.get("dims", d.synth.dims);
    r.get("separation", d.synth.separation);
    r.get("noise", d.synth.noise);
    r.get("prototype_seed", d.synth.prototype_seed);
  } else {
    throw field_error(r.field("source"), fmt::format("expected idx or synthetic, got '{}'", source));
  }
  r.get("validation_size", d.validation_size);
  r.finish();
  return d;
}

void read_train(ObjectReader r, TrainConfig& t, RetrainConfig* retrain) {
  r.get("learning_rate", t.learning_rate);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("lambda_q", t.lambda_q);
  r.get("lambda_wd", t.lambda_wd);
  r.get("sinreq_bits", t.sinreq_bits);
  if (retrain) {
    r.get("train_subsample", retrain->train_subsample);
    r.get("eval_subsample", retrain->eval_subsample);
  }
  r.finish();
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ConfigError(fmt::format("config parse error at line {}: {}", line_of(text, byte), e.what()));
  }

  RunConfig cfg;
  cfg.base_dir = base_dir;
  ObjectReader r(root, "");
  r.get("schema_version", cfg.schema_version);
  r.get("seed", cfg.seed);
  std::string out = cfg.output_dir.string();
  r.get("output_dir", out);
  cfg.output_dir = out;

  auto network = r.object("network");
  if (!network) throw field_error("network", "required");
  cfg.network = read_network(*network);
  auto dataset = r.object("dataset");
  if (!dataset) throw field_error("dataset", "required");
  cfg.dataset = read_dataset(*dataset);

  if (const json* set = r.find("bitwidth_set")) {
    if (!set->is_array()) throw field_error("bitwidth_set", "expected an array of integers");
    cfg.bitwidth_set.clear();
    for (const auto& b : *set) {
      if (!b.is_number_integer()) throw field_error("bitwidth_set", "expected an array of integers");
      cfg.bitwidth_set.push_back(b.get<int>());
    }
  }
  if (auto c = r.object("cost")) {
    c->get("energy_ratio", cfg.cost.energy_ratio);
    c->get("max_bits", cfg.cost.max_bits);
    c->get("baseline_bits", cfg.cost.baseline_bits);
    c->finish();
  }
  if (auto rw = r.object("reward")) {
    rw->get("a", cfg.reward.a);
    rw->get("b", cfg.reward.b);
    rw->get("th", cfg.reward.th);
    std::string f = to_string(cfg.reward.formulation);
    rw->get("formulation", f);
    try {
      cfg.reward.formulation = parse_reward_formulation(f);
    } catch (const Error& e) {
      throw field_error("reward.formulation", e.what());
    }
    rw->finish();
  }
  if (auto p = r.object("ppo")) {
    p->get("adam_step_size", cfg.ppo.adam_step_size);
    p->get("gae_parameter", cfg.ppo.gae_parameter);
    p->get("discount_gamma", cfg.ppo.discount_gamma);
    p->get("update_epochs", cfg.ppo.update_epochs);
    p->get("clip_epsilon", cfg.ppo.clip_epsilon);
    p->get("entropy_coeff", cfg.ppo.entropy_coeff);
    p->get("value_coeff", cfg.ppo.value_coeff);
    p->get("episodes", cfg.ppo.episodes);
    p->get("episodes_per_update", cfg.ppo.episodes_per_update);
    p->get("normalize_advantages", cfg.ppo.normalize_advantages);
    if (p->find("seed") && !(*p->find("seed")).is_null()) {
      p->get("seed", cfg.ppo.seed);
      cfg.ppo_seed_set = true;
    }
    p->finish();
  }
  if (auto a = r.object("agent")) {
    a->get("recurrent", cfg.recurrent_agent);
    a->finish();
  }
  if (auto t = r.object("baseline_training")) read_train(*t, cfg.baseline, nullptr);
  if (auto t = r.object("short_retrain")) read_train(*t, cfg.short_retrain.train, &cfg.short_retrain);
  if (auto t = r.object("long_retrain")) read_train(*t, cfg.long_retrain.train, &cfg.long_retrain);
  if (auto s = r.object("search")) {
    std::string mode = to_string(cfg.action_mode);
    s->get("action_mode", mode);
    try {
      cfg.action_mode = parse_action_mode(mode);
    } catch (const Error& e) {
      throw field_error("search.action_mode", e.what());
    }
    std::string reward_mode = "auto";
    s->get("reward_mode", reward_mode);
    if (reward_mode == "auto") {
      cfg.reward_mode = RewardModeChoice::automatic;
    } else if (reward_mode == "per_step") {
      cfg.reward_mode = RewardModeChoice::per_step;
    } else if (reward_mode == "deferred") {
      cfg.reward_mode = RewardModeChoice::deferred;
    } else {
      throw field_error("search.reward_mode", fmt::format("expected auto, per_step, or deferred, got '{}'", reward_mode));
    }
    s->get("deferred_layer_threshold", cfg.deferred_layer_threshold);
    s->finish();
  }
  if (auto e = r.object("enumeration")) {
    e->get("cap", cfg.enumeration_cap);
    e->finish();
  }
  if (auto v = r.object("validation")) {
    v->get("eps_quant", cfg.eps_quant);
    v->get("eps_acc", cfg.eps_acc);
    v->finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

namespace {

json train_json(const TrainConfig& t, const RetrainConfig* retrain) {
  json j;
  j["learning_rate"] = t.learning_rate;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lambda_q"] = t.lambda_q;
  j["lambda_wd"] = t.lambda_wd;
  j["sinreq_bits"] = t.sinreq_bits;
  if (retrain) {
    j["train_subsample"] = retrain->train_subsample;
    j["eval_subsample"] = retrain->eval_subsample;
  }
  return j;
}

}  // namespace

std::string emit_config(const RunConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();

  json net;
  net["name"] = cfg.network.name;
  net["input"] = cfg.network.input;
  json layers = json::array();
  for (const auto& l : cfg.network.layers) {
    json lj;
    lj["kind"] = to_string(l.kind);
    if (l.kind == LayerKind::dense) {
      lj["units"] = l.width;
    } else {
      lj["filters"] = l.width;
      lj["kernel"] = l.kernel;
    }
    layers.push_back(lj);
  }
  net["layers"] = layers;
  j["network"] = net;

  json ds;
  if (cfg.dataset.source == DatasetSource::idx) {
    ds["source"] = "idx";
    ds["train_images"] = cfg.dataset.train_images.string();
    ds["train_labels"] = cfg.dataset.train_labels.string();
    ds["test_images"] = cfg.dataset.test_images.string();
    ds["test_labels"] = cfg.dataset.test_labels.string();
  } else {
    ds["source"] = "synthetic";
    ds["generator"] = to_string(cfg.dataset.generator);
    ds["train_size"] = cfg.dataset.train_size;
    ds["test_size"] = cfg.dataset.test_size;
    ds["classes"] = cfg.dataset.synth.classes;
    ds["dims"] = cfg.dataset.synth.dims;
    ds["separation"] = cfg.dataset.synth.separation;
    ds["noise"] = cfg.dataset.synth.noise;
    ds["prototype_seed"] = cfg.dataset.synth.prototype_seed;
  }
  ds["validation_size"] = cfg.dataset.validation_size;
  j["dataset"] = ds;

  j["bitwidth_set"] = cfg.bitwidth_set;
  j["cost"] = {{"energy_ratio", cfg.cost.energy_ratio}, {"max_bits", cfg.cost.max_bits},
               {"baseline_bits", cfg.cost.baseline_bits}};
  j["reward"] = {{"a", cfg.reward.a}, {"b", cfg.reward.b}, {"th", cfg.reward.th},
                 {"formulation", to_string(cfg.reward.formulation)}};
  json ppo = {{"adam_step_size", cfg.ppo.adam_step_size},
              {"gae_parameter", cfg.ppo.gae_parameter},
              {"discount_gamma", cfg.ppo.discount_gamma},
              {"update_epochs", cfg.ppo.update_epochs},
              {"clip_epsilon", cfg.ppo.clip_epsilon},
              {"entropy_coeff", cfg.ppo.entropy_coeff},
              {"value_coeff", cfg.ppo.value_coeff},
              {"episodes", cfg.ppo.episodes},
              {"episodes_per_update", cfg.ppo.episodes_per_update},
              {"normalize_advantages", cfg.ppo.normalize_advantages}};
  if (cfg.ppo_seed_set) ppo["seed"] = cfg.ppo.seed;
  j["ppo"] = ppo;
  j["agent"] = {{"recurrent", cfg.recurrent_agent}};
  j["baseline_training"] = train_json(cfg.baseline, nullptr);
  j["short_retrain"] = train_json(cfg.short_retrain.train, &cfg.short_retrain);
  j["long_retrain"] = train_json(cfg.long_retrain.train, &cfg.long_retrain);
  const char* reward_mode = cfg.reward_mode == RewardModeChoice::automatic ? "auto"
                            : cfg.reward_mode == RewardModeChoice::per_step ? "per_step"
                                                                            : "deferred";
  j["search"] = {{"action_mode", to_string(cfg.action_mode)},
                 {"reward_mode", reward_mode},
                 {"deferred_layer_threshold", cfg.deferred_layer_threshold}};
  j["enumeration"] = {{"cap", cfg.enumeration_cap}};
  j["validation"] = {{"eps_quant", cfg.eps_quant}, {"eps_acc", cfg.eps_acc}};
  return j.dump(2) + "\n";
}

}  // namespace bitsearch::runner
