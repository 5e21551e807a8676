#include "drd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "drd/dataset.hpp"
#include "drd/gmm.hpp"
#include "drd/rng.hpp"
#include "drd/scoring.hpp"

namespace drd {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool is_strategy(const std::string& s) { return s == "window" || s == "ccs" || s == "bws"; }
bool is_score(const std::string& s) { return s == "drd" || s == "forgetting" || s == "el2n"; }

void validate_method(const std::string& method, const std::string& field) {
  if (method == "random") return;
  auto plus = method.find('+');
  require(plus != std::string::npos && is_score(method.substr(0, plus)) && is_strategy(method.substr(plus + 1)),
          field + ": unknown method '" + method + "' (expected random or <drd|forgetting|el2n>+<window|ccs|bws>)");
}

void validate_budget(double b, const std::string& field) {
  require(b > 0.0 && b <= 1.0, field + " must lie in (0, 1]");
}

void validate_preset(const std::string& name, const std::string& field) {
  auto names = preset_names();
  require(std::find(names.begin(), names.end(), name) != names.end(), field + ": unknown world preset '" + name + "'");
}

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), path_ + " must be a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + " has the wrong type");
    }
  }

  void get(const char* key, std::optional<int>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    int v = 0;
    get(key, v);
    out = v;
  }

  void get(const char* key, ModelKind& out) {
    std::string s(to_string(out));
    get(key, s);
    try {
      out = model_kind_from_string(s);
    } catch (const std::invalid_argument&) {
      throw ConfigError(name(key) + ": unknown classifier kind '" + s + "'");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name(key.c_str()) + "'");
  }

 private:
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "~" || s == "null") return nullptr;
  if (s == "true") return true;
  if (s == "false") return false;
  // Integers first so seeds and counts keep their exact value.
  try {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

json custom_world_to_json(const CustomWorld& w) {
  json classes = json::array();
  for (const auto& comps : w.classes) {
    json cls = json::array();
    for (const auto& g : comps)
      cls.push_back({{"weight", g.weight},
                     {"mean", std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size())},
                     {"covariance", matrix_to_json(g.covariance)}});
    classes.push_back(cls);
  }
  json j = {{"classes", classes}};
  if (w.outliers) j["outliers"] = {{"fraction", w.outliers->fraction}, {"offset_scale", w.outliers->offset_scale}};
  return j;
}

GaussianComponent component_from_json(const json& j, const std::string& path) {
  require(j.is_object(), path + " must be a mapping");
  for (const auto& [key, value] : j.items())
    require(key == "weight" || key == "mean" || key == "covariance", "unknown config key '" + path + "." + key + "'");
  GaussianComponent g;
  try {
    g.weight = j.value("weight", 1.0);
    auto mean = j.at("mean").get<std::vector<double>>();
    g.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
    g.covariance = Matrix(static_cast<Eigen::Index>(cov.size()), static_cast<Eigen::Index>(mean.size()));
    for (std::size_t r = 0; r < cov.size(); ++r) {
      require(cov[r].size() == mean.size(), path + ".covariance must be d x d");
      for (std::size_t k = 0; k < cov[r].size(); ++k)
        g.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cov[r][k];
    }
  } catch (const json::exception&) {
    throw ConfigError(path + " needs numeric mean and covariance arrays");
  }
  return g;
}

}  // namespace

WorldPreset resolve_world(const WorldConfig& config) {
  if (!config.custom) return world_preset(config.preset);
  try {
    return {"custom", GmmWorld(config.custom->classes), config.custom->outliers};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("world.classes: ") + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  if (c.world.custom) {
    auto w = resolve_world(c.world);
    require(w.world.num_classes() >= 2, "world.classes must define at least two classes");
    if (c.world.custom->outliers) {
      const auto& o = *c.world.custom->outliers;
      require(o.fraction >= 0.0 && o.fraction < 0.5, "world.outliers.fraction must lie in [0, 0.5)");
      require(o.offset_scale >= 0.0, "world.outliers.offset_scale must be >= 0");
      try {
        outlier_direction(w.world);
      } catch (const std::invalid_argument&) {
        throw ConfigError("world.outliers needs class means that leave a direction free");
      }
    }
  } else {
    validate_preset(c.world.preset, "world.preset");
  }
  require(c.world.n_per_class >= 5, "world.n_per_class must be >= 5");
  require(c.world.test_per_class >= 1, "world.test_per_class must be >= 1");

  require(c.schedule.train_steps >= 2, "schedule.train_steps must be >= 2");
  require(c.schedule.beta_start > 0.0 && c.schedule.beta_start <= c.schedule.beta_end && c.schedule.beta_end < 1.0,
          "schedule: require 0 < beta_start <= beta_end < 1");
  require(c.schedule.inference_steps >= 1 && c.schedule.inference_steps <= c.schedule.train_steps,
          "schedule.inference_steps must lie in [1, train_steps]");

  require(c.denoiser.kind == "analytic" || c.denoiser.kind == "learned", "denoiser.kind must be analytic or learned");
  require(c.denoiser.train.epochs >= 1, "denoiser.epochs must be >= 1");
  require(c.denoiser.train.batch_size >= 1, "denoiser.batch_size must be >= 1");
  require(c.denoiser.train.learning_rate > 0.0, "denoiser.learning_rate must be > 0");
  require(c.denoiser.train.hidden >= 1, "denoiser.hidden must be >= 1");

  require(c.scoring.num_draws >= 1, "scoring.num_draws must be >= 1");
  try {
    metric_by_name(c.scoring.metric);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scoring.metric: ") + e.what());
  }
  if (c.scoring.timestep_override)
    require(*c.scoring.timestep_override >= 0 && *c.scoring.timestep_override < c.schedule.inference_steps,
            "scoring.timestep_override must be a grid position in [0, inference_steps)");

  require(c.selector.samples_per_class >= 1, "selector.samples_per_class must be >= 1");
  require(c.selector.num_eps >= 1, "selector.num_eps must be >= 1");
  require(c.selector.delta_t >= 1, "selector.delta_t must be >= 1");
  require(c.selector.gamma_min > 0.0, "selector.gamma_min must be > 0");
  require(c.selector.gamma_min < c.selector.gamma_max, "selector: gamma_min must be < gamma_max");

  validate_method(c.selection.method, "selection.method");
  validate_budget(c.selection.budget, "selection.budget");
  require(c.selection.window_start >= 0.0 && c.selection.window_start + c.selection.budget <= 1.0 + 1e-9,
          "selection: window_start + budget must be <= 1");
  require(c.selection.num_strata >= 1, "selection.num_strata must be >= 1");
  require(c.selection.bws_step > 0.0 && c.selection.bws_step <= 0.5, "selection.bws_step must lie in (0, 0.5]");
  require(c.selection.bws_eval_split == "train" || c.selection.bws_eval_split == "holdout",
          "selection.bws_eval_split must be train or holdout");

  require(c.evaluation.classifier.epochs >= 1, "evaluation.epochs must be >= 1");
  require(c.evaluation.classifier.learning_rate > 0.0, "evaluation.learning_rate must be > 0");
  require(c.evaluation.classifier.hidden >= 1, "evaluation.hidden must be >= 1");
  require(c.evaluation.num_seeds >= 3, "evaluation.num_seeds must be >= 3");
  require(c.evaluation.baseline_epochs >= 2, "evaluation.baseline_epochs must be >= 2");
  require(c.evaluation.el2n_probe_epoch >= 1, "evaluation.el2n_probe_epoch must be >= 1");
  require(c.evaluation.el2n_runs >= 1, "evaluation.el2n_runs must be >= 1");
  require(c.evaluation.cross_eval_strata >= 2, "evaluation.cross_eval_strata must be >= 2");

  require(!c.sweep.budgets.empty(), "sweep.budgets must not be empty");
  for (double b : c.sweep.budgets) validate_budget(b, "sweep.budgets");
  require(!c.sweep.methods.empty(), "sweep.methods must not be empty");
  for (const auto& m : c.sweep.methods) validate_method(m, "sweep.methods");
  for (const auto& s : c.sweep.strategy_scores) require(is_score(s), "sweep.strategy_scores: unknown score '" + s + "'");
  for (const auto& s : c.sweep.strategy_methods)
    require(is_strategy(s), "sweep.strategy_methods: unknown strategy '" + s + "'");
  for (int b : c.sweep.hyper_samples_per_class) require(b >= 1, "sweep.hyper_samples_per_class entries must be >= 1");
  for (int n : c.sweep.hyper_num_eps) require(n >= 1, "sweep.hyper_num_eps entries must be >= 1");
  for (int p : c.sweep.comparison_positions)
    require(p >= 0 && p < c.schedule.inference_steps, "sweep.comparison_positions entries must be grid positions");

  require(c.oracle.quadrature_points_1d >= 2048, "oracle.quadrature_points_1d must be >= 2048");
  require(c.oracle.quadrature_points_2d >= 512, "oracle.quadrature_points_2d must be >= 512");
  require(c.oracle.monte_carlo_samples >= 1000, "oracle.monte_carlo_samples must be >= 1000");
  validate_preset(c.oracle.lemma1_world, "oracle.lemma1_world");
  require(c.oracle.lemma1_num_timesteps >= 1, "oracle.lemma1_num_timesteps must be >= 1");
  validate_preset(c.oracle.theorem1_world, "oracle.theorem1_world");
  require(c.oracle.theorem1_samples >= 200, "oracle.theorem1_samples must be >= 200");
  validate_preset(c.oracle.search_world, "oracle.search_world");
  validate_budget(c.oracle.search_budget, "oracle.search_budget");
  require(c.oracle.search_start >= 0.0 && c.oracle.search_start + c.oracle.search_budget <= 1.0 + 1e-9,
          "oracle: search_start + search_budget must be <= 1");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["world"] = {{"preset", c.world.preset}, {"n_per_class", c.world.n_per_class}, {"test_per_class", c.world.test_per_class}};
  if (c.world.custom) j["world"].update(custom_world_to_json(*c.world.custom));
  j["schedule"] = {{"train_steps", c.schedule.train_steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end},
                   {"inference_steps", c.schedule.inference_steps}};
  j["denoiser"] = {{"kind", c.denoiser.kind},
                   {"epochs", c.denoiser.train.epochs},
                   {"batch_size", c.denoiser.train.batch_size},
                   {"learning_rate", c.denoiser.train.learning_rate},
                   {"hidden", c.denoiser.train.hidden}};
  j["scoring"] = {{"num_draws", c.scoring.num_draws},
                  {"metric", c.scoring.metric},
                  {"timestep_override", c.scoring.timestep_override ? json(*c.scoring.timestep_override) : json(nullptr)}};
  j["selector"] = {{"samples_per_class", c.selector.samples_per_class},
                   {"num_eps", c.selector.num_eps},
                   {"delta_t", c.selector.delta_t},
                   {"gamma_min", c.selector.gamma_min},
                   {"gamma_max", c.selector.gamma_max}};
  j["selection"] = {{"method", c.selection.method},
                    {"budget", c.selection.budget},
                    {"window_start", c.selection.window_start},
                    {"num_strata", c.selection.num_strata},
                    {"bws_step", c.selection.bws_step},
                    {"bws_eval_split", c.selection.bws_eval_split}};
  j["evaluation"] = {{"model", to_string(c.evaluation.classifier.kind)},
                     {"epochs", c.evaluation.classifier.epochs},
                     {"learning_rate", c.evaluation.classifier.learning_rate},
                     {"hidden", c.evaluation.classifier.hidden},
                     {"num_seeds", c.evaluation.num_seeds},
                     {"baseline_model", to_string(c.evaluation.baseline_model)},
                     {"baseline_epochs", c.evaluation.baseline_epochs},
                     {"el2n_probe_epoch", c.evaluation.el2n_probe_epoch},
                     {"el2n_runs", c.evaluation.el2n_runs},
                     {"cross_eval_strata", c.evaluation.cross_eval_strata}};
  j["sweep"] = {{"budgets", c.sweep.budgets},
                {"methods", c.sweep.methods},
                {"strategy_scores", c.sweep.strategy_scores},
                {"strategy_methods", c.sweep.strategy_methods},
                {"hyper_samples_per_class", c.sweep.hyper_samples_per_class},
                {"hyper_num_eps", c.sweep.hyper_num_eps},
                {"comparison_positions", c.sweep.comparison_positions}};
  j["oracle"] = {{"quadrature_points_1d", c.oracle.quadrature_points_1d},
                 {"quadrature_points_2d", c.oracle.quadrature_points_2d},
                 {"monte_carlo_samples", c.oracle.monte_carlo_samples},
                 {"lemma1_world", c.oracle.lemma1_world},
                 {"lemma1_num_timesteps", c.oracle.lemma1_num_timesteps},
                 {"theorem1_world", c.oracle.theorem1_world},
                 {"theorem1_samples", c.oracle.theorem1_samples},
                 {"theorem1_min_rho", c.oracle.theorem1_min_rho},
                 {"search_world", c.oracle.search_world},
                 {"search_budget", c.oracle.search_budget},
                 {"search_start", c.oracle.search_start}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  {
    auto s = root.sub("world");
    s.get("preset", c.world.preset);
    s.get("n_per_class", c.world.n_per_class);
    s.get("test_per_class", c.world.test_per_class);
    json classes, outliers;
    s.get("classes", classes);
    s.get("outliers", outliers);
    require(outliers.is_null() || !classes.is_null(), "world.outliers needs world.classes");
    if (!classes.is_null()) {
      require(classes.is_array(), "world.classes must be a list of component lists");
      CustomWorld w;
      for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const std::string path = "world.classes[" + std::to_string(ci) + "]";
        require(classes[ci].is_array(), path + " must be a list of components");
        std::vector<GaussianComponent> comps;
        for (std::size_t k = 0; k < classes[ci].size(); ++k)
          comps.push_back(component_from_json(classes[ci][k], path + "[" + std::to_string(k) + "]"));
        w.classes.push_back(std::move(comps));
      }
      if (!outliers.is_null()) {
        Section o(outliers, "world.outliers");
        OutlierSpec spec;
        o.get("fraction", spec.fraction);
        o.get("offset_scale", spec.offset_scale);
        o.finish();
        w.outliers = spec;
      }
      c.world.custom = std::move(w);
    }
    s.finish();
  }
  {
    auto s = root.sub("schedule");
    s.get("train_steps", c.schedule.train_steps);
    s.get("beta_start", c.schedule.beta_start);
    s.get("beta_end", c.schedule.beta_end);
    s.get("inference_steps", c.schedule.inference_steps);
    s.finish();
  }
  {
    auto s = root.sub("denoiser");
    s.get("kind", c.denoiser.kind);
    s.get("epochs", c.denoiser.train.epochs);
    s.get("batch_size", c.denoiser.train.batch_size);
    s.get("learning_rate", c.denoiser.train.learning_rate);
    s.get("hidden", c.denoiser.train.hidden);
    s.finish();
  }
  {
    auto s = root.sub("scoring");
    s.get("num_draws", c.scoring.num_draws);
    s.get("metric", c.scoring.metric);
    s.get("timestep_override", c.scoring.timestep_override);
    s.finish();
  }
  {
    auto s = root.sub("selector");
    s.get("samples_per_class", c.selector.samples_per_class);
    s.get("num_eps", c.selector.num_eps);
    s.get("delta_t", c.selector.delta_t);
    s.get("gamma_min", c.selector.gamma_min);
    s.get("gamma_max", c.selector.gamma_max);
    s.finish();
  }
  {
    auto s = root.sub("selection");
    s.get("method", c.selection.method);
    s.get("budget", c.selection.budget);
    s.get("window_start", c.selection.window_start);
    s.get("num_strata", c.selection.num_strata);
    s.get("bws_step", c.selection.bws_step);
    s.get("bws_eval_split", c.selection.bws_eval_split);
    s.finish();
  }
  {
    auto s = root.sub("evaluation");
    s.get("model", c.evaluation.classifier.kind);
    s.get("epochs", c.evaluation.classifier.epochs);
    s.get("learning_rate", c.evaluation.classifier.learning_rate);
    s.get("hidden", c.evaluation.classifier.hidden);
    s.get("num_seeds", c.evaluation.num_seeds);
    s.get("baseline_model", c.evaluation.baseline_model);
    s.get("baseline_epochs", c.evaluation.baseline_epochs);
    s.get("el2n_probe_epoch", c.evaluation.el2n_probe_epoch);
    s.get("el2n_runs", c.evaluation.el2n_runs);
    s.get("cross_eval_strata", c.evaluation.cross_eval_strata);
    s.finish();
  }
  {
    auto s = root.sub("sweep");
    s.get("budgets", c.sweep.budgets);
    s.get("methods", c.sweep.methods);
    s.get("strategy_scores", c.sweep.strategy_scores);
    s.get("strategy_methods", c.sweep.strategy_methods);
    s.get("hyper_samples_per_class", c.sweep.hyper_samples_per_class);
    s.get("hyper_num_eps", c.sweep.hyper_num_eps);
    s.get("comparison_positions", c.sweep.comparison_positions);
    s.finish();
  }
  {
    auto s = root.sub("oracle");
    s.get("quadrature_points_1d", c.oracle.quadrature_points_1d);
    s.get("quadrature_points_2d", c.oracle.quadrature_points_2d);
    s.get("monte_carlo_samples", c.oracle.monte_carlo_samples);
    s.get("lemma1_world", c.oracle.lemma1_world);
    s.get("lemma1_num_timesteps", c.oracle.lemma1_num_timesteps);
    s.get("theorem1_world", c.oracle.theorem1_world);
    s.get("theorem1_samples", c.oracle.theorem1_samples);
    s.get("theorem1_min_rho", c.oracle.theorem1_min_rho);
    s.get("search_world", c.oracle.search_world);
    s.get("search_budget", c.oracle.search_budget);
    s.get("search_start", c.oracle.search_start);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto ext = path.extension().string();
  json j;
  if (ext == ".json") {
    try {
      j = json::parse(buffer.str());
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  } else {
    try {
      j = yaml_to_json(YAML::Load(buffer.str()));
    } catch (const YAML::Exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.is_null()) j = json::object();
  }
  return config_from_json(j);
}

std::string hash_preimage(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("output_dir");
  return j.dump();
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = rng::tag(hash_preimage(config));
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

NoiseSchedule make_schedule(const ScheduleConfig& config) {
  return linear_schedule(config.train_steps, config.beta_start, config.beta_end, config.inference_steps);
}

}  // namespace drd
