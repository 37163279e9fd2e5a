#pragma once

// Run configuration: a versioned JSON document with one section per module.
// Every key is optional; unknown keys are rejected by name.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "arboids/apf.hpp"
#include "arboids/curriculum.hpp"
#include "arboids/sac.hpp"

namespace arboids {

inline constexpr int kSchemaVersion = 1;

enum class DefenderPolicyKind { boids, stationary, rp, vanilla_sac, arboids };
enum class AttackerPolicyKind { apf, learned };

inline std::string to_string(DefenderPolicyKind k) {
  switch (k) {
    case DefenderPolicyKind::boids: return "boids";
    case DefenderPolicyKind::stationary: return "stationary";
    case DefenderPolicyKind::rp: return "rp";
    case DefenderPolicyKind::vanilla_sac: return "vanilla_sac";
    case DefenderPolicyKind::arboids: return "arboids";
  }
  return "?";
}

inline DefenderPolicyKind parse_defender_kind(const std::string& s) {
  for (auto k : {DefenderPolicyKind::boids, DefenderPolicyKind::stationary, DefenderPolicyKind::rp,
                 DefenderPolicyKind::vanilla_sac, DefenderPolicyKind::arboids})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown defender policy '" + s + "' (expected boids, stationary, rp, vanilla_sac or arboids)");
}

inline bool is_learned(DefenderPolicyKind k) {
  return k == DefenderPolicyKind::rp || k == DefenderPolicyKind::vanilla_sac || k == DefenderPolicyKind::arboids;
}

inline BlendMode blend_mode_for(DefenderPolicyKind k) {
  switch (k) {
    case DefenderPolicyKind::rp: return BlendMode::residual;
    case DefenderPolicyKind::vanilla_sac: return BlendMode::vanilla;
    case DefenderPolicyKind::arboids: return BlendMode::arboids;
    default: break;
  }
  throw ConfigError("policy '" + to_string(k) + "' is scripted and has no learner");
}

struct TrainingConfig {
  std::int64_t total_steps = 1'000'000;
  std::int64_t eval_every = 5000;
  int eval_episodes = 20;
  std::int64_t checkpoint_every = 100'000;
  std::int64_t log_every = 1000;
  int phases = 5;
  std::int64_t phase_steps = 500'000;
  Side first_side = Side::defender;
};

struct EvaluationConfig {
  int trials = 100;
  double sector_width = kPi / 2;
  double agility = 2.0;
  int threads = 1;
};

struct PolicyConfig {
  DefenderPolicyKind defender = DefenderPolicyKind::arboids;
  AttackerPolicyKind attacker = AttackerPolicyKind::apf;
  std::string checkpoint;
  std::string attacker_checkpoint;
};

struct AblationConfig {
  bool no_formation_reward = false;
  /// Train at the final curriculum plateau from the first step.
  bool no_curriculum = false;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::string profile = "paper";
  std::uint64_t seed = 0;
  EngagementConfig engagement{};
  BoidsWeights boids{};
  BoidsVariant boids_variant = BoidsVariant::conventional;
  MappingGains mapping{};
  ApfParams apf{};
  NetworkShape network{};
  LearnerConfig learner{};
  CurriculumConfig curriculum{};
  TrainingConfig training{};
  EvaluationConfig evaluation{};
  PolicyConfig policy{};
  AblationConfig ablation{};
  std::string output_dir = "runs/default";

  EngagementConfig effective_engagement() const {
    EngagementConfig e = engagement;
    if (ablation.no_formation_reward) e.formation_reward = false;
    return e;
  }

  CurriculumConfig effective_curriculum() const {
    CurriculumConfig c = curriculum;
    if (ablation.no_curriculum) {
      c.initial = curriculum_mean(c.interval * c.max_increments, c);
      c.enabled = false;
    }
    return c;
  }

  void validate() const {
    if (schema_version != kSchemaVersion)
      throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                        std::to_string(kSchemaVersion) + ")");
    engagement.validate();
    boids.validate();
    mapping.validate();
    apf.validate();
    learner.validate();
    curriculum.validate();
    if (learner.batch > learner.buffer_capacity) throw ConfigError("learner.batch exceeds learner.buffer_capacity");
    if (network.embed_dim < 1 || network.width < 1 || network.depth < 1 || network.adapter_hidden < 1)
      throw ConfigError("network sizes must be >= 1");
    if (network.adapter_feature_layer >= network.depth)
      throw ConfigError("network.adapter_feature_layer must be < network.depth");
    const auto& t = training;
    if (t.total_steps < 1 || t.eval_every < 1 || t.checkpoint_every < 1 || t.log_every < 1 || t.eval_episodes < 1)
      throw ConfigError("training counts must be >= 1");
    if (t.phases < 1 || t.phase_steps < 1) throw ConfigError("training.phases and training.phase_steps must be >= 1");
    const auto& e = evaluation;
    if (e.trials < 1) throw ConfigError("evaluation.trials must be >= 1");
    if (!(e.sector_width > 0.0 && e.sector_width <= 2 * kPi)) throw ConfigError("evaluation.sector_width must be in (0, 2pi]");
    if (!(e.agility > 0.0)) throw ConfigError("evaluation.agility must be > 0");
    if (e.threads < 1) throw ConfigError("evaluation.threads must be >= 1");
  }
};

/// Profile presets. "paper" keeps the published hyperparameters; "desk" is
/// a reduced budget that trains on one core in minutes.
inline RunConfig default_config(const std::string& profile = "paper") {
  RunConfig c;
  c.profile = profile;
  if (profile == "paper") return c;
  if (profile != "desk") throw ConfigError("unknown profile '" + profile + "' (expected paper or desk)");
  c.network = {32, 64, 3, 32, -1};
  c.learner.batch = 128;
  c.learner.update_every = 2;
  c.learner.buffer_capacity = 300'000;
  c.learner.lr = 3e-4;
  c.learner.warmup_steps = 2000;
  c.curriculum.interval = 25'000;
  c.training.total_steps = 100'000;
  c.training.eval_every = 2500;
  c.training.checkpoint_every = 25'000;
  c.training.log_every = 500;
  c.training.phase_steps = 20'000;
  return c;
}

namespace detail {

using nlohmann::json;

/// Walks one JSON object, remembering which keys were consumed.
class SectionReader {
 public:
  SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + where() + "' must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    const std::string k = qualified(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("'" + k + "' must be a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError("'" + k + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0) out = it->template get<T>();
        else throw ConfigError("'" + k + "' must be non-negative");
      } else {
        out = it->template get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("'" + k + "' must be a number");
      out = it->template get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("'" + k + "' must be a string");
      out = it->template get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  SectionReader section(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return SectionReader(it == j_.end() ? empty : *it, qualified(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + qualified(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  detail::SectionReader r(root, "");
  std::string profile = "paper";
  r.get("profile", profile);
  RunConfig c = default_config(profile);
  r.get("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(c.schema_version) + " is not supported");
  r.get("seed", c.seed);
  {
    auto s = r.section("engagement");
    auto& e = c.engagement;
    s.get("r_cap", e.r_cap);
    s.get("r0", e.r0);
    s.get("rho_t", e.rho_t);
    s.get("rho_a", e.rho_a);
    s.get("r_collision", e.r_collision);
    s.get("t_total", e.t_total);
    s.get("t_action", e.t_action);
    s.get("physics_dt", e.physics_dt);
    s.get("n_defenders", e.n_defenders);
    s.get("spawn_min", e.spawn_min);
    s.get("spawn_max", e.spawn_max);
    s.get("noise_sigma_bearing", e.noise_sigma_bearing);
    s.get("noise_sigma_distance", e.noise_sigma_distance);
    s.get("agility", e.agility);
    s.finish();
  }
  {
    auto s = r.section("vessel");
    auto& v = c.engagement.vessel;
    s.get("mass", v.mass);
    s.get("iz", v.iz);
    s.get("xudot", v.xudot);
    s.get("yvdot", v.yvdot);
    s.get("nrdot", v.nrdot);
    s.get("du1", v.du1);
    s.get("dv1", v.dv1);
    s.get("dr1", v.dr1);
    s.get("du2", v.du2);
    s.get("dv2", v.dv2);
    s.get("dr2", v.dr2);
    s.get("lever_arm", v.lever_arm);
    s.get("thrust_min", v.thrust.tau_min);
    s.get("thrust_max", v.thrust.tau_max);
    s.finish();
  }
  {
    auto s = r.section("boids");
    s.get("k_sep", c.boids.k_sep);
    s.get("k_ali", c.boids.k_ali);
    s.get("k_coh", c.boids.k_coh);
    s.get("k_att", c.boids.k_att);
    std::string variant = c.boids_variant == BoidsVariant::literal ? "literal" : "conventional";
    s.get("variant", variant);
    if (variant == "conventional") c.boids_variant = BoidsVariant::conventional;
    else if (variant == "literal") c.boids_variant = BoidsVariant::literal;
    else throw ConfigError("boids.variant must be 'conventional' or 'literal', got '" + variant + "'");
    s.finish();
  }
  {
    auto s = r.section("mapping");
    s.get("k_sur", c.mapping.k_sur);
    s.get("k_yaw", c.mapping.k_yaw);
    s.finish();
  }
  {
    auto s = r.section("apf");
    s.get("k_attract", c.apf.k_attract);
    s.get("k_repulse", c.apf.k_repulse);
    s.get("sensing_range", c.apf.sensing_range);
    s.get("k_sur", c.apf.gains.k_sur);
    s.get("k_yaw", c.apf.gains.k_yaw);
    s.finish();
  }
  {
    auto s = r.section("network");
    s.get("embed_dim", c.network.embed_dim);
    s.get("width", c.network.width);
    s.get("depth", c.network.depth);
    s.get("adapter_hidden", c.network.adapter_hidden);
    s.get("adapter_feature_layer", c.network.adapter_feature_layer);
    s.finish();
  }
  {
    auto s = r.section("learner");
    auto& l = c.learner;
    s.get("gamma", l.gamma);
    s.get("lr", l.lr);
    s.get("batch", l.batch);
    s.get("buffer_capacity", l.buffer_capacity);
    s.get("polyak", l.polyak);
    s.get("target_entropy", l.target_entropy);
    s.get("warmup_steps", l.warmup_steps);
    s.get("updates_per_step", l.updates_per_step);
    s.get("update_every", l.update_every);
    s.get("initial_alpha", l.initial_alpha);
    s.get("theta_noise", l.theta_noise);
    s.finish();
  }
  {
    auto s = r.section("curriculum");
    auto& k = c.curriculum;
    s.get("initial", k.initial);
    s.get("increment", k.increment);
    s.get("interval", k.interval);
    s.get("max_increments", k.max_increments);
    s.get("half_width", k.half_width);
    s.finish();
  }
  {
    auto s = r.section("training");
    auto& t = c.training;
    s.get("total_steps", t.total_steps);
    s.get("eval_every", t.eval_every);
    s.get("eval_episodes", t.eval_episodes);
    s.get("checkpoint_every", t.checkpoint_every);
    s.get("log_every", t.log_every);
    s.get("phases", t.phases);
    s.get("phase_steps", t.phase_steps);
    std::string first = to_string(t.first_side);
    s.get("first_side", first);
    if (first == "defender") t.first_side = Side::defender;
    else if (first == "attacker") t.first_side = Side::attacker;
    else throw ConfigError("training.first_side must be 'defender' or 'attacker'");
    s.finish();
  }
  {
    auto s = r.section("evaluation");
    s.get("trials", c.evaluation.trials);
    s.get("sector_width", c.evaluation.sector_width);
    s.get("agility", c.evaluation.agility);
    s.get("threads", c.evaluation.threads);
    s.finish();
  }
  {
    auto s = r.section("policy");
    std::string d = to_string(c.policy.defender);
    s.get("defender", d);
    c.policy.defender = parse_defender_kind(d);
    std::string a = c.policy.attacker == AttackerPolicyKind::apf ? "apf" : "learned";
    s.get("attacker", a);
    if (a == "apf") c.policy.attacker = AttackerPolicyKind::apf;
    else if (a == "learned") c.policy.attacker = AttackerPolicyKind::learned;
    else throw ConfigError("policy.attacker must be 'apf' or 'learned', got '" + a + "'");
    s.get("checkpoint", c.policy.checkpoint);
    s.get("attacker_checkpoint", c.policy.attacker_checkpoint);
    s.finish();
  }
  {
    auto s = r.section("ablation");
    s.get("no_formation_reward", c.ablation.no_formation_reward);
    s.get("no_curriculum", c.ablation.no_curriculum);
    s.finish();
  }
  {
    auto s = r.section("output");
    s.get("dir", c.output_dir);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(nlohmann::json::object());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Full dump of every field; parsing it back yields an identical config.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& e = c.engagement;
  const auto& v = e.vessel;
  json j;
  j["schema_version"] = c.schema_version;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["engagement"] = {{"r_cap", e.r_cap},
                     {"r0", e.r0},
                     {"rho_t", e.rho_t},
                     {"rho_a", e.rho_a},
                     {"r_collision", e.r_collision},
                     {"t_total", e.t_total},
                     {"t_action", e.t_action},
                     {"physics_dt", e.physics_dt},
                     {"n_defenders", e.n_defenders},
                     {"spawn_min", e.spawn_min},
                     {"spawn_max", e.spawn_max},
                     {"noise_sigma_bearing", e.noise_sigma_bearing},
                     {"noise_sigma_distance", e.noise_sigma_distance},
                     {"agility", e.agility}};
  j["vessel"] = {{"mass", v.mass},   {"iz", v.iz},   {"xudot", v.xudot},         {"yvdot", v.yvdot},
                 {"nrdot", v.nrdot}, {"du1", v.du1}, {"dv1", v.dv1},             {"dr1", v.dr1},
                 {"du2", v.du2},     {"dv2", v.dv2}, {"dr2", v.dr2},             {"lever_arm", v.lever_arm},
                 {"thrust_min", v.thrust.tau_min},   {"thrust_max", v.thrust.tau_max}};
  j["boids"] = {{"k_sep", c.boids.k_sep},
                {"k_ali", c.boids.k_ali},
                {"k_coh", c.boids.k_coh},
                {"k_att", c.boids.k_att},
                {"variant", c.boids_variant == BoidsVariant::literal ? "literal" : "conventional"}};
  j["mapping"] = {{"k_sur", c.mapping.k_sur}, {"k_yaw", c.mapping.k_yaw}};
  j["apf"] = {{"k_attract", c.apf.k_attract},
              {"k_repulse", c.apf.k_repulse},
              {"sensing_range", c.apf.sensing_range},
              {"k_sur", c.apf.gains.k_sur},
              {"k_yaw", c.apf.gains.k_yaw}};
  j["network"] = {{"embed_dim", c.network.embed_dim},
                  {"width", c.network.width},
                  {"depth", c.network.depth},
                  {"adapter_hidden", c.network.adapter_hidden},
                  {"adapter_feature_layer", c.network.adapter_feature_layer}};
  const auto& l = c.learner;
  j["learner"] = {{"gamma", l.gamma},
                  {"lr", l.lr},
                  {"batch", l.batch},
                  {"buffer_capacity", l.buffer_capacity},
                  {"polyak", l.polyak},
                  {"target_entropy", l.target_entropy},
                  {"warmup_steps", l.warmup_steps},
                  {"updates_per_step", l.updates_per_step},
                  {"update_every", l.update_every},
                  {"initial_alpha", l.initial_alpha},
                  {"theta_noise", l.theta_noise}};
  const auto& k = c.curriculum;
  j["curriculum"] = {{"initial", k.initial},
                     {"increment", k.increment},
                     {"interval", k.interval},
                     {"max_increments", k.max_increments},
                     {"half_width", k.half_width}};
  const auto& t = c.training;
  j["training"] = {{"total_steps", t.total_steps},
                   {"eval_every", t.eval_every},
                   {"eval_episodes", t.eval_episodes},
                   {"checkpoint_every", t.checkpoint_every},
                   {"log_every", t.log_every},
                   {"phases", t.phases},
                   {"phase_steps", t.phase_steps},
                   {"first_side", to_string(t.first_side)}};
  j["evaluation"] = {{"trials", c.evaluation.trials},
                     {"sector_width", c.evaluation.sector_width},
                     {"agility", c.evaluation.agility},
                     {"threads", c.evaluation.threads}};
  j["policy"] = {{"defender", to_string(c.policy.defender)},
                 {"attacker", c.policy.attacker == AttackerPolicyKind::apf ? "apf" : "learned"},
                 {"checkpoint", c.policy.checkpoint},
                 {"attacker_checkpoint", c.policy.attacker_checkpoint}};
  j["ablation"] = {{"no_formation_reward", c.ablation.no_formation_reward},
                   {"no_curriculum", c.ablation.no_curriculum}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

}  // namespace arboids
