#pragma once

// Training loops: defenders against the APF attacker under the agility
// curriculum, and alternating defender/attacker phases.
//
// Run directory:
//   config.json      full config echo (parse it back to reproduce the run)
//   metrics.jsonl    one JSON object per log/eval/phase event; no wall-clock data
//   checkpoints/     step_<N>.ckpt, phase<k>_<side>.ckpt
//   final.ckpt
//   report.json      summary, including timing

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "arboids/evaluation.hpp"

namespace arboids {

struct TrainSummary {
  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  std::int64_t defender_updates = 0;
  std::int64_t attacker_updates = 0;
  TrialStats final_eval;
  std::vector<std::string> checkpoints;
  double wall_seconds = 0.0;
};

/// Stream seeds, one per consumer, so adding draws in one place never
/// shifts another.
enum class SeedStream : std::uint64_t { defender = 1, attacker, episodes, agility, explore, eval };

class Orchestrator {
 public:
  Orchestrator(RunConfig cfg, std::filesystem::path out)
      : cfg_(std::move(cfg)),
        out_(std::move(out)),
        curriculum_(cfg_.effective_curriculum()),
        env_(cfg_.effective_engagement(), cfg_.boids, cfg_.mapping, cfg_.boids_variant),
        apf_(cfg_.apf),
        defender_(defender_layout(cfg_.engagement.n_defenders, blend_mode_for(cfg_.policy.defender) != BlendMode::vanilla),
                  cfg_.network, blend_mode_for(cfg_.policy.defender), cfg_.learner, seed_for(SeedStream::defender)),
        agility_rng_(seed_for(SeedStream::agility)),
        explore_rng_(seed_for(SeedStream::explore)) {
    cfg_.validate();
    tune_allocator();
  }

  SacLearner<float>& defender() { return defender_; }
  SacLearner<float>* attacker() { return attacker_ ? &*attacker_ : nullptr; }
  const RunConfig& config() const { return cfg_; }

  /// Defender training against the scripted attacker.
  TrainSummary train() {
    const auto t0 = std::chrono::steady_clock::now();
    open_run("train");
    for (std::int64_t k = 0; k < cfg_.training.total_steps; ++k) {
      step_once(Side::defender, false);
      after_step(Side::defender);
    }
    return finish(t0);
  }

  /// Phases alternate which side learns; the other side acts deterministically
  /// and its parameters are checked bit-identical across the phase. Until its
  /// first learning phase the attacker is the APF controller.
  TrainSummary alternating_train(const PhaseSchedule& schedule) {
    schedule.validate();
    const auto t0 = std::chrono::steady_clock::now();
    if (!attacker_)
      attacker_.emplace(attacker_layout(cfg_.engagement.n_defenders), cfg_.network, BlendMode::vanilla, cfg_.learner,
                        seed_for(SeedStream::attacker));
    open_run("alt-train");
    for (std::size_t p = 0; p < schedule.phases.size(); ++p) {
      const Phase& ph = schedule.phases[p];
      if (ph.side == Side::attacker) attacker_active_ = true;
      phase_ = static_cast<int>(p);
      const std::uint64_t frozen_before = frozen_checksum(ph.side);
      log_event({{"kind", "phase_start"}, {"phase", p}, {"side", to_string(ph.side)}, {"step", step_},
                 {"frozen_checksum", frozen_before}});
      for (std::int64_t k = 0; k < ph.steps; ++k) {
        step_once(ph.side, attacker_active_);
        after_step(ph.side);
      }
      const std::uint64_t frozen_after = frozen_checksum(ph.side);
      if (frozen_after != frozen_before)
        throw RuntimeError("frozen side changed during phase " + std::to_string(p));
      const auto path = out_ / "checkpoints" / ("phase" + std::to_string(p) + "_" + to_string(ph.side) + ".ckpt");
      write_checkpoint(path);
      log_event({{"kind", "phase_end"}, {"phase", p}, {"side", to_string(ph.side)}, {"step", step_},
                 {"frozen_checksum", frozen_after}, {"checkpoint", path.filename().string()}});
    }
    phase_ = -1;
    return finish(t0);
  }

  /// Current defender policy as an evaluation snapshot.
  LearnedDefender defender_snapshot() const {
    return LearnedDefender(defender_.mode(), defender_.actor().shape(), defender_.actor().params());
  }

 private:
  std::uint64_t seed_for(SeedStream s) const { return mix_seed(cfg_.seed, static_cast<std::uint64_t>(s)); }

  std::unique_ptr<AttackerPolicy> attacker_policy() const {
    if (attacker_ && attacker_active_)
      return std::make_unique<LearnedAttacker>(attacker_->actor().shape(), attacker_->actor().params(), cfg_.apf.sensing_range);
    return std::make_unique<ApfAttacker>(cfg_.apf);
  }

  std::uint64_t frozen_checksum(Side training) {
    auto sum = [](SacLearner<float>& l) {
      std::uint64_t h = l.actor().params().checksum();
      for (int k = 0; k < 2; ++k) h = h * 1099511628211ULL ^ l.critic(k).params().checksum();
      return h;
    };
    return training == Side::defender ? sum(*attacker_) : sum(defender_);
  }

  void open_run(const std::string& command) {
    std::error_code ec;
    std::filesystem::create_directories(out_ / "checkpoints", ec);
    if (ec) throw IoError("cannot create output directory '" + out_.string() + "': " + ec.message());
    write_text(out_ / "config.json", to_json(cfg_).dump(2) + "\n");
    metrics_.open(out_ / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics_) throw IoError("cannot write '" + (out_ / "metrics.jsonl").string() + "'");
    log_event({{"kind", "start"}, {"command", command}, {"seed", cfg_.seed}, {"profile", cfg_.profile},
               {"policy", to_string(cfg_.policy.defender)},
               {"ablation", {{"no_formation_reward", cfg_.ablation.no_formation_reward},
                             {"no_curriculum", cfg_.ablation.no_curriculum}}},
               {"formation_reward", env_.config().formation_reward},
               {"curriculum_enabled", curriculum_.enabled}});
  }

  TrainSummary finish(std::chrono::steady_clock::time_point t0) {
    TrainSummary s;
    const auto final_path = out_ / "final.ckpt";
    write_checkpoint(final_path);
    TrialSetup setup = trial_setup(cfg_);
    const auto def = defender_snapshot();
    const auto att = attacker_policy();
    s.final_eval = run_trials(def, *att, setup, cfg_.evaluation.trials, seed_for(SeedStream::eval));
    s.steps = step_;
    s.episodes = episodes_;
    s.defender_updates = defender_.updates();
    s.attacker_updates = attacker_ ? attacker_->updates() : 0;
    s.checkpoints = checkpoints_;
    s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_event({{"kind", "final"}, {"step", step_}, {"eval", s.final_eval.to_json()},
               {"actor_checksum", defender_.actor().params().checksum()}});
    metrics_.close();
    nlohmann::json rep = {{"steps", s.steps},
                          {"episodes", s.episodes},
                          {"defender_updates", s.defender_updates},
                          {"attacker_updates", s.attacker_updates},
                          {"final_eval", s.final_eval.to_json()},
                          {"final_eval_agility", cfg_.evaluation.agility},
                          {"checkpoints", s.checkpoints},
                          {"wall_seconds", s.wall_seconds},
                          {"steps_per_second", s.wall_seconds > 0 ? s.steps / s.wall_seconds : 0.0}};
    write_text(out_ / "report.json", rep.dump(2) + "\n");
    return s;
  }

  void write_checkpoint(const std::filesystem::path& path) {
    TensorArchive a;
    save_learner(a, "defender", defender_, step_);
    if (attacker_) save_learner(a, "attacker", *attacker_, step_);
    a.write(path);
    checkpoints_.push_back(std::filesystem::relative(path, out_).generic_string());
  }

  static void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    f << text;
    if (!f.flush()) throw IoError("write failed for '" + p.string() + "'");
  }

  void log_event(const nlohmann::json& j) {
    metrics_ << j.dump() << '\n';
    if (!metrics_) throw IoError("metrics write failed");
  }

  void begin_episode() {
    mean_agility_ = curriculum_mean(step_, curriculum_);
    env_.mutable_config().agility =
        curriculum_.half_width > 0 ? sample_agility(mean_agility_, agility_rng_, curriculum_.half_width) : mean_agility_;
    env_.reset(mix_seed(seed_for(SeedStream::episodes), static_cast<std::uint64_t>(episodes_)));
    episode_return_ = 0.0;
    in_episode_ = true;
  }

  std::vector<ActionChoice> random_choices(const SacLearner<float>& l, std::span<const NormalizedAction> boids, int count) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), u01(0.0, 1.0);
    std::vector<ActionChoice> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      auto& c = out[static_cast<std::size_t>(i)];
      c.a_drl = {u(explore_rng_), u(explore_rng_)};
      const NormalizedAction b = boids.empty() ? NormalizedAction{} : boids[static_cast<std::size_t>(i)];
      switch (l.mode()) {
        case BlendMode::arboids:
          c.theta = u01(explore_rng_);
          c.a_exec = blend_actions(c.a_drl, b, c.theta);
          break;
        case BlendMode::residual:
          c.a_exec = residual_actions(c.a_drl, b);
          break;
        case BlendMode::vanilla:
          c.a_exec = {c.a_drl[0], c.a_drl[1]};
          break;
      }
    }
    return out;
  }

  void observe_defenders(nn::Matrix<float>& obs, std::vector<NormalizedAction>& boids) {
    const int n = static_cast<int>(env_.state().defenders.size());
    const ObsLayout& L = defender_.layout();
    obs.resize(L.flat_dim(), n);
    boids.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Observation o = env_.observe(i, true);
      boids[static_cast<std::size_t>(i)] = o.boids.a_boids;
      flatten_defender_observation<float>(o, L, std::span<float>(obs.col(i).data(), static_cast<std::size_t>(L.flat_dim())));
    }
  }

  void observe_attacker(nn::Matrix<float>& obs) {
    const ObsLayout& L = attacker_->layout();
    obs.resize(L.flat_dim(), 1);
    flatten_attacker_observation<float>(attacker_observation(env_.state(), cfg_.apf.sensing_range), L,
                                        std::span<float>(obs.data(), static_cast<std::size_t>(L.flat_dim())));
  }

  static Transition make_transition(const nn::Matrix<float>& obs, const nn::Matrix<float>& next, int col,
                                    const ActionChoice& c, const NormalizedAction& boids, double reward, bool done) {
    Transition t;
    t.obs.assign(obs.col(col).data(), obs.col(col).data() + obs.rows());
    t.next_obs.assign(next.col(col).data(), next.col(col).data() + next.rows());
    t.a_drl = {static_cast<float>(c.a_drl[0]), static_cast<float>(c.a_drl[1])};
    t.theta = static_cast<float>(c.theta);
    t.reward = static_cast<float>(reward);
    t.done = done;
    t.a_boids = {static_cast<float>(boids.a_left), static_cast<float>(boids.a_right)};
    return t;
  }

  /// `side_steps` is the 0-based index of the step just taken by that side.
  void maybe_update(SacLearner<float>& l, std::int64_t side_steps, UpdateStats& last, bool& updated) {
    const auto& lc = l.config();
    if (side_steps < lc.warmup_steps || l.buffer().size() < 1) return;
    if (side_steps % lc.update_every != 0) return;
    for (int k = 0; k < lc.updates_per_step; ++k) {
      last = l.update();
      updated = true;
    }
  }

  /// One decision step for every agent. `learning` is the side collecting
  /// experience; the other side acts deterministically.
  void step_once(Side learning, bool learned_attacker) {
    if (!in_episode_) begin_episode();
    const int n = static_cast<int>(env_.state().defenders.size());
    observe_defenders(d_obs_, d_boids_);
    const bool train_def = learning == Side::defender;
    std::vector<ActionChoice> d_choice;
    if (train_def && def_steps_ < defender_.config().warmup_steps)
      d_choice = random_choices(defender_, d_boids_, n);
    else
      d_choice = defender_.select_actions(d_obs_, d_boids_, train_def ? ActMode::train : ActMode::eval, defender_.rng());
    d_actions_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d_actions_[static_cast<std::size_t>(i)] = d_choice[static_cast<std::size_t>(i)].a_exec;

    const bool train_att = learning == Side::attacker;
    std::optional<ActionChoice> a_choice;
    NormalizedAction a_act;
    if (learned_attacker) {
      observe_attacker(a_obs_);
      if (train_att && att_steps_ < attacker_->config().warmup_steps)
        a_choice = random_choices(*attacker_, {}, 1)[0];
      else
        a_choice = attacker_->select_actions(a_obs_, {}, train_att ? ActMode::train : ActMode::eval, attacker_->rng())[0];
      a_act = a_choice->a_exec;
    } else {
      a_act = apf_.act(env_.state(), env_.config());
    }

    const EngagementState prev = train_att ? env_.state() : EngagementState{};
    const StepResult sr = env_.step(d_actions_, a_act);
    const bool done = sr.outcome && !std::holds_alternative<TimeoutSuccess>(*sr.outcome);

    double mean_r = 0.0;
    for (const auto& r : sr.rewards) mean_r += r.total();
    mean_r /= n;
    episode_return_ += mean_r;

    if (train_def) {
      observe_defenders(d_next_, d_next_boids_);
      for (int i = 0; i < n; ++i)
        defender_.buffer().push(make_transition(d_obs_, d_next_, i, d_choice[static_cast<std::size_t>(i)],
                                                d_boids_[static_cast<std::size_t>(i)],
                                                sr.rewards[static_cast<std::size_t>(i)].total(), done));
      maybe_update(defender_, def_steps_, def_last_, def_updated_);
      ++def_steps_;
      for (const auto& c : d_choice) theta_sum_ += c.theta;
      theta_count_ += n;
    }
    if (train_att) {
      nn::Matrix<float> next;
      observe_attacker(next);
      const double r = attacker_reward(prev, env_.state(), sr.outcome, env_.config());
      attacker_->buffer().push(make_transition(a_obs_, next, 0, *a_choice, {}, r, done));
      maybe_update(*attacker_, att_steps_, att_last_, att_updated_);
      ++att_steps_;
    }

    if (sr.outcome) {
      in_episode_ = false;
      ++episodes_;
      ++window_episodes_;
      window_return_ += episode_return_;
      window_.add({*sr.outcome, env_.state().t, 0});
    }
    ++step_;
  }

  void after_step(Side learning) {
    const auto& t = cfg_.training;
    if (step_ % t.log_every == 0) log_train_row(learning);
    if (step_ % t.eval_every == 0) log_eval_row();
    if (step_ % t.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "step_%09lld.ckpt", static_cast<long long>(step_));
      write_checkpoint(out_ / "checkpoints" / name);
    }
  }

  void log_train_row(Side learning) {
    const bool warm = learning == Side::defender ? !def_updated_ : !att_updated_;
    nlohmann::json j = {{"kind", "train"},
                        {"step", step_},
                        {"stage", warm ? "warmup" : "learning"},
                        {"episodes", episodes_},
                        {"mean_agility", mean_agility_},
                        {"defender_updates", defender_.updates()},
                        {"defender_buffer", defender_.buffer().size()},
                        {"actor_checksum", defender_.actor().params().checksum()},
                        {"window_episodes", window_episodes_},
                        {"window_success_rate", window_episodes_ ? nlohmann::json(window_.success_rate()) : nlohmann::json(nullptr)},
                        {"window_collision_rate", window_episodes_ ? nlohmann::json(window_.collision_rate()) : nlohmann::json(nullptr)},
                        {"window_mean_return", window_episodes_ ? nlohmann::json(window_return_ / window_episodes_) : nlohmann::json(nullptr)}};
    if (phase_ >= 0) {
      j["phase"] = phase_;
      j["side"] = to_string(learning);
    }
    if (attacker_) j["attacker_updates"] = attacker_->updates();
    auto losses = [](const UpdateStats& u) {
      return nlohmann::json{{"critic1_loss", u.critic1_loss}, {"critic2_loss", u.critic2_loss}, {"actor_loss", u.actor_loss},
                            {"alpha", u.alpha}, {"mean_log_prob", u.mean_log_prob}, {"mean_theta", u.mean_theta}};
    };
    if (def_updated_) j["defender_learner"] = losses(def_last_);
    if (att_updated_) j["attacker_learner"] = losses(att_last_);
    if (theta_count_ > 0 && defender_.mode() == BlendMode::arboids) j["mean_theta_exec"] = theta_sum_ / theta_count_;
    log_event(j);
    window_ = {};
    window_episodes_ = 0;
    window_return_ = 0.0;
    theta_sum_ = 0.0;
    theta_count_ = 0;
  }

  void log_eval_row() {
    TrialSetup setup = trial_setup(cfg_);
    setup.engagement.agility = curriculum_mean(step_, curriculum_);
    const auto def = defender_snapshot();
    const auto att = attacker_policy();
    const TrialStats st = run_trials(def, *att, setup, cfg_.training.eval_episodes, seed_for(SeedStream::eval));
    nlohmann::json j = {{"kind", "eval"},
                        {"step", step_},
                        {"agility", setup.engagement.agility},
                        {"attacker", att->name()},
                        {"defender_sr", st.success_rate()},
                        {"attacker_sr", st.breach_rate()},
                        {"collision_rate", st.collision_rate()},
                        {"stats", st.to_json()}};
    if (phase_ >= 0) j["phase"] = phase_;
    log_event(j);
  }

  RunConfig cfg_;
  std::filesystem::path out_;
  CurriculumConfig curriculum_;
  Engagement env_;
  ApfAttacker apf_;
  SacLearner<float> defender_;
  std::optional<SacLearner<float>> attacker_;
  bool attacker_active_ = false;
  int phase_ = -1;

  std::mt19937_64 agility_rng_, explore_rng_;
  std::ofstream metrics_;
  std::vector<std::string> checkpoints_;

  std::int64_t step_ = 0, episodes_ = 0, def_steps_ = 0, att_steps_ = 0;
  bool in_episode_ = false;
  double mean_agility_ = 0.0, episode_return_ = 0.0;
  UpdateStats def_last_, att_last_;
  bool def_updated_ = false, att_updated_ = false;

  TrialStats window_;
  std::int64_t window_episodes_ = 0;
  double window_return_ = 0.0, theta_sum_ = 0.0;
  std::int64_t theta_count_ = 0;

  nn::Matrix<float> d_obs_, d_next_, a_obs_;
  std::vector<NormalizedAction> d_boids_, d_next_boids_, d_actions_;
};

inline PhaseSchedule schedule_from(const TrainingConfig& t) {
  return PhaseSchedule::alternating(t.phases, t.phase_steps, t.first_side);
}

}  // namespace arboids
