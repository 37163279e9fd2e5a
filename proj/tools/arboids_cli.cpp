// arboids command-line front end.
//
//   arboids train           --config C [--seed S] [--out DIR] [--policy arboids|rp|vanilla_sac] [--defenders N] [--agility A]
//   arboids alt-train       --config C [--seed S] [--out DIR] [--defenders N]
//   arboids eval            --policy P [--config C] [--trials N] [--agility A] [--defenders N] [--seed S] [--out DIR]
//   arboids compare         --policy P [--policy P ...] [--agility A ...] [--defenders N ...] [--trials N] [--out FILE]
//   arboids export          --policy P [--trials N] [--agility A] [--defenders N] [--seed S] --out FILE.csv
//   arboids validate-config --config C
//
// P is "boids", "stationary" or a checkpoint path; compare accepts LABEL=P.
// Exit codes: 0 ok, 2 config, 3 io, 4 checkpoint, 5 runtime.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "arboids/trainer.hpp"

using namespace arboids;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> policy;
  std::optional<int> trials;
  std::vector<double> agility;
  std::vector<int> defenders;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? parse_config_string("") : parse_config_file(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.trials) c.evaluation.trials = *o.trials;
  if (!o.agility.empty()) c.evaluation.agility = o.agility.front();
  if (!o.defenders.empty()) c.engagement.n_defenders = o.defenders.front();
  c.validate();
  return c;
}

std::shared_ptr<DefenderPolicy> resolve_policy(const std::string& spec) {
  if (spec == "boids") return std::make_shared<BoidsPolicy>();
  if (spec == "stationary") return std::make_shared<StationaryPolicy>();
  if (!fs::exists(spec))
    throw IoError("policy '" + spec + "' is neither boids, stationary nor an existing checkpoint");
  return std::make_shared<LearnedDefender>(LearnedDefender::from_file(spec));
}

std::unique_ptr<AttackerPolicy> resolve_attacker(const RunConfig& c) { return make_attacker_policy(c); }

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f << j.dump(2) << '\n';
  if (!f.flush()) throw IoError("write failed for '" + p.string() + "'");
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o);
  if (!o.policy.empty()) c.policy.defender = parse_defender_kind(o.policy.front());
  if (!is_learned(c.policy.defender))
    throw ConfigError("train needs a learned policy (arboids, rp or vanilla_sac), got " + to_string(c.policy.defender));
  if (!o.agility.empty()) {
    // fixed-agility training: flat curriculum at the requested value
    c.curriculum.initial = o.agility.front();
    c.curriculum.increment = 0.0;
    c.curriculum.half_width = 0.0;
    c.curriculum.validate();
  }
  Orchestrator orch(c, c.output_dir);
  const auto s = orch.train();
  print_json({{"out", c.output_dir}, {"steps", s.steps}, {"episodes", s.episodes}, {"updates", s.defender_updates},
              {"final_eval", s.final_eval.to_json()}, {"wall_seconds", s.wall_seconds}});
  return 0;
}

int cmd_alt_train(const Options& o) {
  RunConfig c = load_config(o);
  if (!is_learned(c.policy.defender)) c.policy.defender = DefenderPolicyKind::arboids;
  Orchestrator orch(c, c.output_dir);
  const auto s = orch.alternating_train(schedule_from(c.training));
  print_json({{"out", c.output_dir}, {"steps", s.steps}, {"defender_updates", s.defender_updates},
              {"attacker_updates", s.attacker_updates}, {"final_eval", s.final_eval.to_json()},
              {"checkpoints", s.checkpoints}, {"wall_seconds", s.wall_seconds}});
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig c = load_config(o);
  if (o.policy.size() > 1) throw ConfigError("eval takes a single --policy");
  const auto def = o.policy.empty() ? std::shared_ptr<DefenderPolicy>(make_defender_policy(c)) : resolve_policy(o.policy.front());
  const auto att = resolve_attacker(c);
  std::vector<EpisodeRecord> recs;
  const TrialStats st = run_trials(*def, *att, trial_setup(c), c.evaluation.trials, c.seed, o.out.empty() ? nullptr : &recs);
  nlohmann::json j = st.to_json();
  j["policy"] = def->name();
  j["attacker"] = att->name();
  j["agility"] = c.evaluation.agility;
  j["n_defenders"] = c.engagement.n_defenders;
  if (!o.out.empty()) {
    const fs::path dir = o.out;
    fs::create_directories(dir);
    write_json(dir / "config.json", to_json(c));
    write_json(dir / "stats.json", j);
    write_trajectories(dir / "trajectories.csv", recs);
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(file_hash(dir / "trajectories.csv")));
    j["trajectory_hash"] = hash;
  }
  print_json(j);
  return 0;
}

int cmd_compare(const Options& o) {
  const RunConfig c = load_config(o);
  if (o.policy.empty()) throw ConfigError("compare needs at least one --policy");
  std::vector<ComparePolicy> ps;
  for (const auto& spec : o.policy) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? spec : spec.substr(0, eq);
    ps.push_back({label, resolve_policy(eq == std::string::npos ? spec : spec.substr(eq + 1))});
  }
  const std::vector<double> agilities = o.agility.empty() ? std::vector<double>{1.5, 2.0, 2.5, 3.0} : o.agility;
  const std::vector<int> sizes = o.defenders.empty() ? std::vector<int>{2, 3, 4, 5, 6} : o.defenders;
  TrialSetup base = trial_setup(c);
  base.engagement.n_defenders = 3;
  const auto att = resolve_attacker(c);
  nlohmann::json rep = compare(ps, *att, base, agilities, sizes, 2.0, c.evaluation.trials, c.seed);
  rep["config"] = to_json(c);
  if (!o.out.empty()) write_json(o.out, rep);
  // compact table on stdout
  std::cout << "policy        agility  n  SR     95% CI\n";
  for (const char* sweep : {"agility_sweep", "team_sweep"})
    for (const auto& cell : rep[sweep]["cells"]) {
      std::printf("%-13s %7.2f %2d  %.3f  [%.3f, %.3f]\n", cell["policy"].get<std::string>().c_str(),
                  cell["agility"].get<double>(), cell["n_defenders"].get<int>(), cell["success_rate"].get<double>(),
                  cell["success_ci95"][0].get<double>(), cell["success_ci95"][1].get<double>());
    }
  return 0;
}

int cmd_export(const Options& o) {
  Options oo = o;
  if (!oo.trials) oo.trials = 1;
  const RunConfig c = load_config(oo);
  if (o.out.empty()) throw ConfigError("export needs --out FILE.csv");
  const auto def = o.policy.empty() ? std::shared_ptr<DefenderPolicy>(make_defender_policy(c)) : resolve_policy(o.policy.front());
  const auto att = resolve_attacker(c);
  std::vector<EpisodeRecord> recs;
  const TrialStats st = run_trials(*def, *att, trial_setup(c), c.evaluation.trials, c.seed, &recs);
  const fs::path p = o.out;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_trajectories(p, recs);
  nlohmann::json j = st.to_json();
  j["file"] = p.string();
  print_json(j);
  return 0;
}

int cmd_validate(const Options& o) {
  if (o.config.empty()) throw ConfigError("validate-config needs --config");
  print_json(to_json(parse_config_file(o.config)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Adaptive residual Boids defenders: training, evaluation and export"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s, bool multi) {
    s->add_option("--config", o.config, "run config (JSON)");
    s->add_option("--seed", o.seed, "seed override");
    s->add_option("--out", o.out, "output directory or file");
    if (multi) {
      s->add_option("--policy", o.policy, "boids | stationary | checkpoint path (LABEL=... allowed)");
      s->add_option("--agility", o.agility, "attacker agility level(s)");
      s->add_option("--defenders", o.defenders, "team size(s)");
    } else {
      s->add_option("--policy", o.policy, "policy")->expected(1);
      s->add_option("--agility", o.agility, "attacker agility")->expected(1);
      s->add_option("--defenders", o.defenders, "team size")->expected(1);
    }
    s->add_option("--trials", o.trials, "number of evaluation trials");
  };
  auto* train = app.add_subcommand("train", "train defenders against the APF attacker");
  common(train, false);
  auto* alt = app.add_subcommand("alt-train", "alternating defender/attacker training");
  common(alt, false);
  auto* eval = app.add_subcommand("eval", "run evaluation trials");
  common(eval, false);
  auto* cmp = app.add_subcommand("compare", "SR grids over agility and team size");
  common(cmp, true);
  auto* exp = app.add_subcommand("export", "write trajectories as CSV");
  common(exp, false);
  auto* val = app.add_subcommand("validate-config", "parse and echo a config");
  val->add_option("--config", o.config, "run config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCategory::config);
  }

  try {
    if (*train) return cmd_train(o);
    if (*alt) return cmd_alt_train(o);
    if (*eval) return cmd_eval(o);
    if (*cmp) return cmd_compare(o);
    if (*exp) return cmd_export(o);
    if (*val) return cmd_validate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.category());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ErrorCategory::config);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ErrorCategory::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ErrorCategory::runtime);
  }
  return static_cast<int>(ErrorCategory::runtime);
}
