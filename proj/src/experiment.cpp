#include "implan/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "implan/io.hpp"
#include "implan/log.hpp"
#include "implan/rng.hpp"

namespace implan {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagStarts = 0x53544152ULL;
constexpr std::uint64_t kTagGoals = 0x474f414cULL;
constexpr std::uint64_t kTagDemos = 0x44454d4fULL;
constexpr std::uint64_t kTagPlanStream = 0x504c414eULL;  // target plans share the
                                                         // iteration-0 planner stream

std::string qname(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "q%04d", id);
  return buf;
}

std::string demo_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "demo_%03d.csv", i);
  return buf;
}

void require_absent_or_force(const fs::path& p, bool force) {
  if (!fs::exists(p)) return;
  if (!force)
    throw ConfigError(p.string() + " already exists; pass --force to overwrite");
  fs::remove_all(p);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (kind != "sphere" && kind != "imitation")
    throw ConfigError("experiment kind must be 'sphere' or 'imitation'");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  scene.validate();
  train_config.validate();
  if (kind == "sphere") {
    if (goal_line.count < 1) throw ConfigError("goal line count must be >= 1");
    if (goal_line.swivels < 1) throw ConfigError("goal swivels must be >= 1");
    if (starts.explicit_starts.empty() && starts.count < 1)
      throw ConfigError("need at least one start");
  } else {
    if (demos.count < 2 || demos.heldout < 1)
      throw ConfigError("imitation needs train and held-out demonstrations");
  }
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const fs::path& base_dir) {
  ExperimentConfig cfg;
  cfg.kind = j.at("kind");
  cfg.seed = j.value("seed", 0ULL);
  if (j.contains("chain_file")) {
    cfg.chain_file = j.at("chain_file");
    cfg.chain = load_chain(base_dir / cfg.chain_file);
  } else if (j.contains("chain")) {
    cfg.chain = chain_from_json(j.at("chain"));
  }
  if (j.contains("scene")) cfg.scene = scene_from_json(j.at("scene"));
  if (j.contains("starts")) {
    const auto& s = j.at("starts");
    cfg.starts.count = s.value("count", 0);
    if (s.contains("box_lo")) cfg.starts.box_lo = vecx_from_json(s.at("box_lo"));
    if (s.contains("box_hi")) cfg.starts.box_hi = vecx_from_json(s.at("box_hi"));
    for (const auto& e : s.value("explicit", nlohmann::json::array()))
      cfg.starts.explicit_starts.push_back(vecx_from_json(e));
  }
  if (j.contains("goal_line")) {
    const auto& g = j.at("goal_line");
    cfg.goal_line.a = Vec3(g.at("a").at(0), g.at("a").at(1), g.at("a").at(2));
    cfg.goal_line.b = Vec3(g.at("b").at(0), g.at("b").at(1), g.at("b").at(2));
    cfg.goal_line.count = g.value("count", 1);
    cfg.goal_line.swivels = g.value("swivels", 8);
  }
  if (j.contains("demos")) {
    const auto& d = j.at("demos");
    DemoSpec& ds = cfg.demos;
    ds.count = d.value("count", ds.count);
    ds.heldout = d.value("heldout", ds.heldout);
    ds.frames = d.value("frames", ds.frames);
    ds.dt = d.value("dt", ds.dt);
    ds.tau_v = d.value("tau_v", ds.tau_v);
    ds.swivel_mean = d.value("swivel_mean", ds.swivel_mean);
    ds.swivel_spread = d.value("swivel_spread", ds.swivel_spread);
    ds.sweep_min = d.value("sweep_min", ds.sweep_min);
    ds.sweep_max = d.value("sweep_max", ds.sweep_max);
    ds.radius_min = d.value("radius_min", ds.radius_min);
    ds.radius_max = d.value("radius_max", ds.radius_max);
    ds.polar_min = d.value("polar_min", ds.polar_min);
    ds.polar_max = d.value("polar_max", ds.polar_max);
    ds.goal_swivels = d.value("goal_swivels", ds.goal_swivels);
  }
  cfg.target_max_nodes = j.value("target_max_nodes", cfg.target_max_nodes);
  if (j.contains("planner")) cfg.planner = planner_params_from_json(j.at("planner"));
  if (j.contains("loop")) {
    const auto& l = j.at("loop");
    cfg.iterations = l.value("iterations", cfg.iterations);
    cfg.accumulate_generated = l.value("accumulate_generated", cfg.accumulate_generated);
    cfg.per_iteration_cap = l.value("per_iteration_cap", cfg.per_iteration_cap);
    cfg.lambda = l.value("lambda", cfg.lambda);
    cfg.heldout_fraction = l.value("heldout_fraction", cfg.heldout_fraction);
    if (l.contains("prefix_fractions"))
      cfg.prefix_fractions = l.at("prefix_fractions").get<std::vector<double>>();
    if (l.contains("train")) cfg.train_config = train_config_from_json(l.at("train"));
  }
  cfg.validate();
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["kind"] = cfg.kind;
  j["seed"] = cfg.seed;
  j["chain"] = chain_to_json(cfg.chain);
  j["scene"] = scene_to_json(cfg.scene);
  if (cfg.kind == "sphere") {
    nlohmann::json s;
    s["count"] = cfg.starts.count;
    if (cfg.starts.box_lo.size() > 0) {
      s["box_lo"] = vecx_to_json(cfg.starts.box_lo);
      s["box_hi"] = vecx_to_json(cfg.starts.box_hi);
    }
    if (!cfg.starts.explicit_starts.empty()) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& q : cfg.starts.explicit_starts) arr.push_back(vecx_to_json(q));
      s["explicit"] = arr;
    }
    j["starts"] = s;
    j["goal_line"] = {{"a", {cfg.goal_line.a.x(), cfg.goal_line.a.y(), cfg.goal_line.a.z()}},
                      {"b", {cfg.goal_line.b.x(), cfg.goal_line.b.y(), cfg.goal_line.b.z()}},
                      {"count", cfg.goal_line.count},
                      {"swivels", cfg.goal_line.swivels}};
  } else {
    j["demos"] = {{"count", cfg.demos.count},
                  {"heldout", cfg.demos.heldout},
                  {"frames", cfg.demos.frames},
                  {"dt", cfg.demos.dt},
                  {"tau_v", cfg.demos.tau_v},
                  {"swivel_mean", cfg.demos.swivel_mean},
                  {"swivel_spread", cfg.demos.swivel_spread},
                  {"sweep_min", cfg.demos.sweep_min},
                  {"sweep_max", cfg.demos.sweep_max},
                  {"radius_min", cfg.demos.radius_min},
                  {"radius_max", cfg.demos.radius_max},
                  {"polar_min", cfg.demos.polar_min},
                  {"polar_max", cfg.demos.polar_max},
                  {"goal_swivels", cfg.demos.goal_swivels}};
  }
  j["target_max_nodes"] = cfg.target_max_nodes;
  j["planner"] = planner_params_to_json(cfg.planner);
  j["loop"] = {{"iterations", cfg.iterations},
               {"accumulate_generated", cfg.accumulate_generated},
               {"per_iteration_cap", cfg.per_iteration_cap},
               {"lambda", cfg.lambda},
               {"heldout_fraction", cfg.heldout_fraction},
               {"prefix_fractions", cfg.prefix_fractions},
               {"train", train_config_to_json(cfg.train_config)}};
  return j;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(load_json(path), path.parent_path());
}

std::vector<std::string> preset_names() { return {"desk", "full", "imitation"}; }

ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.chain = KinematicChain::default_arm();
  if (name == "desk" || name == "full") {
    cfg.kind = "sphere";
    cfg.scene.spheres.push_back(Sphere{Vec3(0.24, 0.02, 0.33), 0.10});
    cfg.scene.link_radius = 0.03;
    const int d = cfg.chain.dof();
    cfg.starts.box_lo = VecX(d);
    cfg.starts.box_hi = VecX(d);
    // Start box biased to one side; hands begin high and to the left.
    cfg.starts.box_lo << -1.1, -0.5, -0.5, 0.3, -0.4, -0.3, -0.3;
    cfg.starts.box_hi << -0.1, 0.3, 0.3, 1.2, 0.4, 0.3, 0.3;
    cfg.goal_line.a = Vec3(0.42, -0.16, 0.20);
    cfg.goal_line.b = Vec3(0.42, 0.16, 0.20);
    cfg.goal_line.swivels = 8;
    if (name == "desk") {
      cfg.starts.count = 5;
      cfg.goal_line.count = 11;
      cfg.target_max_nodes = 2000;
      cfg.planner.max_nodes = 900;
      cfg.planner.eval_budget = 60000;
    } else {
      cfg.starts.count = 10;
      cfg.goal_line.count = 21;
      cfg.target_max_nodes = 4000;
      cfg.planner.max_nodes = 2000;
      cfg.planner.eval_budget = 200000;
    }
    cfg.iterations = 3;
  } else if (name == "imitation") {
    cfg.kind = "imitation";
    cfg.iterations = 3;
    cfg.planner.max_nodes = 900;
    cfg.planner.eval_budget = 60000;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return cfg;
}

std::vector<VecX> derive_starts(const ExperimentConfig& cfg) {
  if (!cfg.starts.explicit_starts.empty()) {
    for (std::size_t i = 0; i < cfg.starts.explicit_starts.size(); ++i) {
      const auto& q = cfg.starts.explicit_starts[i];
      if (!cfg.chain.within_limits(q))
        throw ConfigError("explicit start " + std::to_string(i) + " violates joint limits");
      if (state_in_collision(cfg.chain, q, cfg.scene))
        throw ConfigError("explicit start " + std::to_string(i) + " collides with the scene");
    }
    return cfg.starts.explicit_starts;
  }

  if (cfg.starts.box_lo.size() != cfg.chain.dof() ||
      cfg.starts.box_hi.size() != cfg.chain.dof())
    throw ConfigError("start box does not match chain dof");
  Rng rng(seed_mix(cfg.seed, kTagStarts));
  std::vector<VecX> starts;
  int attempts = 0;
  while (static_cast<int>(starts.size()) < cfg.starts.count) {
    if (++attempts > 1000 * cfg.starts.count)
      throw ConfigError("could not sample collision-free starts from the box");
    VecX q(cfg.chain.dof());
    for (int i = 0; i < cfg.chain.dof(); ++i)
      q[i] = rng.uniform(cfg.starts.box_lo[i], cfg.starts.box_hi[i]);
    q = cfg.chain.clamp_to_limits(q);
    if (state_in_collision(cfg.chain, q, cfg.scene)) continue;
    starts.push_back(std::move(q));
  }
  return starts;
}

std::vector<ExperimentQuery> derive_sphere_queries(const ExperimentConfig& cfg) {
  const auto starts = derive_starts(cfg);
  std::vector<ExperimentQuery> queries;
  int id = 0;
  for (int g = 0; g < cfg.goal_line.count; ++g) {
    const double t = cfg.goal_line.count == 1
                         ? 0.5
                         : static_cast<double>(g) / (cfg.goal_line.count - 1);
    const Vec3 target = cfg.goal_line.a + t * (cfg.goal_line.b - cfg.goal_line.a);
    auto goal_states = sample_goal_states(cfg.chain, target, cfg.goal_line.swivels,
                                          seed_mix(cfg.seed, kTagGoals, g));
    std::erase_if(goal_states, [&](const VecX& q) {
      return state_in_collision(cfg.chain, q, cfg.scene);
    });
    if (goal_states.empty())
      throw ConfigError("goal position " + std::to_string(g) +
                        " has no reachable collision-free goal state");
    for (std::size_t s = 0; s < starts.size(); ++s) {
      ExperimentQuery eq;
      eq.query.id = id++;
      eq.query.start = starts[s];
      eq.query.goals = goal_states;
      queries.push_back(std::move(eq));
    }
  }
  return queries;
}

DemoSet synthesize_demos(const ExperimentConfig& cfg) {
  const DemoSpec& spec = cfg.demos;
  const KinematicChain& chain = cfg.chain;
  Rng rng(seed_mix(cfg.seed, kTagDemos));
  DemoSet set;
  set.dt = spec.dt;

  const int wanted = spec.count + spec.heldout;
  int attempts = 0;
  while (static_cast<int>(set.train.size() + set.heldout.size()) < wanted) {
    if (++attempts > 200 * wanted)
      throw ConfigError("demonstration synthesis failed; loosen the demo bands");

    const double swivel =
        spec.swivel_mean + spec.swivel_spread * std::clamp(rng.normal(), -2.0, 2.0);
    const double radius = rng.uniform(spec.radius_min, spec.radius_max);
    const double polar = rng.uniform(spec.polar_min, spec.polar_max);
    const double azimuth = rng.uniform(-0.9, 0.9);
    const Vec3 p0(radius * std::sin(polar) * std::cos(azimuth),
                  radius * std::sin(polar) * std::sin(azimuth), radius * std::cos(polar));

    // Sweep sideways along the azimuthal direction, slight polar drift.
    const double sweep = rng.uniform(spec.sweep_min, spec.sweep_max);
    Vec3 dir(-std::sin(azimuth), std::cos(azimuth), 0.0);
    dir += Vec3(0, 0, rng.uniform(-0.3, 0.3));
    dir.normalize();
    if (rng.uniform() < 0.5) dir = -dir;
    const Vec3 p1 = p0 + sweep * dir;
    if (p1.norm() > chain.reach() - 0.03 || p1.norm() < spec.radius_min - 0.05) continue;

    const IkResult r0 = inverse_kinematics(chain, p0, swivel, chain.zero_state());
    if (!r0.ok()) continue;
    const IkResult r1 = inverse_kinematics(chain, p1, swivel, r0.q);
    if (!r1.ok()) continue;

    // Straight joint-space sweep between the two matched-swivel solutions.
    MarkerPath frames(static_cast<std::size_t>(spec.frames));
    bool valid = true;
    for (int f = 0; f < spec.frames; ++f) {
      const double u = static_cast<double>(f) / (spec.frames - 1);
      const VecX q = r0.q + u * (r1.q - r0.q);
      frames[static_cast<std::size_t>(f)] = forward_kinematics(chain, q);
      const auto& m = frames[static_cast<std::size_t>(f)];
      if ((m.elbow - m.shoulder).norm() < 1e-9 || (m.hand - m.elbow).norm() < 1e-9)
        valid = false;
    }
    if (!valid) continue;

    if (static_cast<int>(set.train.size()) < spec.count)
      set.train.push_back(std::move(frames));
    else
      set.heldout.push_back(std::move(frames));
  }
  return set;
}

void cmd_gen_targets(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
  cfg.validate();
  fs::create_directories(out_dir);

  if (cfg.kind == "imitation") {
    const fs::path demo_dir = out_dir / "demos";
    require_absent_or_force(demo_dir, force);
    const DemoSet set = synthesize_demos(cfg);
    nlohmann::json manifest;
    manifest["dt"] = set.dt;
    nlohmann::json recs = nlohmann::json::array();
    int index = 0;
    for (const auto* group : {&set.train, &set.heldout}) {
      const bool train = group == &set.train;
      for (const auto& frames : *group) {
        const std::string name = demo_name(index++);
        write_demo_csv(demo_dir / name, frames, set.dt);
        recs.push_back({{"file", name}, {"split", train ? "train" : "test"}});
      }
    }
    manifest["recordings"] = recs;
    save_json(demo_dir / "manifest.json", manifest);
    log_info("wrote " + std::to_string(index) + " demonstrations to " + demo_dir.string());
    return;
  }

  const fs::path target_dir = out_dir / "targets";
  require_absent_or_force(target_dir, force);
  const auto queries = derive_sphere_queries(cfg);

  nlohmann::json index;
  nlohmann::json jqueries = nlohmann::json::array();
  int planned = 0;
  for (const auto& eq : queries) {
    PlanningProblem problem;
    problem.start = eq.query.start;
    problem.goals = eq.query.goals;
    problem.scene = cfg.scene;  // targets are planned against the sphere
    problem.objective = LengthObjective{};
    problem.params = cfg.planner;
    problem.params.max_nodes = cfg.target_max_nodes;
    problem.rng_seed = seed_mix(cfg.seed, kTagPlanStream, 0,
                                static_cast<std::uint64_t>(eq.query.id));
    const auto result = plan(cfg.chain, problem);

    nlohmann::json entry;
    entry["id"] = eq.query.id;
    entry["start"] = vecx_to_json(eq.query.start);
    nlohmann::json goals = nlohmann::json::array();
    for (const auto& g : eq.query.goals) goals.push_back(vecx_to_json(g));
    entry["goals"] = goals;
    if (result) {
      const std::string rel = "motions/" + qname(eq.query.id) + ".csv";
      write_motion_csv(target_dir / rel, result->states);
      save_json(target_dir / ("motions/" + qname(eq.query.id) + ".json"),
                cost_report_to_json(result->report));
      entry["motion"] = rel;
      ++planned;
    } else {
      entry["motion"] = nullptr;
      log_warn("target query " + std::to_string(eq.query.id) + " failed to plan");
    }
    jqueries.push_back(std::move(entry));
  }
  index["queries"] = jqueries;
  save_json(target_dir / "index.json", index);
  log_info("planned " + std::to_string(planned) + "/" + std::to_string(queries.size()) +
           " target motions into " + target_dir.string());
}

namespace {

struct PreparedLoop {
  LoopConfig loop;
  LabeledDataset targets;
  std::vector<MarkerPath> eval_refs;   // imitation: reference paths by eval order
  std::vector<int> eval_query_ids;     // ids aligned with eval_refs
};

PreparedLoop prepare_sphere_loop(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path target_dir = out_dir / "targets";
  if (!fs::exists(target_dir / "index.json"))
    throw ConfigError("missing target archive " + (target_dir / "index.json").string() +
                      "; run gen-targets first");
  PreparedLoop prep;
  const auto index = load_json(target_dir / "index.json");
  for (const auto& entry : index.at("queries")) {
    LoopQuery q;
    q.id = entry.at("id");
    q.start = vecx_from_json(entry.at("start"));
    for (const auto& g : entry.at("goals")) q.goals.push_back(vecx_from_json(g));
    prep.loop.queries.push_back(std::move(q));
    if (entry.at("motion").is_null()) continue;
    const auto states = read_motion_csv(target_dir / entry.at("motion").get<std::string>());
    const auto reprs = prefix_representations(cfg.chain, Motion::from_states(states),
                                              cfg.prefix_fractions);
    for (const auto& r : reprs)
      prep.targets.entries.push_back(LabeledEntry{r, true, -1, q.id});
  }
  if (prep.targets.entries.empty())
    throw ConfigError("target archive holds no successfully planned motions");
  return prep;
}

PreparedLoop prepare_imitation_loop(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path demo_dir = out_dir / "demos";
  if (!fs::exists(demo_dir / "manifest.json"))
    throw ConfigError("missing demonstration manifest in " + demo_dir.string() +
                      "; run gen-targets first");
  PreparedLoop prep;
  const auto manifest = load_json(demo_dir / "manifest.json");

  int id = 0;
  for (const auto& rec : manifest.at("recordings")) {
    const std::string file = rec.at("file");
    const bool train = rec.at("split") == "train";
    const DemoRecording recording = read_demo_csv(demo_dir / file);
    const double dt = recording.dt() > 0 ? recording.dt() : cfg.demos.dt;

    Motion motion = Motion::from_frames(recording.frames);
    auto segments = velocity_split(motion, cfg.demos.tau_v, dt);
    if (segments.empty()) {
      log_warn("demo " + file + " rejected: no segment reaches the velocity threshold");
      continue;
    }
    auto longest = std::max_element(segments.begin(), segments.end(),
                                    [](const Motion& a, const Motion& b) {
                                      return a.frames.size() < b.frames.size();
                                    });
    Motion normalized;
    try {
      normalized = direction_normalize(*longest);
    } catch (const ContractError& e) {
      log_warn("demo " + file + " rejected: " + e.what());
      continue;
    }

    const Markers& first = normalized.frames.front();
    const Markers& last = normalized.frames.back();
    const IkResult start = inverse_kinematics(cfg.chain, first.hand, elbow_swivel(first),
                                              cfg.chain.zero_state());
    if (!start.ok()) {
      log_warn("demo " + file + " rejected: start configuration IK failed");
      continue;
    }
    auto goals = sample_goal_states(cfg.chain, last.hand, cfg.demos.goal_swivels,
                                    seed_mix(cfg.seed, kTagGoals, id));
    if (goals.empty()) {
      log_warn("demo " + file + " rejected: goal sampling found no states");
      continue;
    }

    LoopQuery q;
    q.id = id;
    q.start = start.q;
    q.goals = std::move(goals);
    q.eval_only = !train;
    prep.loop.queries.push_back(std::move(q));

    if (train) {
      const auto reprs =
          prefix_representations(cfg.chain, normalized, cfg.prefix_fractions);
      for (const auto& r : reprs)
        prep.targets.entries.push_back(LabeledEntry{r, true, -1, id});
    } else {
      prep.eval_refs.push_back(normalized.frames);
      prep.eval_query_ids.push_back(id);
    }
    ++id;
  }
  if (prep.targets.entries.empty())
    throw ConfigError("no usable training demonstrations");
  if (prep.eval_refs.empty()) throw ConfigError("no usable held-out demonstrations");
  return prep;
}

}  // namespace

nlohmann::json report_to_json(const IterationReport& report) {
  nlohmann::json j;
  j["iteration"] = report.iteration;
  j["train_accuracy"] = report.train_accuracy;
  j["heldout_accuracy"] = report.heldout_accuracy;
  j["mean_final_score"] = report.mean_final_score;
  j["real_entries"] = report.real_entries;
  j["generated_entries"] = report.generated_entries;
  j["metrics"] = report.metrics;
  j["failed_query_ids"] = report.failed_query_ids;
  return j;
}

void cmd_loop(const ExperimentConfig& cfg, const fs::path& out_dir, bool force, int jobs) {
  cfg.validate();
  PreparedLoop prep = cfg.kind == "sphere" ? prepare_sphere_loop(cfg, out_dir)
                                           : prepare_imitation_loop(cfg, out_dir);

  const fs::path run_file = out_dir / "run.json";
  require_absent_or_force(run_file, force);
  for (int k = 0; k <= cfg.iterations; ++k) {
    const fs::path iter_dir = out_dir / ("iter_" + std::to_string(k));
    require_absent_or_force(iter_dir, force);
  }

  prep.loop.iterations = cfg.iterations;
  prep.loop.accumulate_generated = cfg.accumulate_generated;
  prep.loop.per_iteration_cap = cfg.per_iteration_cap;
  prep.loop.train_config = cfg.train_config;
  prep.loop.prefix_fractions = cfg.prefix_fractions;
  prep.loop.lambda = cfg.lambda;
  prep.loop.planner = cfg.planner;
  prep.loop.scene = Scene{};  // the obstacle is removed for the loop
  prep.loop.scene.link_radius = cfg.scene.link_radius;
  prep.loop.heldout_fraction = cfg.heldout_fraction;
  prep.loop.rng_seed = cfg.seed;
  prep.loop.jobs = jobs;

  // Index of eval queries into the motions vector, for the RMSE pairing.
  std::vector<std::size_t> eval_slots;
  for (std::size_t i = 0; i < prep.loop.queries.size(); ++i)
    if (prep.loop.queries[i].eval_only) eval_slots.push_back(i);

  MetricsFn metrics = [&](int, const std::vector<std::optional<PlanResult>>& motions) {
    std::map<std::string, double> out;
    if (cfg.kind == "sphere") {
      std::vector<std::vector<VecX>> planned;
      for (const auto& m : motions)
        if (m) planned.push_back(m->states);
      out["planned"] = static_cast<double>(planned.size());
      out["success_rate"] = evaluate_success_rate(cfg.chain, planned, cfg.scene,
                                                  cfg.planner.collision_resolution);
    } else {
      std::vector<std::vector<VecX>> planned;
      std::vector<MarkerPath> refs;
      for (std::size_t e = 0; e < eval_slots.size(); ++e) {
        const auto& m = motions[eval_slots[e]];
        if (!m) continue;
        planned.push_back(m->states);
        refs.push_back(prep.eval_refs[e]);
      }
      out["eval_planned"] = static_cast<double>(planned.size());
      if (!planned.empty()) {
        const auto [elbow, hand] = evaluate_rmse(cfg.chain, planned, refs);
        out["rmse_elbow"] = elbow;
        out["rmse_hand"] = hand;
      }
    }
    return out;
  };

  IterationSink sink = [&](const IterationArtifacts& art) {
    const fs::path iter_dir = out_dir / ("iter_" + std::to_string(art.iteration));
    fs::create_directories(iter_dir / "motions");
    for (std::size_t qi = 0; qi < art.motions.size(); ++qi) {
      if (!art.motions[qi]) continue;
      const int id = prep.loop.queries[qi].id;
      write_motion_csv(iter_dir / "motions" / (qname(id) + ".csv"),
                       art.motions[qi]->states);
      nlohmann::json sidecar = cost_report_to_json(art.motions[qi]->report);
      sidecar["query_id"] = id;
      sidecar["eval_only"] = prep.loop.queries[qi].eval_only;
      save_json(iter_dir / "motions" / (qname(id) + ".json"), sidecar);
    }
    art.model.save((iter_dir / "model.idsc").string());
    save_json(iter_dir / "report.json", report_to_json(art.report));
    std::string metrics_line;
    for (const auto& [k, v] : art.report.metrics)
      metrics_line += " " + k + "=" + std::to_string(v);
    log_info("iteration " + std::to_string(art.iteration) + " done in " +
             std::to_string(art.report.wall_seconds) + "s; heldout_acc=" +
             std::to_string(art.report.heldout_accuracy) + metrics_line);
  };

  run_loop(cfg.chain, prep.targets, prep.loop, metrics, sink);

  nlohmann::json run;
  run["config"] = experiment_config_to_json(cfg);
  run["iterations_written"] = cfg.iterations + 1;
  save_json(run_file, run);
  log_info("run complete: " + out_dir.string());
}

nlohmann::json cmd_eval(const fs::path& run_dir) {
  const auto run = load_json(run_dir / "run.json");
  const ExperimentConfig cfg = experiment_config_from_json(run.at("config"), run_dir);

  PreparedLoop prep = cfg.kind == "sphere" ? prepare_sphere_loop(cfg, run_dir)
                                           : prepare_imitation_loop(cfg, run_dir);

  nlohmann::json out = nlohmann::json::array();
  const int iterations = run.at("iterations_written");
  for (int k = 0; k < iterations; ++k) {
    const fs::path iter_dir = run_dir / ("iter_" + std::to_string(k));
    if (!fs::exists(iter_dir)) throw ConfigError("missing " + iter_dir.string());
    nlohmann::json row;
    row["iteration"] = k;

    if (cfg.kind == "sphere") {
      std::vector<std::vector<VecX>> motions;
      for (const auto& q : prep.loop.queries) {
        const fs::path f = iter_dir / "motions" / (qname(q.id) + ".csv");
        if (fs::exists(f)) motions.push_back(read_motion_csv(f));
      }
      row["planned"] = motions.size();
      row["success_rate"] = evaluate_success_rate(cfg.chain, motions, cfg.scene,
                                                  cfg.planner.collision_resolution);
    } else {
      std::vector<std::vector<VecX>> planned;
      std::vector<MarkerPath> refs;
      for (std::size_t e = 0; e < prep.eval_query_ids.size(); ++e) {
        const fs::path f =
            iter_dir / "motions" / (qname(prep.eval_query_ids[e]) + ".csv");
        if (!fs::exists(f)) continue;
        planned.push_back(read_motion_csv(f));
        refs.push_back(prep.eval_refs[e]);
      }
      row["eval_planned"] = planned.size();
      if (!planned.empty()) {
        const auto [elbow, hand] = evaluate_rmse(cfg.chain, planned, refs);
        row["rmse_elbow"] = elbow;
        row["rmse_hand"] = hand;
      }
    }

    const fs::path report_file = iter_dir / "report.json";
    if (fs::exists(report_file)) row["reported"] = load_json(report_file)["metrics"];
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace implan
