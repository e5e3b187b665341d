#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "implan/adversarial.hpp"
#include "implan/collision.hpp"
#include "implan/kinematics.hpp"
#include "implan/planner.hpp"
#include "implan/types.hpp"

namespace implan {

/// Seeded joint-space box the start configurations are drawn from.
struct StartSpec {
  int count = 0;
  VecX box_lo, box_hi;             // sampling box, clipped to joint limits
  std::vector<VecX> explicit_starts;  // overrides sampling when non-empty
};

/// Goal hand positions sampled uniformly along the segment [a, b]; each
/// position turns into up to `swivels` goal states.
struct GoalLineSpec {
  Vec3 a, b;
  int count = 1;
  int swivels = 8;
};

/// Synthetic demonstration generator settings (imitation experiment).
struct DemoSpec {
  int count = 24;       // training demonstrations
  int heldout = 12;     // evaluation demonstrations
  int frames = 40;
  double dt = 0.05;
  double tau_v = 0.10;
  double swivel_mean = 1.0;
  double swivel_spread = 0.12;
  double sweep_min = 0.10;  // hand path length band, meters
  double sweep_max = 0.16;
  double radius_min = 0.40;  // hand distance band from the base
  double radius_max = 0.48;
  double polar_min = 0.35;   // angle from +Z, radians
  double polar_max = 0.95;
  int goal_swivels = 8;
};

struct ExperimentConfig {
  std::string kind;  // "sphere" | "imitation"
  std::string chain_file;
  KinematicChain chain = KinematicChain::default_arm();
  Scene scene;  // sphere experiment obstacle; hidden during the loop
  StartSpec starts;
  GoalLineSpec goal_line;
  DemoSpec demos;
  int target_max_nodes = 3000;  // planner budget for target generation
  PlannerParams planner;
  int iterations = 3;
  bool accumulate_generated = true;
  int per_iteration_cap = 5000;
  double lambda = 0.05;
  std::vector<double> prefix_fractions{0.25, 0.5, 0.75, 1.0};
  TrainConfig train_config;
  double heldout_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Built-in presets: "desk" (laptop-scale sphere experiment), "full"
/// (paper-scale sphere experiment), "imitation" (synthetic demonstrations).
ExperimentConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

/// One planning query of an experiment; eval-only queries are planned every
/// iteration but never enter the generated training set.
struct ExperimentQuery {
  LoopQuery query;
  bool eval_only = false;
};

/// Deterministic start states: explicit list or rejection sampling from the
/// seeded box (collision-free against the config scene).
std::vector<VecX> derive_starts(const ExperimentConfig& cfg);

/// Sphere-experiment query grid: one query per (start, goal-line position),
/// goal states from swivel sampling, filtered for collisions against the
/// config scene. Throws ConfigError naming the entry when a start or a goal
/// position yields nothing collision-free.
std::vector<ExperimentQuery> derive_sphere_queries(const ExperimentConfig& cfg);

struct DemoSet {
  std::vector<MarkerPath> train;
  std::vector<MarkerPath> heldout;
  double dt = 0.05;
};

/// Synthesizes demonstrations: straight joint-space sweeps between IK
/// solutions that share a per-demonstration elbow swivel drawn around
/// swivel_mean. Deterministic in cfg.seed.
DemoSet synthesize_demos(const ExperimentConfig& cfg);

/// gen-targets: sphere kind plans every query against the sphere with the
/// length-only objective and archives the motions; imitation kind writes
/// the synthetic demonstration files and their manifest.
void cmd_gen_targets(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                     bool force);

/// loop: runs the adversarial loop with the sphere removed (sphere kind) or
/// against the demonstration dataset (imitation kind); writes
/// iter_<k>/motions/*.csv, iter_<k>/model.idsc, iter_<k>/report.json and
/// run.json under out_dir.
void cmd_loop(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, bool force,
              int jobs);

/// eval: recomputes per-iteration metrics from the artifacts in a run
/// directory; returns one JSON object per iteration.
nlohmann::json cmd_eval(const std::filesystem::path& run_dir);

nlohmann::json report_to_json(const IterationReport& report);

}  // namespace implan
