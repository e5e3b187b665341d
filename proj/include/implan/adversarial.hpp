#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "implan/collision.hpp"
#include "implan/kinematics.hpp"
#include "implan/motion_repr.hpp"
#include "implan/neuralnet.hpp"
#include "implan/planner.hpp"
#include "implan/types.hpp"

namespace implan {

struct LoopQuery {
  int id = 0;
  VecX start;
  std::vector<VecX> goals;
  bool eval_only = false;  // planned every iteration, never trains the discriminator
};

struct LoopConfig {
  int iterations = 3;               // adversarial iterations after the naive pass
  std::vector<LoopQuery> queries;
  bool accumulate_generated = true;
  int per_iteration_cap = 5000;     // retained generated motions across iterations
  TrainConfig train_config;
  std::vector<double> prefix_fractions{0.25, 0.5, 0.75, 1.0};
  double lambda = 0.05;             // adversarial length weight
  PlannerParams planner;
  Scene scene;                      // scene the loop plans against (may be empty)
  double heldout_fraction = 0.2;
  std::uint64_t rng_seed = 0;
  int jobs = 1;

  void validate() const;
};

struct IterationReport {
  int iteration = 0;                 // 0 = naive generation
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  double mean_final_score = 0.0;     // fresh D_k on this iteration's motions
  std::size_t real_entries = 0;      // dataset composition for the training pass
  std::size_t generated_entries = 0;
  std::map<std::string, double> metrics;
  std::vector<int> failed_query_ids;
  double wall_seconds = 0.0;         // logged only; kept out of persisted reports
};

/// Experiment metric hook, called with the freshly planned motions of an
/// iteration (indexed like config.queries, nullopt = planner failure).
using MetricsFn = std::function<std::map<std::string, double>(
    int iteration, const std::vector<std::optional<PlanResult>>& motions)>;

/// Archive hook, called once per iteration after training.
struct IterationArtifacts {
  int iteration;
  const std::vector<std::optional<PlanResult>>& motions;
  const Discriminator& model;
  const IterationReport& report;
};
using IterationSink = std::function<void(const IterationArtifacts&)>;

struct LoopResult {
  std::vector<IterationReport> reports;
  Discriminator final_model;
};

/// The alternating zero-sum loop. Iteration 0 plans every query with the
/// length-only objective; iteration k >= 1 plans with the discriminator
/// trained in iteration k-1; each iteration retrains from scratch on the
/// target set plus the retained generated set.
LoopResult run_loop(const KinematicChain& chain, const LabeledDataset& target_set,
                    const LoopConfig& config, const MetricsFn& metrics = nullptr,
                    const IterationSink& sink = nullptr);

/// Fraction of motions that stay collision-free against a scene they were
/// planned without.
double evaluate_success_rate(const KinematicChain& chain,
                             const std::vector<std::vector<VecX>>& motions,
                             const Scene& hidden_scene, double resolution = 0.05);

/// Elbow and hand RMSE (meters) between paired planned and reference
/// motions: both sides are resampled to 30 points by hand arc length and
/// rebuilt at the chain's segment lengths anchored at their own shoulder,
/// so only direction history is compared.
std::pair<double, double> evaluate_rmse(const KinematicChain& chain,
                                        const std::vector<std::vector<VecX>>& planned,
                                        const std::vector<MarkerPath>& reference);

/// True when some identical grid carries both labels; training sets must
/// stay free of this.
bool has_label_conflict(const LabeledDataset& dataset);

}  // namespace implan
