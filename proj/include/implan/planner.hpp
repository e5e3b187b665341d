#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "implan/collision.hpp"
#include "implan/kinematics.hpp"
#include "implan/motion_repr.hpp"
#include "implan/neuralnet.hpp"
#include "implan/rng.hpp"
#include "implan/types.hpp"

namespace implan {

/// Pure joint-space path length, weight 1 per radian.
struct LengthObjective {};

/// Discriminator-guided objective. An edge from s_{j-1} to s_j costs
///   lambda * |s_j - s_{j-1}|  +  D(R(s_{j-1})) - D(R(s_j)),
/// the negated score delta, so that minimizing cumulative cost maximizes
/// the score of the finished motion. With the root score pinned to 0 the
/// costs telescope: cost-to-come = lambda * path_length - D(R(node)).
struct AdversarialObjective {
  const Discriminator* discriminator = nullptr;
  double lambda = 0.05;  // length regularizer per radian
};

using Objective = std::variant<LengthObjective, AdversarialObjective>;

/// On rewire, `full` re-evaluates every descendant's prefix score so the
/// telescoping identity keeps holding; `frozen` keeps cached edge costs and
/// only shifts cost-to-come.
enum class RewireMode { full, frozen };

struct PlannerParams {
  double step_max = 0.15;             // rad, steering step
  double goal_bias = 0.05;
  double collision_resolution = 0.05; // rad, edge interpolation step
  int max_nodes = 2000;               // added tree nodes (excl. root/goals)
  RewireMode rewire_mode = RewireMode::full;
  long eval_budget = 200000;          // discriminator calls before frozen fallback
  double rewire_factor = 1.1;         // safety factor on the RRT* radius
};

struct PlanningProblem {
  VecX start;
  std::vector<VecX> goals;
  Scene scene;  // may be empty
  Objective objective;
  std::uint64_t rng_seed = 0;
  PlannerParams params;
};

struct CostReport {
  double cost = 0.0;                  // cost-to-come of the chosen goal
  double length = 0.0;                // joint-space path length, rad
  std::optional<double> final_score;  // D(R(motion)), adversarial only
  int tree_nodes = 0;
  long discriminator_evals = 0;
  std::uint64_t seed = 0;
};

struct PlanResult {
  std::vector<VecX> states;  // start .. goal
  CostReport report;
};

/// RRT* over the joint-limit box. Goal states are planted in the tree up
/// front and become connectable whenever a new node appears within the
/// rewire radius. Deterministic for a fixed problem and seed.
class RrtStarTree {
 public:
  struct Node {
    VecX q;
    Markers markers;  // filled for adversarial objectives
    int parent = -1;
    std::vector<int> children;
    double cost_to_come = 0.0;
    double incoming_edge_cost = 0.0;
    double cached_score = 0.0;  // D(R(prefix)); root convention 0
    bool is_goal = false;
    bool connected = false;
  };

  RrtStarTree(const KinematicChain& chain, const PlanningProblem& problem);

  /// One sampling/extension attempt. Returns true if a node was added.
  bool iterate();

  /// Iterates until the node budget is reached.
  void run();

  std::optional<PlanResult> best_solution() const;

  const std::vector<Node>& node_storage() const { return nodes_; }
  long evals_used() const { return evals_used_; }
  RewireMode active_rewire_mode() const { return active_mode_; }
  bool adversarial() const { return adversarial_; }

  /// Cost of attaching child_state under the node at parent_index, evaluated
  /// fresh from the parent's root prefix.
  double edge_cost(int parent_index, const VecX& child_state);

  /// Restores descendant costs after the node at `index` changed parents.
  void rewire_propagate(int index);

 private:
  int add_connected(int node_index);
  double prefix_score(int parent_index, const Markers& child_markers);
  std::vector<double> prefix_scores(const std::vector<int>& parents,
                                    const std::vector<Markers>& child_markers);
  MarkerPath collect_prefix(int node_index) const;
  bool is_ancestor(int maybe_ancestor, int node) const;
  void neighbor_indices(const VecX& q, double radius, std::vector<int>& out) const;
  int nearest_connected(const VecX& q) const;
  double neighbor_radius() const;

  const KinematicChain& chain_;
  PlanningProblem problem_;
  double lambda_len_ = 1.0;
  const Discriminator* discriminator_ = nullptr;
  bool adversarial_ = false;
  RewireMode active_mode_;

  std::vector<Node> nodes_;
  std::vector<int> goal_ids_;
  MatX connected_q_;              // dof x count, for vectorized distances
  std::vector<int> connected_ids_;
  Rng rng_;
  double gamma_ = 0.0;
  long evals_used_ = 0;
  int added_nodes_ = 0;
};

/// Plans a motion for the problem; std::nullopt when no goal was connected
/// within the node budget.
std::optional<PlanResult> plan(const KinematicChain& chain, const PlanningProblem& problem);

}  // namespace implan
