#include "implan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace implan {

namespace {
constexpr double kDuplicateTol = 1e-12;
constexpr double kImprovementTol = 1e-12;

double unit_ball_volume(int d) {
  return std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}
}  // namespace

RrtStarTree::RrtStarTree(const KinematicChain& chain, const PlanningProblem& problem)
    : chain_(chain),
      problem_(problem),
      active_mode_(problem.params.rewire_mode),
      rng_(problem.rng_seed) {
  if (problem_.goals.empty()) throw ContractError("planning problem has no goals");
  if (problem_.start.size() != chain_.dof())
    throw ContractError("start state size does not match chain dof");
  if (!chain_.within_limits(problem_.start, 1e-9))
    throw ContractError("start state violates joint limits");
  problem_.scene.validate();
  if (state_in_collision(chain_, problem_.start, problem_.scene))
    throw ContractError("start state is in collision");

  if (const auto* adv = std::get_if<AdversarialObjective>(&problem_.objective)) {
    if (adv->discriminator == nullptr)
      throw ContractError("adversarial objective without a discriminator");
    discriminator_ = adv->discriminator;
    lambda_len_ = adv->lambda;
    adversarial_ = true;
  }

  const int d = chain_.dof();
  double box_volume = 1.0;
  for (const auto& j : chain_.joints()) box_volume *= (j.hi - j.lo);
  gamma_ = problem_.params.rewire_factor *
           std::pow(2.0 * (1.0 + 1.0 / d), 1.0 / d) *
           std::pow(box_volume / unit_ball_volume(d), 1.0 / d);

  connected_q_.resize(d, 0);

  Node root;
  root.q = problem_.start;
  if (adversarial_) root.markers = forward_kinematics(chain_, root.q);
  root.cost_to_come = 0.0;
  root.cached_score = 0.0;  // convention: the bare start state scores 0
  root.connected = true;
  nodes_.push_back(std::move(root));
  add_connected(0);

  bool any_goal_valid = false;
  for (const auto& g : problem_.goals) {
    if (g.size() != chain_.dof()) throw ContractError("goal state size mismatch");
    if (!chain_.within_limits(g, 1e-9)) throw ContractError("goal violates joint limits");
    Node node;
    node.q = g;
    if (adversarial_) node.markers = forward_kinematics(chain_, g);
    node.is_goal = true;
    node.cost_to_come = std::numeric_limits<double>::infinity();
    nodes_.push_back(std::move(node));
    goal_ids_.push_back(static_cast<int>(nodes_.size()) - 1);
    if (!state_in_collision(chain_, g, problem_.scene)) any_goal_valid = true;
  }
  if (!any_goal_valid) throw ContractError("all goal states are in collision");

  // A goal within one steering step of the start connects immediately.
  for (const int gid : goal_ids_) {
    Node& goal = nodes_[static_cast<std::size_t>(gid)];
    if (state_in_collision(chain_, goal.q, problem_.scene)) continue;
    const double dist = (goal.q - problem_.start).norm();
    if (dist > problem_.params.step_max) continue;
    if (edge_in_collision(chain_, problem_.start, goal.q, problem_.scene,
                          problem_.params.collision_resolution))
      continue;
    const double score = adversarial_ ? prefix_score(0, goal.markers) : 0.0;
    goal.parent = 0;
    goal.incoming_edge_cost = lambda_len_ * dist + (adversarial_ ? 0.0 - score : 0.0);
    goal.cost_to_come = goal.incoming_edge_cost;
    goal.cached_score = score;
    goal.connected = true;
    nodes_[0].children.push_back(gid);
    add_connected(gid);
  }
}

int RrtStarTree::add_connected(int node_index) {
  if (connected_q_.cols() == static_cast<Eigen::Index>(connected_ids_.size())) {
    const Eigen::Index grown = std::max<Eigen::Index>(64, connected_q_.cols() * 2);
    MatX bigger(chain_.dof(), grown);
    bigger.leftCols(connected_q_.cols()) = connected_q_;
    connected_q_ = std::move(bigger);
  }
  connected_q_.col(static_cast<Eigen::Index>(connected_ids_.size())) =
      nodes_[static_cast<std::size_t>(node_index)].q;
  connected_ids_.push_back(node_index);
  return node_index;
}

MarkerPath RrtStarTree::collect_prefix(int node_index) const {
  MarkerPath path;
  for (int i = node_index; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent)
    path.push_back(nodes_[static_cast<std::size_t>(i)].markers);
  std::reverse(path.begin(), path.end());
  return path;
}

double RrtStarTree::prefix_score(int parent_index, const Markers& child_markers) {
  MarkerPath prefix = collect_prefix(parent_index);
  prefix.push_back(child_markers);
  ++evals_used_;
  if (evals_used_ > problem_.params.eval_budget) active_mode_ = RewireMode::frozen;
  return discriminator_->score(encode_markers(prefix));
}

std::vector<double> RrtStarTree::prefix_scores(const std::vector<int>& parents,
                                               const std::vector<Markers>& child_markers) {
  std::vector<MotionRepr> reprs;
  reprs.reserve(parents.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    MarkerPath prefix = collect_prefix(parents[i]);
    prefix.push_back(child_markers[i]);
    reprs.push_back(encode_markers(prefix));
  }
  evals_used_ += static_cast<long>(reprs.size());
  if (evals_used_ > problem_.params.eval_budget) active_mode_ = RewireMode::frozen;
  return discriminator_->score_batch(reprs);
}

bool RrtStarTree::is_ancestor(int maybe_ancestor, int node) const {
  for (int i = node; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent)
    if (i == maybe_ancestor) return true;
  return false;
}

int RrtStarTree::nearest_connected(const VecX& q) const {
  const auto n = static_cast<Eigen::Index>(connected_ids_.size());
  Eigen::Index best = 0;
  (connected_q_.leftCols(n).colwise() - q).colwise().squaredNorm().minCoeff(&best);
  return connected_ids_[static_cast<std::size_t>(best)];
}

void RrtStarTree::neighbor_indices(const VecX& q, double radius, std::vector<int>& out) const {
  out.clear();
  const auto n = static_cast<Eigen::Index>(connected_ids_.size());
  const auto d2 = (connected_q_.leftCols(n).colwise() - q).colwise().squaredNorm().eval();
  const double r2 = radius * radius;
  for (Eigen::Index i = 0; i < n; ++i)
    if (d2[i] <= r2) out.push_back(connected_ids_[static_cast<std::size_t>(i)]);
}

double RrtStarTree::neighbor_radius() const {
  const double n = static_cast<double>(connected_ids_.size());
  const int d = chain_.dof();
  const double shrink = gamma_ * std::pow(std::log(std::max(2.0, n)) / n, 1.0 / d);
  return std::min(4.0 * problem_.params.step_max, shrink);
}

double RrtStarTree::edge_cost(int parent_index, const VecX& child_state) {
  const Node& parent = nodes_[static_cast<std::size_t>(parent_index)];
  if (!parent.connected && parent_index != 0)
    throw ContractError("edge_cost parent is not part of the tree");
  const double dist = (child_state - parent.q).norm();
  if (!adversarial_) return lambda_len_ * dist;
  const double child_score = prefix_score(parent_index, forward_kinematics(chain_, child_state));
  return lambda_len_ * dist + parent.cached_score - child_score;
}

void RrtStarTree::rewire_propagate(int index) {
  std::deque<int> queue(nodes_[static_cast<std::size_t>(index)].children.begin(),
                        nodes_[static_cast<std::size_t>(index)].children.end());
  while (!queue.empty()) {
    // Full mode re-scores one breadth-first level per discriminator batch.
    std::vector<int> level(queue.begin(), queue.end());
    queue.clear();

    if (adversarial_ && active_mode_ == RewireMode::full) {
      std::vector<int> parents(level.size());
      std::vector<Markers> markers(level.size());
      for (std::size_t i = 0; i < level.size(); ++i) {
        parents[i] = nodes_[static_cast<std::size_t>(level[i])].parent;
        markers[i] = nodes_[static_cast<std::size_t>(level[i])].markers;
      }
      const auto scores = prefix_scores(parents, markers);
      for (std::size_t i = 0; i < level.size(); ++i) {
        Node& node = nodes_[static_cast<std::size_t>(level[i])];
        const Node& parent = nodes_[static_cast<std::size_t>(node.parent)];
        const double dist = (node.q - parent.q).norm();
        node.cached_score = scores[i];
        node.incoming_edge_cost =
            lambda_len_ * dist + parent.cached_score - node.cached_score;
        node.cost_to_come = parent.cost_to_come + node.incoming_edge_cost;
      }
    } else {
      for (const int id : level) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        const Node& parent = nodes_[static_cast<std::size_t>(node.parent)];
        node.cost_to_come = parent.cost_to_come + node.incoming_edge_cost;
      }
    }
    for (const int id : level)
      for (const int child : nodes_[static_cast<std::size_t>(id)].children)
        queue.push_back(child);
  }
}

bool RrtStarTree::iterate() {
  // Sample, goal-biased.
  VecX sample(chain_.dof());
  if (rng_.uniform() < problem_.params.goal_bias) {
    const auto pick = rng_.uniform_index(goal_ids_.size());
    sample = nodes_[static_cast<std::size_t>(goal_ids_[pick])].q;
  } else {
    for (int i = 0; i < chain_.dof(); ++i)
      sample[i] = rng_.uniform(chain_.joints()[i].lo, chain_.joints()[i].hi);
  }

  // Steer from the nearest connected node.
  const int nearest = nearest_connected(sample);
  const Node& near_node = nodes_[static_cast<std::size_t>(nearest)];
  const double dist = (sample - near_node.q).norm();
  if (dist < kDuplicateTol) return false;
  VecX q_new = sample;
  if (dist > problem_.params.step_max)
    q_new = near_node.q + (problem_.params.step_max / dist) * (sample - near_node.q);
  if (state_in_collision(chain_, q_new, problem_.scene)) return false;

  const double radius = neighbor_radius();
  std::vector<int> neighbors;
  neighbor_indices(q_new, radius, neighbors);
  if (neighbors.empty()) neighbors.push_back(nearest);
  {
    // Drop exact duplicates of existing states.
    for (const int id : neighbors)
      if ((nodes_[static_cast<std::size_t>(id)].q - q_new).norm() < kDuplicateTol)
        return false;
  }

  const Markers markers_new =
      adversarial_ ? forward_kinematics(chain_, q_new) : Markers{};

  // Choose the parent minimizing cost-to-come, batched discriminator pass.
  std::vector<double> child_scores(neighbors.size(), 0.0);
  if (adversarial_) {
    std::vector<Markers> kids(neighbors.size(), markers_new);
    child_scores = prefix_scores(neighbors, kids);
  }
  std::vector<std::pair<double, std::size_t>> ranked(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const Node& cand = nodes_[static_cast<std::size_t>(neighbors[i])];
    const double d = (q_new - cand.q).norm();
    double cost = cand.cost_to_come + lambda_len_ * d;
    if (adversarial_) cost += cand.cached_score - child_scores[i];
    ranked[i] = {cost, i};
  }
  std::sort(ranked.begin(), ranked.end());

  int parent = -1;
  double new_cost = 0.0;
  double new_score = 0.0;
  for (const auto& [cost, i] : ranked) {
    const int cand = neighbors[i];
    if (edge_in_collision(chain_, nodes_[static_cast<std::size_t>(cand)].q, q_new,
                          problem_.scene, problem_.params.collision_resolution))
      continue;
    parent = cand;
    new_cost = cost;
    new_score = child_scores[i];
    break;
  }
  if (parent < 0) return false;

  Node node;
  node.q = q_new;
  node.markers = markers_new;
  node.parent = parent;
  node.cached_score = new_score;
  node.cost_to_come = new_cost;
  node.incoming_edge_cost = new_cost - nodes_[static_cast<std::size_t>(parent)].cost_to_come;
  node.connected = true;
  nodes_.push_back(std::move(node));
  const int new_id = static_cast<int>(nodes_.size()) - 1;
  nodes_[static_cast<std::size_t>(parent)].children.push_back(new_id);
  add_connected(new_id);
  ++added_nodes_;

  // Rewire connected neighbors and any goal in range through the new node.
  std::vector<int> targets;
  for (const int id : neighbors)
    if (id != parent) targets.push_back(id);
  for (const int gid : goal_ids_) {
    const Node& goal = nodes_[static_cast<std::size_t>(gid)];
    if (goal.connected) continue;  // connected goals are already neighbors
    if ((goal.q - q_new).norm() <= std::max(radius, problem_.params.step_max))
      targets.push_back(gid);
  }

  if (!targets.empty()) {
    std::vector<double> scores(targets.size(), 0.0);
    if (adversarial_) {
      std::vector<int> parents(targets.size(), new_id);
      std::vector<Markers> kids(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i)
        kids[i] = nodes_[static_cast<std::size_t>(targets[i])].markers;
      scores = prefix_scores(parents, kids);
    }
    const Node& from = nodes_[static_cast<std::size_t>(new_id)];
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Node& target = nodes_[static_cast<std::size_t>(targets[i])];
      const double d = (target.q - from.q).norm();
      double edge = lambda_len_ * d;
      if (adversarial_) edge += from.cached_score - scores[i];
      const double cost = from.cost_to_come + edge;
      if (cost >= target.cost_to_come - kImprovementTol) continue;
      if (is_ancestor(targets[i], new_id)) continue;  // negative edges: no cycles
      if (target.is_goal && state_in_collision(chain_, target.q, problem_.scene)) continue;
      if (edge_in_collision(chain_, from.q, target.q, problem_.scene,
                            problem_.params.collision_resolution))
        continue;

      if (target.parent >= 0) {
        auto& siblings = nodes_[static_cast<std::size_t>(target.parent)].children;
        siblings.erase(std::find(siblings.begin(), siblings.end(), targets[i]));
      }
      const bool newly_connected = !target.connected;
      target.parent = new_id;
      target.incoming_edge_cost = edge;
      target.cost_to_come = cost;
      if (adversarial_) target.cached_score = scores[i];
      target.connected = true;
      nodes_[static_cast<std::size_t>(new_id)].children.push_back(targets[i]);
      if (newly_connected) add_connected(targets[i]);
      rewire_propagate(targets[i]);
    }
  }
  return true;
}

void RrtStarTree::run() {
  const long iteration_cap = 50L * problem_.params.max_nodes;
  long iterations = 0;
  while (added_nodes_ < problem_.params.max_nodes && iterations < iteration_cap) {
    iterate();
    ++iterations;
  }
}

std::optional<PlanResult> RrtStarTree::best_solution() const {
  int best = -1;
  for (const int gid : goal_ids_) {
    const Node& goal = nodes_[static_cast<std::size_t>(gid)];
    if (!goal.connected) continue;
    if (best < 0 || goal.cost_to_come <
                        nodes_[static_cast<std::size_t>(best)].cost_to_come - kImprovementTol)
      best = gid;
  }
  if (best < 0) return std::nullopt;

  PlanResult result;
  for (int i = best; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent)
    result.states.push_back(nodes_[static_cast<std::size_t>(i)].q);
  std::reverse(result.states.begin(), result.states.end());

  const Node& goal = nodes_[static_cast<std::size_t>(best)];
  result.report.cost = goal.cost_to_come;
  for (std::size_t i = 1; i < result.states.size(); ++i)
    result.report.length += (result.states[i] - result.states[i - 1]).norm();
  if (adversarial_) result.report.final_score = goal.cached_score;
  result.report.tree_nodes = static_cast<int>(connected_ids_.size());
  result.report.discriminator_evals = evals_used_;
  result.report.seed = problem_.rng_seed;
  return result;
}

std::optional<PlanResult> plan(const KinematicChain& chain, const PlanningProblem& problem) {
  RrtStarTree tree(chain, problem);
  tree.run();
  return tree.best_solution();
}

}  // namespace implan
