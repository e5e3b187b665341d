#include "implan/adversarial.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "implan/rng.hpp"

namespace implan {

namespace {

constexpr std::uint64_t kTagPlan = 0x504c414eULL;
constexpr std::uint64_t kTagTrain = 0x5452414eULL;
constexpr std::uint64_t kTagInit = 0x494e4954ULL;
constexpr std::uint64_t kTagSplit = 0x53504c49ULL;

struct GeneratedRecord {
  int iteration;
  int query_id;
  std::vector<MotionRepr> reprs;
};

// Runs fn(i) for i in [0, n); worker count > 1 only changes scheduling,
// never results, because slots are written by index.
void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// Stratified deterministic split; returns held-out entry indices.
std::vector<bool> heldout_mask(const LabeledDataset& dataset, double fraction,
                               std::uint64_t seed) {
  std::vector<std::size_t> real_idx, gen_idx;
  for (std::size_t i = 0; i < dataset.entries.size(); ++i)
    (dataset.entries[i].real ? real_idx : gen_idx).push_back(i);
  Rng rng(seed);
  rng.shuffle(real_idx);
  rng.shuffle(gen_idx);
  std::vector<bool> mask(dataset.entries.size(), false);
  const auto take = [&](const std::vector<std::size_t>& idx) {
    const std::size_t k = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = true;
  };
  take(real_idx);
  take(gen_idx);
  return mask;
}

}  // namespace

void LoopConfig::validate() const {
  if (iterations < 1) throw ContractError("loop iterations must be >= 1");
  if (queries.empty()) throw ContractError("loop needs at least one query");
  if (per_iteration_cap < 1) throw ContractError("per_iteration_cap must be >= 1");
  if (prefix_fractions.empty() || prefix_fractions.back() != 1.0)
    throw ContractError("prefix fractions must end at 1.0");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 0.5))
    throw ContractError("heldout_fraction must lie in (0, 0.5)");
  train_config.validate();
  for (const auto& q : queries)
    if (q.goals.empty()) throw ContractError("query without goal states");
}

LoopResult run_loop(const KinematicChain& chain, const LabeledDataset& target_set,
                    const LoopConfig& config, const MetricsFn& metrics,
                    const IterationSink& sink) {
  config.validate();
  if (target_set.entries.empty()) throw ContractError("empty target set");
  for (const auto& e : target_set.entries)
    if (!e.real) throw ContractError("target set must carry only real labels");

  LoopResult result;
  std::deque<GeneratedRecord> retained;
  Discriminator current;  // discriminator guiding iteration k (trained at k-1)

  for (int iter = 0; iter <= config.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationReport report;
    report.iteration = iter;

    // (a) plan all queries with the current objective.
    std::vector<std::optional<PlanResult>> motions(config.queries.size());
    parallel_for(config.jobs, config.queries.size(), [&](std::size_t qi) {
      const LoopQuery& query = config.queries[qi];
      PlanningProblem problem;
      problem.start = query.start;
      problem.goals = query.goals;
      problem.scene = config.scene;
      problem.params = config.planner;
      problem.rng_seed = seed_mix(config.rng_seed, kTagPlan, static_cast<std::uint64_t>(iter),
                                  static_cast<std::uint64_t>(query.id));
      if (iter == 0)
        problem.objective = LengthObjective{};
      else
        problem.objective = AdversarialObjective{&current, config.lambda};
      try {
        motions[qi] = plan(chain, problem);
      } catch (const ContractError&) {
        motions[qi] = std::nullopt;
      }
    });

    std::size_t train_successes = 0;
    for (std::size_t qi = 0; qi < motions.size(); ++qi) {
      if (motions[qi]) {
        if (!config.queries[qi].eval_only) ++train_successes;
      } else {
        report.failed_query_ids.push_back(config.queries[qi].id);
      }
    }
    if (train_successes == 0) throw std::runtime_error("all planning queries failed");

    // (b) encode generated prefixes; (c) retain up to the cap.
    if (!config.accumulate_generated) retained.clear();
    for (std::size_t qi = 0; qi < motions.size(); ++qi) {
      if (!motions[qi] || config.queries[qi].eval_only) continue;
      GeneratedRecord rec;
      rec.iteration = iter;
      rec.query_id = config.queries[qi].id;
      rec.reprs = prefix_representations(chain, Motion::from_states(motions[qi]->states),
                                         config.prefix_fractions);
      retained.push_back(std::move(rec));
    }
    while (retained.size() > static_cast<std::size_t>(config.per_iteration_cap))
      retained.pop_front();

    // (d) retrain from scratch on targets + retained generated set.
    LabeledDataset dataset;
    dataset.entries = target_set.entries;
    for (const auto& rec : retained)
      for (const auto& r : rec.reprs)
        dataset.entries.push_back(LabeledEntry{r, false, rec.iteration, rec.query_id});
    report.real_entries = target_set.entries.size();
    report.generated_entries = dataset.entries.size() - target_set.entries.size();

    const auto mask = heldout_mask(dataset, config.heldout_fraction,
                                   seed_mix(config.rng_seed, kTagSplit,
                                            static_cast<std::uint64_t>(iter)));
    LabeledDataset train_split, heldout_split;
    for (std::size_t i = 0; i < dataset.entries.size(); ++i)
      (mask[i] ? heldout_split : train_split).entries.push_back(dataset.entries[i]);

    TrainConfig tc = config.train_config;
    tc.rng_seed = seed_mix(config.rng_seed, kTagTrain, static_cast<std::uint64_t>(iter));
    const Discriminator init = Discriminator::seeded(
        seed_mix(config.rng_seed, kTagInit, static_cast<std::uint64_t>(iter)));
    TrainResult trained = train(init, train_split, tc);

    report.train_accuracy = accuracy(trained.model, train_split);
    report.heldout_accuracy =
        heldout_split.entries.empty() ? 0.0 : accuracy(trained.model, heldout_split);

    // (e) report.
    double score_sum = 0.0;
    double guide_sum = 0.0;
    std::size_t guide_count = 0;
    for (std::size_t qi = 0; qi < motions.size(); ++qi) {
      const auto& m = motions[qi];
      if (!m || config.queries[qi].eval_only) continue;
      score_sum += trained.model.score(encode(chain, Motion::from_states(m->states)));
      if (m->report.final_score) {
        guide_sum += *m->report.final_score;
        ++guide_count;
      }
    }
    report.mean_final_score = score_sum / static_cast<double>(train_successes);
    if (guide_count > 0)
      report.metrics["mean_score_guiding"] = guide_sum / static_cast<double>(guide_count);
    if (metrics) {
      auto extra = metrics(iter, motions);
      report.metrics.insert(extra.begin(), extra.end());
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    current = std::move(trained.model);
    if (sink) sink(IterationArtifacts{iter, motions, current, report});
    result.reports.push_back(std::move(report));
  }

  result.final_model = std::move(current);
  return result;
}

double evaluate_success_rate(const KinematicChain& chain,
                             const std::vector<std::vector<VecX>>& motions,
                             const Scene& hidden_scene, double resolution) {
  if (motions.empty()) throw ContractError("success rate of an empty motion list");
  std::size_t ok = 0;
  for (const auto& m : motions)
    if (!motion_in_collision(chain, m, hidden_scene, resolution)) ++ok;
  return static_cast<double>(ok) / static_cast<double>(motions.size());
}

namespace {

// Rebuild marker positions at the chain's segment lengths, anchored at each
// frame's own shoulder. Removes scale, keeps direction history and base.
void rebuild_markers(MarkerPath& path, double upper_len, double fore_len) {
  for (auto& m : path) {
    const Vec3 u = m.elbow - m.shoulder;
    const Vec3 f = m.hand - m.elbow;
    const double un = u.norm();
    const double fn = f.norm();
    if (un < 1e-12 || fn < 1e-12) throw ContractError("zero-length arm segment");
    m.elbow = m.shoulder + upper_len * (u / un);
    m.hand = m.elbow + fore_len * (f / fn);
  }
}

}  // namespace

std::pair<double, double> evaluate_rmse(const KinematicChain& chain,
                                        const std::vector<std::vector<VecX>>& planned,
                                        const std::vector<MarkerPath>& reference) {
  if (planned.size() != reference.size())
    throw ContractError("planned/reference list length mismatch");
  if (planned.empty()) throw ContractError("evaluate_rmse on empty lists");

  const auto& idx = chain.marker_indices();
  double upper_len = 0.0, fore_len = 0.0;
  for (int i = idx[0]; i < idx[1]; ++i) upper_len += chain.links()[static_cast<std::size_t>(i)].norm();
  for (int i = idx[1]; i < idx[2]; ++i) fore_len += chain.links()[static_cast<std::size_t>(i)].norm();

  double elbow_sq = 0.0, hand_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < planned.size(); ++p) {
    MarkerPath plan_path = to_marker_path(chain, Motion::from_states(planned[p]));
    MarkerPath ref_path = reference[p];
    plan_path = resample_markers(plan_path, kReprSteps);
    ref_path = resample_markers(ref_path, kReprSteps);
    rebuild_markers(plan_path, upper_len, fore_len);
    rebuild_markers(ref_path, upper_len, fore_len);
    for (int t = 0; t < kReprSteps; ++t) {
      elbow_sq += (plan_path[static_cast<std::size_t>(t)].elbow -
                   ref_path[static_cast<std::size_t>(t)].elbow)
                      .squaredNorm();
      hand_sq += (plan_path[static_cast<std::size_t>(t)].hand -
                  ref_path[static_cast<std::size_t>(t)].hand)
                     .squaredNorm();
      ++count;
    }
  }
  return {std::sqrt(elbow_sq / static_cast<double>(count)),
          std::sqrt(hand_sq / static_cast<double>(count))};
}

bool has_label_conflict(const LabeledDataset& dataset) {
  for (std::size_t i = 0; i < dataset.entries.size(); ++i)
    for (std::size_t j = i + 1; j < dataset.entries.size(); ++j)
      if (dataset.entries[i].real != dataset.entries[j].real &&
          dataset.entries[i].repr == dataset.entries[j].repr)
        return true;
  return false;
}

}  // namespace implan
