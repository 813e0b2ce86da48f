#include "mtseq/task_graph.h"

#include <set>
#include <unordered_set>

#include "mtseq/error.h"

namespace mtseq {

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::kSingleTask: return "single-task";
    case TopologyKind::kOneToMany: return "one-to-many";
    case TopologyKind::kManyToOne: return "many-to-one";
    case TopologyKind::kManyToMany: return "many-to-many";
  }
  return "?";
}

Encoder& SharingTopology::encoder_for(const TaskSpec& task) const {
  auto it = encoders.find(task.encoder_id);
  if (it == encoders.end()) {
    throw ConfigError("task " + task.name + " references unknown encoder " + task.encoder_id);
  }
  return *it->second;
}

Decoder& SharingTopology::decoder_for(const TaskSpec& task) const {
  auto it = decoders.find(task.decoder_id);
  if (it == decoders.end()) {
    throw ConfigError("task " + task.name + " references unknown decoder " + task.decoder_id);
  }
  return *it->second;
}

namespace {

void append_unique(std::vector<ParamPtr>& out, std::unordered_set<Parameter*>& seen,
                   const std::vector<ParamPtr>& params) {
  for (const ParamPtr& p : params) {
    if (seen.insert(p.get()).second) out.push_back(p);
  }
}

}  // namespace

std::vector<ParamPtr> SharingTopology::task_params(std::size_t task_index) const {
  const TaskSpec& task = tasks.at(task_index);
  std::vector<ParamPtr> out;
  std::unordered_set<Parameter*> seen;
  append_unique(out, seen, encoder_for(task).params());
  append_unique(out, seen, decoder_for(task).params());
  return out;
}

std::vector<ParamPtr> SharingTopology::all_params() const {
  std::vector<ParamPtr> out;
  std::unordered_set<Parameter*> seen;
  for (const auto& [id, enc] : encoders) append_unique(out, seen, enc->params());
  for (const auto& [id, dec] : decoders) append_unique(out, seen, dec->params());
  return out;
}

TopologyKind validate(const SharingTopology& topology) {
  if (topology.tasks.empty()) {
    throw ConfigError("topology declares zero tasks");
  }
  std::set<std::string> names;
  std::set<std::string> used_encoders, used_decoders;
  std::size_t reference_count = 0;
  for (const TaskSpec& task : topology.tasks) {
    if (!names.insert(task.name).second) {
      throw ConfigError("duplicate task name: " + task.name);
    }
    if (topology.encoders.find(task.encoder_id) == topology.encoders.end()) {
      throw ConfigError("task " + task.name + " references unknown encoder id: " +
                        task.encoder_id);
    }
    if (topology.decoders.find(task.decoder_id) == topology.decoders.end()) {
      throw ConfigError("task " + task.name + " references unknown decoder id: " +
                        task.decoder_id);
    }
    if (!(task.mixing_ratio > 0.0)) {
      throw ConfigError("task " + task.name + " has non-positive mixing ratio");
    }
    if (task.is_reference) {
      ++reference_count;
      if (task.mixing_ratio != 1.0) {
        throw ConfigError("reference task " + task.name + " must have mixing ratio 1.0");
      }
    }
    used_encoders.insert(task.encoder_id);
    used_decoders.insert(task.decoder_id);
  }
  if (reference_count != 1) {
    throw ConfigError("exactly one task must be the reference task, found " +
                      std::to_string(reference_count));
  }

  if (topology.tasks.size() == 1) return TopologyKind::kSingleTask;
  if (used_encoders.size() == 1 && used_decoders.size() > 1) return TopologyKind::kOneToMany;
  if (used_encoders.size() > 1 && used_decoders.size() == 1) return TopologyKind::kManyToOne;
  return TopologyKind::kManyToMany;
}

std::size_t select_next_task(std::span<const TaskSpec> tasks, Rng& rng) {
  if (tasks.empty()) throw ConfigError("cannot select a task from an empty list");
  std::vector<double> weights;
  weights.reserve(tasks.size());
  for (const TaskSpec& t : tasks) weights.push_back(t.mixing_ratio);
  return rng.categorical(weights);
}

std::vector<std::uint64_t> run_budget(const SharingTopology& topology, UpdateBudget& budget,
                                      const NextBatchFn& next_batch, const StepFn& step_fn,
                                      Rng& rng) {
  if (budget.reference_updates < 1) {
    throw ConfigError("update budget must be >= 1");
  }
  std::size_t reference_index = 0;
  for (std::size_t i = 0; i < topology.tasks.size(); ++i) {
    if (topology.tasks[i].is_reference) reference_index = i;
  }
  if (budget.realized.size() != topology.tasks.size()) {
    budget.realized.assign(topology.tasks.size(), 0);
  }
  while (budget.realized[reference_index] < budget.reference_updates) {
    const std::size_t task = select_next_task(topology.tasks, rng);
    Batch batch = next_batch(task);
    step_fn(task, batch);
    ++budget.realized[task];
  }
  return budget.realized;
}

ScheduleSimulation simulate_schedule(std::span<const double> alphas, std::uint64_t n,
                                     std::uint64_t seed) {
  if (alphas.empty()) throw ConfigError("schedule simulation requires at least one task");
  for (double a : alphas) {
    if (!(a > 0.0)) throw ConfigError("mixing ratios must be positive");
  }
  Rng rng(seed);
  ScheduleSimulation sim;
  sim.realized.assign(alphas.size(), 0);
  sim.expected.resize(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    sim.expected[i] = alphas[i] / alphas[0] * static_cast<double>(n);
  }
  while (sim.realized[0] < n) {
    const std::size_t task = rng.categorical(alphas);
    ++sim.realized[task];
    ++sim.total_draws;
  }
  return sim;
}

}  // namespace mtseq
