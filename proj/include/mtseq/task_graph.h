#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtseq/corpus.h"
#include "mtseq/seq2seq.h"

namespace mtseq {

struct TaskSpec {
  std::string name;
  std::string encoder_id;
  std::string decoder_id;
  double mixing_ratio = 1.0;  // alpha
  std::string corpus_id;
  bool is_reference = false;
};

enum class TopologyKind { kSingleTask, kOneToMany, kManyToOne, kManyToMany };

std::string to_string(TopologyKind kind);

// Tasks bound to shared encoders/decoders. Sharing is object identity: two
// tasks naming the same encoder id train the very same Parameter objects,
// recurrent weights and embeddings alike.
struct SharingTopology {
  std::map<std::string, std::shared_ptr<Encoder>> encoders;
  std::map<std::string, std::shared_ptr<Decoder>> decoders;
  std::vector<TaskSpec> tasks;

  Encoder& encoder_for(const TaskSpec& task) const;
  Decoder& decoder_for(const TaskSpec& task) const;
  // Deduplicated parameters of the modules task i trains, in a stable order.
  std::vector<ParamPtr> task_params(std::size_t task_index) const;
  // Every parameter of every declared module, in a stable order.
  std::vector<ParamPtr> all_params() const;
};

// Rejects dangling module ids, duplicate task names and reference-task
// violations; classifies by the modules the tasks actually reference.
TopologyKind validate(const SharingTopology& topology);

// Categorical draw with probability alpha_i / sum_j alpha_j.
std::size_t select_next_task(std::span<const TaskSpec> tasks, Rng& rng);

struct UpdateBudget {
  std::uint64_t reference_updates = 0;  // N
  std::vector<std::uint64_t> realized;  // per-task tallies
};

using NextBatchFn = std::function<Batch(std::size_t task_index)>;
using StepFn = std::function<void(std::size_t task_index, const Batch& batch)>;

// Draws one task per parameter update and feeds step_fn one mini-batch of
// that task's data, until the reference task has received exactly
// budget.reference_updates updates. Returns the per-task tallies.
std::vector<std::uint64_t> run_budget(const SharingTopology& topology, UpdateBudget& budget,
                                      const NextBatchFn& next_batch, const StepFn& step_fn,
                                      Rng& rng);

// Scheduler dry run: expected vs realized updates per task over a budget of
// n reference updates.
struct ScheduleSimulation {
  std::vector<double> expected;
  std::vector<std::uint64_t> realized;
  std::uint64_t total_draws = 0;
};

ScheduleSimulation simulate_schedule(std::span<const double> alphas, std::uint64_t n,
                                     std::uint64_t seed);

}  // namespace mtseq
