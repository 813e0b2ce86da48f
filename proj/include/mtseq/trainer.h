#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseq/checkpoint.h"
#include "mtseq/manifest.h"
#include "mtseq/metrics.h"
#include "mtseq/optim.h"
#include "mtseq/task_graph.h"

namespace mtseq {

struct TaskRuntime {
  TaskSpecM spec;
  std::vector<ExamplePair> train_pairs;
  std::vector<ExamplePair> val_pairs;
  const Vocabulary* source_vocab = nullptr;  // null for caption tasks
  const Vocabulary* target_vocab = nullptr;
  std::uint64_t skipthought_skipped = 0;
};

// A manifest materialized into corpora, vocabularies and an initialized
// model. Construction is a pure function of the manifest (and any corpus
// files it names).
struct Experiment {
  ExperimentManifest manifest;
  std::map<std::string, Vocabulary> vocabs;
  SharingTopology topology;
  TopologyKind kind = TopologyKind::kSingleTask;
  std::vector<TaskRuntime> tasks;
  FinetuneSchedule schedule;
  std::size_t reference_index = 0;
  std::uint64_t updates_per_ref_epoch = 0;

  std::size_t task_index(const std::string& name) const;
};

Experiment build_experiment(const ExperimentManifest& manifest);

struct TrainOptions {
  std::string metrics_path;  // default: <checkpoint_dir>/metrics.jsonl
  std::optional<double> stop_after_epoch;
  std::string resume_from;
  bool echo_log = false;
};

struct TrainResult {
  std::string final_checkpoint;
  std::string metrics_path;
  std::vector<std::uint64_t> tallies;
  std::uint64_t total_updates = 0;
};

// Builds the experiment, runs the mixing-ratio scheduler for the manifest's
// epoch budget, logs one structured record per event and checkpoints at
// every reference-task epoch. A non-finite loss aborts with NumericError;
// checkpoints already on disk stay.
TrainResult train(const ExperimentManifest& manifest, const TrainOptions& opts = {});

struct LoadedRun {
  Experiment experiment;
  CheckpointData data;
};

// Rebuilds the experiment from the manifest embedded in the checkpoint,
// verifies the manifest and vocabulary digests and restores all parameters.
LoadedRun load_run(const std::string& checkpoint_path);

CheckpointData make_snapshot(const Experiment& exp, std::span<const BatchStream> streams,
                             const Rng& train_rng, std::span<const std::uint64_t> tallies,
                             std::uint64_t total_updates);
void apply_checkpoint(Experiment& exp, const CheckpointData& data);

// perplexity | token_accuracy | bleu | exact_match | f1
std::vector<MetricReport> evaluate_task(Experiment& exp, std::size_t task_index,
                                        std::span<const ExamplePair> pairs,
                                        const std::vector<std::string>& metrics,
                                        std::size_t max_len = 0);
std::vector<MetricReport> evaluate_split(Experiment& exp, std::size_t task_index,
                                         const std::string& split,
                                         const std::vector<std::string>& metrics,
                                         std::size_t max_len = 0);

// Greedy decode of one example under a task's model; returns target-side ids
// without the trailing </s>.
std::vector<std::int32_t> decode_example(Experiment& exp, std::size_t task_index,
                                         const ExamplePair& example, std::size_t max_len = 0);

}  // namespace mtseq
