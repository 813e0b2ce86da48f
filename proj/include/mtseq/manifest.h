#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtseq/corpus.h"

namespace mtseq {

enum class TaskKind { kTranslation, kAutoencoder, kSkipThought, kParse, kCaption };

TaskKind task_kind_from_string(const std::string& name);
std::string to_string(TaskKind kind);

// Where a task's examples come from: a synthetic generator or files.
// Monolingual kinds (autoencoder, skip-thought) read sentences from
// source_path; parse tasks pair source_path sentences with trees_path;
// caption tasks pair features_path vectors with target_path sentences.
struct CorpusSpecM {
  std::optional<SynthSpec> synth;
  std::string source_path;
  std::string target_path;
  std::string trees_path;
  std::string features_path;

  bool is_synth() const { return synth.has_value(); }
};

struct VocabSpecM {
  std::string id;
  std::size_t max_size = 50004;
};

struct EncoderSpecM {
  std::string id;
  bool is_feature = false;
  std::string vocab;             // sequence encoders
  std::size_t feature_dim = 0;   // feature encoders
};

struct DecoderSpecM {
  std::string id;
  std::string vocab;
};

struct TaskSpecM {
  std::string name;
  std::string encoder;
  std::string decoder;
  double ratio = 1.0;
  TaskKind kind = TaskKind::kTranslation;
  CorpusSpecM train;
  std::optional<CorpusSpecM> val;
};

// The declarative experiment configuration; one JSON document drives a
// whole run and, together with the seed, fully determines it.
struct ExperimentManifest {
  std::string name;
  std::uint64_t seed = 0;

  std::size_t layers = 4;
  std::size_t hidden_dim = 1000;
  std::size_t embedding_dim = 1000;
  double dropout = 0.2;
  double init_scale = 0.06;
  double forget_bias = 1.0;

  std::size_t batch_size = 128;
  double total_epochs = 0.0;
  double base_lr = 0.7;
  std::optional<double> finetune_start;  // absent: constant lr for the run
  double finetune_cycle = 1.0;
  std::optional<double> clip_norm = 5.0;
  double eval_every = 1.0;  // reference epochs; 0 disables periodic eval

  std::string checkpoint_dir;
  std::size_t decode_max_len = 64;

  std::vector<VocabSpecM> vocabs;
  std::vector<EncoderSpecM> encoders;
  std::vector<DecoderSpecM> decoders;
  std::vector<TaskSpecM> tasks;

  static ExperimentManifest from_json(const nlohmann::json& j);
  static ExperimentManifest from_file(const std::string& path);
  nlohmann::json to_json() const;
  std::string canonical_text() const;
  std::uint64_t digest() const;

  // Field-level and cross-module checks; throws ConfigError naming the
  // offending field. Returns the topology classification implied by the
  // task list.
  void validate() const;
};

}  // namespace mtseq
