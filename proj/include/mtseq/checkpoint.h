#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtseq/corpus.h"
#include "mtseq/tensor.h"
#include "mtseq/vocab.h"

namespace mtseq {

// Versioned binary container of named tensors plus everything needed to
// continue a run bit-exactly: rng states, corpus stream positions, counters
// and the manifest the run was built from. Cross-version loads are rejected.
struct CheckpointData {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t manifest_digest = 0;
  std::string manifest_json;
  std::uint64_t total_updates = 0;
  std::vector<std::uint64_t> task_tallies;
  std::string train_rng;
  std::vector<BatchStream::State> streams;

  struct VocabEntry {
    std::string id;
    std::uint64_t digest = 0;
    std::vector<std::string> tokens;
  };
  std::vector<VocabEntry> vocabs;

  struct ParamEntry {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::uint64_t update_count = 0;
    std::vector<Real> values;
  };
  std::vector<ParamEntry> params;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace mtseq
