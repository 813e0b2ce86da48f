#include "mtseq/trainer.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "mtseq/error.h"
#include "mtseq/seq2seq.h"

namespace mtseq {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kTrainStream = 0x7;
constexpr std::uint64_t kTaskStreamBase = 0x1000;

struct RawCorpus {
  std::vector<TokenPair> pairs;
  std::uint64_t skipthought_skipped = 0;
};

std::vector<std::vector<std::string>> synth_sentences(const SynthSpec& spec) {
  std::vector<std::vector<std::string>> sentences;
  for (TokenPair& p : synth_corpus(spec)) sentences.push_back(std::move(p.source));
  return sentences;
}

RawCorpus load_corpus(const CorpusSpecM& spec, TaskKind kind, const std::string& where) {
  RawCorpus out;
  switch (kind) {
    case TaskKind::kTranslation:
      if (spec.is_synth()) {
        out.pairs = synth_corpus(*spec.synth);
      } else {
        auto src = read_token_lines(spec.source_path);
        auto tgt = read_token_lines(spec.target_path);
        if (src.size() != tgt.size()) {
          throw ConfigError(where + ": source/target line counts differ (" +
                            std::to_string(src.size()) + " vs " + std::to_string(tgt.size()) +
                            ")");
        }
        for (std::size_t i = 0; i < src.size(); ++i) {
          out.pairs.push_back({std::move(src[i]), std::move(tgt[i]), {}});
        }
      }
      break;
    case TaskKind::kAutoencoder: {
      auto sentences =
          spec.is_synth() ? synth_sentences(*spec.synth) : read_token_lines(spec.source_path);
      out.pairs = make_autoencoder_corpus(sentences);
      break;
    }
    case TaskKind::kSkipThought: {
      auto sentences =
          spec.is_synth() ? synth_sentences(*spec.synth) : read_token_lines(spec.source_path);
      out.pairs = make_skipthought_corpus(sentences, &out.skipthought_skipped);
      break;
    }
    case TaskKind::kParse:
      if (spec.is_synth()) {
        out.pairs = synth_corpus(*spec.synth);
      } else {
        auto src = read_token_lines(spec.source_path);
        auto trees = read_tree_lines(spec.trees_path);
        if (src.size() != trees.size()) {
          throw ConfigError(where + ": sentence/tree line counts differ (" +
                            std::to_string(src.size()) + " vs " + std::to_string(trees.size()) +
                            ")");
        }
        for (std::size_t i = 0; i < src.size(); ++i) {
          out.pairs.push_back({std::move(src[i]), linearize(trees[i]), {}});
        }
      }
      break;
    case TaskKind::kCaption: {
      auto features = read_vector_lines(spec.features_path);
      auto tgt = read_token_lines(spec.target_path);
      if (features.size() != tgt.size()) {
        throw ConfigError(where + ": feature/target line counts differ (" +
                          std::to_string(features.size()) + " vs " + std::to_string(tgt.size()) +
                          ")");
      }
      for (std::size_t i = 0; i < features.size(); ++i) {
        TokenPair p;
        p.feature = std::move(features[i]);
        p.target = std::move(tgt[i]);
        out.pairs.push_back(std::move(p));
      }
      break;
    }
  }
  if (out.pairs.empty()) {
    throw ConfigError(where + ": corpus produced zero usable pairs");
  }
  return out;
}

// One structured record per line; no timestamps so identical runs produce
// identical logs.
class MetricsLog {
 public:
  MetricsLog(const std::string& path, bool echo) : echo_(echo) {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      if (!out_) throw IoError("cannot open metrics log " + path);
    }
  }

  void write(const json& record) {
    const std::string line = record.dump();
    if (out_.is_open()) out_ << line << "\n";
    if (echo_) std::cout << line << "\n";
  }

  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
  bool echo_;
};

}  // namespace

std::size_t Experiment::task_index(const std::string& name) const {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].spec.name == name) return i;
  }
  throw ConfigError("unknown task name: " + name);
}

Experiment build_experiment(const ExperimentManifest& manifest) {
  manifest.validate();

  Experiment exp;
  exp.manifest = manifest;

  std::unordered_map<std::string, const EncoderSpecM*> enc_specs;
  for (const EncoderSpecM& e : manifest.encoders) enc_specs[e.id] = &e;
  std::unordered_map<std::string, const DecoderSpecM*> dec_specs;
  for (const DecoderSpecM& d : manifest.decoders) dec_specs[d.id] = &d;

  // Raw token corpora first; vocabularies are counted from the train sides.
  std::vector<RawCorpus> train_raw, val_raw;
  for (const TaskSpecM& t : manifest.tasks) {
    train_raw.push_back(load_corpus(t.train, t.kind, "tasks[" + t.name + "].corpus"));
    val_raw.push_back(t.val ? load_corpus(*t.val, t.kind, "tasks[" + t.name + "].val")
                            : RawCorpus{});
  }

  for (const VocabSpecM& v : manifest.vocabs) {
    std::map<std::string, std::uint64_t> counts;
    for (std::size_t i = 0; i < manifest.tasks.size(); ++i) {
      const TaskSpecM& t = manifest.tasks[i];
      const EncoderSpecM* enc = enc_specs.at(t.encoder);
      const bool source_counts = !enc->is_feature && enc->vocab == v.id;
      const bool target_counts = dec_specs.at(t.decoder)->vocab == v.id;
      if (!source_counts && !target_counts) continue;
      for (const TokenPair& p : train_raw[i].pairs) {
        if (source_counts) {
          for (const std::string& w : p.source) ++counts[w];
        }
        if (target_counts) {
          for (const std::string& w : p.target) ++counts[w];
        }
      }
    }
    if (counts.empty()) {
      throw ConfigError("vocabs[" + v.id + "]: no task corpus feeds this vocabulary");
    }
    exp.vocabs.emplace(v.id, build_vocab(counts, v.max_size));
  }

  for (const EncoderSpecM& e : manifest.encoders) {
    if (e.is_feature) {
      exp.topology.encoders.emplace(
          e.id, std::make_shared<FeatureEncoder>(e.id, e.feature_dim, manifest.layers,
                                                 manifest.hidden_dim));
    } else {
      exp.topology.encoders.emplace(
          e.id, std::make_shared<SequenceEncoder>(e.id, exp.vocabs.at(e.vocab).size(),
                                                  manifest.embedding_dim, manifest.layers,
                                                  manifest.hidden_dim, manifest.dropout));
    }
  }
  for (const DecoderSpecM& d : manifest.decoders) {
    exp.topology.decoders.emplace(
        d.id, std::make_shared<Decoder>(d.id, exp.vocabs.at(d.vocab).size(),
                                        manifest.embedding_dim, manifest.layers,
                                        manifest.hidden_dim, manifest.dropout));
  }

  Rng init_rng(mix_seed(manifest.seed, kInitStream));
  const Real scale = static_cast<Real>(manifest.init_scale);
  for (const ParamPtr& p : exp.topology.all_params()) {
    init_uniform(*p, -scale, scale, init_rng);
  }
  if (manifest.forget_bias != 0.0) {
    auto raise_forget_bias = [&](RnnStack& stack) {
      for (LstmLayer& layer : stack.layers()) {
        const std::size_t hidden = layer.hidden_dim();
        for (std::size_t j = 0; j < hidden; ++j) {
          layer.bias()->value.values[hidden + j] += static_cast<Real>(manifest.forget_bias);
        }
      }
    };
    for (auto& [id, enc] : exp.topology.encoders) {
      if (auto* seq = dynamic_cast<SequenceEncoder*>(enc.get())) raise_forget_bias(seq->stack());
    }
    for (auto& [id, dec] : exp.topology.decoders) raise_forget_bias(dec->stack());
  }

  for (std::size_t i = 0; i < manifest.tasks.size(); ++i) {
    const TaskSpecM& t = manifest.tasks[i];
    const EncoderSpecM* enc = enc_specs.at(t.encoder);

    TaskRuntime rt;
    rt.spec = t;
    rt.source_vocab = enc->is_feature ? nullptr : &exp.vocabs.at(enc->vocab);
    rt.target_vocab = &exp.vocabs.at(dec_specs.at(t.decoder)->vocab);
    rt.skipthought_skipped = train_raw[i].skipthought_skipped;
    const Vocabulary dummy;
    for (const TokenPair& p : train_raw[i].pairs) {
      rt.train_pairs.push_back(
          numberize(p, rt.source_vocab ? *rt.source_vocab : dummy, *rt.target_vocab));
    }
    for (const TokenPair& p : val_raw[i].pairs) {
      rt.val_pairs.push_back(
          numberize(p, rt.source_vocab ? *rt.source_vocab : dummy, *rt.target_vocab));
    }
    exp.tasks.push_back(std::move(rt));

    TaskSpec spec;
    spec.name = t.name;
    spec.encoder_id = t.encoder;
    spec.decoder_id = t.decoder;
    spec.mixing_ratio = t.ratio;
    spec.corpus_id = t.name;
    spec.is_reference = i == 0;
    exp.topology.tasks.push_back(std::move(spec));
  }

  exp.kind = validate(exp.topology);
  exp.reference_index = 0;
  exp.updates_per_ref_epoch =
      (exp.tasks[0].train_pairs.size() + manifest.batch_size - 1) / manifest.batch_size;
  exp.schedule.base_lr = manifest.base_lr;
  exp.schedule.finetune_start =
      manifest.finetune_start.value_or(std::numeric_limits<double>::infinity());
  exp.schedule.finetune_cycle = manifest.finetune_cycle;
  exp.schedule.total_epochs = manifest.total_epochs;
  return exp;
}

CheckpointData make_snapshot(const Experiment& exp, std::span<const BatchStream> streams,
                             const Rng& train_rng, std::span<const std::uint64_t> tallies,
                             std::uint64_t total_updates) {
  CheckpointData data;
  data.manifest_digest = exp.manifest.digest();
  data.manifest_json = exp.manifest.canonical_text();
  data.total_updates = total_updates;
  data.task_tallies.assign(tallies.begin(), tallies.end());
  data.train_rng = train_rng.serialize();
  for (const BatchStream& s : streams) data.streams.push_back(s.save_state());
  for (const auto& [id, vocab] : exp.vocabs) {
    data.vocabs.push_back({id, vocab.digest(), vocab.tokens()});
  }
  for (const ParamPtr& p : exp.topology.all_params()) {
    CheckpointData::ParamEntry entry;
    entry.name = p->name;
    entry.dims.assign(p->value.shape.begin(), p->value.shape.end());
    entry.update_count = p->update_count;
    entry.values = p->value.values;
    if (!p->value.all_finite()) {
      throw NumericError("refusing to checkpoint non-finite parameter " + p->name);
    }
    data.params.push_back(std::move(entry));
  }
  return data;
}

void apply_checkpoint(Experiment& exp, const CheckpointData& data) {
  for (const CheckpointData::VocabEntry& v : data.vocabs) {
    auto it = exp.vocabs.find(v.id);
    if (it == exp.vocabs.end()) {
      throw ConfigError("checkpoint carries unknown vocabulary '" + v.id + "'");
    }
    if (it->second.digest() != v.digest) {
      throw ConfigError("vocabulary digest mismatch for '" + v.id +
                        "': corpus preprocessing changed since this checkpoint was written");
    }
  }
  std::unordered_map<std::string, const CheckpointData::ParamEntry*> by_name;
  for (const CheckpointData::ParamEntry& p : data.params) by_name[p.name] = &p;
  std::vector<ParamPtr> params = exp.topology.all_params();
  if (params.size() != data.params.size()) {
    throw ConfigError("checkpoint parameter count " + std::to_string(data.params.size()) +
                      " does not match the model's " + std::to_string(params.size()));
  }
  for (const ParamPtr& p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw ConfigError("checkpoint is missing parameter " + p->name);
    }
    const CheckpointData::ParamEntry& entry = *it->second;
    std::vector<std::size_t> dims(entry.dims.begin(), entry.dims.end());
    if (dims != p->value.shape || entry.values.size() != p->value.values.size()) {
      throw ConfigError("checkpoint shape mismatch for " + p->name);
    }
    p->value.values = entry.values;
    p->update_count = entry.update_count;
    p->zero_grad();
  }
}

LoadedRun load_run(const std::string& checkpoint_path) {
  CheckpointData data = load_checkpoint(checkpoint_path);
  json j;
  try {
    j = json::parse(data.manifest_json);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  ExperimentManifest manifest = ExperimentManifest::from_json(j);
  if (manifest.digest() != data.manifest_digest) {
    throw ConfigError("checkpoint manifest digest mismatch; file corrupted or tampered");
  }
  LoadedRun run{build_experiment(manifest), std::move(data)};
  apply_checkpoint(run.experiment, run.data);
  return run;
}

namespace {

json support_json(const MetricReport& report) {
  json s = json::object();
  for (const auto& [k, v] : report.support) s[k] = v;
  return s;
}

std::vector<std::int32_t> strip_eos(std::vector<std::int32_t> ids) {
  if (!ids.empty() && ids.back() == Vocabulary::kEos) ids.pop_back();
  return ids;
}

}  // namespace

std::vector<std::int32_t> decode_example(Experiment& exp, std::size_t task_index,
                                         const ExamplePair& example, std::size_t max_len) {
  const TaskSpec& task = exp.topology.tasks.at(task_index);
  Encoder& enc = exp.topology.encoder_for(task);
  Decoder& dec = exp.topology.decoder_for(task);
  const ExamplePair one[1] = {example};
  Batch batch = assemble_batch(one);
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  if (max_len == 0) max_len = exp.manifest.decode_max_len;
  return strip_eos(greedy_decode(state, dec, max_len));
}

std::vector<MetricReport> evaluate_task(Experiment& exp, std::size_t task_index,
                                        std::span<const ExamplePair> pairs,
                                        const std::vector<std::string>& metrics,
                                        std::size_t max_len) {
  if (pairs.empty()) throw ConfigError("evaluation corpus is empty");
  const TaskSpec& task = exp.topology.tasks.at(task_index);
  const TaskRuntime& rt = exp.tasks.at(task_index);
  Encoder& enc = exp.topology.encoder_for(task);
  Decoder& dec = exp.topology.decoder_for(task);
  if (max_len == 0) max_len = exp.manifest.decode_max_len;

  bool want_ppl = false, want_acc = false, want_bleu = false, want_em = false, want_f1 = false;
  for (const std::string& m : metrics) {
    if (m == "perplexity") want_ppl = true;
    else if (m == "token_accuracy") want_acc = true;
    else if (m == "bleu") want_bleu = true;
    else if (m == "exact_match") want_em = true;
    else if (m == "f1") want_f1 = true;
    else throw ConfigError("unknown metric '" + m + "'");
  }
  if (want_f1 && rt.spec.kind != TaskKind::kParse) {
    throw ConfigError("bracketing F1 is only defined for parse tasks");
  }

  std::vector<MetricReport> reports;

  if (want_ppl || want_acc) {
    double nll_sum = 0.0;
    std::uint64_t tokens = 0, correct = 0;
    Rng no_shuffle(0);
    for (const Batch& batch : make_batches(pairs, exp.manifest.batch_size, no_shuffle, false)) {
      EncoderState state = enc.encode(batch, false, nullptr, nullptr);
      NllResult nll =
          dec.teacher_forced_nll(state, batch, false, nullptr, nullptr, want_acc ? &correct : nullptr);
      nll_sum += nll.nll_sum;
      tokens += nll.token_count;
    }
    if (want_ppl) {
      MetricReport r{"perplexity", perplexity(nll_sum, tokens), {{"tokens", tokens}}};
      reports.push_back(std::move(r));
    }
    if (want_acc) {
      MetricReport r{"token_accuracy",
                     static_cast<double>(correct) / static_cast<double>(tokens),
                     {{"tokens", tokens}}};
      reports.push_back(std::move(r));
    }
  }

  if (want_bleu || want_em || want_f1) {
    TokenCorpus hyps, refs;
    std::uint64_t exact = 0;
    for (const ExamplePair& ex : pairs) {
      std::vector<std::int32_t> decoded = decode_example(exp, task_index, ex, max_len);
      if (decoded == ex.target) ++exact;
      hyps.push_back(rt.target_vocab->decode(decoded));
      refs.push_back(rt.target_vocab->decode(ex.target));
    }
    if (want_bleu) {
      BleuStats stats = corpus_bleu_stats(hyps, refs);
      MetricReport r{"bleu",
                     stats.bleu,
                     {{"sentences", stats.sentences},
                      {"hyp_tokens", stats.hyp_length},
                      {"ref_tokens", stats.ref_length}}};
      reports.push_back(std::move(r));
    }
    if (want_em) {
      MetricReport r{"exact_match",
                     static_cast<double>(exact) / static_cast<double>(pairs.size()),
                     {{"sentences", pairs.size()}}};
      reports.push_back(std::move(r));
    }
    if (want_f1) {
      std::vector<ParseTree> gold;
      gold.reserve(refs.size());
      for (const auto& ref_tags : refs) gold.push_back(delinearize(ref_tags));
      F1Stats stats = bracket_f1_stats(hyps, gold);
      MetricReport r{"f1",
                     stats.f1,
                     {{"sentences", pairs.size()},
                      {"gold_brackets", stats.gold},
                      {"predicted_brackets", stats.predicted},
                      {"repairs", stats.repairs}}};
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

std::vector<MetricReport> evaluate_split(Experiment& exp, std::size_t task_index,
                                         const std::string& split,
                                         const std::vector<std::string>& metrics,
                                         std::size_t max_len) {
  const TaskRuntime& rt = exp.tasks.at(task_index);
  if (split == "train") {
    return evaluate_task(exp, task_index, rt.train_pairs, metrics, max_len);
  }
  if (split == "val") {
    if (rt.val_pairs.empty()) {
      throw ConfigError("task " + rt.spec.name + " declares no validation corpus");
    }
    return evaluate_task(exp, task_index, rt.val_pairs, metrics, max_len);
  }
  throw ConfigError("unknown split '" + split + "' (expected train or val)");
}

TrainResult train(const ExperimentManifest& manifest, const TrainOptions& opts) {
  Experiment exp = build_experiment(manifest);
  std::filesystem::create_directories(manifest.checkpoint_dir);

  std::vector<BatchStream> streams;
  streams.reserve(exp.tasks.size());
  for (std::size_t i = 0; i < exp.tasks.size(); ++i) {
    streams.emplace_back(exp.tasks[i].train_pairs, manifest.batch_size,
                         mix_seed(manifest.seed, kTaskStreamBase + i));
  }
  Rng train_rng(mix_seed(manifest.seed, kTrainStream));
  UpdateBudget budget;
  budget.realized.assign(exp.tasks.size(), 0);
  std::uint64_t total_updates = 0;

  if (!opts.resume_from.empty()) {
    CheckpointData data = load_checkpoint(opts.resume_from);
    if (data.manifest_digest != manifest.digest()) {
      throw ConfigError("resume checkpoint was written by a different manifest");
    }
    apply_checkpoint(exp, data);
    if (data.task_tallies.size() != exp.tasks.size() ||
        data.streams.size() != exp.tasks.size()) {
      throw ConfigError("resume checkpoint task count does not match the manifest");
    }
    budget.realized = data.task_tallies;
    train_rng = Rng::deserialize(data.train_rng);
    for (std::size_t i = 0; i < streams.size(); ++i) streams[i].restore_state(data.streams[i]);
    total_updates = data.total_updates;
  }

  const std::uint64_t updates_per_epoch = exp.updates_per_ref_epoch;
  std::uint64_t target_updates = static_cast<std::uint64_t>(
      std::llround(manifest.total_epochs * static_cast<double>(updates_per_epoch)));
  if (opts.stop_after_epoch) {
    const std::uint64_t stop_updates = static_cast<std::uint64_t>(
        std::llround(*opts.stop_after_epoch * static_cast<double>(updates_per_epoch)));
    target_updates = std::min(target_updates, stop_updates);
  }
  budget.reference_updates = target_updates;

  const std::string metrics_path =
      opts.metrics_path.empty() ? manifest.checkpoint_dir + "/metrics.jsonl" : opts.metrics_path;
  MetricsLog log(metrics_path, opts.echo_log);
  json task_summaries = json::array();
  for (const TaskRuntime& rt : exp.tasks) {
    json t = {{"name", rt.spec.name},
              {"kind", to_string(rt.spec.kind)},
              {"ratio", rt.spec.ratio},
              {"train_pairs", rt.train_pairs.size()}};
    if (rt.skipthought_skipped > 0) t["skipped_short_sentences"] = rt.skipthought_skipped;
    task_summaries.push_back(std::move(t));
  }
  log.write({{"event", "start"},
             {"name", manifest.name},
             {"seed", manifest.seed},
             {"topology", to_string(exp.kind)},
             {"reference_task", exp.tasks[exp.reference_index].spec.name},
             {"updates_per_epoch", updates_per_epoch},
             {"target_reference_updates", target_updates},
             {"tasks", task_summaries},
             {"resumed", !opts.resume_from.empty()}});

  auto eval_and_log = [&](std::uint64_t epoch) {
    for (std::size_t i = 0; i < exp.tasks.size(); ++i) {
      const bool has_val = !exp.tasks[i].val_pairs.empty();
      const std::string split = has_val ? "val" : "train";
      std::vector<MetricReport> reports =
          evaluate_split(exp, i, split, {"perplexity", "token_accuracy"});
      for (const MetricReport& r : reports) {
        log.write({{"event", "eval"},
                   {"epoch", epoch},
                   {"task", exp.tasks[i].spec.name},
                   {"split", split},
                   {"metric", r.name},
                   {"value", r.value},
                   {"support", support_json(r)}});
      }
    }
  };

  auto save_epoch_checkpoint = [&](std::uint64_t epoch,
                                   std::span<const std::uint64_t> tallies) {
    const std::string path =
        manifest.checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt";
    save_checkpoint(path, make_snapshot(exp, streams, train_rng, tallies, total_updates));
    log.write({{"event", "checkpoint"}, {"epoch", epoch}, {"path", path}});
    log.flush();
  };

  auto step_fn = [&](std::size_t task_index, const Batch& batch) {
    const std::uint64_t ref_done = budget.realized[exp.reference_index];
    const double epoch_time =
        (static_cast<double>(ref_done) + 0.5) / static_cast<double>(updates_per_epoch);
    const double lr = lr_at(exp.schedule, epoch_time);

    const TaskSpec& task = exp.topology.tasks[task_index];
    Encoder& enc = exp.topology.encoder_for(task);
    Decoder& dec = exp.topology.decoder_for(task);

    std::unique_ptr<EncoderCache> enc_cache;
    EncoderState state = enc.encode(batch, true, &train_rng, &enc_cache);
    DecoderCache dec_cache;
    NllResult nll = dec.teacher_forced_nll(state, batch, true, &train_rng, &dec_cache);
    if (!std::isfinite(nll.nll_sum)) {
      log.write({{"event", "abort"}, {"reason", "non-finite loss"}, {"update", total_updates + 1}});
      log.flush();
      throw NumericError("non-finite training loss at update " +
                         std::to_string(total_updates + 1) +
                         "; last good checkpoint retained");
    }
    EncoderState d_state =
        dec.nll_backward(dec_cache, static_cast<Real>(1.0 / static_cast<double>(batch.size())));
    enc.backward(*enc_cache, d_state);
    sgd_step(exp.topology.task_params(task_index), lr, manifest.clip_norm);

    ++total_updates;
    log.write({{"event", "update"},
               {"update", total_updates},
               {"task", task.name},
               {"loss", nll.nll_sum / static_cast<double>(nll.token_count)},
               {"lr", lr},
               {"epoch", epoch_time}});

    if (task_index == exp.reference_index && (ref_done + 1) % updates_per_epoch == 0) {
      const std::uint64_t epoch = (ref_done + 1) / updates_per_epoch;
      std::vector<std::uint64_t> tallies = budget.realized;
      ++tallies[task_index];  // run_budget tallies this update after we return
      if (manifest.eval_every > 0.0 &&
          std::fmod(static_cast<double>(epoch), manifest.eval_every) < 1e-9) {
        eval_and_log(epoch);
      }
      save_epoch_checkpoint(epoch, tallies);
    }
  };

  if (target_updates > budget.realized[exp.reference_index]) {
    run_budget(
        exp.topology, budget, [&](std::size_t task_index) { return streams[task_index].next(); },
        step_fn, train_rng);
  }

  std::vector<double> expected;
  for (const TaskSpec& t : exp.topology.tasks) {
    expected.push_back(t.mixing_ratio * static_cast<double>(target_updates));
  }
  log.write({{"event", "tallies"}, {"realized", budget.realized}, {"expected", expected}});

  const std::string final_path = manifest.checkpoint_dir + "/final.ckpt";
  save_checkpoint(final_path,
                  make_snapshot(exp, streams, train_rng, budget.realized, total_updates));
  log.write({{"event", "done"},
             {"updates", total_updates},
             {"final_checkpoint", final_path}});
  log.flush();

  TrainResult result;
  result.final_checkpoint = final_path;
  result.metrics_path = metrics_path;
  result.tallies = budget.realized;
  result.total_updates = total_updates;
  return result;
}

}  // namespace mtseq
