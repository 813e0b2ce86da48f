#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtseq/error.h"
#include "mtseq/trainer.h"

namespace {

using namespace mtseq;

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool verbose_log() {
  const char* env = std::getenv("MTSEQ_LOG");
  return env != nullptr && (std::string(env) == "debug" || std::string(env) == "info");
}

int cmd_train(const std::string& manifest_path, std::uint64_t seed_override, bool has_seed,
              const std::string& checkpoint_dir, const std::string& resume,
              double stop_after_epoch, bool has_stop) {
  ExperimentManifest manifest = ExperimentManifest::from_file(manifest_path);
  if (has_seed) manifest.seed = seed_override;
  if (!checkpoint_dir.empty()) manifest.checkpoint_dir = checkpoint_dir;

  TrainOptions opts;
  opts.resume_from = resume;
  if (has_stop) opts.stop_after_epoch = stop_after_epoch;
  opts.echo_log = verbose_log();

  TrainResult result = train(manifest, opts);
  std::cout << "trained " << result.total_updates << " updates\n";
  for (std::size_t i = 0; i < result.tallies.size(); ++i) {
    std::cout << "  task " << manifest.tasks[i].name << ": " << result.tallies[i] << " updates\n";
  }
  std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
  std::cout << "metrics log: " << result.metrics_path << "\n";
  return 0;
}

void print_report(const MetricReport& r) {
  nlohmann::json support = nlohmann::json::object();
  for (const auto& [k, v] : r.support) support[k] = v;
  std::cout << nlohmann::json{{"metric", r.name}, {"value", r.value}, {"support", support}}.dump()
            << "\n";
}

// Two modes: score a checkpoint on one of its task splits, or score
// pre-decoded hypothesis files against references directly.
int cmd_evaluate(const std::string& checkpoint, const std::string& task, const std::string& split,
                 const std::string& metrics_csv, std::size_t max_len,
                 const std::string& hypotheses, const std::string& references) {
  std::vector<std::string> metrics = split_csv(metrics_csv);
  if (!hypotheses.empty() || !references.empty()) {
    if (hypotheses.empty() || references.empty()) {
      throw ConfigError("file scoring needs both --hypotheses and --references");
    }
    if (metrics.empty()) metrics = {"bleu"};
    for (const std::string& m : metrics) {
      if (m == "bleu") {
        print_report(bleu_report_from_files(hypotheses, references));
      } else if (m == "f1") {
        print_report(f1_report_from_files(hypotheses, references));
      } else {
        throw ConfigError("file scoring supports the bleu and f1 metrics, not '" + m + "'");
      }
    }
    return 0;
  }

  if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint (or hypothesis files)");
  if (task.empty()) throw ConfigError("evaluate needs --task");
  LoadedRun run = load_run(checkpoint);
  Experiment& exp = run.experiment;
  const std::size_t ti = exp.task_index(task);
  if (metrics.empty()) metrics = {"perplexity", "token_accuracy"};
  for (const MetricReport& r : evaluate_split(exp, ti, split, metrics, max_len)) {
    print_report(r);
  }
  return 0;
}

ExamplePair read_decode_line(const std::string& line, const TaskRuntime& rt) {
  ExamplePair ex;
  std::istringstream ss(line);
  if (rt.source_vocab == nullptr) {
    double x;
    while (ss >> x) ex.feature.push_back(x);
  } else {
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    ex.source = rt.source_vocab->encode(tokens);
  }
  ex.target = {Vocabulary::kUnk};  // placeholder; decoding ignores the target
  return ex;
}

int cmd_decode(const std::string& checkpoint, const std::string& task, const std::string& input,
               const std::string& output, std::size_t max_len) {
  LoadedRun run = load_run(checkpoint);
  Experiment& exp = run.experiment;
  const std::size_t ti = exp.task_index(task);
  const TaskRuntime& rt = exp.tasks[ti];

  std::ifstream in(input);
  if (!in) throw IoError("cannot open " + input);
  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!output.empty()) {
    file_out.open(output, std::ios::trunc);
    if (!file_out) throw IoError("cannot write " + output);
    out = &file_out;
  }

  std::string line;
  while (std::getline(in, line)) {
    ExamplePair ex = read_decode_line(line, rt);
    if (ex.source.empty() && ex.feature.empty()) continue;
    std::vector<std::int32_t> ids = decode_example(exp, ti, ex, max_len);
    std::vector<std::string> tokens = rt.target_vocab->decode(ids);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) *out << " ";
      *out << tokens[i];
    }
    *out << "\n";
  }
  return 0;
}

int cmd_ensemble_decode(const std::vector<std::string>& checkpoints, const std::string& task,
                        const std::string& input, const std::string& output, std::size_t max_len) {
  if (checkpoints.empty()) throw ConfigError("ensemble-decode needs at least one --checkpoint");
  std::vector<LoadedRun> runs;
  runs.reserve(checkpoints.size());
  for (const std::string& path : checkpoints) runs.push_back(load_run(path));

  Experiment& first = runs[0].experiment;
  const std::size_t ti = first.task_index(task);
  const TaskRuntime& rt = first.tasks[ti];
  const std::string dec_id = first.topology.tasks[ti].decoder_id;
  for (LoadedRun& run : runs) {
    Experiment& exp = run.experiment;
    const std::size_t other_ti = exp.task_index(task);
    const TaskRuntime& other = exp.tasks[other_ti];
    if (other.target_vocab->digest() != rt.target_vocab->digest()) {
      throw ConfigError("ensemble members must share one target vocabulary (task " + task + ")");
    }
    if ((other.source_vocab == nullptr) != (rt.source_vocab == nullptr) ||
        (rt.source_vocab != nullptr &&
         other.source_vocab->digest() != rt.source_vocab->digest())) {
      throw ConfigError("ensemble members must share the source vocabulary (task " + task + ")");
    }
  }
  if (max_len == 0) max_len = first.manifest.decode_max_len;

  std::ifstream in(input);
  if (!in) throw IoError("cannot open " + input);
  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!output.empty()) {
    file_out.open(output, std::ios::trunc);
    if (!file_out) throw IoError("cannot write " + output);
    out = &file_out;
  }

  std::string line;
  while (std::getline(in, line)) {
    ExamplePair ex = read_decode_line(line, rt);
    if (ex.source.empty() && ex.feature.empty()) continue;
    const ExamplePair one[1] = {ex};
    Batch batch = assemble_batch(one);
    std::vector<EnsembleMember> members;
    for (LoadedRun& run : runs) {
      Experiment& exp = run.experiment;
      const TaskSpec& spec = exp.topology.tasks[exp.task_index(task)];
      EnsembleMember member;
      member.state = exp.topology.encoder_for(spec).encode(batch, false, nullptr, nullptr);
      member.decoder = &exp.topology.decoder_for(spec);
      members.push_back(std::move(member));
    }
    std::vector<std::int32_t> ids = ensemble_greedy_decode(std::move(members), max_len);
    if (!ids.empty() && ids.back() == Vocabulary::kEos) ids.pop_back();
    std::vector<std::string> tokens = rt.target_vocab->decode(ids);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) *out << " ";
      *out << tokens[i];
    }
    *out << "\n";
  }
  return 0;
}

int cmd_simulate(const std::string& alpha_csv, std::uint64_t updates, std::uint64_t seed) {
  std::vector<double> alphas;
  for (const std::string& a : split_csv(alpha_csv)) alphas.push_back(std::stod(a));
  ScheduleSimulation sim = simulate_schedule(alphas, updates, seed);
  std::cout << "task  alpha      expected      realized\n";
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    std::printf("%-5zu %-10g %-13.1f %llu\n", i, alphas[i], sim.expected[i],
                static_cast<unsigned long long>(sim.realized[i]));
  }
  std::cout << "total draws: " << sim.total_draws << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task sequence-to-sequence training harness"};
  app.require_subcommand(1);

  std::string manifest_path, checkpoint_dir, resume, checkpoint, task, split = "val";
  std::string metrics, input, output, alpha_csv = "1.0", hypotheses, references;
  std::vector<std::string> checkpoints;
  std::uint64_t seed = 0, updates = 10000, sim_seed = 0;
  std::size_t max_len = 0;
  double stop_after_epoch = 0.0;

  CLI::App* train_cmd = app.add_subcommand("train", "Train from an experiment manifest");
  train_cmd->add_option("--manifest", manifest_path, "manifest JSON path")->required();
  CLI::Option* seed_opt = train_cmd->add_option("--seed", seed, "override the manifest seed");
  train_cmd->add_option("--checkpoint-dir", checkpoint_dir, "override the checkpoint directory");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  CLI::Option* stop_opt = train_cmd->add_option("--stop-after-epoch", stop_after_epoch,
                                                "stop once this reference epoch completes");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint or hypothesis files");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
  eval_cmd->add_option("--task", task, "task name");
  eval_cmd->add_option("--split", split, "train or val");
  eval_cmd->add_option("--metrics", metrics,
                       "comma list: perplexity,token_accuracy,bleu,exact_match,f1");
  eval_cmd->add_option("--max-len", max_len, "decode length cap");
  eval_cmd->add_option("--hypotheses", hypotheses, "decoded sentences, one per line");
  eval_cmd->add_option("--references", references,
                       "reference token lines (bleu) or bracketed trees (f1)");

  CLI::App* decode_cmd = app.add_subcommand("decode", "Greedy-decode an input file");
  decode_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  decode_cmd->add_option("--task", task, "task name")->required();
  decode_cmd->add_option("--input", input, "input file (sentences or feature vectors)")
      ->required();
  decode_cmd->add_option("--output", output, "output file (default stdout)");
  decode_cmd->add_option("--max-len", max_len, "decode length cap");

  CLI::App* ens_cmd = app.add_subcommand("ensemble-decode", "Decode with an ensemble");
  ens_cmd->add_option("--checkpoint", checkpoints, "checkpoint path (repeatable)")->required();
  ens_cmd->add_option("--task", task, "task name")->required();
  ens_cmd->add_option("--input", input, "input file")->required();
  ens_cmd->add_option("--output", output, "output file (default stdout)");
  ens_cmd->add_option("--max-len", max_len, "decode length cap");

  CLI::App* sim_cmd = app.add_subcommand("simulate-schedule", "Dry-run the task scheduler");
  sim_cmd->add_option("--alpha", alpha_csv, "comma list of mixing ratios")->required();
  sim_cmd->add_option("--updates", updates, "reference-task update budget N")->required();
  sim_cmd->add_option("--seed", sim_seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return cmd_train(manifest_path, seed, seed_opt->count() > 0, checkpoint_dir, resume,
                       stop_after_epoch, stop_opt->count() > 0);
    }
    if (eval_cmd->parsed()) {
      return cmd_evaluate(checkpoint, task, split, metrics, max_len, hypotheses, references);
    }
    if (decode_cmd->parsed()) return cmd_decode(checkpoint, task, input, output, max_len);
    if (ens_cmd->parsed()) return cmd_ensemble_decode(checkpoints, task, input, output, max_len);
    if (sim_cmd->parsed()) return cmd_simulate(alpha_csv, updates, sim_seed);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
