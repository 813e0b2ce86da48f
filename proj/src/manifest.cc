#include "mtseq/manifest.h"

#include <fstream>
#include <set>

#include "mtseq/error.h"
#include "mtseq/vocab.h"

namespace mtseq {

using nlohmann::json;

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "translation") return TaskKind::kTranslation;
  if (name == "autoencoder") return TaskKind::kAutoencoder;
  if (name == "skipthought") return TaskKind::kSkipThought;
  if (name == "parse") return TaskKind::kParse;
  if (name == "caption") return TaskKind::kCaption;
  throw ConfigError("tasks[].kind: unknown task kind '" + name + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kTranslation: return "translation";
    case TaskKind::kAutoencoder: return "autoencoder";
    case TaskKind::kSkipThought: return "skipthought";
    case TaskKind::kParse: return "parse";
    case TaskKind::kCaption: return "caption";
  }
  return "?";
}

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
T get_req(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_opt(const json& j, const std::string& where, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

SynthSpec parse_synth(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "size", "alphabet", "min_len", "max_len", "seed"});
  SynthSpec s;
  s.kind = synth_kind_from_string(get_req<std::string>(j, where, "kind"));
  s.size = get_req<std::size_t>(j, where, "size");
  s.vocab_tokens = get_opt<std::size_t>(j, where, "alphabet", 8);
  s.min_len = get_opt<std::size_t>(j, where, "min_len", 1);
  s.max_len = get_opt<std::size_t>(j, where, "max_len", 8);
  s.seed = get_opt<std::uint64_t>(j, where, "seed", 0);
  return s;
}

json synth_to_json(const SynthSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"size", s.size},       {"alphabet", s.vocab_tokens},
              {"min_len", s.min_len},      {"max_len", s.max_len}, {"seed", s.seed}};
}

CorpusSpecM parse_corpus(const json& j, const std::string& where) {
  check_keys(j, where, {"synth", "source", "target", "trees", "features"});
  CorpusSpecM c;
  if (j.contains("synth")) {
    c.synth = parse_synth(j.at("synth"), where + ".synth");
  }
  c.source_path = get_opt<std::string>(j, where, "source", "");
  c.target_path = get_opt<std::string>(j, where, "target", "");
  c.trees_path = get_opt<std::string>(j, where, "trees", "");
  c.features_path = get_opt<std::string>(j, where, "features", "");
  return c;
}

json corpus_to_json(const CorpusSpecM& c) {
  json j = json::object();
  if (c.synth) j["synth"] = synth_to_json(*c.synth);
  if (!c.source_path.empty()) j["source"] = c.source_path;
  if (!c.target_path.empty()) j["target"] = c.target_path;
  if (!c.trees_path.empty()) j["trees"] = c.trees_path;
  if (!c.features_path.empty()) j["features"] = c.features_path;
  return j;
}

}  // namespace

ExperimentManifest ExperimentManifest::from_json(const json& j) {
  check_keys(j, "manifest",
             {"name", "seed", "model", "training", "checkpoint_dir", "decode_max_len", "vocabs",
              "encoders", "decoders", "tasks"});
  ExperimentManifest m;
  m.name = get_req<std::string>(j, "manifest", "name");
  m.seed = get_req<std::uint64_t>(j, "manifest", "seed");

  const json& model = j.contains("model") ? j.at("model") : json::object();
  check_keys(model, "model",
             {"layers", "hidden", "embedding", "dropout", "init_scale", "forget_bias"});
  m.layers = get_opt<std::size_t>(model, "model", "layers", m.layers);
  m.hidden_dim = get_opt<std::size_t>(model, "model", "hidden", m.hidden_dim);
  m.embedding_dim = get_opt<std::size_t>(model, "model", "embedding", m.embedding_dim);
  m.dropout = get_opt<double>(model, "model", "dropout", m.dropout);
  m.init_scale = get_opt<double>(model, "model", "init_scale", m.init_scale);
  m.forget_bias = get_opt<double>(model, "model", "forget_bias", m.forget_bias);

  const json& training = j.contains("training") ? j.at("training") : json::object();
  check_keys(training, "training",
             {"batch_size", "epochs", "base_lr", "finetune_start", "finetune_cycle", "clip_norm",
              "eval_every"});
  m.batch_size = get_opt<std::size_t>(training, "training", "batch_size", m.batch_size);
  m.total_epochs = get_req<double>(training, "training", "epochs");
  m.base_lr = get_opt<double>(training, "training", "base_lr", m.base_lr);
  if (training.contains("finetune_start") && !training.at("finetune_start").is_null()) {
    m.finetune_start = get_req<double>(training, "training", "finetune_start");
  }
  m.finetune_cycle = get_opt<double>(training, "training", "finetune_cycle", m.finetune_cycle);
  if (training.contains("clip_norm")) {
    if (training.at("clip_norm").is_null()) {
      m.clip_norm.reset();
    } else {
      m.clip_norm = get_req<double>(training, "training", "clip_norm");
    }
  }
  m.eval_every = get_opt<double>(training, "training", "eval_every", m.eval_every);

  m.checkpoint_dir = get_opt<std::string>(j, "manifest", "checkpoint_dir", "runs/" + m.name);
  m.decode_max_len = get_opt<std::size_t>(j, "manifest", "decode_max_len", m.decode_max_len);

  for (const json& vj : get_opt<json>(j, "manifest", "vocabs", json::array())) {
    check_keys(vj, "vocabs[]", {"id", "max_size"});
    VocabSpecM v;
    v.id = get_req<std::string>(vj, "vocabs[]", "id");
    v.max_size = get_opt<std::size_t>(vj, "vocabs[]", "max_size", v.max_size);
    m.vocabs.push_back(std::move(v));
  }
  for (const json& ej : get_opt<json>(j, "manifest", "encoders", json::array())) {
    check_keys(ej, "encoders[]", {"id", "kind", "vocab", "feature_dim"});
    EncoderSpecM e;
    e.id = get_req<std::string>(ej, "encoders[]", "id");
    const std::string kind = get_opt<std::string>(ej, "encoders[]", "kind", "sequence");
    if (kind == "feature") {
      e.is_feature = true;
      e.feature_dim = get_req<std::size_t>(ej, "encoders[]", "feature_dim");
    } else if (kind == "sequence") {
      e.vocab = get_req<std::string>(ej, "encoders[]", "vocab");
    } else {
      throw ConfigError("encoders[].kind: expected 'sequence' or 'feature', got '" + kind + "'");
    }
    m.encoders.push_back(std::move(e));
  }
  for (const json& dj : get_opt<json>(j, "manifest", "decoders", json::array())) {
    check_keys(dj, "decoders[]", {"id", "vocab"});
    DecoderSpecM d;
    d.id = get_req<std::string>(dj, "decoders[]", "id");
    d.vocab = get_req<std::string>(dj, "decoders[]", "vocab");
    m.decoders.push_back(std::move(d));
  }
  for (const json& tj : get_opt<json>(j, "manifest", "tasks", json::array())) {
    check_keys(tj, "tasks[]", {"name", "encoder", "decoder", "ratio", "kind", "corpus", "val"});
    TaskSpecM t;
    t.name = get_req<std::string>(tj, "tasks[]", "name");
    t.encoder = get_req<std::string>(tj, "tasks[]", "encoder");
    t.decoder = get_req<std::string>(tj, "tasks[]", "decoder");
    t.ratio = get_opt<double>(tj, "tasks[]", "ratio", 1.0);
    t.kind = task_kind_from_string(get_opt<std::string>(tj, "tasks[]", "kind", "translation"));
    if (!tj.contains("corpus")) {
      throw ConfigError("tasks[].corpus: missing required field 'corpus' for task " + t.name);
    }
    t.train = parse_corpus(tj.at("corpus"), "tasks[" + t.name + "].corpus");
    if (tj.contains("val") && !tj.at("val").is_null()) {
      t.val = parse_corpus(tj.at("val"), "tasks[" + t.name + "].val");
    }
    m.tasks.push_back(std::move(t));
  }
  return m;
}

ExperimentManifest ExperimentManifest::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentManifest::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["model"] = {{"layers", layers},           {"hidden", hidden_dim},
                {"embedding", embedding_dim}, {"dropout", dropout},
                {"init_scale", init_scale},   {"forget_bias", forget_bias}};
  json training = {{"batch_size", batch_size}, {"epochs", total_epochs},
                   {"base_lr", base_lr},       {"finetune_cycle", finetune_cycle},
                   {"eval_every", eval_every}};
  if (finetune_start) training["finetune_start"] = *finetune_start;
  training["clip_norm"] = clip_norm ? json(*clip_norm) : json(nullptr);
  j["training"] = training;
  j["checkpoint_dir"] = checkpoint_dir;
  j["decode_max_len"] = decode_max_len;
  j["vocabs"] = json::array();
  for (const VocabSpecM& v : vocabs) {
    j["vocabs"].push_back({{"id", v.id}, {"max_size", v.max_size}});
  }
  j["encoders"] = json::array();
  for (const EncoderSpecM& e : encoders) {
    json ej = {{"id", e.id}};
    if (e.is_feature) {
      ej["kind"] = "feature";
      ej["feature_dim"] = e.feature_dim;
    } else {
      ej["kind"] = "sequence";
      ej["vocab"] = e.vocab;
    }
    j["encoders"].push_back(std::move(ej));
  }
  j["decoders"] = json::array();
  for (const DecoderSpecM& d : decoders) {
    j["decoders"].push_back({{"id", d.id}, {"vocab", d.vocab}});
  }
  j["tasks"] = json::array();
  for (const TaskSpecM& t : tasks) {
    json tj = {{"name", t.name},   {"encoder", t.encoder},     {"decoder", t.decoder},
               {"ratio", t.ratio}, {"kind", to_string(t.kind)}};
    tj["corpus"] = corpus_to_json(t.train);
    if (t.val) tj["val"] = corpus_to_json(*t.val);
    j["tasks"].push_back(std::move(tj));
  }
  return j;
}

std::string ExperimentManifest::canonical_text() const { return to_json().dump(); }

std::uint64_t ExperimentManifest::digest() const { return fnv1a64(canonical_text()); }

namespace {

void validate_corpus(const CorpusSpecM& c, TaskKind kind, const std::string& where,
                     bool is_feature_encoder) {
  if (c.is_synth()) {
    if (kind == TaskKind::kCaption) {
      throw ConfigError(where + ": caption tasks require file corpora (features + target)");
    }
    if (c.synth->size < 1) throw ConfigError(where + ".synth.size: must be >= 1");
    if (c.synth->vocab_tokens < 1) throw ConfigError(where + ".synth.alphabet: must be >= 1");
    if (c.synth->min_len < 1 || c.synth->max_len < c.synth->min_len) {
      throw ConfigError(where + ".synth: invalid length range");
    }
    if (kind == TaskKind::kParse && c.synth->kind != SynthKind::kToyParse) {
      throw ConfigError(where + ".synth.kind: parse tasks require the toy-parse generator");
    }
    return;
  }
  switch (kind) {
    case TaskKind::kTranslation:
      if (c.source_path.empty() || c.target_path.empty()) {
        throw ConfigError(where + ": translation file corpora need 'source' and 'target'");
      }
      break;
    case TaskKind::kAutoencoder:
    case TaskKind::kSkipThought:
      if (c.source_path.empty()) {
        throw ConfigError(where + ": monolingual corpora need 'source'");
      }
      break;
    case TaskKind::kParse:
      if (c.source_path.empty() || c.trees_path.empty()) {
        throw ConfigError(where + ": parse corpora need 'source' and 'trees'");
      }
      break;
    case TaskKind::kCaption:
      if (c.features_path.empty() || c.target_path.empty()) {
        throw ConfigError(where + ": caption corpora need 'features' and 'target'");
      }
      break;
  }
  if (kind == TaskKind::kCaption && !is_feature_encoder) {
    throw ConfigError(where + ": caption tasks must bind a feature encoder");
  }
}

}  // namespace

void ExperimentManifest::validate() const {
  if (name.empty()) throw ConfigError("name: must be non-empty");
  if (layers < 1) throw ConfigError("model.layers: must be >= 1");
  if (hidden_dim < 1) throw ConfigError("model.hidden: must be >= 1");
  if (embedding_dim < 1) throw ConfigError("model.embedding: must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout: must be in [0, 1)");
  if (!(init_scale > 0.0)) throw ConfigError("model.init_scale: must be > 0");
  if (batch_size < 1) throw ConfigError("training.batch_size: must be >= 1");
  if (total_epochs < 0.0) throw ConfigError("training.epochs: must be >= 0");
  if (!(base_lr > 0.0)) throw ConfigError("training.base_lr: must be > 0");
  if (finetune_start && !(*finetune_start > 0.0)) {
    throw ConfigError("training.finetune_start: must be > 0");
  }
  if (!(finetune_cycle > 0.0)) throw ConfigError("training.finetune_cycle: must be > 0");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("training.clip_norm: must be > 0");
  if (eval_every < 0.0) throw ConfigError("training.eval_every: must be >= 0");
  if (decode_max_len < 1) throw ConfigError("decode_max_len: must be >= 1");

  std::set<std::string> vocab_ids;
  for (const VocabSpecM& v : vocabs) {
    if (v.id.empty()) throw ConfigError("vocabs[].id: must be non-empty");
    if (!vocab_ids.insert(v.id).second) throw ConfigError("vocabs[].id: duplicate id " + v.id);
    if (v.max_size <= 4) throw ConfigError("vocabs[].max_size: must exceed the 4 reserved ids");
  }
  std::set<std::string> encoder_ids;
  for (const EncoderSpecM& e : encoders) {
    if (e.id.empty()) throw ConfigError("encoders[].id: must be non-empty");
    if (!encoder_ids.insert(e.id).second) {
      throw ConfigError("encoders[].id: duplicate id " + e.id);
    }
    if (e.is_feature) {
      if (e.feature_dim < 1) throw ConfigError("encoders[].feature_dim: must be >= 1");
    } else if (vocab_ids.find(e.vocab) == vocab_ids.end()) {
      throw ConfigError("encoders[].vocab: unknown vocab id " + e.vocab + " for encoder " + e.id);
    }
  }
  std::set<std::string> decoder_ids;
  for (const DecoderSpecM& d : decoders) {
    if (d.id.empty()) throw ConfigError("decoders[].id: must be non-empty");
    if (!decoder_ids.insert(d.id).second) {
      throw ConfigError("decoders[].id: duplicate id " + d.id);
    }
    if (vocab_ids.find(d.vocab) == vocab_ids.end()) {
      throw ConfigError("decoders[].vocab: unknown vocab id " + d.vocab + " for decoder " + d.id);
    }
  }

  if (tasks.empty()) throw ConfigError("tasks: at least one task is required");
  std::set<std::string> task_names;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpecM& t = tasks[i];
    const std::string where = "tasks[" + t.name + "]";
    if (t.name.empty()) throw ConfigError("tasks[].name: must be non-empty");
    if (!task_names.insert(t.name).second) {
      throw ConfigError("tasks[].name: duplicate task name " + t.name);
    }
    auto enc_it = encoder_ids.find(t.encoder);
    if (enc_it == encoder_ids.end()) {
      throw ConfigError(where + ".encoder: unknown encoder id " + t.encoder);
    }
    if (decoder_ids.find(t.decoder) == decoder_ids.end()) {
      throw ConfigError(where + ".decoder: unknown decoder id " + t.decoder);
    }
    if (!(t.ratio > 0.0)) throw ConfigError(where + ".ratio: must be > 0");
    if (i == 0 && t.ratio != 1.0) {
      throw ConfigError(where + ".ratio: the first task is the reference task and needs ratio 1.0");
    }
    bool feature_encoder = false;
    for (const EncoderSpecM& e : encoders) {
      if (e.id == t.encoder) feature_encoder = e.is_feature;
    }
    if (feature_encoder != (t.kind == TaskKind::kCaption)) {
      throw ConfigError(where + ": feature encoders pair with caption tasks and vice versa");
    }
    validate_corpus(t.train, t.kind, where + ".corpus", feature_encoder);
    if (t.val) validate_corpus(*t.val, t.kind, where + ".val", feature_encoder);
  }
}

}  // namespace mtseq
