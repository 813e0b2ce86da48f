#include "mtseq/checkpoint.h"

#include <cstring>
#include <fstream>

#include "mtseq/error.h"

namespace mtseq {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'S', 'Q', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& out, std::uint32_t x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
void write_u64(std::ostream& out, std::uint64_t x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t x = 0;
  in.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in) throw IoError("truncated checkpoint");
  return x;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t x = 0;
  in.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in) throw IoError("truncated checkpoint");
  return x;
}
std::string read_str(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, CheckpointData::kVersion);
  write_u32(out, static_cast<std::uint32_t>(sizeof(Real)));
  write_u64(out, data.manifest_digest);
  write_str(out, data.manifest_json);
  write_u64(out, data.total_updates);

  write_u32(out, static_cast<std::uint32_t>(data.task_tallies.size()));
  for (std::uint64_t t : data.task_tallies) write_u64(out, t);

  write_str(out, data.train_rng);
  write_u32(out, static_cast<std::uint32_t>(data.streams.size()));
  for (const BatchStream::State& s : data.streams) {
    write_str(out, s.rng);
    write_u64(out, s.cursor);
    write_u64(out, s.epochs_completed);
    write_u32(out, static_cast<std::uint32_t>(s.order.size()));
    out.write(reinterpret_cast<const char*>(s.order.data()),
              static_cast<std::streamsize>(s.order.size() * sizeof(std::uint32_t)));
  }

  write_u32(out, static_cast<std::uint32_t>(data.vocabs.size()));
  for (const CheckpointData::VocabEntry& v : data.vocabs) {
    write_str(out, v.id);
    write_u64(out, v.digest);
    write_u32(out, static_cast<std::uint32_t>(v.tokens.size()));
    for (const std::string& t : v.tokens) write_str(out, t);
  }

  write_u32(out, static_cast<std::uint32_t>(data.params.size()));
  for (const CheckpointData::ParamEntry& p : data.params) {
    write_str(out, p.name);
    write_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (std::uint64_t d : p.dims) write_u64(out, d);
    write_u64(out, p.update_count);
    write_u64(out, p.values.size());
    out.write(reinterpret_cast<const char*>(p.values.data()),
              static_cast<std::streamsize>(p.values.size() * sizeof(Real)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path + " is not a checkpoint file");
  }
  const std::uint32_t version = read_u32(in);
  if (version != CheckpointData::kVersion) {
    throw ConfigError("checkpoint format version " + std::to_string(version) +
                      " does not match this build's version " +
                      std::to_string(CheckpointData::kVersion));
  }
  const std::uint32_t real_width = read_u32(in);
  if (real_width != sizeof(Real)) {
    throw ConfigError("checkpoint stores " + std::to_string(real_width * 8) +
                      "-bit reals but this build uses " + std::to_string(sizeof(Real) * 8));
  }

  CheckpointData data;
  data.manifest_digest = read_u64(in);
  data.manifest_json = read_str(in);
  data.total_updates = read_u64(in);

  data.task_tallies.resize(read_u32(in));
  for (std::uint64_t& t : data.task_tallies) t = read_u64(in);

  data.train_rng = read_str(in);
  data.streams.resize(read_u32(in));
  for (BatchStream::State& s : data.streams) {
    s.rng = read_str(in);
    s.cursor = read_u64(in);
    s.epochs_completed = read_u64(in);
    s.order.resize(read_u32(in));
    in.read(reinterpret_cast<char*>(s.order.data()),
            static_cast<std::streamsize>(s.order.size() * sizeof(std::uint32_t)));
    if (!in) throw IoError("truncated checkpoint");
  }

  data.vocabs.resize(read_u32(in));
  for (CheckpointData::VocabEntry& v : data.vocabs) {
    v.id = read_str(in);
    v.digest = read_u64(in);
    v.tokens.resize(read_u32(in));
    for (std::string& t : v.tokens) t = read_str(in);
  }

  data.params.resize(read_u32(in));
  for (CheckpointData::ParamEntry& p : data.params) {
    p.name = read_str(in);
    p.dims.resize(read_u32(in));
    for (std::uint64_t& d : p.dims) d = read_u64(in);
    p.update_count = read_u64(in);
    p.values.resize(read_u64(in));
    in.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(p.values.size() * sizeof(Real)));
    if (!in) throw IoError("truncated checkpoint");
  }
  return data;
}

}  // namespace mtseq
