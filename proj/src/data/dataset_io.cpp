#include "teleguard/data/dataset_io.hpp"

#include <sstream>

#include "teleguard/common/binary_io.hpp"
#include "teleguard/common/errors.hpp"
#include "teleguard/common/hash.hpp"

namespace teleguard::data {
namespace {

constexpr const char* kMagic = "TGDS";

std::string checksum(std::string_view payload) { return sha256_hex(payload).substr(0, 16); }

}  // namespace

std::string encode_trajectory(const Trajectory& tr) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(tr.length()));
  w.u8(static_cast<std::uint8_t>(tr.outcome));
  w.u64(tr.meta.episode_seed);
  w.u64(tr.meta.operator_seed);
  w.u32(static_cast<std::uint32_t>(tr.meta.horizon));
  w.f64(tr.meta.dt);
  w.f64(tr.meta.episode_limit);
  w.u8(static_cast<std::uint8_t>(tr.meta.failure_cause));
  w.u32(static_cast<std::uint32_t>(tr.meta.operator_kind.size()));
  w.raw(tr.meta.operator_kind);
  for (const auto& o : tr.observations) w.f64s({o.data(), static_cast<std::size_t>(o.size())});
  for (const auto& a : tr.commands) w.f64s({a.data(), static_cast<std::size_t>(a.size())});
  w.f64s(tr.rewards);
  for (auto y : tr.fail_labels) w.u8(y);
  return w.take();
}

Trajectory decode_trajectory(std::string_view payload, int obs_dim, int act_dim) {
  ByteReader r(payload);
  Trajectory tr;
  const int T = static_cast<int>(r.u32());
  const auto outcome = r.u8();
  if (outcome > 1) throw CorruptFileError("trajectory: bad outcome code");
  tr.outcome = static_cast<Outcome>(outcome);
  tr.meta.episode_seed = r.u64();
  tr.meta.operator_seed = r.u64();
  tr.meta.horizon = static_cast<int>(r.u32());
  tr.meta.dt = r.f64();
  tr.meta.episode_limit = r.f64();
  const auto cause = r.u8();
  if (cause > 2) throw CorruptFileError("trajectory: bad failure cause code");
  tr.meta.failure_cause = static_cast<sim::FailureCause>(cause);
  const auto kind_len = r.u32();
  tr.meta.operator_kind = std::string(r.raw(kind_len));
  // Size check before allocating so a corrupt length cannot balloon memory.
  const std::size_t expected = static_cast<std::size_t>(T + 1) * obs_dim * 8 +
                               static_cast<std::size_t>(T) * act_dim * 8 +
                               static_cast<std::size_t>(T) * 9;
  if (r.remaining() != expected) throw CorruptFileError("trajectory: payload size mismatch");
  tr.observations.assign(T + 1, Eigen::VectorXd(obs_dim));
  for (auto& o : tr.observations) r.f64s({o.data(), static_cast<std::size_t>(obs_dim)});
  tr.commands.assign(T, Eigen::VectorXd(act_dim));
  for (auto& a : tr.commands) r.f64s({a.data(), static_cast<std::size_t>(act_dim)});
  tr.rewards.resize(T);
  r.f64s(tr.rewards);
  tr.fail_labels.resize(T);
  for (auto& y : tr.fail_labels) y = r.u8();
  validate_trajectory(tr);
  return tr;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, int obs_dim, int act_dim)
    : out_(path, std::ios::binary | std::ios::trunc), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (!out_) throw std::runtime_error("cannot open dataset for writing: " + path.string());
  out_ << kMagic << ' ' << kDatasetVersion << " obs_dim=" << obs_dim << " act_dim=" << act_dim
       << '\n';
}

DatasetWriter::~DatasetWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void DatasetWriter::append(const Trajectory& tr) {
  if (closed_) throw std::logic_error("append on closed dataset writer");
  if (tr.observations.empty() || tr.observations.front().size() != obs_dim_ ||
      tr.commands.empty() || tr.commands.front().size() != act_dim_) {
    throw ValidationError("trajectory dimensions do not match the dataset header");
  }
  const std::string payload = encode_trajectory(tr);
  out_ << "traj " << checksum(payload) << ' ' << hex_encode(payload) << '\n';
  out_.flush();
  ++count_;
}

void DatasetWriter::close() {
  if (closed_) return;
  out_ << "end " << count_ << '\n';
  out_.close();
  closed_ = true;
  if (!out_) throw std::runtime_error("error writing dataset");
}

std::size_t Dataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

std::size_t Dataset::count(Outcome outcome) const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.outcome == outcome;
  return n;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  DatasetWriter writer(path, dataset.obs_dim, dataset.act_dim);
  for (const auto& t : dataset.trajectories) writer.append(t);
  writer.close();
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CorruptFileError("dataset: missing header");
  std::istringstream header(line);
  std::string magic, dims_obs, dims_act;
  int version = 0;
  header >> magic >> version >> dims_obs >> dims_act;
  if (magic != kMagic) throw CorruptFileError("dataset: bad magic (not a dataset file)");
  if (version != kDatasetVersion) {
    throw CorruptFileError("dataset: unsupported version " + std::to_string(version));
  }
  Dataset ds;
  if (std::sscanf(dims_obs.c_str(), "obs_dim=%d", &ds.obs_dim) != 1 ||
      std::sscanf(dims_act.c_str(), "act_dim=%d", &ds.act_dim) != 1 || ds.obs_dim <= 0 ||
      ds.act_dim <= 0) {
    throw CorruptFileError("dataset: malformed header dimensions");
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (ended) throw CorruptFileError("dataset: data after end marker");
    if (line.rfind("traj ", 0) == 0) {
      const auto sp = line.find(' ', 5);
      if (sp == std::string::npos) throw CorruptFileError("dataset: malformed trajectory line");
      const std::string sum = line.substr(5, sp - 5);
      const std::string payload = hex_decode(std::string_view(line).substr(sp + 1));
      if (checksum(payload) != sum) throw CorruptFileError("dataset: checksum mismatch");
      ds.trajectories.push_back(decode_trajectory(payload, ds.obs_dim, ds.act_dim));
    } else if (line.rfind("end ", 0) == 0) {
      std::size_t count = 0;
      if (std::sscanf(line.c_str(), "end %zu", &count) != 1 || count != ds.trajectories.size()) {
        throw CorruptFileError("dataset: trajectory count does not match end marker");
      }
      ended = true;
    } else {
      throw CorruptFileError("dataset: unrecognized line");
    }
  }
  if (!ended) throw CorruptFileError("dataset: truncated (missing end marker)");
  return ds;
}

}  // namespace teleguard::data
