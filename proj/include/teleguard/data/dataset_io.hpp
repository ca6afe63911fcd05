#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include "teleguard/data/trajectory.hpp"

namespace teleguard::data {

inline constexpr int kDatasetVersion = 1;

// Line-delimited dataset archive:
//
//   TGDS <version> obs_dim=<n> act_dim=<m>
//   traj <checksum> <hex payload>        (one line per trajectory)
//   end <count>
//
// The payload is the trajectory in little-endian fixed-width encoding (see
// dataset_io.cpp); the checksum is the first 16 hex digits of its SHA-256.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, int obs_dim, int act_dim);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const Trajectory& trajectory);
  void close();

 private:
  std::ofstream out_;
  int obs_dim_;
  int act_dim_;
  std::size_t count_ = 0;
  bool closed_ = false;
};

struct Dataset {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<Trajectory> trajectories;

  std::size_t num_transitions() const;
  std::size_t count(Outcome outcome) const;
};

// Empty trajectory lists need explicit dims.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Throws CorruptFileError (truncation, checksum, bad version, broken invariant).
Dataset load_dataset(const std::filesystem::path& path);

std::string encode_trajectory(const Trajectory& trajectory);
Trajectory decode_trajectory(std::string_view payload, int obs_dim, int act_dim);

}  // namespace teleguard::data
