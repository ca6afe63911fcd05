#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "teleguard/common/errors.hpp"
#include "teleguard/common/hash.hpp"
#include "teleguard/data/dataset_io.hpp"
#include "teleguard/data/sampler.hpp"
#include "teleguard/data/trajectory.hpp"
#include "test_helpers.hpp"

namespace teleguard::data {
namespace {

using testing::synthetic_trajectory;
using testing::TempDir;

// Independent forward scan: y_t = 1 iff the latch (state index T) is within
// t+1 .. t+H.
std::vector<std::uint8_t> brute_force_labels(Outcome outcome, int T, int H) {
  std::vector<std::uint8_t> y(T, 0);
  if (outcome != Outcome::kFailure) return y;
  for (int t = 0; t < T; ++t) {
    for (int k = 1; k <= H; ++k) {
      if (t + k == T) y[t] = 1;
    }
  }
  return y;
}

TEST(Labels, SuccessOfLength40IsAllPlusOne) {
  const auto r = broadcast_rewards(Outcome::kSuccess, 40);
  ASSERT_EQ(r.size(), 40u);
  EXPECT_TRUE(std::all_of(r.begin(), r.end(), [](double v) { return v == 1.0; }));
}

TEST(Labels, FailureTailIsLabelled) {
  const auto r = broadcast_rewards(Outcome::kFailure, 25);
  EXPECT_TRUE(std::all_of(r.begin(), r.end(), [](double v) { return v == -1.0; }));
  const auto y = short_horizon_labels(Outcome::kFailure, 25, 10);
  for (int t = 0; t < 25; ++t) EXPECT_EQ(y[t], t >= 15 ? 1 : 0) << t;
  const auto y_short = short_horizon_labels(Outcome::kFailure, 4, 10);
  EXPECT_EQ(std::count(y_short.begin(), y_short.end(), 1), 4);
}

TEST(Labels, ZeroHorizonIsAllZero) {
  const auto y = short_horizon_labels(Outcome::kFailure, 12, 0);
  EXPECT_EQ(std::count(y.begin(), y.end(), 1), 0);
}

TEST(Labels, AgreeWithBruteForceScan) {
  for (auto outcome : {Outcome::kSuccess, Outcome::kFailure}) {
    for (int T = 1; T < 40; ++T) {
      for (int H = 0; H < 15; ++H) {
        EXPECT_EQ(short_horizon_labels(outcome, T, H), brute_force_labels(outcome, T, H));
      }
    }
  }
}

TEST(Recorder, RefusesUnterminatedEpisode) {
  const sim::World w(sim::WorldConfig{});
  const auto s = w.reset(0);
  TrajectoryRecorder rec(Eigen::VectorXd::Zero(9));
  rec.add(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(9));
  EXPECT_THROW(std::move(rec).finish(s, {}), std::logic_error);
}

TEST(Recorder, RecordedEpisodesSatisfyBroadcastInvariant) {
  const sim::World w(sim::WorldConfig{});
  std::vector<sim::OperatorConfig> ops(3);
  ops[1].kind = sim::OperatorKind::kNoisy;
  ops[2].kind = sim::OperatorKind::kBiased;
  const auto trajs = generate_trajectories(w, ops, 15, 4, 10);
  ASSERT_EQ(trajs.size(), 45u);
  int failures = 0;
  for (const auto& t : trajs) {
    validate_trajectory(t);
    const double expected = t.outcome == Outcome::kSuccess ? 1.0 : -1.0;
    for (double r : t.rewards) EXPECT_EQ(r, expected);
    EXPECT_EQ(t.fail_labels, brute_force_labels(t.outcome, t.length(), 10));
    EXPECT_LE(t.length() * t.meta.dt, t.meta.episode_limit + 1e-9);
    failures += t.outcome == Outcome::kFailure;
  }
  EXPECT_GT(failures, 0);
  EXPECT_EQ(generate_trajectories(w, ops, 15, 4, 10), trajs);
}

TEST(Recorder, ExpertOnlyGivesAllSuccesses) {
  const sim::World w(sim::WorldConfig{});
  const std::vector<sim::OperatorConfig> ops(1);
  const auto trajs = generate_trajectories(w, ops, 10, 0, 10);
  ASSERT_EQ(trajs.size(), 10u);
  for (const auto& t : trajs) EXPECT_EQ(t.outcome, Outcome::kSuccess);
}

Dataset mixed_dataset(int n) {
  Dataset ds;
  ds.obs_dim = 5;
  ds.act_dim = 2;
  for (int i = 0; i < n; ++i) {
    ds.trajectories.push_back(synthetic_trajectory(i % 3 == 0 ? Outcome::kFailure : Outcome::kSuccess,
                                                   3 + i % 17, 5, 2, i));
  }
  return ds;
}

TEST(DatasetIo, RoundTripIsIdentity) {
  TempDir dir("dataset");
  const Dataset ds = mixed_dataset(100);
  save_dataset(ds, dir / "a.tgds");
  const Dataset back = load_dataset(dir / "a.tgds");
  EXPECT_EQ(back.obs_dim, 5);
  EXPECT_EQ(back.act_dim, 2);
  ASSERT_EQ(back.trajectories.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(back.trajectories[i], ds.trajectories[i]);
  save_dataset(back, dir / "b.tgds");
  EXPECT_EQ(sha256_file(dir / "a.tgds"), sha256_file(dir / "b.tgds"));
}

TEST(DatasetIo, EmptyArchiveIsValid) {
  TempDir dir("dataset");
  Dataset ds;
  ds.obs_dim = 9;
  ds.act_dim = 2;
  save_dataset(ds, dir / "e.tgds");
  const Dataset back = load_dataset(dir / "e.tgds");
  EXPECT_TRUE(back.trajectories.empty());
  EXPECT_EQ(back.obs_dim, 9);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

TEST(DatasetIo, TruncatedFileIsCorrupt) {
  TempDir dir("dataset");
  save_dataset(mixed_dataset(5), dir / "a.tgds");
  const std::string bytes = read_file(dir / "a.tgds");
  for (std::size_t cut : {bytes.size() / 2, bytes.size() - 3, std::size_t{10}}) {
    write_file(dir / "t.tgds", bytes.substr(0, cut));
    EXPECT_THROW(load_dataset(dir / "t.tgds"), CorruptFileError) << cut;
  }
}

TEST(DatasetIo, ChecksumAndVersionAreChecked) {
  TempDir dir("dataset");
  save_dataset(mixed_dataset(3), dir / "a.tgds");
  std::string bytes = read_file(dir / "a.tgds");
  std::string flipped = bytes;
  const auto pos = flipped.find("traj ") + 40;
  flipped[pos] = flipped[pos] == '0' ? '1' : '0';
  write_file(dir / "c.tgds", flipped);
  EXPECT_THROW(load_dataset(dir / "c.tgds"), CorruptFileError);
  std::string versioned = bytes;
  versioned.replace(0, 6, "TGDS 9");
  write_file(dir / "v.tgds", versioned);
  EXPECT_THROW(load_dataset(dir / "v.tgds"), CorruptFileError);
  EXPECT_THROW(load_dataset(dir / "missing.tgds"), ValidationError);
}

TEST(Sampler, TableShapesAndNextActions) {
  const Dataset ds = mixed_dataset(6);
  const auto table = TransitionTable::from_trajectories(ds.trajectories, 10);
  EXPECT_EQ(table.size(), ds.num_transitions());
  EXPECT_EQ(table.obs.rows(), 5);
  EXPECT_EQ(table.actions.rows(), 2);
  for (std::size_t c = 0; c < table.size(); ++c) {
    const auto& tr = ds.trajectories[table.trajectory_index[c]];
    const int t = table.step_index[c];
    EXPECT_EQ(Eigen::VectorXd(table.obs.col(c)), tr.observations[t]);
    EXPECT_EQ(Eigen::VectorXd(table.next_obs.col(c)), tr.observations[t + 1]);
    EXPECT_EQ(table.terminal[c], t + 1 == tr.length() ? 1.0 : 0.0);
    if (t + 1 < tr.length()) {
      EXPECT_EQ(Eigen::VectorXd(table.next_actions.col(c)), tr.commands[t + 1]);
    }
  }
}

TEST(Sampler, ExhaustiveWithoutReplacementIsPermutation) {
  const auto table = TransitionTable::from_trajectories(mixed_dataset(8).trajectories, 10);
  Rng rng(3);
  SamplerOptions opt;
  opt.with_replacement = false;
  auto rows = sample_rows(table, static_cast<int>(table.size()), rng, opt);
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i], i);
  EXPECT_THROW(sample_rows(table, static_cast<int>(table.size()) + 1, rng, opt), ValidationError);
}

TEST(Sampler, SameSeedSameBatch) {
  const auto table = TransitionTable::from_trajectories(mixed_dataset(8).trajectories, 10);
  Rng a(11), b(11);
  const auto x = sample_batch(table, 32, a);
  const auto y = sample_batch(table, 32, b);
  EXPECT_EQ(x.rows, y.rows);
  EXPECT_EQ(x.obs, y.obs);
}

TEST(Sampler, ClassBalancedHalfFailures) {
  Dataset ds;
  for (int i = 0; i < 100; ++i) {
    ds.trajectories.push_back(synthetic_trajectory(i < 10 ? Outcome::kFailure : Outcome::kSuccess,
                                                   10, 3, 1, i));
  }
  const auto table = TransitionTable::from_trajectories(ds.trajectories, 10);
  Rng rng(0);
  SamplerOptions opt;
  opt.mode = SamplingMode::kClassBalanced;
  for (int B : {64, 65, 1}) {
    const auto rows = sample_rows(table, B, rng, opt);
    const auto failures = std::count_if(rows.begin(), rows.end(),
                                        [&](std::size_t r) { return !table.from_success[r]; });
    EXPECT_EQ(failures, (B + 1) / 2);
  }
}

TEST(Sampler, EmptyTableRejected) {
  const TransitionTable table;
  Rng rng(0);
  EXPECT_THROW(sample_rows(table, 1, rng), ValidationError);
}

}  // namespace
}  // namespace teleguard::data
