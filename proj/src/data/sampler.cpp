#include "teleguard/data/sampler.hpp"

#include "teleguard/common/errors.hpp"

namespace teleguard::data {

TransitionTable TransitionTable::from_trajectories(std::span<const Trajectory> trajectories,
                                                   int horizon) {
  TransitionTable table;
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  if (trajectories.empty()) return table;
  table.obs_dim = static_cast<int>(trajectories.front().observations.front().size());
  table.act_dim = static_cast<int>(trajectories.front().commands.front().size());
  const auto cols = static_cast<Eigen::Index>(n);
  table.obs.resize(table.obs_dim, cols);
  table.next_obs.resize(table.obs_dim, cols);
  table.actions.resize(table.act_dim, cols);
  table.next_actions.setZero(table.act_dim, cols);
  table.rewards.resize(cols);
  table.fail_labels.resize(cols);
  table.terminal.setZero(cols);
  table.trajectory_index.reserve(n);
  table.step_index.reserve(n);
  table.from_success.reserve(n);

  Eigen::Index col = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const auto& tr = trajectories[k];
    if (tr.observations.front().size() != table.obs_dim ||
        tr.commands.front().size() != table.act_dim) {
      throw ValidationError("trajectories with mixed dimensions");
    }
    const auto labels = short_horizon_labels(tr.outcome, tr.length(), horizon);
    for (int t = 0; t < tr.length(); ++t, ++col) {
      table.obs.col(col) = tr.observations[t];
      table.next_obs.col(col) = tr.observations[t + 1];
      table.actions.col(col) = tr.commands[t];
      if (t + 1 < tr.length()) {
        table.next_actions.col(col) = tr.commands[t + 1];
      } else {
        table.terminal[col] = 1.0;
      }
      table.rewards[col] = tr.rewards[t];
      table.fail_labels[col] = labels[t];
      table.trajectory_index.push_back(static_cast<int>(k));
      table.step_index.push_back(t);
      table.from_success.push_back(tr.outcome == Outcome::kSuccess ? 1 : 0);
    }
  }
  return table;
}

std::vector<std::size_t> sample_rows(const TransitionTable& table, int batch_size, Rng& rng,
                                     const SamplerOptions& options) {
  const std::size_t n = table.size();
  if (n == 0) throw ValidationError("cannot sample from an empty dataset");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  const auto B = static_cast<std::size_t>(batch_size);
  std::vector<std::size_t> rows;
  rows.reserve(B);

  if (options.mode == SamplingMode::kClassBalanced) {
    std::vector<std::size_t> success, failure;
    for (std::size_t i = 0; i < n; ++i) (table.from_success[i] ? success : failure).push_back(i);
    if (success.empty() || failure.empty()) {
      throw ValidationError("class-balanced sampling needs both outcome classes");
    }
    const std::size_t n_fail = (B + 1) / 2;
    std::uniform_int_distribution<std::size_t> pick_f(0, failure.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_s(0, success.size() - 1);
    for (std::size_t i = 0; i < n_fail; ++i) rows.push_back(failure[pick_f(rng)]);
    for (std::size_t i = n_fail; i < B; ++i) rows.push_back(success[pick_s(rng)]);
    return rows;
  }

  if (options.with_replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < B; ++i) rows.push_back(pick(rng));
    return rows;
  }

  if (B > n) {
    throw ValidationError("batch size " + std::to_string(B) + " exceeds " + std::to_string(n) +
                          " transitions (sampling without replacement)");
  }
  // partial Fisher-Yates
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = 0; i < B; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(B));
  return rows;
}

TransitionBatch gather(const TransitionTable& table, std::span<const std::size_t> rows) {
  TransitionBatch b;
  const auto B = static_cast<Eigen::Index>(rows.size());
  b.obs.resize(table.obs_dim, B);
  b.next_obs.resize(table.obs_dim, B);
  b.actions.resize(table.act_dim, B);
  b.next_actions.resize(table.act_dim, B);
  b.rewards.resize(B);
  b.fail_labels.resize(B);
  b.terminal.resize(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    b.obs.col(i) = table.obs.col(r);
    b.next_obs.col(i) = table.next_obs.col(r);
    b.actions.col(i) = table.actions.col(r);
    b.next_actions.col(i) = table.next_actions.col(r);
    b.rewards[i] = table.rewards[r];
    b.fail_labels[i] = table.fail_labels[r];
    b.terminal[i] = table.terminal[r];
  }
  b.rows.assign(rows.begin(), rows.end());
  return b;
}

TransitionBatch sample_batch(const TransitionTable& table, int batch_size, Rng& rng,
                             const SamplerOptions& options) {
  const auto rows = sample_rows(table, batch_size, rng, options);
  return gather(table, rows);
}

}  // namespace teleguard::data
