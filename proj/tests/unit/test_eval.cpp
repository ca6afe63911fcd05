#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "teleguard/common/errors.hpp"
#include "teleguard/common/hash.hpp"
#include "teleguard/eval/bundle.hpp"
#include "teleguard/eval/closed_loop.hpp"
#include "teleguard/eval/experiment.hpp"
#include "teleguard/eval/plot.hpp"
#include "teleguard/eval/report.hpp"
#include "teleguard/eval/separation.hpp"
#include "test_helpers.hpp"

namespace teleguard::eval {
namespace {

using assist::AssistMode;

// Calibrated critic whose Q is the constant `q` mapped through [0, 1].
learn::CriticModel constant_critic(int num_arms, double q_normalized, std::uint64_t seed = 0) {
  const sim::WorldConfig w = [&] {
    sim::WorldConfig c;
    c.num_arms = num_arms;
    return c;
  }();
  Rng rng(seed);
  auto m = learn::CriticModel::create(w.obs_dim(), w.act_dim(), w.command_max,
                                      learn::FeatureScaler::identity(w.obs_dim()), 8, rng);
  auto& head = m.mutable_q_head().mutable_layer(0);
  head.weight.setZero();
  head.bias[0] = q_normalized;
  m.set_calibration({true, 0.0, 1.0, 0.5});
  m.dt = w.dt;
  return m;
}

learn::ActorModel random_actor(int num_arms, std::uint64_t seed = 1) {
  sim::WorldConfig w;
  w.num_arms = num_arms;
  Rng rng(seed);
  auto a = learn::ActorModel::create(w.obs_dim(), w.act_dim(), w.command_max,
                                     learn::FeatureScaler::identity(w.obs_dim()), 16, rng);
  a.dt = w.dt;
  return a;
}

ExperimentSpec spec_for(AssistMode mode, sim::OperatorKind kind, int episodes) {
  ExperimentSpec s;
  s.mode = mode;
  s.op.kind = kind;
  s.episodes = episodes;
  s.seed = 100;
  s.workers = 2;
  s.bootstrap_resamples = 200;
  return s;
}

TEST(RocAuc, KnownValues) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
  const std::vector<double> perfect{0.0, 0.1, 0.9, 1.0};
  EXPECT_DOUBLE_EQ(roc_auc(perfect, y), 1.0);
  const std::vector<double> tied(4, 0.3);
  EXPECT_DOUBLE_EQ(roc_auc(tied, y), 0.5);
  const std::vector<std::uint8_t> one_class(4, 1);
  EXPECT_DOUBLE_EQ(roc_auc(s, one_class), 0.5);
}

// Brute-force pair count as the oracle.
TEST(RocAuc, MatchesPairCount) {
  Rng rng(3);
  std::uniform_int_distribution<int> d(0, 9), b(0, 1);
  std::vector<double> s(300);
  std::vector<std::uint8_t> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = d(rng);
    y[i] = static_cast<std::uint8_t>(b(rng));
  }
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  EXPECT_NEAR(roc_auc(s, y), wins / pairs, 1e-12);
}

TEST(Separation, UntrainedCriticIsAtChance) {
  const sim::World w(sim::WorldConfig{});
  std::vector<sim::OperatorConfig> ops(2);
  ops[1].kind = sim::OperatorKind::kBiased;
  const auto trajs = data::generate_trajectories(w, ops, 20, 9, 10);
  const auto table = data::TransitionTable::from_trajectories(trajs, 10);
  Rng rng(0);
  auto critic = learn::CriticModel::create(9, 2, 0.1, learn::FeatureScaler::fit(table.obs), 64, rng);
  critic.calibrate(table.obs, table.actions, table.from_success, 1, 99, 5);
  const auto rep = score_separation(trajs, critic, 10);
  EXPECT_NEAR(rep.auc, 0.5, 0.05);
  EXPECT_GT(rep.failure_tail_states, 0);
  EXPECT_GT(rep.success_states, 0);
}

TEST(Separation, AlignedSeriesCounts) {
  std::vector<data::Trajectory> trajs{
      testing::synthetic_trajectory(data::Outcome::kFailure, 7, 9, 2, 1),
      testing::synthetic_trajectory(data::Outcome::kFailure, 3, 9, 2, 2),
      testing::synthetic_trajectory(data::Outcome::kSuccess, 5, 9, 2, 3)};
  const auto critic = constant_critic(1, 0.25);
  const auto rep = score_separation(trajs, critic, 10, 5);
  EXPECT_EQ(rep.success_states, 5);
  EXPECT_EQ(rep.failure_tail_states, 10);
  ASSERT_EQ(rep.aligned_count.size(), 5u);
  EXPECT_EQ(rep.aligned_count[0], 2);
  EXPECT_EQ(rep.aligned_count[3], 1);
  EXPECT_NEAR(rep.aligned_q[0], 0.25, 1e-12);
  EXPECT_NEAR(rep.mean_q_success, 0.25, 1e-12);
}

TEST(Experiment, ExpertWithoutAssistanceAlwaysSucceeds) {
  const auto r = run_experiment(spec_for(AssistMode::kOff, sim::OperatorKind::kExpert, 50), {});
  EXPECT_EQ(r.aggregates.successes, 50);
  EXPECT_EQ(r.aggregates.success_rate.mean, 1.0);
  EXPECT_EQ(r.aggregates.mean_deviation.mean, 0.0);
}

TEST(Experiment, SaturatedHighCriticKeepsAssistanceTransparent) {
  const auto critic = constant_critic(1, 1.0);
  const auto actor = random_actor(1);
  const Models m{&critic, &actor};
  for (auto kind : {sim::OperatorKind::kExpert, sim::OperatorKind::kNoisy}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<TickRecord> ticks;
      sim::OperatorConfig op;
      op.kind = kind;
      const auto s = run_episode(sim::World(sim::WorldConfig{}), op, assist::AssistConfig{},
                                 AssistMode::kValue, m, seed, nullptr, &ticks);
      EXPECT_EQ(s.transparent_fraction, 1.0);
      for (const auto& t : ticks) {
        EXPECT_LE(t.frame.g, 0.05);
        EXPECT_LE((t.frame.executed[0] - t.frame.intent[0]).norm(), 0.05 * 0.1);
      }
    }
  }
}

// Every tick of learned-mode rollouts with random models: |tau| <= tau_max and
// g in [0, 1].
TEST(Experiment, SafetyEnvelopeOnRollouts) {
  for (int arms : {1, 2}) {
    sim::WorldConfig wc;
    wc.num_arms = arms;
    const sim::World world(wc);
    for (double qn : {0.0, 0.45, 0.6}) {
      const auto critic = constant_critic(arms, qn);
      const auto actor = random_actor(arms, 5);
      for (auto mode : {AssistMode::kStatic, AssistMode::kValue}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          sim::OperatorConfig op;
          op.kind = sim::OperatorKind::kBiased;
          std::vector<TickRecord> ticks;
          run_episode(world, op, assist::AssistConfig{}, mode, {&critic, &actor}, seed, nullptr,
                      &ticks);
          for (const auto& t : ticks) {
            for (const auto& tau : t.frame.torque) EXPECT_LE(tau.cwiseAbs().maxCoeff(), 1.0);
            EXPECT_GE(t.frame.g, 0.0);
            EXPECT_LE(t.frame.g, 1.0);
          }
        }
      }
    }
  }
}

TEST(Experiment, DeterministicAcrossWorkerCounts) {
  const auto critic = constant_critic(1, 0.3);
  const auto actor = random_actor(1);
  auto spec = spec_for(AssistMode::kValue, sim::OperatorKind::kBiased, 12);
  spec.workers = 1;
  const auto a = run_experiment(spec, {&critic, &actor});
  spec.workers = 4;
  const auto b = run_experiment(spec, {&critic, &actor});
  const std::vector<ExperimentReport> ra{a}, rb{b};
  EXPECT_EQ(report_jsonl(ra), report_jsonl(rb));
}

TEST(Experiment, AggregatesRecountFromEpisodeRows) {
  const auto actor = random_actor(1);
  std::vector<ExperimentReport> reports;
  reports.push_back(run_experiment(spec_for(AssistMode::kOff, sim::OperatorKind::kBiased, 30), {}));
  reports.push_back(
      run_experiment(spec_for(AssistMode::kStatic, sim::OperatorKind::kBiased, 30), {nullptr, &actor}));
  std::istringstream in(report_jsonl(reports));
  std::string line;
  std::map<std::string, nlohmann::json> agg;
  std::map<std::string, std::vector<nlohmann::json>> rows;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "aggregate") {
      agg[j["mode"]] = j;
    } else {
      rows[j["mode"]].push_back(j);
    }
  }
  ASSERT_EQ(agg.size(), 2u);
  for (const auto& [mode, a] : agg) {
    const auto& rs = rows[mode];
    int successes = 0;
    double deviation = 0;
    double time = 0;
    for (const auto& r : rs) {
      successes += r["outcome"] == "success";
      deviation += r["mean_deviation"].get<double>();
      if (r["outcome"] == "success") time += r["duration"].get<double>();
    }
    EXPECT_EQ(a["episodes"].get<int>(), static_cast<int>(rs.size()));
    EXPECT_EQ(a["successes"].get<int>(), successes);
    EXPECT_EQ(a["failures"].get<int>(), static_cast<int>(rs.size()) - successes);
    EXPECT_NEAR(a["success_rate"]["mean"].get<double>(), successes / double(rs.size()), 1e-12);
    EXPECT_NEAR(a["mean_deviation"]["mean"].get<double>(), deviation / rs.size(), 1e-12);
    if (successes > 0) {
      EXPECT_NEAR(a["completion_time"]["mean"].get<double>(), time / successes, 1e-9);
    }
  }
}

TEST(Experiment, MissingOrMismatchedModelsRejectedBeforeRunning) {
  auto spec = spec_for(AssistMode::kValue, sim::OperatorKind::kExpert, 3);
  const auto critic = constant_critic(1, 0.5);
  const auto actor = random_actor(1);
  EXPECT_THROW(run_experiment(spec, {&critic, nullptr}), ValidationError);
  EXPECT_THROW(run_experiment(spec, {nullptr, &actor}), ValidationError);
  spec.mode = AssistMode::kStatic;
  EXPECT_THROW(run_experiment(spec, {}), ValidationError);
  const auto two_arm = random_actor(2);
  EXPECT_THROW(run_experiment(spec, {nullptr, &two_arm}), ValidationError);
  auto slow = actor;
  slow.dt = 0.01;
  EXPECT_THROW(run_experiment(spec, {nullptr, &slow}), ValidationError);
  auto uncalibrated = critic;
  uncalibrated.set_calibration({});
  spec.mode = AssistMode::kValue;
  EXPECT_THROW(run_experiment(spec, {&uncalibrated, &actor}), ValidationError);
}

TEST(Bootstrap, IntervalOrderingAndDegenerateCases) {
  std::vector<double> v;
  for (int i = 0; i < 100; ++i) v.push_back(i % 3 == 0 ? 1.0 : 0.0);
  const Interval i = bootstrap_mean(v, 1000, 5);
  EXPECT_NEAR(i.mean, 34.0 / 100.0, 1e-12);
  EXPECT_LT(i.lo, i.mean);
  EXPECT_GT(i.hi, i.mean);
  EXPECT_EQ(bootstrap_mean(v, 1000, 5), i);
  const std::vector<double> constant(20, 0.7);
  const Interval c = bootstrap_mean(constant, 100, 1);
  EXPECT_DOUBLE_EQ(c.lo, 0.7);
  EXPECT_DOUBLE_EQ(c.hi, 0.7);
  EXPECT_EQ(bootstrap_mean({}, 100, 1), Interval{});
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

TEST(Report, RenderTwiceIsByteIdentical) {
  const auto critic = constant_critic(1, 0.3);
  const auto actor = random_actor(1);
  std::vector<ExperimentReport> reports;
  for (auto mode : {AssistMode::kOff, AssistMode::kStatic, AssistMode::kValue}) {
    reports.push_back(run_experiment(spec_for(mode, sim::OperatorKind::kBiased, 8), {&critic, &actor}));
  }
  testing::TempDir a("report"), b("report");
  const auto files_a = render_reports(reports, a.path());
  const auto files_b = render_reports(reports, b.path());
  ASSERT_EQ(files_a.size(), 5u);
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    EXPECT_EQ(files_a[i].filename(), files_b[i].filename());
    EXPECT_EQ(slurp(files_a[i]), slurp(files_b[i])) << files_a[i];
  }
  EXPECT_EQ(slurp(a / "success_rate.png").substr(1, 3), "PNG");
  const auto check = check_ordering(reports);
  EXPECT_TRUE(check.complete);
}

TEST(Report, EmptyReportIsValid) {
  testing::TempDir dir("report");
  const std::vector<ExperimentReport> none;
  render_reports(none, dir.path());
  EXPECT_EQ(slurp(dir / "report.jsonl"), "");
  EXPECT_FALSE(check_ordering(none).complete);
  ExperimentReport empty;
  empty.mode = "off";
  const std::vector<ExperimentReport> one{empty};
  EXPECT_NO_THROW(render_reports(one, dir.path()));
}

TEST(Report, UnwritableDirectoryFails) {
  const std::vector<ExperimentReport> none;
  EXPECT_ANY_THROW(render_reports(none, "/proc/definitely/not/writable"));
}

TEST(Ordering, DetectsEachCondition) {
  auto make = [](const char* mode, double mean, double lo, double hi) {
    ExperimentReport r;
    r.mode = mode;
    r.aggregates.success_rate = {mean, lo, hi};
    return r;
  };
  std::vector<ExperimentReport> rs{make("off", 0.4, 0.3, 0.5), make("static", 0.5, 0.4, 0.6),
                                   make("value", 0.7, 0.6, 0.8)};
  EXPECT_TRUE(check_ordering(rs).holds());
  rs[2].aggregates.success_rate.lo = 0.45;
  EXPECT_FALSE(check_ordering(rs).value_off_disjoint);
  rs[1].aggregates.success_rate.mean = 0.8;
  EXPECT_FALSE(check_ordering(rs).value_over_static);
}

TEST(Bundle, MissingPathIsValidationError) {
  EXPECT_THROW(load_bundle("/nonexistent/critic.ckpt", ""), ValidationError);
  const auto b = load_bundle("", "");
  EXPECT_FALSE(b.critic.has_value());
  EXPECT_FALSE(b.actor.has_value());
}

TEST(Plot, PngIsDeterministic) {
  Image img(40, 30);
  img.line(0, 0, 39, 29, {255, 0, 0});
  testing::TempDir dir("plot");
  write_png(img, dir / "a.png");
  write_png(img, dir / "b.png");
  EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
}

}  // namespace
}  // namespace teleguard::eval
