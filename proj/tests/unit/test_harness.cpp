#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "drrl/harness.hpp"
#include "test_util.hpp"

using namespace drrl;

namespace {

HddConfig small_hdd(std::size_t n = 300) {
  HddConfig cfg;
  cfg.p = 20;
  cfg.p_star = 4;
  cfg.n = n;
  cfg.scenario = HddScenario::kC;
  return cfg;
}

TrainSettings quick_settings() {
  TrainSettings s;
  s.arch.layers = 2;
  s.arch.layer_dim = 16;
  s.arch.rep_dim = 8;
  s.hyper.kappa = 0.1;
  s.hyper.batch_size = 50;
  s.hyper.iterations = 150;
  s.hyper.learning_rate = 1e-3;
  s.hyper.optimizer = Optimizer::kAdam;
  return s;
}

// Linear outcomes with a large constant effect; an untrained network
// predicts no effect at all.
Dataset shifted_effect(std::size_t n, RngStream& rng) {
  Dataset d;
  d.x = drrl::testing::random_normal(static_cast<Eigen::Index>(n), 3, rng);
  d.t.resize(n);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.t[i] = rng.bernoulli(0.5) ? 1 : 0;
    d.y(r) = d.x(r, 0) + 5.0 * d.t[i] + 0.1 * rng.normal();
  }
  return d;
}

}  // namespace

TEST(Architecture, BuildsLayerWidths) {
  ArchitectureSpec a;
  a.layers = 3;
  a.layer_dim = 20;
  a.rep_dim = 5;
  const NetworkConfig c = a.build(7);
  EXPECT_EQ(c.input_dim, 7);
  EXPECT_EQ(c.layer_sizes, (std::vector<Eigen::Index>{20, 20, 5}));
  a.rep_dim = 0;
  a.layers = 1;
  EXPECT_EQ(a.build(7).layer_sizes, (std::vector<Eigen::Index>{20}));
  a.layers = 0;
  EXPECT_THROW(a.build(7), Error);
}

TEST(SearchGridTest, DefaultGrid) {
  const SearchGrid g = default_search_grid();
  ASSERT_EQ(g.kappa.size(), 17u);
  EXPECT_NEAR(g.kappa.front(), 1e-5, 1e-20);
  EXPECT_NEAR(g.kappa.back(), 1e3, 1e-9);
  EXPECT_NEAR(g.kappa[11], std::sqrt(10.0), 1e-12);
  EXPECT_EQ(g.combinations(), 17u * 5u * 4u * 3u);
  EXPECT_EQ(SearchGrid{}.combinations(), 1u);
}

TEST(Evaluate, AteReportsDoublyRobustEstimate) {
  RngStream rng(1);
  const Dataset d = generate_hdd(small_hdd(), rng);
  RngStream train_rng(2);
  const TrainSettings s = quick_settings();
  const TrainedModel m = train(d, s.arch.build(d.dim()), s.hyper, train_rng);
  EvaluationOptions opts;
  opts.deltas = {-0.5, 0.0, 0.5};
  opts.sigma_e = 1.0;
  const EvaluationResult r = evaluate_model(m, d, opts);
  ASSERT_FALSE(r.balance_fallback) << r.balance_failure;
  ASSERT_TRUE(r.dr.has_value());
  EXPECT_EQ(r.tau_hat, r.dr->point);
  EXPECT_NEAR(r.vanilla, r.ite.mean(), 1e-12);
  EXPECT_TRUE(r.has_metrics);
  EXPECT_NEAR(*r.metrics.eps_ate, std::abs(r.tau_hat - d.true_ite().mean()), 1e-12);
  EXPECT_EQ(r.policy_curve.size(), 3u);
  ASSERT_TRUE(r.bounds.has_value());
  EXPECT_LE(r.bounds->pehe, r.bounds->bound_value + 0.1);
  EXPECT_TRUE(r.entropy_stat.has_value());
}

TEST(Evaluate, AttUsesWeightedControls) {
  RngStream rng(3);
  const Dataset d = generate_hdd(small_hdd(), rng);
  TrainSettings s = quick_settings();
  s.hyper.estimand = Estimand::kAtt;
  RngStream train_rng(4);
  const TrainedModel m = train(d, s.arch.build(d.dim()), s.hyper, train_rng);
  const EvaluationResult r = evaluate_model(m, d);
  ASSERT_TRUE(r.att_weighted.has_value());
  EXPECT_FALSE(r.dr.has_value());
  EXPECT_EQ(r.tau_hat, *r.att_weighted);
  EXPECT_TRUE(r.metrics.eps_att.has_value());
}

TEST(Evaluate, WithoutTruthHasNoMetrics) {
  RngStream rng(5);
  Dataset d = generate_hdd(small_hdd(), rng);
  const TrainSettings s = quick_settings();
  RngStream train_rng(6);
  const TrainedModel m = train(d, s.arch.build(d.dim()), s.hyper, train_rng);
  d.mu0.reset();
  d.mu1.reset();
  const EvaluationResult r = evaluate_model(m, d);
  EXPECT_FALSE(r.has_metrics);
  EXPECT_FALSE(r.metrics.eps_ate.has_value());
  EXPECT_TRUE(r.policy_curve.empty());
}

TEST(Evaluate, SingleGroupFallsBackToVanilla) {
  RngStream rng(7);
  const Dataset d = generate_hdd(small_hdd(), rng);
  const TrainSettings s = quick_settings();
  RngStream train_rng(8);
  const TrainedModel m = train(d, s.arch.build(d.dim()), s.hyper, train_rng);
  std::vector<std::size_t> controls;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.t[i] == 0) controls.push_back(i);
  }
  const EvaluationResult r = evaluate_model(m, d.subset(controls));
  EXPECT_TRUE(r.balance_fallback);
  EXPECT_EQ(r.tau_hat, r.vanilla);
}

TEST(Search, SingleCellGridIsDeterministic) {
  RngStream rng(9);
  const Dataset d = generate_hdd(small_hdd(400), rng);
  RngStream split_rng(10);
  const SplitResult parts = split(d, {0.6, 0.4, 0.0}, split_rng);
  SearchGrid grid;
  grid.kappa = {0.3};
  const SearchResult a = run_search(parts.train, parts.validation, quick_settings(), grid, 3, RngStream(11), 3);
  const SearchResult b = run_search(parts.train, parts.validation, quick_settings(), grid, 3, RngStream(11), 1);
  EXPECT_EQ(a.criterion, "surrogate-pehe");
  ASSERT_EQ(a.draws.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.draws[k].settings.hyper.kappa, 0.3);
    ASSERT_TRUE(a.draws[k].score.has_value()) << a.draws[k].error;
    EXPECT_EQ(*a.draws[k].score, *b.draws[k].score);
    EXPECT_LE(*a.draws[a.best].score, *a.draws[k].score);
  }
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.model.params.flatten(), b.model.params.flatten());
  // The reported score is reproducible from the returned model.
  EXPECT_NEAR(validation_score(a.model, parts.validation), *a.draws[a.best].score, 1e-12);
}

TEST(Search, PrefersTrainedArm) {
  RngStream rng(12);
  const Dataset train_data = shifted_effect(400, rng);
  const Dataset validation = shifted_effect(200, rng);
  SearchGrid grid;
  grid.iters = {0, 400};
  TrainSettings base = quick_settings();
  base.hyper.learning_rate = 1e-2;
  const SearchResult r = run_search(train_data, validation, base, grid, 6, RngStream(13), 2);
  bool saw_untrained = false;
  for (const auto& draw : r.draws) saw_untrained |= draw.settings.hyper.iterations == 0;
  ASSERT_TRUE(saw_untrained);
  EXPECT_EQ(r.draws[r.best].settings.hyper.iterations, 400u);
}

TEST(Search, PolicyRiskCriterionForBinaryOutcomes) {
  RngStream rng(14);
  Dataset d = shifted_effect(300, rng);
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) = d.y(i) > 2.5 ? 1.0 : 0.0;
  d.randomized = std::vector<int>(d.size(), 1);
  TrainSettings s = quick_settings();
  s.arch.outcome_type = OutcomeType::kBinary;
  const SearchResult r = run_search(d, d, s, SearchGrid{}, 2, RngStream(15), 1);
  EXPECT_EQ(r.criterion, "policy-risk");
}

TEST(Search, AllDrawsFailing) {
  RngStream rng(16);
  const Dataset d = shifted_effect(100, rng);
  SearchGrid grid;
  grid.kappa = {-1.0};
  try {
    run_search(d, d, quick_settings(), grid, 2, RngStream(17), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSearchFailed);
  }
}

TEST(Replicate, SingleReplicationHasZeroSd) {
  ReplicateConfig cfg;
  cfg.hdd = small_hdd();
  cfg.reps = 1;
  cfg.seed = 3;
  cfg.settings = quick_settings();
  const ReplicateResult r = run_replicate(cfg);
  ASSERT_EQ(r.n_ok, 1u) << r.rows[0].error;
  EXPECT_EQ(r.aggregate.at("eps_ate").sd, 0.0);
  EXPECT_EQ(r.aggregate.at("eps_ate").mean, *r.rows[0].result.metrics.eps_ate);
  EXPECT_EQ(r.rows[0].source, "hdd-C#0");
}

TEST(Replicate, IndependentOfWorkerCount) {
  ReplicateConfig cfg;
  cfg.hdd = small_hdd();
  cfg.reps = 3;
  cfg.seed = 4;
  cfg.settings = quick_settings();
  cfg.workers = 1;
  const ReplicateResult a = run_replicate(cfg);
  cfg.workers = 3;
  const ReplicateResult b = run_replicate(cfg);
  ASSERT_EQ(a.n_ok, 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.rows[k].result.tau_hat, b.rows[k].result.tau_hat);
  EXPECT_EQ(a.aggregate.at("sqrt_pehe").mean, b.aggregate.at("sqrt_pehe").mean);
  EXPECT_GT(a.aggregate.at("sqrt_pehe").sd, 0.0);
}

TEST(Replicate, FailedReplicationIsRecorded) {
  ReplicateConfig cfg;
  cfg.data_files = {"/nonexistent/drrl_missing.csv"};
  cfg.settings = quick_settings();
  const ReplicateResult r = run_replicate(cfg);
  EXPECT_EQ(r.n_failed, 1u);
  EXPECT_EQ(r.n_ok, 0u);
  EXPECT_FALSE(r.rows[0].ok);
  EXPECT_FALSE(r.rows[0].error.empty());
}

TEST(ParallelFor, VisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  std::atomic<int> done{0};
  EXPECT_THROW(parallel_for(20, 4,
                            [&](std::size_t i) {
                              ++done;
                              if (i == 7) throw Error(ErrorCode::kInternal, "boom");
                            }),
               Error);
  EXPECT_EQ(done.load(), 20);
}
