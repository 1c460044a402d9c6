#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "vaecf/error.hpp"
#include "vaecf/io.hpp"
#include "vaecf/synthetic.hpp"
#include "vaecf/trainer.hpp"

using namespace vaecf;

namespace {

struct Fixture {
    UserSplit split;
    EvalSplit val;
    ModelSpec spec;
};

Fixture small_problem(ModelKind kind = ModelKind::kVae) {
    SyntheticConfig sc;
    sc.n_users = 300;
    sc.n_items = 40;
    sc.latent_dim = 3;
    sc.min_clicks = 5;
    sc.max_clicks = 15;
    sc.weight_scale = 2.0;
    Fixture f;
    f.split = split_users(generate_synthetic(sc).clicks, 50, 50, 3);
    f.val = make_fold_in(f.split.validation, 0.8, 4);
    f.spec.kind = kind;
    f.spec.n_items = f.split.train.n_items();
    f.spec.latent_dim = 4;
    f.spec.hidden_dims = {16};
    return f;
}

TrainConfig quick_config() {
    TrainConfig c;
    c.batch_size = 50;
    c.epochs = 4;
    c.seed = 5;
    c.adam.lr = 1e-2;
    c.anneal.total_anneal_steps = 10;
    return c;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("vaecf_trainer_" + name);
}

// Two-sided p-value of Student's t with 3 degrees of freedom from its closed-form CDF.
double p_value_df3(double t) {
    const double x = t / std::sqrt(3.0);
    const double cdf = 0.5 + (x / (1.0 + x * x) + std::atan(x)) / std::numbers::pi;
    return 2.0 * (1.0 - cdf);
}

}  // namespace

TEST_CASE("training follows the schedule and records history") {
    const auto f = small_problem();
    auto cfg = quick_config();
    std::vector<StepInfo> steps;
    cfg.on_step = [&](const StepInfo& s) { steps.push_back(s); };
    const auto path = temp_path("history.ckpt");
    cfg.checkpoint_path = path;
    const auto res = train(f.split.train, f.split.validation, f.val, f.spec, cfg);

    const std::size_t per_epoch = (f.split.train.n_users() + 49) / 50;
    REQUIRE(steps.size() == per_epoch * cfg.epochs);
    for (std::size_t t = 0; t < steps.size(); ++t) {
        CHECK(steps[t].step == t);
        CHECK(steps[t].beta == beta_at(cfg.anneal, t));
        CHECK(std::isfinite(steps[t].loss));
    }
    REQUIRE(res.report.history.size() == cfg.epochs);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        CHECK(res.report.history[e].step == per_epoch * (e + 1));
        CHECK(res.report.history[e].beta == beta_at(cfg.anneal, per_epoch * (e + 1)));
    }
    double best = -1.0;
    for (const auto& h : res.report.history) best = std::max(best, h.metric);
    CHECK(res.report.best_metric == best);
    CHECK(load_checkpoint(path).params == res.best_model.params);
    CHECK(res.best_model.item_ids == f.split.train.item_ids());
    std::filesystem::remove(path);
}

TEST_CASE("training loss falls") {
    const auto f = small_problem();
    auto cfg = quick_config();
    cfg.epochs = 10;
    cfg.anneal.total_anneal_steps = 0;
    cfg.anneal.beta_cap = 0.2;
    const auto res = train(f.split.train, f.split.validation, f.val, f.spec, cfg);
    CHECK(res.report.history.back().train_loss < res.report.history.front().train_loss);
}

TEST_CASE("validation cadence") {
    const auto f = small_problem();
    auto cfg = quick_config();
    cfg.epochs = 2;
    cfg.eval_every = 3;
    const auto res = train(f.split.train, f.split.validation, f.val, f.spec, cfg);
    // 4 updates per epoch, 8 in all: validated at 3 and 6, then at the end.
    std::vector<std::uint64_t> at;
    for (const auto& h : res.report.history) at.push_back(h.step);
    CHECK(at == std::vector<std::uint64_t>{3, 6, 8});
}

TEST_CASE("training is reproducible") {
    const auto f = small_problem(ModelKind::kDae);
    auto cfg = quick_config();
    cfg.weight_decay = 0.01;
    const auto a = train(f.split.train, f.split.validation, f.val, f.spec, cfg);
    cfg.eval_threads = 4;
    cfg.eval_batch_size = 7;
    const auto b = train(f.split.train, f.split.validation, f.val, f.spec, cfg);
    CHECK(encode_checkpoint(a.best_model) == encode_checkpoint(b.best_model));
    CHECK(format_history(a.report) == format_history(b.report));
    cfg.seed = 6;
    const auto c = train(f.split.train, f.split.validation, f.val, f.spec, cfg);
    CHECK_FALSE(c.best_model.params == a.best_model.params);
}

TEST_CASE("divergence aborts with a loadable checkpoint") {
    const auto f = small_problem();
    auto cfg = quick_config();
    cfg.adam.lr = 1e300;
    const auto path = temp_path("abort.ckpt");
    std::filesystem::remove(path);
    cfg.checkpoint_path = path;
    try {
        train(f.split.train, f.split.validation, f.val, f.spec, cfg);
        FAIL("expected divergence");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("training aborted at step") != std::string::npos);
    }
    CHECK_NOTHROW(load_checkpoint(path));
    std::filesystem::remove(path);
}

TEST_CASE("mismatched corpora are rejected") {
    auto f = small_problem();
    auto cfg = quick_config();
    auto spec = f.spec;
    spec.n_items += 1;
    CHECK_THROWS_AS(train(f.split.train, f.split.validation, f.val, spec, cfg), ConfigError);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(f.split.train, f.split.validation, f.val, f.spec, cfg), ConfigError);
}

TEST_CASE("budget mode freezes beta at the best value") {
    const auto f = small_problem();
    auto cfg = quick_config();
    cfg.epochs = 12;
    cfg.eval_every = 1;
    cfg.anneal.total_anneal_steps = 40;
    cfg.anneal_patience = 2;
    std::vector<double> betas;
    cfg.on_step = [&](const StepInfo& s) { betas.push_back(s.beta); };
    const auto res = train(f.split.train, f.split.validation, f.val, f.spec, cfg);

    // Replay the rule over the recorded history.
    double best = -1.0, best_beta = 0.0;
    std::size_t misses = 0;
    std::optional<double> frozen;
    for (const auto& h : res.report.history) {
        if (frozen) {
            CHECK(h.beta == *frozen);
            if (h.step < betas.size()) CHECK(betas[h.step] == *frozen);
        } else {
            CHECK(h.beta == beta_at(cfg.anneal, h.step));
        }
        if (h.metric > best) {
            best = h.metric;
            best_beta = h.beta;
            misses = 0;
        } else if (!frozen && ++misses >= cfg.anneal_patience) {
            frozen = best_beta;
        }
    }
    for (double b : betas) CHECK(b <= 1.0);
}

TEST_CASE("two-phase training retrains capped at the best beta") {
    const auto f = small_problem();
    auto cfg = quick_config();
    cfg.epochs = 6;
    cfg.eval_every = 2;
    cfg.anneal.total_anneal_steps = 20;
    cfg.anneal.beta_cap = 0.7;
    const auto res = train_two_phase(f.split.train, f.split.validation, f.val, f.spec, cfg);

    std::vector<ValidationPoint> points;
    for (const auto& h : res.search.history) points.push_back({h.step, h.metric});
    const AnnealSchedule full{20, 1.0};
    const double cap = capture_best_beta(full, points);
    CHECK(res.search.beta_best == cap);
    for (const auto& h : res.search.history) CHECK(h.beta == beta_at(full, h.step));

    const AnnealSchedule capped{static_cast<std::uint64_t>(std::llround(20.0 * cap)), cap};
    for (const auto& h : res.final.report.history) {
        CHECK(h.beta == beta_at(capped, h.step));
        CHECK(h.beta <= cap);
        // Same slope as the search phase until the cap is reached.
        if (h.beta < cap) CHECK(h.beta == doctest::Approx(beta_at(full, h.step)).epsilon(1e-12));
    }
}

TEST_CASE("popularity baseline") {
    const auto clicks = SparseClicks::from_rows(3, {{0, 1}, {1}, {1, 2}}, {"a", "b", "c"}, {"x", "y", "z"});
    CHECK(popularity_baseline(clicks) == std::vector<double>{1, 3, 1});
    const auto scorer = popularity_scorer({1, 3, 1});
    const auto out = scorer(Matrix(2, 3));
    CHECK(out(1, 1) == 3.0);
    CHECK(out(0, 2) == 1.0);
}

TEST_CASE("activity breakdown") {
    const std::vector<double> values{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    const std::vector<std::size_t> sizes{5, 1, 9, 3, 3, 7, 2};
    const auto bins = activity_breakdown(values, sizes, 3);
    REQUIRE(bins.size() == 3);
    // Sorted by size with stable ties: users 1(1) 6(2) 3(3) | 4(3) 0(5) | 5(7) 2(9).
    CHECK(bins[0].summary.n == 3);
    CHECK(bins[1].summary.n == 2);
    CHECK(bins[2].summary.n == 2);
    CHECK(bins[0].min_activity == 1);
    CHECK(bins[0].max_activity == 3);
    CHECK(bins[0].summary.mean == doctest::Approx((0.2 + 0.7 + 0.4) / 3.0));
    CHECK(bins[1].summary.mean == doctest::Approx((0.5 + 0.1) / 2.0));
    CHECK(bins[2].min_activity == 7);
    CHECK(bins[2].max_activity == 9);
    CHECK_THROWS_AS(activity_breakdown(values, sizes, 0), ConfigError);
}

TEST_CASE("paired t-test") {
    const std::vector<double> a{1, 2, 3, 4};
    const std::vector<double> b{0, 0, 1, 1};
    const std::vector<std::size_t> sizes{1, 2, 3, 4};
    const auto bins = paired_activity_breakdown(a, b, sizes, 1);
    REQUIRE(bins.size() == 1);
    // Differences 1, 2, 2, 3: mean 2, sd sqrt(2/3), t = 2 / (sd / 2).
    const double t = 2.0 / (std::sqrt(2.0 / 3.0) / 2.0);
    CHECK(bins[0].mean_difference == 2.0);
    CHECK(bins[0].t_statistic == doctest::Approx(t).epsilon(1e-12));
    CHECK(bins[0].p_value == doctest::Approx(p_value_df3(t)).epsilon(1e-9));
    CHECK(bins[0].stars == "*");

    const auto same = paired_activity_breakdown(a, a, sizes, 2);
    for (const auto& bin : same) {
        CHECK(bin.p_value == 1.0);
        CHECK(bin.stars.empty());
    }
    const std::vector<double> shifted{2, 3, 4, 5};
    CHECK(paired_activity_breakdown(shifted, a, sizes, 1)[0].stars == "***");
}
