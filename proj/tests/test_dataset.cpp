#include "qmetasur/dataset.hpp"
#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace qmetasur;
using namespace qmetasur::dataset;

namespace {

auto toy_suite() -> tasks::MtmooSuite { return tasks::make_suite(tasks::Family::Sphere, 2, 3, 7); }

auto ranges_of(double lo0, double hi0, double lo1, double hi1) -> ObjectiveRanges {
    return {{lo0, lo1}, {hi0, hi1}};
}

} // namespace

TEST(Lhs, SinglePointInBounds) {
    const std::vector<double> lo{-1.0, 0.0};
    const std::vector<double> hi{1.0, 5.0};
    const auto pts = lhs_sample(lo, hi, 1, 3);
    ASSERT_EQ(pts.size(), 1U);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_GE(pts[0][j], lo[j]);
        EXPECT_LE(pts[0][j], hi[j]);
    }
}

TEST(Lhs, EveryStratumOnce) {
    const std::vector<double> lo(4, 0.0);
    const std::vector<double> hi(4, 2.0);
    const auto pts = lhs_sample(lo, hi, 10, 5);
    for (std::size_t j = 0; j < 4; ++j) {
        std::set<int> strata;
        for (const auto& p : pts) {
            strata.insert(static_cast<int>(std::floor(p[j] / 0.2)));
        }
        EXPECT_EQ(strata.size(), 10U);
    }
    EXPECT_EQ(pts, lhs_sample(lo, hi, 10, 5));
    EXPECT_NE(pts, lhs_sample(lo, hi, 10, 6));
}

TEST(Offline, SplitFiveToThree) {
    const auto suite = toy_suite();
    long calls = 0;
    auto eval = [&](const tasks::TaskSpec& t, std::span<const double> x) {
        ++calls;
        return tasks::evaluate(t, x);
    };
    const auto full = build_offline(suite, 200, {5, 3}, 11, eval);
    EXPECT_EQ(full.samples.size(), 640U);
    EXPECT_EQ(calls, 640);
    const auto [train, test] = split(full, {5, 3}, 11);
    for (int t : {1, 2}) {
        EXPECT_EQ(train.samples_of(t).size(), 200U);
        EXPECT_EQ(test.samples_of(t).size(), 120U);
    }
    for (const auto& s : full.samples) {
        EXPECT_EQ(s.y, tasks::evaluate(suite.task(s.task_id), s.x));
    }
    // Partition: union of splits equals the original multiset.
    std::multiset<std::vector<double>> a;
    std::multiset<std::vector<double>> b;
    for (const auto& s : full.samples) a.insert(s.x);
    for (const auto& s : train.samples) b.insert(s.x);
    for (const auto& s : test.samples) b.insert(s.x);
    EXPECT_EQ(a, b);
    // Ranges from train only.
    for (int t : {1, 2}) {
        double lo = INFINITY;
        double hi = -INFINITY;
        for (const auto* s : train.samples_of(t)) {
            lo = std::min(lo, s->y[1]);
            hi = std::max(hi, s->y[1]);
        }
        EXPECT_EQ(train.ranges.at(t).y_min[1], lo);
        EXPECT_EQ(train.ranges.at(t).y_max[1], hi);
        EXPECT_EQ(test.ranges.at(t).y_max[1], hi);
    }
}

TEST(Offline, AllTrainRatio) {
    const auto full = build_offline(toy_suite(), 30, {1, 0}, 2);
    const auto [train, test] = split(full, {1, 0}, 2);
    EXPECT_EQ(train.samples.size(), 60U);
    EXPECT_TRUE(test.samples.empty());
}

TEST(Nrmse, Examples) {
    const std::vector<double> y{1.0, 2.0};
    EXPECT_EQ(nrmse(y, y, std::vector<double>{1.0, 1.0}), 0.0);
    EXPECT_NEAR(nrmse(std::vector<double>{1.5, 2.0}, y, std::vector<double>{1.0, 1.0}), std::sqrt(0.125), 1e-15);
    EXPECT_NEAR(nrmse(std::vector<double>{3.0}, std::vector<double>{1.0}, std::vector<double>{2.0}), 1.0, 1e-15);
    EXPECT_NEAR(nrmse(std::vector<double>{3.0}, std::vector<double>{1.0}, std::vector<double>{0.0}), 2.0, 1e-15);
    EXPECT_THROW((void)nrmse(std::vector<double>{1.0}, y, std::vector<double>{1.0, 1.0}), ArityError);
}

TEST(Reward, ExactValues) {
    const RewardConfig cfg;
    const sne::SneConfig sc;
    const std::vector<double> y{0.5, 2.0};
    const std::vector<double> d{1.0, 1.0};
    EXPECT_NEAR(compute_reward(y, y, d, cfg, sc), 1.25, 1e-9);
    // nRMSE = 0.03 with both objectives shifted by 0.03 keeps sign and exponent.
    const std::vector<double> yh{0.53, 2.03};
    EXPECT_NEAR(nrmse(yh, y, d), 0.03, 1e-12);
    EXPECT_NEAR(compute_reward(yh, y, d, cfg, sc), std::exp(-1.0) + 0.25, 1e-9);
    EXPECT_EQ(compute_reward(std::vector<double>{-1e6, -1e6}, y, d, cfg, sc), 0.0);
}

TEST(Reward, MonotoneAndClipped) {
    const RewardConfig cfg;
    const sne::SneConfig sc;
    const std::vector<double> y{5.0};
    const std::vector<double> d{100.0};
    double prev = INFINITY;
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> yh{5.0 + 0.04 * i}; // stays in [5, 9]: same sign and exponent
        const double r = compute_reward(yh, y, d, cfg, sc);
        EXPECT_LE(r, prev);
        prev = r;
    }
    auto rng = make_rng(1, 2);
    for (int i = 0; i < 10000; ++i) {
        const std::vector<double> a{normal(rng, 0, 10), normal(rng, 0, 1e3)};
        const std::vector<double> b{normal(rng, 0, 10), normal(rng, 0, 1e3)};
        const std::vector<double> dd{uniform(rng, 0.0, 5.0), uniform(rng, 0.0, 5.0)};
        const double r = compute_reward(a, b, dd, cfg, sc);
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 5.0);
    }
}

TEST(Reward, ConfigValidation) {
    RewardConfig bad;
    bad.temperature = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Perturb, CountsAndClip) {
    const sne::SneConfig sc;
    const Sample s{1, "m", {0.1, 0.2, 0.3}, {0.4, 1.2}};
    const auto r = ranges_of(0.0, 1.0, 0.5, 2.5);
    auto rng = make_rng(4, 0);
    EXPECT_EQ(perturb_labels(s, 0, {50, 50, 50}, r, rng, {}, sc).size(), 150U);
    EXPECT_TRUE(perturb_labels(s, 0, {0, 0, 0}, r, rng, {}, sc).empty());
    const auto low = perturb_labels(s, 7, {10000, 0, 0}, r, rng, {}, sc);
    for (const auto& a : low) {
        EXPECT_EQ(a.parent, 7U);
        EXPECT_EQ(a.noise, NoiseLevel::Low);
        EXPECT_GE(a.y_tilde[0], -0.3);
        EXPECT_LE(a.y_tilde[0], 1.3);
        EXPECT_GE(a.y_tilde[1], 0.5 - 0.6);
        EXPECT_LE(a.y_tilde[1], 2.5 + 0.6);
        EXPECT_GE(a.reward, 0.0);
        EXPECT_LE(a.reward, 5.0);
    }
}

TEST(Perturb, RewardOrderingByNoiseLevel) {
    const sne::SneConfig sc;
    const Sample s{1, "m", {0.5}, {0.4, 1.2}};
    const auto r = ranges_of(0.0, 1.0, 0.5, 2.5);
    auto rng = make_rng(9, 0);
    const auto aug = perturb_labels(s, 0, {2000, 2000, 2000}, r, rng, {}, sc);
    double m[3] = {0, 0, 0};
    for (const auto& a : aug) {
        m[static_cast<int>(a.noise)] += a.reward / 2000.0;
    }
    EXPECT_GE(m[0], m[1] + 0.02);
    EXPECT_GE(m[1], m[2] + 0.02);
}

TEST(Perturb, ZeroRangeAndZeroLabel) {
    const sne::SneConfig sc;
    const Sample s{1, "m", {0.5}, {0.0, 3.0}};
    const auto r = ranges_of(0.0, 0.0, 3.0, 3.0);
    auto rng = make_rng(9, 1);
    log::set_level(log::Level::Quiet);
    const auto aug = perturb_labels(s, 0, {5, 5, 5}, r, rng, {}, sc);
    log::set_level(log::Level::Info);
    for (const auto& a : aug) {
        EXPECT_EQ(a.y_tilde[0], 0.0);
        if (a.noise != NoiseLevel::Medium) {
            EXPECT_EQ(a.y_tilde[1], 3.0);
        }
    }
}

TEST(Augment, DeterministicPerSampleStreams) {
    const auto full = build_offline(toy_suite(), 20, {5, 3}, 3);
    const auto [train, test] = split(full, {5, 3}, 3);
    const auto a = augment(train, {2, 2, 2}, 5, {}, {});
    const auto b = augment(train, {2, 2, 2}, 5, {}, {});
    ASSERT_EQ(a.size(), train.samples.size() * 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].y_tilde, b[i].y_tilde);
        EXPECT_EQ(a[i].reward, b[i].reward);
    }
}

TEST(Persist, SaveLoadLossless) {
    const auto full = build_offline(toy_suite(), 20, {5, 3}, 3);
    const auto [train, test] = split(full, {5, 3}, 3);
    const auto aug = augment(train, {1, 1, 1}, 5, {}, {});
    const auto path = std::filesystem::temp_directory_path() / "qms_dataset_test.jsonl";
    save_dataset(train, path, aug);
    const auto loaded = load_dataset(path);
    ASSERT_EQ(loaded.data.samples.size(), train.samples.size());
    for (std::size_t i = 0; i < train.samples.size(); ++i) {
        EXPECT_EQ(loaded.data.samples[i].x, train.samples[i].x);
        EXPECT_EQ(loaded.data.samples[i].y, train.samples[i].y);
        EXPECT_EQ(loaded.data.samples[i].metadata_text, train.samples[i].metadata_text);
    }
    ASSERT_EQ(loaded.augmented.size(), aug.size());
    for (std::size_t i = 0; i < aug.size(); ++i) {
        EXPECT_EQ(loaded.augmented[i].y_tilde, aug[i].y_tilde);
        EXPECT_EQ(loaded.augmented[i].reward, aug[i].reward);
        EXPECT_EQ(loaded.augmented[i].parent, aug[i].parent);
        EXPECT_EQ(loaded.augmented[i].noise, aug[i].noise);
    }
    EXPECT_EQ(loaded.data.ranges.at(1).y_min, train.ranges.at(1).y_min);
    std::filesystem::remove(path);
}

TEST(Encodable, FlushesTinyMagnitudes) {
    const sne::SneConfig sc;
    EXPECT_EQ(encodable(1e-30, sc), 0.0);
    EXPECT_EQ(encodable(-1e-30, sc), 0.0);
    EXPECT_EQ(encodable(1e-5, sc), 1e-5);
}
