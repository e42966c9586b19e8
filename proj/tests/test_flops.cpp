#include "oracles.hpp"

#include <pedvit/flops.hpp>

#include <gtest/gtest.h>

using namespace pedvit;

TEST(Flops, SamHWindowShare) {
    const auto cfg = sam_h_config();
    ASSERT_EQ(cfg.grid_n(), 64u);
    ASSERT_EQ(cfg.padded_grid(), 70u);
    const double share = estimate_flops(cfg).window_share();
    EXPECT_NEAR(share, 0.848, 0.010);
    EXPECT_NEAR(share, oracle::share(1280, 14, 64, 70, 28, 4), 1e-12);
}

TEST(Flops, ToyMatchesClosedForm) {
    const auto cfg = toy_config();
    EXPECT_NEAR(estimate_flops(cfg).window_share(), oracle::share(32, 4, 16, 16, 6, 2), 1e-12);
}

TEST(Flops, NoGlobalLayersGivesFullShare) {
    auto cfg = toy_config();
    cfg.global_layers = 0;
    EXPECT_EQ(estimate_flops(cfg).window_share(), 1.0);
}

TEST(Flops, FullGridWindowIsLayerRatio) {
    auto cfg = toy_config();
    cfg.window_r = cfg.grid_n();
    for (std::size_t L : {1, 2, 5}) {
        cfg.window_layers = L;
        cfg.global_layers = 3;
        EXPECT_NEAR(estimate_flops(cfg).window_share(), L / (L + 3.0), 1e-12);
    }
}

TEST(Flops, ShareIncreasesWithWindowLayers) {
    auto cfg = sam_h_config();
    double prev = 0;
    for (std::size_t L = 1; L <= 32; ++L) {
        cfg.window_layers = L;
        const double s = estimate_flops(cfg).window_share();
        EXPECT_GT(s, prev);
        prev = s;
    }
}

TEST(Flops, PerLayerEntries) {
    const auto e = estimate_flops(toy_config());
    ASSERT_EQ(e.layers.size(), 8u);
    EXPECT_TRUE(e.layers[5].window);
    EXPECT_FALSE(e.layers[6].window);
    double sum = 0;
    for (const auto& l : e.layers) sum += l.total();
    EXPECT_DOUBLE_EQ(sum, e.total());
    // qkv on one 16x16 grid: 2 * 256 tokens * 32 * 96
    EXPECT_EQ(e.layers[6].qkv, 2.0 * 256 * 32 * 96);
}
