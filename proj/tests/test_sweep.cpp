#include <pedvit/corpus.hpp>
#include <pedvit/sweep.hpp>

#include <gtest/gtest.h>

using namespace pedvit;

namespace {
const std::vector<CorpusImage>& corpus() {
    static const auto c = synthetic_corpus();
    return c;
}
} // namespace

TEST(Sweep, SingleWindowIsFullExposure) {
    const auto reports = run_privacy_sweep(corpus(), {{1, 1}}, all_adversaries());
    ASSERT_EQ(reports.size(), 3u);
    for (const auto& r : reports) {
        EXPECT_EQ(r.aggregate.ssim, 1.0) << r.adversary;
        EXPECT_EQ(r.aggregate.mae, 0.0) << r.adversary;
        EXPECT_EQ(r.exposure_ratio, 1.0);
    }
}

TEST(Sweep, ExposureRatios) {
    const auto reports = run_privacy_sweep(corpus(), parse_scheme_list("2x2,4x3,5x5"), {Adversary::mean_fill()});
    ASSERT_EQ(reports.size(), 3u);
    EXPECT_EQ(reports[0].exposure_ratio, 1.0 / 4);
    EXPECT_EQ(reports[1].exposure_ratio, 1.0 / 12);
    EXPECT_EQ(reports[2].exposure_ratio, 1.0 / 25);
    EXPECT_EQ(reports[1].windows.size(), 12u * 12u);
    EXPECT_EQ(reports[2].per_image.size(), 12u);
}

TEST(Sweep, MeanFillFinerSchemeLowersSsim) {
    const auto reports = run_privacy_sweep(corpus(), {{2, 2}, {5, 5}}, {Adversary::mean_fill()});
    EXPECT_LT(reports[1].aggregate.ssim, reports[0].aggregate.ssim);
}

TEST(Sweep, TrendAcrossSchemes) {
    const auto reports = run_privacy_sweep(corpus(), parse_scheme_list("2x2,4x3,5x5"),
                                           {Adversary::mean_fill(), Adversary::tile_replicate(),
                                            Adversary::diffusion_inpaint(100)});
    // reports are scheme-major
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t s = 0; s + 1 < 3; ++s) {
            const auto& coarse = reports[s * 3 + a];
            const auto& fine = reports[(s + 1) * 3 + a];
            EXPECT_LE(fine.aggregate.ssim, coarse.aggregate.ssim + 0.01) << coarse.adversary;
            EXPECT_GE(fine.aggregate.mae, coarse.aggregate.mae) << coarse.adversary;
        }
}

TEST(Sweep, AggregateIsMeanOfPerImageMeans) {
    const auto r = run_privacy_sweep(corpus(), {{2, 2}}, {Adversary::tile_replicate()})[0];
    double s = 0;
    for (std::size_t i = 0; i < 12; ++i) {
        double img = 0;
        for (std::size_t k = 0; k < 4; ++k) img += r.windows[i * 4 + k].ssim;
        EXPECT_NEAR(r.per_image[i].ssim, img / 4, 1e-15);
        s += img / 4;
    }
    EXPECT_NEAR(r.aggregate.ssim, s / 12, 1e-15);
}

TEST(Sweep, DeterministicJson) {
    const auto schemes = parse_scheme_list("2x2,5x5");
    const auto a = report_to_json(run_privacy_sweep(corpus(), schemes, all_adversaries()), corpus()).dump();
    const auto b = report_to_json(run_privacy_sweep(corpus(), schemes, all_adversaries()), corpus()).dump();
    EXPECT_EQ(a, b);
    const auto doc = nlohmann::json::parse(a);
    EXPECT_EQ(doc["parameters"]["conf_min"], 0.75);
    EXPECT_EQ(doc["parameters"]["iou_min"], 0.5);
    EXPECT_EQ(doc["reports"].size(), 6u);
}

TEST(Sweep, EmptyCorpusThrows) {
    EXPECT_THROW(run_privacy_sweep({}, {{2, 2}}, all_adversaries()), InputError);
}
