#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "segbench/metrics.hpp"
#include "segbench/rng.hpp"

using namespace segbench;
using namespace segbench::metrics;

namespace {

MaskGrid random_mask(int r, int c, RngStream& rng, double p = 0.5) {
    MaskGrid m(r, c);
    for (auto& v : m.v) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

// brute-force per-pixel tally, kept independent of confusion()
ConfusionCounts oracle_confusion(const MaskGrid& pred, const MaskGrid& target) {
    ConfusionCounts c;
    for (int y = 0; y < pred.rows; ++y)
        for (int x = 0; x < pred.cols; ++x) {
            const int p = pred.at(y, x), t = target.at(y, x);
            c.tp += (p == 1 && t == 1);
            c.tn += (p == 0 && t == 0);
            c.fp += (p == 1 && t == 0);
            c.fn += (p == 0 && t == 1);
        }
    return c;
}

MetricsRecord rec(const std::string& ex, const std::string& ar, const std::string& en,
                  const std::string& wi, double dice) {
    MetricsRecord r;
    r.experiment = ex;
    r.architecture = ar;
    r.encoder = en;
    r.weight_init = wi;
    r.sens = dice;
    r.spec = dice;
    r.dice = dice;
    r.params_millions = 1.0;
    r.ok = true;
    return r;
}

} // namespace

TEST_CASE("binarize boundary: values equal to tau become 1") {
    Image p(2, 2, 0.5f);
    MaskGrid b = binarize(p, 0.5);
    for (auto v : b.v) CHECK(v == 1);

    SUBCASE("already binary predictions are unchanged") {
        Image q(2, 2);
        q.v = {0.0f, 1.0f, 1.0f, 0.0f};
        MaskGrid bb = binarize(q, 0.5);
        CHECK(bb.v == std::vector<uint8_t>{0, 1, 1, 0});
    }
    SUBCASE("random grid matches the elementwise oracle") {
        RngStream rng(1);
        Image r(16, 16);
        for (auto& v : r.v) v = static_cast<float>(rng.next_double());
        MaskGrid bb = binarize(r, 0.5);
        for (size_t i = 0; i < r.v.size(); ++i)
            CHECK(bb.v[i] == (r.v[i] >= 0.5f ? 1 : 0));
    }
    SUBCASE("tau outside (0,1) is rejected") {
        CHECK_THROWS_AS(binarize(p, 0.0), ConfigError);
        CHECK_THROWS_AS(binarize(p, 1.0), ConfigError);
    }
}

TEST_CASE("confusion counts") {
    MaskGrid t(4, 4);
    t.v = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    ConfusionCounts c = confusion(t, t);
    CHECK(c.tp == 5);
    CHECK(c.tn == 11);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.total() == 16);

    SUBCASE("complement prediction has no true cells") {
        MaskGrid p = t;
        for (auto& v : p.v) v = 1 - v;
        ConfusionCounts cc = confusion(p, t);
        CHECK(cc.tp == 0);
        CHECK(cc.tn == 0);
        CHECK(cc.fp == 11);
        CHECK(cc.fn == 5);
    }
    SUBCASE("random pairs match brute force") {
        RngStream rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            MaskGrid p = random_mask(16, 16, rng);
            MaskGrid q = random_mask(16, 16, rng, 0.3);
            ConfusionCounts a = confusion(p, q);
            ConfusionCounts b = oracle_confusion(p, q);
            CHECK(a.tp == b.tp);
            CHECK(a.tn == b.tn);
            CHECK(a.fp == b.fp);
            CHECK(a.fn == b.fn);
        }
    }
    SUBCASE("complement swap symmetry: tp<->tn, fp<->fn") {
        RngStream rng(3);
        MaskGrid p = random_mask(12, 12, rng);
        MaskGrid q = random_mask(12, 12, rng);
        MaskGrid pc = p, qc = q;
        for (auto& v : pc.v) v = 1 - v;
        for (auto& v : qc.v) v = 1 - v;
        ConfusionCounts a = confusion(p, q), b = confusion(pc, qc);
        CHECK(a.tp == b.tn);
        CHECK(a.tn == b.tp);
        CHECK(a.fp == b.fn);
        CHECK(a.fn == b.fp);
    }
    SUBCASE("shape mismatch and non-binary input are rejected") {
        MaskGrid small(2, 2);
        CHECK_THROWS_AS(confusion(small, t), ShapeError);
        MaskGrid bad(4, 4);
        bad.v[0] = 2;
        CHECK_THROWS_AS(confusion(bad, t), ValidationError);
    }
}

TEST_CASE("hard_metrics matches direct formula evaluation") {
    ConfusionCounts c{3, 10, 1, 2};
    const double eps = 1e-5;
    HardMetrics m = hard_metrics(c, eps, EmptyRule::PaperLiteral);
    CHECK(m.sens == doctest::Approx(3.0 / (5.0 + eps)).epsilon(1e-12));
    CHECK(m.spec == doctest::Approx(10.0 / (11.0 + eps)).epsilon(1e-12));
    CHECK(m.dice == doctest::Approx(6.0 / (9.0 + eps)).epsilon(1e-12));
    CHECK(m.sens == doctest::Approx(0.6).epsilon(1e-4));
    CHECK(m.spec == doctest::Approx(0.90909).epsilon(1e-4));
    CHECK(m.dice == doctest::Approx(0.66667).epsilon(1e-4));
}

TEST_CASE("empty-prediction conventions") {
    SUBCASE("empty prediction, empty target: all ones under both rules") {
        ConfusionCounts c{0, 16, 0, 0};
        for (auto rule : {EmptyRule::PaperLiteral, EmptyRule::Strict}) {
            HardMetrics m = hard_metrics(c, 1e-5, rule);
            CHECK(m.sens == 1.0);
            CHECK(m.spec == 1.0);
            CHECK(m.dice == 1.0);
        }
    }
    SUBCASE("empty prediction, nonempty target: rules diverge") {
        ConfusionCounts c{0, 10, 0, 6};
        HardMetrics lit = hard_metrics(c, 1e-5, EmptyRule::PaperLiteral);
        CHECK(lit.sens == 1.0);
        CHECK(lit.spec == 1.0);
        CHECK(lit.dice == 1.0);
        HardMetrics st = hard_metrics(c, 1e-5, EmptyRule::Strict);
        CHECK(st.sens == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(st.dice == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(st.spec == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("metrics are scale-free at the count level in the eps->0 limit") {
    RngStream rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        ConfusionCounts c{static_cast<int64_t>(rng.next_below(50)) + 1,
                          static_cast<int64_t>(rng.next_below(50)) + 1,
                          static_cast<int64_t>(rng.next_below(50)),
                          static_cast<int64_t>(rng.next_below(50))};
        const int64_t k = 1 + static_cast<int64_t>(rng.next_below(7));
        ConfusionCounts ck{c.tp * k, c.tn * k, c.fp * k, c.fn * k};
        HardMetrics a = hard_metrics(c, 0.0, EmptyRule::Strict);
        HardMetrics b = hard_metrics(ck, 0.0, EmptyRule::Strict);
        CHECK(a.sens == doctest::Approx(b.sens).epsilon(1e-12));
        CHECK(a.spec == doctest::Approx(b.spec).epsilon(1e-12));
        CHECK(a.dice == doctest::Approx(b.dice).epsilon(1e-12));
    }
}

TEST_CASE("dice lies in [0,1) and is 0 iff TP = 0 under the strict rule") {
    RngStream rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        ConfusionCounts c{static_cast<int64_t>(rng.next_below(20)),
                          static_cast<int64_t>(rng.next_below(20)),
                          static_cast<int64_t>(rng.next_below(20)),
                          static_cast<int64_t>(rng.next_below(20))};
        if (c.tp + c.fp == 0 && c.fn == 0) continue; // empty-empty override
        HardMetrics m = hard_metrics(c, 1e-5, EmptyRule::Strict);
        CHECK(m.dice >= 0.0);
        CHECK(m.dice < 1.0);
        CHECK((m.dice == 0.0) == (c.tp == 0));
    }
}

TEST_CASE("aggregate means and sample std") {
    std::vector<MetricsRecord> rs;
    rs.push_back(rec("lung-segmentation", "Unet", "plain", "random", 80.0));
    rs.push_back(rec("lung-segmentation", "Unet", "plain", "random", 90.0));
    auto by_arch = aggregate(rs, GroupBy::Architecture);
    REQUIRE(by_arch.size() == 1);
    CHECK(by_arch[0].n == 2);
    CHECK(by_arch[0].mean_dice == doctest::Approx(85.0));
    CHECK(by_arch[0].std_dice == doctest::Approx(7.0710678).epsilon(1e-6));

    SUBCASE("identical records give zero std") {
        std::vector<MetricsRecord> same(3, rec("e", "a", "n", "w", 50.0));
        auto g = aggregate(same, GroupBy::Encoder);
        CHECK(g[0].std_dice == 0.0);
        CHECK(g[0].mean_dice == 50.0);
        CHECK_FALSE(g[0].single);
    }
    SUBCASE("single-record groups are flagged") {
        std::vector<MetricsRecord> one{rec("e", "a", "n", "w", 50.0)};
        auto g = aggregate(one, GroupBy::Architecture);
        CHECK(g[0].single);
        CHECK(g[0].std_dice == 0.0);
    }
    SUBCASE("48 records group into 4 architectures of 12") {
        std::vector<MetricsRecord> all;
        const char* exs[] = {"lung-segmentation", "lesion-segmentation-a", "lesion-segmentation-b"};
        const char* ars[] = {"Unet", "Linknet", "FPN", "PSPNet"};
        const char* ens[] = {"plain", "residual"};
        const char* wis[] = {"random", "warmstart"};
        for (auto ex : exs)
            for (auto ar : ars)
                for (auto en : ens)
                    for (auto wi : wis) all.push_back(rec(ex, ar, en, wi, 75.0));
        auto g = aggregate(all, GroupBy::Architecture);
        REQUIRE(g.size() == 4);
        for (const auto& s : g) CHECK(s.n == 12);
        auto ge = aggregate(all, GroupBy::Experiment);
        REQUIRE(ge.size() == 3);
        for (const auto& s : ge) CHECK(s.n == 16);
    }
    SUBCASE("no ok records is an error") {
        std::vector<MetricsRecord> failed{rec("e", "a", "n", "w", 0.0)};
        failed[0].ok = false;
        CHECK_THROWS_AS(aggregate(failed, GroupBy::Architecture), ValidationError);
    }
}

TEST_CASE("metrics CSV round-trip with the exact header") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "segb_metrics_test.csv";
    std::vector<MetricsRecord> rs;
    rs.push_back(rec("lung-segmentation", "Unet", "plain", "random", 93.77));
    rs.back().params_millions = 27.83;
    rs.back().train_s_per_batch = 1.91;
    rs.back().val_s_per_batch = 0.35;
    MetricsRecord bad = rec("lesion-segmentation-a", "FPN", "dense", "warmstart", 0.0);
    bad.ok = false;
    rs.push_back(bad);

    write_metrics_csv(p, rs);
    {
        std::ifstream in(p);
        std::string header;
        std::getline(in, header);
        CHECK(header ==
              "experiment,architecture,encoder,weight_init,sens,spec,dice,params_millions,"
              "train_s_per_batch,val_s_per_batch,status");
    }
    auto back = read_metrics_csv(p);
    REQUIRE(back.size() == 2);
    CHECK(back[0].dice == doctest::Approx(93.77));
    CHECK(back[0].ok);
    CHECK_FALSE(back[1].ok);
    fs::remove(p);
}
