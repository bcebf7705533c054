#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "ganmex/baselines/baselines.hpp"
#include "ganmex/data/generators.hpp"
#include "ganmex/nn/train.hpp"
#include "support.hpp"

using namespace ganmex;
using namespace ganmex::baselines;
using data::Image;

namespace {

Image filled(std::size_t c, std::size_t h, std::size_t w, double v) { return Image(c, h, w, v); }

data::LabeledDataset tiny_set(std::initializer_list<std::pair<double, std::size_t>> items, std::size_t classes) {
    data::LabeledDataset ds;
    ds.class_count = classes;
    for (auto [v, label] : items) {
        ds.images.push_back(filled(1, 1, 1, v));
        ds.labels.push_back(label);
    }
    return ds;
}

// Direct 2-D convolution with the outer-product kernel, clamped borders.
Image blur_oracle(const Image& x, double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k;
    for (int i = -r; i <= r; ++i) k.push_back(std::exp(-(i * i) / (2.0 * sigma * sigma)));
    const double z = std::accumulate(k.begin(), k.end(), 0.0);
    const int H = static_cast<int>(x.height()), W = static_cast<int>(x.width());
    Image out(x.channels(), x.height(), x.width());
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double s = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int yy = std::clamp(y + dy, 0, H - 1), xc = std::clamp(xx + dx, 0, W - 1);
                        s += k[dy + r] * k[dx + r] / (z * z) * x.at(c, yy, xc);
                    }
                out.set(c, y, xx, s);
            }
    return out;
}

}  // namespace

TEST_CASE("static baselines") {
    const auto ds = data::gen_glyphs(3, 12, 2, 1);
    const Image& x = ds.images[0];
    const auto z = make_baseline(BaselineSpec::zero(), x, {});
    CHECK(z.shape() == x.shape());
    CHECK(z.tensor().max_abs() == 0.0);
    const auto m = make_baseline(BaselineSpec::max(), x, {});
    for (double v : m.tensor().values()) CHECK(v == 1.0);
    const auto u = make_baseline(BaselineSpec::uniform(0.5), x, {});
    for (double v : u.tensor().values()) CHECK(v == 0.5);
    CHECK(make_baseline(BaselineSpec::zero().with_target(2), x, {}) == z);
}

TEST_CASE("blur matches a direct 2-D convolution and preserves constants") {
    Rng rng(3);
    for (double sigma : {0.4, 1.0, 2.5}) {
        const Image x(test_support::random_tensor(rng, {2, 7, 9}, 0.0, 1.0));
        const auto b = make_baseline(BaselineSpec::blur(sigma), x, {});
        CHECK(test_support::max_abs_diff(b.tensor(), blur_oracle(x, sigma).tensor()) < 1e-12);
    }
    const auto c = gaussian_blur(filled(1, 5, 5, 0.3), 1.7);
    for (double v : c.tensor().values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
    CHECK_THROWS_AS(BaselineSpec::blur(0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make_baseline(BaselineSpec::blur(-1.0), c, {}), std::invalid_argument);
}

TEST_CASE("mdts returns the closest target-class member") {
    // x = 0; class-1 candidates at distances 0.5 and 0.3 (twice), scaled down from {5, 3}.
    const auto train = tiny_set({{0.5, 1}, {0.3, 1}, {0.1, 0}, {0.3, 1}}, 2);
    const Image x = filled(1, 1, 1, 0.0);
    const auto nn = nearest_of_class(x, train, 1);
    CHECK(nn.index == 1);  // tie with index 3 goes to the lower index
    CHECK(nn.distance == doctest::Approx(0.3));
    CHECK(make_baseline(BaselineSpec::mdts(1), x, train) == train.images[1]);
    CHECK(make_baseline(BaselineSpec::mdts(0), x, train) == train.images[2]);
    CHECK_THROWS_AS(make_baseline(BaselineSpec::mdts(1), x, tiny_set({{0.2, 0}}, 2)), std::invalid_argument);
    CHECK_THROWS_AS(make_baseline(BaselineSpec::mdts(1), x, {}), std::invalid_argument);
}

TEST_CASE("mdts of a training member with the target label is itself") {
    const auto train = data::gen_glyphs(4, 12, 8, 2);
    for (std::size_t i = 0; i < train.size(); i += 5) {
        const auto b = make_baseline(BaselineSpec::mdts(train.labels[i]), train.images[i], train);
        CHECK(b == train.images[i]);
        CHECK(baseline_distance(b, train.images[i]) == 0.0);
    }
}

TEST_CASE("mdts property: member of the target class with no strictly closer member") {
    const auto train = data::gen_glyphs(4, 12, 10, 3);
    const auto test = data::gen_glyphs(4, 12, 3, 3, data::Split::test);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const std::size_t target = (test.labels[i] + 1) % 4;
        const auto nn = nearest_of_class(test.images[i], train, target);
        CHECK(train.labels[nn.index] == target);
        const auto b = make_baseline(BaselineSpec::mdts(target), test.images[i], train);
        CHECK(b == train.images[nn.index]);
        for (auto j : train.indices_of_class(target)) {
            CHECK(baseline_distance(test.images[i], train.images[j]) >= nn.distance);
        }
    }
}

TEST_CASE("random_target draws a target-class member, deterministically per seed and input") {
    const auto train = data::gen_glyphs(3, 12, 12, 4);
    const auto test = data::gen_glyphs(3, 12, 4, 4, data::Split::test);
    std::set<std::size_t> distinct;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto spec = BaselineSpec::random_target(2, 17);
        const auto a = make_baseline(spec, test.images[i], train);
        CHECK(a == make_baseline(spec, test.images[i], train));
        bool member = false;
        for (auto j : train.indices_of_class(2)) {
            if (train.images[j] == a) {
                member = true;
                distinct.insert(j);
            }
        }
        CHECK(member);
    }
    CHECK(distinct.size() > 1);
    CHECK_THROWS_AS(BaselineSpec::random_target(5, 1).validate(3), std::invalid_argument);
}

TEST_CASE("targeted kinds require a target") {
    BaselineSpec s;
    s.kind = BaselineKind::mdts;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.kind = BaselineKind::ganmex;
    s.target_class = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // no model
    CHECK(baseline_kind_from_string("random_target") == BaselineKind::random_target);
    CHECK_THROWS_AS(baseline_kind_from_string("median"), std::invalid_argument);
    CHECK(BaselineSpec::blur(2.0).label() == "blur(2)");
    CHECK(BaselineSpec::uniform(0.25).label() == "uniform(0.25)");
}

TEST_CASE("ganmex baseline delegates to the generator") {
    const auto train = data::gen_glyphs(3, 12, 6, 5);
    auto clf = nn::Network::build({1, 12, 12}, nn::reference_classifier(3), 1);
    gan::GanmexConfig cfg;
    cfg.steps = 2;
    cfg.batch_size = 4;
    cfg.generator_width = 4;
    auto model = std::make_shared<const gan::GanmexModel>(gan::train_ganmex(clf, train, cfg));
    const auto& x = train.images[0];
    const auto b = make_baseline(BaselineSpec::ganmex(model, 2), x, {});
    CHECK(b == gan::generate_baseline(*model, x, 2));
    CHECK(b == make_baseline(BaselineSpec::ganmex(model, 2), x, {}));
    CHECK_THROWS_AS(make_baseline(BaselineSpec::ganmex(model, 3), x, {}), std::invalid_argument);
    CHECK_THROWS_AS(make_baseline(BaselineSpec::ganmex(model, 1), filled(1, 8, 8, 0.0), {}), ShapeError);
}

TEST_CASE("baseline_distance examples") {
    const Image a = filled(2, 3, 4, 0.0), b = filled(2, 3, 4, 1.0);
    CHECK(baseline_distance(a, a) == 0.0);
    CHECK(baseline_distance(a, b) == doctest::Approx(std::sqrt(24.0)).epsilon(1e-15));
    CHECK_THROWS_AS(baseline_distance(a, filled(1, 3, 4, 0.0)), ShapeError);
}

TEST_CASE("edge_region_distance examples") {
    const Image x = filled(1, 4, 4, 0.2);
    const auto mask = data::edge_region_mask(4, 4);
    CHECK(edge_region_distance(x, x, mask) == 0.0);

    Image inner = x;
    inner.set(0, 1, 1, 0.9);
    inner.set(0, 2, 2, 0.9);
    CHECK(edge_region_distance(x, inner, mask) == 0.0);

    Image y = filled(1, 4, 4, 0.0), z = filled(1, 4, 4, 0.0);
    std::size_t k = 0;
    for (std::size_t p = 0; p < 16 && k < 5; ++p) {
        if (mask[p]) {
            z.set(0, p / 4, p % 4, 1.0);
            ++k;
        }
    }
    CHECK(edge_region_distance(y, z, mask) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK_THROWS_AS(edge_region_distance(x, x, data::PixelMask(16, 0)), std::invalid_argument);
    CHECK_THROWS_AS(edge_region_distance(x, x, data::PixelMask(9, 1)), std::invalid_argument);
}

TEST_CASE("class distance statistics") {
    SUBCASE("identical images within classes") {
        const auto ds = tiny_set({{0.2, 0}, {0.2, 0}, {0.2, 0}, {0.9, 1}, {0.9, 1}}, 2);
        const auto st = class_distance_stats(ds, 200, 1);
        CHECK(st.intra == 0.0);
        CHECK(st.inter == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(st.inter_stderr == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("singleton class is rejected") {
        const auto ds = tiny_set({{0.2, 0}, {0.2, 0}, {0.9, 1}}, 2);
        CHECK_THROWS_AS(class_distance_stats(ds, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(class_distance_stats(tiny_set({{0.1, 0}, {0.2, 0}}, 1), 10, 1), std::invalid_argument);
    }
    SUBCASE("standard error shrinks as one over root n") {
        const auto ds = data::gen_glyphs(3, 12, 30, 6);
        auto spread = [&](std::size_t n) {
            std::vector<double> est;
            for (std::uint64_t s = 0; s < 40; ++s) est.push_back(class_distance_stats(ds, n, 1000 + s).intra);
            const double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
            double v = 0.0;
            for (double e : est) v += (e - mean) * (e - mean);
            return std::sqrt(v / (est.size() - 1));
        };
        const double s1 = spread(50), s4 = spread(800);
        // Sixteen times the samples should divide the spread by about four.
        CHECK(s1 / s4 > 2.8);
        CHECK(s1 / s4 < 5.6);
        const auto st = class_distance_stats(ds, 800, 3);
        CHECK(st.intra_stderr == doctest::Approx(s4).epsilon(0.35));
        CHECK(st.intra < st.inter);
    }
}
