#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ganmex/data/generators.hpp"
#include "ganmex/gan/ganmex.hpp"
#include "ganmex/io/binary.hpp"
#include "ganmex/nn/checkpoint.hpp"
#include "ganmex/nn/train.hpp"
#include "support.hpp"

using namespace ganmex;
using namespace ganmex::gan;

namespace {

Var batch_const(Tape& tape, Shape shape, double fill) { return tape.constant(Tensor(std::move(shape), fill)); }

struct Fruit {
    data::LabeledDataset train, test;
    nn::Network classifier;
};

const Fruit& fruit() {
    static const Fruit f = [] {
        Fruit out;
        out.train = data::gen_color_fruit(16, 200, 1);
        out.test = data::gen_color_fruit(16, 60, 1, data::Split::test);
        nn::TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = 3;
        out.classifier = nn::train_classifier(out.train, nn::reference_classifier(2), cfg);
        return out;
    }();
    return f;
}

const GanmexModel& fruit_model() {
    static const GanmexModel m = [] {
        GanmexConfig cfg;
        cfg.steps = 400;
        cfg.seed = 5;
        return train_ganmex(fruit().classifier, fruit().train, cfg);
    }();
    return m;
}

GanmexConfig tiny_config(std::size_t steps) {
    GanmexConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 4;
    cfg.generator_width = 4;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST_CASE("generator loss from parts: substitution example") {
    Tape tape;
    const Shape img{2, 1, 2, 2};
    Var x = batch_const(tape, img, 0.5);
    Var x_tilde = batch_const(tape, img, 0.7);  // sim = 0.2
    Var x_rec = batch_const(tape, img, 0.4);    // rec = 0.1
    Var d = batch_const(tape, {2, 1}, 0.5);
    Var s = batch_const(tape, {2}, 0.5);
    LossWeights w{1, 1, 1, 1, false};
    auto l = generator_loss_from_parts(x, x_tilde, d, s, x_rec, w);
    CHECK(l.total.value().item() == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(l.adversarial.value().item() == doctest::Approx(std::log(0.5)));
    CHECK(l.classification.value().item() == doctest::Approx(-std::log(0.5)));
    CHECK(l.reconstruction.value().item() == doctest::Approx(0.1));
    CHECK(l.similarity.value().item() == doctest::Approx(0.2));

    auto zero = generator_loss_from_parts(x, x_tilde, d, s, x_rec, LossWeights{0, 0, 0, 0, false});
    CHECK(zero.total.value().item() == 0.0);

    auto ns = generator_loss_from_parts(x, x_tilde, d, s, x_rec, LossWeights{1, 0, 0, 0, true});
    CHECK(ns.total.value().item() == doctest::Approx(-std::log(0.5)));
}

TEST_CASE("identity generator with rec and sim disabled leaves adversarial plus classification") {
    Tape tape;
    const Shape img{3, 1, 2, 2};
    Var x = batch_const(tape, img, 0.3);
    Var d = batch_const(tape, {3, 1}, 0.2);
    Var s = batch_const(tape, {3}, 0.9);
    auto l = generator_loss_from_parts(x, x, d, s, x, LossWeights{1, 1, 0, 0, false});
    CHECK(l.total.value().item() == doctest::Approx(std::log(0.8) - std::log(0.9)).epsilon(1e-12));
    CHECK(l.reconstruction.value().item() == 0.0);
    CHECK(l.similarity.value().item() == 0.0);
}

TEST_CASE("logs are clamped at epsilon") {
    Tape tape;
    Var x = batch_const(tape, {1, 1, 1, 1}, 0.0);
    auto l = generator_loss_from_parts(x, x, batch_const(tape, {1, 1}, 1.0), batch_const(tape, {1}, 0.0), x,
                                       LossWeights{});
    CHECK(std::isfinite(l.total.value().item()));
    CHECK(l.adversarial.value().item() == doctest::Approx(std::log(kLogEpsilon)));
    CHECK(l.classification.value().item() == doctest::Approx(-std::log(kLogEpsilon)));
}

TEST_CASE("discriminator loss examples") {
    auto model = init_model({1, 8, 8}, 3, tiny_config(0));
    // Zero weights and bias make D output sigmoid(0) = 0.5 for every input.
    for (auto& p : model.discriminator.parameters()) p.value.fill(0.0);
    Rng rng(4);
    const Tensor x = test_support::random_tensor(rng, {5, 1, 8, 8}, 0.0, 1.0);
    const std::vector<std::size_t> targets{0, 1, 2, 0, 1};
    CHECK(discriminator_loss(model, x, targets) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

    Tape tape;
    const auto d_params = model.discriminator.bind(tape, false);
    auto perfect = discriminator_loss_var(model.discriminator, tape, d_params, batch_const(tape, {2, 1, 8, 8}, 0.0),
                                          batch_const(tape, {2, 1, 8, 8}, 0.0));
    CHECK(perfect.value().item() == doctest::Approx(2.0 * std::log(2.0)));

    // A discriminator whose last layer saturates toward 1 on real and 0 on fake.
    nn::Network d = nn::Network::build({1, 1, 1}, {nn::LayerSpec::flatten(), nn::LayerSpec::dense("d", 1),
                                                   nn::LayerSpec::sigmoid()},
                                       1);
    d.parameters()[0].value.fill(200.0);
    d.parameters()[1].value.fill(-100.0);
    Tape t2;
    const auto p2 = d.bind(t2, false);
    Var loss = discriminator_loss_var(d, t2, p2, batch_const(t2, {3, 1, 1, 1}, 1.0), batch_const(t2, {3, 1, 1, 1}, 0.0));
    CHECK(loss.value().item() >= 0.0);
    CHECK(loss.value().item() < 1e-12);

    CHECK_THROWS_AS(discriminator_loss(model, Tensor({0, 1, 8, 8}), std::vector<std::size_t>{}), std::invalid_argument);
}

TEST_CASE("discriminator loss has zero gradient with respect to the generator") {
    auto model = init_model({1, 8, 8}, 2, tiny_config(0));
    Rng rng(5);
    const Tensor x = test_support::random_tensor(rng, {3, 1, 8, 8}, 0.0, 1.0);
    const std::vector<std::size_t> targets{1, 0, 1};
    Tape tape;
    const auto g_params = model.generator.bind(tape, true);
    const auto d_params = model.discriminator.bind(tape, true);
    Var xv = tape.constant(x);
    Var fake = generate(model, tape, g_params, xv, targets);
    // The fakes enter the D objective as constants, as in the training loop.
    Var loss = discriminator_loss_var(model.discriminator, tape, d_params, xv, tape.constant(fake.value()));
    tape.backward(loss);
    for (auto p : g_params) CHECK(tape.grad(p).max_abs() == 0.0);
    double d_grad = 0.0;
    for (auto p : d_params) d_grad += tape.grad(p).l2_norm();
    CHECK(d_grad > 0.0);
}

TEST_CASE("generator loss equals the weighted sum of its components") {
    GanmexConfig cfg = tiny_config(0);
    cfg.lambda_src = 0.7;
    cfg.lambda_cls = 1.3;
    cfg.lambda_rec = 4.0;
    cfg.lambda_sim = 2.5;
    auto model = init_model({1, 8, 8}, 3, cfg);
    auto clf = nn::Network::build({1, 8, 8}, nn::reference_classifier(3), 8);
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = test_support::random_tensor(rng, {4, 1, 8, 8}, 0.0, 1.0);
        std::vector<std::size_t> labels(4), targets(4);
        for (std::size_t i = 0; i < 4; ++i) {
            labels[i] = uniform_index(rng, 3);
            targets[i] = sample_target(rng, labels[i], 3);
        }
        const auto l = generator_loss(model, clf, x, labels, targets);
        const double sum = cfg.lambda_src * l.adversarial + cfg.lambda_cls * l.classification +
                           cfg.lambda_rec * l.reconstruction + cfg.lambda_sim * l.similarity;
        CHECK(std::abs(l.total - sum) <= 1e-9);
    }
}

TEST_CASE("cycle drift strictly increases the generator loss") {
    SUBCASE("parts level") {
        Tape tape;
        const Shape img{2, 1, 2, 2};
        Var x = batch_const(tape, img, 0.5);
        Var xt = batch_const(tape, img, 0.6);
        Var d = batch_const(tape, {2, 1}, 0.4);
        Var s = batch_const(tape, {2}, 0.7);
        const LossWeights w{};
        double prev = generator_loss_from_parts(x, xt, d, s, x, w).total.value().item();
        for (double drift : {0.05, 0.1, 0.3}) {
            const double now = generator_loss_from_parts(x, xt, d, s, batch_const(tape, img, 0.5 + drift), w)
                                   .total.value()
                                   .item();
            CHECK(now > prev);
            prev = now;
        }
    }
    SUBCASE("injected generator perturbation") {
        GanmexConfig cfg = tiny_config(0);
        cfg.lambda_src = cfg.lambda_cls = cfg.lambda_sim = 0.0;
        auto model = init_model({1, 8, 8}, 2, cfg);
        auto clf = nn::Network::build({1, 8, 8}, nn::reference_classifier(2), 8);
        const std::size_t out = model.generator.layer_index("out");
        for (auto i : model.generator.layer_parameters(out)) model.generator.parameters()[i].value.fill(0.0);
        Rng rng(7);
        const Tensor x = test_support::random_tensor(rng, {4, 1, 8, 8}, 0.1, 0.9);
        const std::vector<std::size_t> labels{0, 1, 0, 1}, targets{1, 0, 1, 0};
        const auto base = generator_loss(model, clf, x, labels, targets);
        const std::size_t bias = model.generator.layer_parameters(out)[1];
        model.generator.parameters()[bias].value.fill(1.5);
        const auto drifted = generator_loss(model, clf, x, labels, targets);
        CHECK(drifted.reconstruction > base.reconstruction);
        CHECK(drifted.total > base.total);
    }
}

TEST_CASE("untrained generator is near the identity and stays in range") {
    auto model = init_model({3, 8, 8}, 4, tiny_config(0));
    Rng rng(9);
    const Tensor x = test_support::random_tensor(rng, {6, 3, 8, 8}, 0.0, 1.0);
    const Tensor y = generate_batch(model, x, std::vector<std::size_t>{0, 1, 2, 3, 0, 1});
    CHECK(y.shape() == x.shape());
    for (double v : y.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(test_support::max_abs_diff(x, y) < 0.06);
}

TEST_CASE("config validation and JSON round trip") {
    GanmexConfig cfg;
    cfg.lambda_sim = 0.0;
    cfg.non_saturating = true;
    cfg.g_optimizer.learning_rate = 3e-4;
    const auto back = config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(config_from_json({{"lambda_rec", -1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"g_optimizer", {{"momentum", 0.9}}}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"batch_size", 0}}), std::invalid_argument);
}

TEST_CASE("sample_target never returns the label and covers the others") {
    Rng rng(10);
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 2000; ++i) {
        const auto t = sample_target(rng, 2, 5);
        REQUIRE(t != 2);
        REQUIRE(t < 5);
        ++seen[t];
    }
    for (std::size_t c : {0, 1, 3, 4}) CHECK(seen[c] > 400);
}

TEST_CASE("zero steps returns the initialized model") {
    const auto ds = data::gen_glyphs(3, 12, 10, 1);
    auto clf = nn::Network::build({1, 12, 12}, nn::reference_classifier(3), 2);
    const auto cfg = tiny_config(0);
    const auto trained = train_ganmex(clf, ds, cfg);
    const auto fresh = init_model({1, 12, 12}, 3, cfg);
    CHECK(nn::serialize_network(trained.generator) == nn::serialize_network(fresh.generator));
    CHECK(nn::serialize_network(trained.discriminator) == nn::serialize_network(fresh.discriminator));
    CHECK(trained.trained_steps == 0);
    CHECK_THROWS_AS(generate_baseline(trained, ds.images[0], 1), std::invalid_argument);
}

TEST_CASE("training freezes the classifier, is deterministic, and reports every step") {
    const auto ds = data::gen_glyphs(3, 12, 10, 1);
    auto clf = nn::Network::build({1, 12, 12}, nn::reference_classifier(3), 2);
    const auto before = nn::serialize_network(clf);
    const auto cfg = tiny_config(6);
    std::vector<StepRecord> log1, log2;
    const auto a = train_ganmex(clf, ds, cfg, [&](const StepRecord& r) { log1.push_back(r); });
    CHECK(nn::serialize_network(clf) == before);
    CHECK(a.classifier_hash == nn::network_hash(clf));
    const auto b = train_ganmex(clf, ds, cfg, [&](const StepRecord& r) { log2.push_back(r); });
    CHECK(serialize_model(a) == serialize_model(b));
    REQUIRE(log1.size() == 6);
    for (std::size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].step == i);
        CHECK(log1[i].g.total == log2[i].g.total);
        CHECK(log1[i].d_loss == log2[i].d_loss);
    }
    CHECK(serialize_model(train_ganmex(clf, ds, [&] {
              auto c = cfg;
              c.seed = 22;
              return c;
          }())) != serialize_model(a));
}

TEST_CASE("training rejects mismatched inputs") {
    const auto ds = data::gen_glyphs(3, 12, 4, 1);
    auto wrong_classes = nn::Network::build({1, 12, 12}, nn::reference_classifier(4), 2);
    auto wrong_shape = nn::Network::build({1, 10, 10}, nn::reference_classifier(3), 2);
    CHECK_THROWS_AS(train_ganmex(wrong_classes, ds, tiny_config(1)), std::invalid_argument);
    CHECK_THROWS_AS(train_ganmex(wrong_shape, ds, tiny_config(1)), std::invalid_argument);
    CHECK_THROWS_AS(train_ganmex(wrong_classes, data::LabeledDataset{}, tiny_config(1)), std::invalid_argument);
}

TEST_CASE("non-finite loss aborts with step and component") {
    const auto ds = data::gen_glyphs(3, 12, 10, 1);
    auto clf = nn::Network::build({1, 12, 12}, nn::reference_classifier(3), 2);
    auto cfg = tiny_config(50);
    cfg.d_optimizer.learning_rate = 1e308;
    try {
        train_ganmex(clf, ds, cfg);
        FAIL("expected divergence");
    } catch (const GanDiverged& e) {
        CHECK(e.step < 50);
        CHECK(!e.component.empty());
        CHECK(std::string(e.what()).find(e.component) != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip and classifier mismatch") {
    const auto ds = data::gen_glyphs(3, 12, 10, 1);
    auto clf = nn::Network::build({1, 12, 12}, nn::reference_classifier(3), 2);
    const auto model = train_ganmex(clf, ds, tiny_config(2));
    const auto dir = std::filesystem::temp_directory_path() / "ganmex_gan_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "model.gmx").string();
    save_model(model, path);
    const auto back = load_model(path, clf);
    CHECK(serialize_model(back) == serialize_model(model));
    CHECK(to_json(back.config) == to_json(model.config));
    const Tensor x = data::stack_images(ds, std::vector<std::size_t>{0, 1});
    const std::vector<std::size_t> t{1, 2};
    CHECK(generate_batch(back, x, t) == generate_batch(model, x, t));

    const auto other = nn::randomize_layer(clf, "Output", 77);
    CHECK_THROWS_AS(load_model(path, other), ClassifierMismatch);
    CHECK_NOTHROW(load_model_unchecked(path));

    auto bytes = serialize_model(model);
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 3)), io::FormatError);
    bytes[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bytes), io::FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("generate_baseline is deterministic and shape preserving") {
    const auto& m = fruit_model();
    const auto& x = fruit().test.images[0];
    const auto a = generate_baseline(m, x, 1);
    const auto b = generate_baseline(m, x, 1);
    CHECK(a.tensor() == b.tensor());
    CHECK(a.shape() == x.shape());
    CHECK_THROWS_AS(generate_baseline(m, x, 2), std::invalid_argument);
}

TEST_CASE("color fruit: baselines reach the target class near the input, changing mostly the fruit") {
    const auto& f = fruit();
    const auto& m = fruit_model();
    Rng rng(1);
    std::size_t success = 0;
    double gan = 0.0, rand = 0.0, zero = 0.0, on = 0.0, off = 0.0;
    const std::size_t n = f.test.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = f.test.images[i].tensor();
        const std::size_t ct = 1 - f.test.labels[i];
        const auto b = generate_baseline(m, f.test.images[i], ct).tensor();
        success += nn::predict_probs(f.classifier, b)[ct] > 0.8;
        gan += (b - x).l2_norm();
        const auto pool = f.train.indices_of_class(ct);
        rand += (f.train.images[pool[uniform_index(rng, pool.size())]].tensor() - x).l2_norm();
        zero += x.l2_norm();
        const auto& mask = f.test.masks[i];
        const std::size_t hw = mask.size();
        double s_on = 0.0, s_off = 0.0;
        std::size_t n_on = 0;
        for (std::size_t p = 0; p < hw; ++p) {
            double d = 0.0;
            for (std::size_t c = 0; c < 3; ++c) d += std::abs(b[c * hw + p] - x[c * hw + p]) / 3.0;
            (mask[p] ? s_on : s_off) += d;
            n_on += mask[p] ? 1 : 0;
        }
        on += s_on / static_cast<double>(n_on);
        off += s_off / static_cast<double>(hw - n_on);
    }
    MESSAGE("success " << double(success) / n << " L2 " << gan / n << " / " << rand / n << " / " << zero / n
                       << " on/off " << on / n << " / " << off / n);
    CHECK(double(success) / n >= 0.7);
    CHECK(gan < rand);
    CHECK(rand < zero);
    CHECK(on > 2.0 * off);
}

TEST_CASE("standalone GAN: class discriminator learns the real labels and ignores any classifier") {
    const auto& f = fruit();
    GanmexConfig cfg;
    cfg.steps = 150;
    cfg.seed = 8;
    const auto model = train_standalone_gan(f.train, cfg);
    REQUIRE(model.standalone());
    CHECK(nn::accuracy(*model.class_discriminator, f.train) >= 0.9);
    CHECK(model.classifier_hash == 0);

    // Loading against any classifier, trained or randomized, yields the same generator outputs.
    const auto dir = std::filesystem::temp_directory_path() / "ganmex_standalone_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "standalone.gmx").string();
    save_model(model, path);
    const auto randomized = nn::randomize_layer(nn::randomize_layer(f.classifier, "Output", 3), "CNN1", 4);
    const auto a = load_model(path, f.classifier);
    const auto b = load_model(path, randomized);
    const Tensor x = data::stack_images(f.test, std::vector<std::size_t>{0, 1, 2, 3});
    std::vector<std::size_t> t;
    for (std::size_t i = 0; i < 4; ++i) t.push_back(1 - f.test.labels[i]);
    CHECK(generate_batch(a, x, t) == generate_batch(b, x, t));
    CHECK(generate_batch(a, x, t) == generate_batch(model, x, t));
    std::filesystem::remove_all(dir);
}
