#include "ganmex/gan/ganmex.hpp"

#include <cmath>

#include "ganmex/io/binary.hpp"
#include "ganmex/nn/checkpoint.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::gan {

void GanmexConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ganmex config: " + what); };
    for (auto [name, v] : {std::pair{"lambda_src", lambda_src}, std::pair{"lambda_cls", lambda_cls},
                           std::pair{"lambda_rec", lambda_rec}, std::pair{"lambda_sim", lambda_sim},
                           std::pair{"lambda_cls_real", lambda_cls_real}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be a finite nonnegative number");
    }
    if (batch_size == 0) fail("batch_size must be positive");
    if (d_steps == 0) fail("d_steps must be positive");
    if (generator_width == 0) fail("generator_width must be positive");
    if (!(identity_margin > 0.0 && identity_margin < 0.5)) fail("identity_margin must lie in (0, 0.5)");
    g_optimizer.validate();
    d_optimizer.validate();
}

namespace {

nlohmann::json optimizer_json(const nn::OptimizerConfig& o) {
    return {{"kind", std::string(nn::to_string(o.kind))},
            {"learning_rate", o.learning_rate},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"epsilon", o.epsilon}};
}

nn::OptimizerConfig optimizer_from_json(const nlohmann::json& j, nn::OptimizerConfig o) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "kind") o.kind = nn::optimizer_kind_from_string(it.value().get<std::string>());
        else if (it.key() == "learning_rate") o.learning_rate = it.value().get<double>();
        else if (it.key() == "beta1") o.beta1 = it.value().get<double>();
        else if (it.key() == "beta2") o.beta2 = it.value().get<double>();
        else if (it.key() == "epsilon") o.epsilon = it.value().get<double>();
        else throw std::invalid_argument("ganmex config: unknown optimizer key '" + it.key() + "'");
    }
    return o;
}

Tensor one_hot_maps(std::span<const std::size_t> classes, std::size_t class_count, std::size_t h, std::size_t w) {
    Tensor t({classes.size(), class_count, h, w});
    for (std::size_t n = 0; n < classes.size(); ++n) {
        if (classes[n] >= class_count) {
            throw std::invalid_argument("class " + std::to_string(classes[n]) + " out of range for " +
                                        std::to_string(class_count) + " classes");
        }
        double* plane = t.data() + (n * class_count + classes[n]) * h * w;
        std::fill(plane, plane + h * w, 1.0);
    }
    return t;
}

std::vector<Tensor> grads_of(const Tape& tape, const std::vector<Var>& vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (auto v : vars) out.push_back(tape.grad(v));
    return out;
}

Var mean_log(Var p) { return ops::mean(ops::log_clamped(p, kLogEpsilon)); }

}  // namespace

nlohmann::json to_json(const GanmexConfig& c) {
    return {{"lambda_src", c.lambda_src},
            {"lambda_cls", c.lambda_cls},
            {"lambda_rec", c.lambda_rec},
            {"lambda_sim", c.lambda_sim},
            {"lambda_cls_real", c.lambda_cls_real},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"d_steps", c.d_steps},
            {"g_optimizer", optimizer_json(c.g_optimizer)},
            {"d_optimizer", optimizer_json(c.d_optimizer)},
            {"non_saturating", c.non_saturating},
            {"generator_width", c.generator_width},
            {"identity_margin", c.identity_margin},
            {"seed", c.seed}};
}

GanmexConfig config_from_json(const nlohmann::json& j) {
    GanmexConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        if (k == "lambda_src") c.lambda_src = v.get<double>();
        else if (k == "lambda_cls") c.lambda_cls = v.get<double>();
        else if (k == "lambda_rec") c.lambda_rec = v.get<double>();
        else if (k == "lambda_sim") c.lambda_sim = v.get<double>();
        else if (k == "lambda_cls_real") c.lambda_cls_real = v.get<double>();
        else if (k == "steps") c.steps = v.get<std::size_t>();
        else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
        else if (k == "d_steps") c.d_steps = v.get<std::size_t>();
        else if (k == "g_optimizer") c.g_optimizer = optimizer_from_json(v, c.g_optimizer);
        else if (k == "d_optimizer") c.d_optimizer = optimizer_from_json(v, c.d_optimizer);
        else if (k == "non_saturating") c.non_saturating = v.get<bool>();
        else if (k == "generator_width") c.generator_width = v.get<std::size_t>();
        else if (k == "identity_margin") c.identity_margin = v.get<double>();
        else if (k == "seed") c.seed = v.get<std::uint64_t>();
        else throw std::invalid_argument("ganmex config: unknown key '" + k + "'");
    }
    c.validate();
    return c;
}

GanmexModel init_model(const Shape& image_shape, std::size_t class_count, const GanmexConfig& cfg) {
    cfg.validate();
    if (image_shape.size() != 3) throw_shape_error("init_model", {image_shape}, "expected [C,H,W]");
    if (class_count < 2) throw std::invalid_argument("init_model: need at least two classes");
    const std::size_t c = image_shape[0], w = cfg.generator_width;
    using nn::LayerSpec;
    GanmexModel m;
    m.config = cfg;
    m.class_count = class_count;
    m.image_shape = image_shape;
    m.generator = nn::Network::build(
        {c + class_count, image_shape[1], image_shape[2]},
        {
            LayerSpec::conv2d("enc1", w, 4, 2, 1), LayerSpec::relu(),
            LayerSpec::conv2d("enc2", 2 * w, 4, 2, 1), LayerSpec::relu(),
            LayerSpec::conv2d("mid1", 2 * w, 3, 1, 1), LayerSpec::relu(),
            LayerSpec::conv2d("mid2", 2 * w, 3, 1, 1), LayerSpec::relu(),
            LayerSpec::upsample(2), LayerSpec::conv2d("dec1", w, 3, 1, 1), LayerSpec::relu(),
            LayerSpec::upsample(2), LayerSpec::conv2d("dec2", w, 3, 1, 1), LayerSpec::relu(),
            // Small output gain keeps the untrained generator close to the identity.
            LayerSpec::conv2d("out", c, 3, 1, 1, 0.01),
        },
        mix_seed(cfg.seed, 1));
    m.discriminator = nn::Network::build(image_shape,
                                         {
                                             LayerSpec::conv2d("d1", 16, 4, 2, 1), LayerSpec::leaky_relu(0.2),
                                             LayerSpec::conv2d("d2", 32, 4, 2, 1), LayerSpec::leaky_relu(0.2),
                                             LayerSpec::flatten(), LayerSpec::dense("d_out", 1), LayerSpec::sigmoid(),
                                         },
                                         mix_seed(cfg.seed, 2));
    return m;
}

Var generate(const GanmexModel& model, Tape& tape, std::span<const Var> g_params, Var x,
             std::span<const std::size_t> classes) {
    const Shape& s = x.shape();
    if (s.size() != 4 || Shape(s.begin() + 1, s.end()) != model.image_shape) {
        throw_shape_error("generate", {s, model.image_shape}, "expected [N, C, H, W] images");
    }
    if (classes.size() != s[0]) throw std::invalid_argument("generate: one class per image required");
    Var cond = tape.constant(one_hot_maps(classes, model.class_count, s[2], s[3]));
    Var residual = model.generator.forward(tape, g_params, ops::concat_channels(x, cond));
    const double m = model.config.identity_margin;
    Var u = ops::add_scalar(ops::scale(x, 1.0 - 2.0 * m), m);
    Var logit = ops::log_clamped(u, kLogEpsilon) - ops::log_clamped(ops::one_minus(u), kLogEpsilon);
    return ops::sigmoid(logit + residual);
}

LossWeights LossWeights::from(const GanmexConfig& cfg) {
    return {cfg.lambda_src, cfg.lambda_cls, cfg.lambda_rec, cfg.lambda_sim, cfg.non_saturating};
}

GeneratorLossVars generator_loss_from_parts(Var x, Var x_tilde, Var d_fake, Var s_target, Var x_rec,
                                            const LossWeights& w) {
    GeneratorLossVars out;
    out.adversarial = w.non_saturating ? ops::scale(mean_log(d_fake), -1.0) : mean_log(ops::one_minus(d_fake));
    out.classification = ops::scale(mean_log(s_target), -1.0);
    out.reconstruction = ops::mean(ops::abs(x - x_rec));
    out.similarity = ops::mean(ops::abs(x - x_tilde));
    out.total = ops::scale(out.adversarial, w.src) + ops::scale(out.classification, w.cls) +
                ops::scale(out.reconstruction, w.rec) + ops::scale(out.similarity, w.sim);
    return out;
}

namespace {

struct GeneratorPass {
    GeneratorLossVars vars;
    std::vector<Var> g_params;
};

GeneratorPass generator_pass(const GanmexModel& model, const nn::Network& classifier, Tape& tape, const Tensor& x,
                             std::span<const std::size_t> labels, std::span<const std::size_t> targets,
                             bool trainable) {
    if (labels.size() != x.dim(0) || targets.size() != x.dim(0)) {
        throw std::invalid_argument("generator_loss: one label and one target per image required");
    }
    GeneratorPass pass;
    pass.g_params = model.generator.bind(tape, trainable);
    const auto d_params = model.discriminator.bind(tape, false);
    const auto s_params = classifier.bind(tape, false);
    Var xv = tape.constant(x);
    Var fake = generate(model, tape, pass.g_params, xv, targets);
    Var d_fake = model.discriminator.forward(tape, d_params, fake);
    Var s_target = ops::pick(classifier.forward(tape, s_params, fake), targets);
    Var rec = generate(model, tape, pass.g_params, fake, labels);
    pass.vars = generator_loss_from_parts(xv, fake, d_fake, s_target, rec, LossWeights::from(model.config));
    return pass;
}

GeneratorLoss values_of(const GeneratorLossVars& v) {
    return {v.total.value().item(), v.adversarial.value().item(), v.classification.value().item(),
            v.reconstruction.value().item(), v.similarity.value().item()};
}

}  // namespace

GeneratorLoss generator_loss(const GanmexModel& model, const nn::Network& classifier, const Tensor& x,
                             std::span<const std::size_t> labels, std::span<const std::size_t> targets) {
    Tape tape;
    return values_of(generator_pass(model, classifier, tape, x, labels, targets, false).vars);
}

Var discriminator_loss_var(const nn::Network& discriminator, Tape& tape, std::span<const Var> d_params, Var real,
                           Var fake) {
    Var d_real = discriminator.forward(tape, d_params, real);
    Var d_fake = discriminator.forward(tape, d_params, fake);
    return ops::scale(mean_log(d_real) + mean_log(ops::one_minus(d_fake)), -1.0);
}

double discriminator_loss(const GanmexModel& model, const Tensor& x, std::span<const std::size_t> targets) {
    if (x.dim(0) == 0) throw std::invalid_argument("discriminator_loss: empty batch");
    const Tensor fake = generate_batch(model, x, targets);
    Tape tape;
    const auto d_params = model.discriminator.bind(tape, false);
    return discriminator_loss_var(model.discriminator, tape, d_params, tape.constant(x), tape.constant(fake))
        .value()
        .item();
}

GanDiverged::GanDiverged(std::size_t step_, std::string component_)
    : std::runtime_error("GAN training diverged at step " + std::to_string(step_) + ": " + component_ +
                         " loss is not finite"),
      step(step_),
      component(std::move(component_)) {}

std::size_t sample_target(Rng& rng, std::size_t label, std::size_t class_count) {
    if (class_count < 2) throw std::invalid_argument("sample_target: need at least two classes");
    std::size_t t = uniform_index(rng, class_count - 1);
    return t >= label ? t + 1 : t;
}

namespace {

void check_finite(std::size_t step, const char* component, double v) {
    if (!std::isfinite(v)) throw GanDiverged(step, component);
}

GanmexModel train_loop(GanmexModel model, const nn::Network* frozen, const data::LabeledDataset& ds,
                       const GanmexConfig& cfg, const StepCallback& on_step) {
    Rng rng(mix_seed(cfg.seed, 100));
    nn::Optimizer g_opt(cfg.g_optimizer, model.generator.parameters());
    nn::Optimizer d_opt(cfg.d_optimizer, model.discriminator.parameters());
    std::optional<nn::Optimizer> c_opt;
    if (model.class_discriminator) c_opt.emplace(cfg.d_optimizer, model.class_discriminator->parameters());

    std::vector<std::size_t> idx(cfg.batch_size), labels(cfg.batch_size), targets(cfg.batch_size);
    auto draw_batch = [&] {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            idx[b] = uniform_index(rng, ds.size());
            labels[b] = ds.labels[idx[b]];
            targets[b] = sample_target(rng, labels[b], ds.class_count);
        }
        return data::stack_images(ds, idx);
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        StepRecord rec;
        rec.step = step;
        for (std::size_t k = 0; k < cfg.d_steps; ++k) {
            const Tensor x = draw_batch();
            const Tensor fake = generate_batch(model, x, targets);
            Tape tape;
            const auto d_params = model.discriminator.bind(tape, true);
            Var loss = discriminator_loss_var(model.discriminator, tape, d_params, tape.constant(x), tape.constant(fake));
            rec.d_loss = loss.value().item();
            check_finite(step, "discriminator", rec.d_loss);
            if (model.class_discriminator) {
                const auto c_params = model.class_discriminator->bind(tape, true);
                Var probs = model.class_discriminator->forward(tape, c_params, tape.constant(x));
                Var ce = ops::scale(mean_log(ops::pick(probs, labels)), -1.0);
                rec.cls_real = ce.value().item();
                check_finite(step, "real classification", rec.cls_real);
                tape.backward(ops::scale(ce, cfg.lambda_cls_real));
                c_opt->step(model.class_discriminator->parameters(), grads_of(tape, c_params));
            }
            tape.backward(loss);
            d_opt.step(model.discriminator.parameters(), grads_of(tape, d_params));
        }

        const Tensor x = draw_batch();
        Tape tape;
        const nn::Network& s = frozen ? *frozen : *model.class_discriminator;
        auto pass = generator_pass(model, s, tape, x, labels, targets, true);
        rec.g = values_of(pass.vars);
        check_finite(step, "generator adversarial", rec.g.adversarial);
        check_finite(step, "generator classification", rec.g.classification);
        check_finite(step, "generator reconstruction", rec.g.reconstruction);
        check_finite(step, "generator similarity", rec.g.similarity);
        tape.backward(pass.vars.total);
        g_opt.step(model.generator.parameters(), grads_of(tape, pass.g_params));
        model.trained_steps = step + 1;
        if (on_step) on_step(rec);
    }
    return model;
}

void check_dataset(const data::LabeledDataset& ds, const char* who) {
    if (ds.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
    ds.validate();
    if (ds.class_count < 2) throw std::invalid_argument(std::string(who) + ": need at least two classes");
}

}  // namespace

GanmexModel train_ganmex(const nn::Network& classifier, const data::LabeledDataset& ds, const GanmexConfig& cfg,
                         const StepCallback& on_step) {
    check_dataset(ds, "train_ganmex");
    if (classifier.input_shape() != ds.image_shape() || classifier.output_size() != ds.class_count ||
        !classifier.ends_with_softmax()) {
        throw std::invalid_argument("train_ganmex: classifier does not match the dataset's image shape and classes");
    }
    GanmexModel model = init_model(ds.image_shape(), ds.class_count, cfg);
    model.classifier_hash = nn::network_hash(classifier);
    return train_loop(std::move(model), &classifier, ds, cfg, on_step);
}

GanmexModel train_standalone_gan(const data::LabeledDataset& ds, const GanmexConfig& cfg,
                                 const StepCallback& on_step) {
    check_dataset(ds, "train_standalone_gan");
    GanmexModel model = init_model(ds.image_shape(), ds.class_count, cfg);
    model.class_discriminator =
        nn::Network::build(ds.image_shape(), nn::reference_classifier(ds.class_count), mix_seed(cfg.seed, 3));
    return train_loop(std::move(model), nullptr, ds, cfg, on_step);
}

Tensor generate_batch(const GanmexModel& model, const Tensor& x, std::span<const std::size_t> targets) {
    Tape tape;
    const auto params = model.generator.bind(tape, false);
    return generate(model, tape, params, tape.constant(x), targets).value();
}

data::Image generate_baseline(const GanmexModel& model, const data::Image& x, std::size_t target) {
    if (model.trained_steps == 0) throw std::invalid_argument("generate_baseline: model is untrained");
    if (target >= model.class_count) {
        throw std::invalid_argument("generate_baseline: target class " + std::to_string(target) + " out of range");
    }
    const std::size_t t[1] = {target};
    const Tensor out = generate_batch(model, nn::as_batch(x.tensor()), t);
    return data::Image(out.reshaped(x.shape()));
}

std::string serialize_model(const GanmexModel& m) {
    io::BinaryWriter w;
    w.raw(kGanMagic);
    w.str(to_json(m.config).dump());
    w.u64(m.class_count);
    w.u64(m.image_shape.size());
    for (auto d : m.image_shape) w.u64(d);
    w.u64(m.classifier_hash);
    w.u64(m.trained_steps);
    w.str(nn::serialize_network(m.generator));
    w.str(nn::serialize_network(m.discriminator));
    w.u8(m.class_discriminator ? 1 : 0);
    if (m.class_discriminator) w.str(nn::serialize_network(*m.class_discriminator));
    return w.bytes();
}

GanmexModel deserialize_model(std::string_view bytes) {
    io::BinaryReader r(bytes);
    io::expect_magic(r, kGanMagic);
    GanmexModel m;
    try {
        m.config = config_from_json(nlohmann::json::parse(r.str("config")));
    } catch (const io::FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw io::FormatError(std::string("ganmex checkpoint: invalid config: ") + e.what());
    }
    m.class_count = r.u64("class_count");
    const auto rank = r.u64("image rank");
    if (rank != 3) throw io::FormatError("ganmex checkpoint: image rank must be 3 at byte " + std::to_string(r.offset()));
    for (int i = 0; i < 3; ++i) m.image_shape.push_back(r.u64("image extent"));
    m.classifier_hash = r.u64("classifier_hash");
    m.trained_steps = r.u64("trained_steps");
    m.generator = nn::deserialize_network(r.str("generator"));
    m.discriminator = nn::deserialize_network(r.str("discriminator"));
    const auto has_cls = r.u8("class discriminator flag");
    if (has_cls > 1) throw io::FormatError("ganmex checkpoint: invalid class discriminator flag");
    if (has_cls) m.class_discriminator = nn::deserialize_network(r.str("class discriminator"));
    r.expect_end("ganmex checkpoint");
    const Shape g_in{m.image_shape[0] + m.class_count, m.image_shape[1], m.image_shape[2]};
    if (m.generator.input_shape() != g_in || m.discriminator.input_shape() != m.image_shape) {
        throw io::FormatError("ganmex checkpoint: network shapes disagree with the header");
    }
    return m;
}

void save_model(const GanmexModel& model, const std::string& path) {
    io::write_file_atomic(path, serialize_model(model));
}

GanmexModel load_model_unchecked(const std::string& path) { return deserialize_model(io::read_file(path)); }

GanmexModel load_model(const std::string& path, const nn::Network& classifier) {
    GanmexModel m = load_model_unchecked(path);
    const auto h = nn::network_hash(classifier);
    if (!m.standalone() && h != m.classifier_hash) {
        throw ClassifierMismatch("ganmex model " + path + " was trained against classifier hash " +
                                 std::to_string(m.classifier_hash) + ", but the supplied classifier hashes to " +
                                 std::to_string(h));
    }
    return m;
}

}  // namespace ganmex::gan
