#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>

#include <CLI11.hpp>

#include "cli/png.hpp"
#include "ganmex/attribution/attribution.hpp"
#include "ganmex/baselines/baselines.hpp"
#include "ganmex/data/generators.hpp"
#include "ganmex/evaluation/evaluation.hpp"
#include "ganmex/io/binary.hpp"
#include "ganmex/nn/checkpoint.hpp"
#include "ganmex/nn/train.hpp"

namespace ganmex::cli {

namespace fs = std::filesystem;
using evaluation::format_double;
using nlohmann::json;

namespace {

// ---- schemas ----------------------------------------------------------------

KeySpec integer(std::string k, std::uint64_t v) { return {std::move(k), KeyType::integer, v}; }
KeySpec number(std::string k, double v) { return {std::move(k), KeyType::number, v}; }
KeySpec boolean(std::string k, bool v) { return {std::move(k), KeyType::boolean, v}; }
KeySpec text(std::string k, std::string v) { return {std::move(k), KeyType::string, std::move(v)}; }
KeySpec choice(std::string k, json v) { return {std::move(k), KeyType::class_choice, std::move(v)}; }
KeySpec numbers(std::string k, std::vector<double> v) { return {std::move(k), KeyType::number_list, v}; }

void append(std::vector<KeySpec>& to, std::vector<KeySpec> more) {
    to.insert(to.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

std::vector<KeySpec> ganmex_keys(std::size_t steps) {
    gan::GanmexConfig defaults;
    defaults.steps = steps;
    std::vector<KeySpec> out;
    const json flat = flatten(gan::to_json(defaults), "ganmex.");
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        const auto& v = it.value();
        const KeyType t = v.is_boolean()         ? KeyType::boolean
                          : v.is_string()        ? KeyType::string
                          : v.is_number_float()  ? KeyType::number
                                                 : KeyType::integer;
        out.push_back({it.key(), t, v});
    }
    out.push_back(boolean("ganmex.standalone", false));
    return out;
}

std::vector<KeySpec> attribution_keys() {
    return {text("classifier", ""),
            text("ganmex.model", ""),
            text("data.train", ""),
            text("data.eval", ""),
            text("method.kind", "ig"),
            integer("method.steps", 200),
            integer("method.samples", 200),
            integer("method.background_count", 16),
            integer("method.seed", 0),
            text("baseline.kind", "zero"),
            number("baseline.value", 0.5),
            number("baseline.sigma", 1.0),
            integer("baseline.seed", 0)};
}

std::vector<KeySpec> sample_keys() {
    return {integer("samples.count", 10), integer("samples.seed", 0), choice("origin", "label"),
            choice("target", "next")};
}

std::vector<KeySpec> schema_for(const std::string& command) {
    std::vector<KeySpec> s;
    if (command == "make-dataset") {
        s = {text("dataset.kind", "glyphs"),        integer("dataset.classes", 10),
             integer("dataset.size", 16),           integer("dataset.per_class", 200),
             integer("dataset.test_per_class", 50), integer("dataset.seed", 0),
             integer("dataset.objects", 2),         integer("dataset.scenes", 2),
             text("dataset.idx_images", ""),        text("dataset.idx_labels", ""),
             text("dataset.idx_test_images", ""),   text("dataset.idx_test_labels", "")};
    } else if (command == "train-classifier") {
        s = {text("data.train", ""),
             text("data.eval", ""),
             text("model.arch", "reference"),
             integer("train.epochs", 10),
             integer("train.batch_size", 32),
             text("train.optimizer", "adam"),
             number("train.learning_rate", 1e-3),
             integer("train.seed", 0)};
    } else if (command == "train-ganmex" || command == "sweep") {
        s = {text("data.train", ""), text("data.eval", ""), text("classifier", ""), integer("summary.samples", 200),
             integer("summary.seed", 0), integer("log.every", 10)};
        append(s, ganmex_keys(command == "sweep" ? 300 : 1500));
        if (command == "sweep") {
            append(s, {numbers("sweep.lambda_cls", {1.0}), numbers("sweep.lambda_rec", {10.0}),
                       numbers("sweep.lambda_sim", {1.0})});
        }
    } else if (command == "attribute") {
        s = attribution_keys();
        append(s, sample_keys());
        s.push_back(boolean("render.png", true));
    } else if (command == "evaluate") {
        s = attribution_keys();
        append(s, sample_keys());
        append(s, {text("metrics", "aopc,gini"), integer("aopc.L", 100), integer("roar.class_a", 0),
                   integer("roar.class_b", 1), numbers("roar.fractions", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}),
                   integer("roar.epochs", 5), integer("roar.seed", 0)});
    } else if (command == "sanity-check") {
        s = attribution_keys();
        append(s, {integer("cascade.samples", 20), integer("cascade.seed", 0), text("cascade.layers", ""),
                   integer("cascade.ganmex_steps", 300)});
    } else if (command == "distance-report") {
        s = {text("data.train", ""),
             text("data.eval", ""),
             text("classifier", ""),
             text("ganmex.model", ""),
             text("baselines", "zero,max,blur,mdts,random_target,ganmex"),
             number("baseline.value", 0.5),
             number("baseline.sigma", 1.0),
             integer("baseline.seed", 0),
             integer("pairs", 1000),
             integer("seed", 0),
             integer("histogram.bins", 20)};
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }
    return s;
}

// ---- shared helpers -----------------------------------------------------------

class Output {
public:
    explicit Output(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
    std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }
    void write(const std::string& name, std::string_view bytes) const { io::write_file_atomic(path(name), bytes); }

private:
    std::string dir_;
};

data::LabeledDataset load_data(const RunConfig& cfg, const std::string& key) {
    cfg.require_file(key);
    return data::load_dataset(cfg.text(key));
}

std::optional<data::LabeledDataset> load_optional_data(const RunConfig& cfg, const std::string& key) {
    if (cfg.text(key).empty()) return std::nullopt;
    return load_data(cfg, key);
}

nn::Network load_classifier(const RunConfig& cfg) {
    cfg.require_file("classifier");
    return nn::load_network(cfg.text("classifier"));
}

std::shared_ptr<const gan::GanmexModel> load_ganmex(const RunConfig& cfg, const nn::Network& classifier) {
    if (cfg.text("ganmex.model").empty()) return nullptr;
    cfg.require_file("ganmex.model");
    return std::make_shared<const gan::GanmexModel>(gan::load_model(cfg.text("ganmex.model"), classifier));
}

void check_compatible(const nn::Network& net, const data::LabeledDataset& ds, const std::string& key) {
    if (ds.image_shape() != net.input_shape()) {
        throw ConfigError(key + ": image shape " + ganmex::to_string(ds.image_shape()) +
                          " does not match the classifier input " + ganmex::to_string(net.input_shape()));
    }
}

baselines::BaselineSpec baseline_spec(const RunConfig& cfg, const std::string& kind_key,
                                      std::shared_ptr<const gan::GanmexModel> model) {
    baselines::BaselineSpec b;
    try {
        b.kind = baselines::baseline_kind_from_string(cfg.text(kind_key));
    } catch (const std::exception& e) {
        throw ConfigError(kind_key + ": " + e.what());
    }
    b.value = cfg.number("baseline.value");
    b.sigma = cfg.number("baseline.sigma");
    b.seed = cfg.seed("baseline.seed");
    if (b.kind == baselines::BaselineKind::ganmex) {
        if (!model) throw ConfigError(kind_key + " = ganmex requires ganmex.model");
        b.model = std::move(model);
    }
    return b;
}

attribution::Method method_of(const RunConfig& cfg) {
    attribution::Method m;
    try {
        m.kind = attribution::method_kind_from_string(cfg.text("method.kind"));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("method.kind: ") + e.what());
    }
    m.steps = cfg.count("method.steps");
    m.samples = cfg.count("method.samples");
    m.background_count = cfg.count("method.background_count");
    m.seed = cfg.seed("method.seed");
    try {
        m.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("method: ") + e.what());
    }
    return m;
}

/// First `count` entries of a seeded permutation of [0, n).
std::vector<std::size_t> choose(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(seed);
    count = std::min(count, n);
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
    pool.resize(count);
    return pool;
}

std::size_t resolve_class(const json& v, const std::string& key, std::size_t class_count,
                          const std::function<std::optional<std::size_t>(const std::string&)>& keyword) {
    std::size_t c = 0;
    if (v.is_string()) {
        const auto r = keyword(v.get<std::string>());
        if (!r) throw ConfigError(key + ": unknown keyword '" + v.get<std::string>() + "'");
        c = *r;
    } else {
        c = v.get<std::size_t>();
    }
    if (c >= class_count) {
        throw ConfigError(key + ": class " + std::to_string(c) + " is out of range for " + std::to_string(class_count) +
                          " classes");
    }
    return c;
}

struct Pair {
    std::size_t c_o, c_t;
};

Pair resolve_pair(const RunConfig& cfg, const nn::Network& net, const data::LabeledDataset& eval, std::size_t index) {
    const std::size_t K = eval.class_count, label = eval.labels[index];
    const std::size_t c_o = resolve_class(cfg.raw("origin"), "origin", K, [&](const std::string& w) {
        if (w == "label") return std::optional<std::size_t>(label);
        if (w == "predicted") return std::optional<std::size_t>(nn::predict_class(net, eval.images[index].tensor()));
        return std::optional<std::size_t>();
    });
    const std::size_t c_t = resolve_class(cfg.raw("target"), "target", K, [&](const std::string& w) {
        if (w == "next") return std::optional<std::size_t>((c_o + 1) % K);
        if (w == "label") return std::optional<std::size_t>(label);
        if (w == "random") {
            Rng rng(mix_seed(cfg.seed("samples.seed"), index));
            return std::optional<std::size_t>(gan::sample_target(rng, c_o, K));
        }
        return std::optional<std::size_t>();
    });
    if (c_o == c_t) {
        throw ConfigError("one-vs-one explanation needs distinct classes, but origin and target are both " +
                          std::to_string(c_o) + " for sample " + std::to_string(index));
    }
    return {c_o, c_t};
}

struct AttributionSetup {
    nn::Network net;
    data::LabeledDataset train, eval;
    baselines::BaselineSpec baseline;
    attribution::Method method;
};

AttributionSetup attribution_setup(const RunConfig& cfg) {
    AttributionSetup s;
    s.net = load_classifier(cfg);
    s.train = load_data(cfg, "data.train");
    s.eval = load_data(cfg, "data.eval");
    check_compatible(s.net, s.train, "data.train");
    check_compatible(s.net, s.eval, "data.eval");
    s.method = method_of(cfg);
    s.baseline = baseline_spec(cfg, "baseline.kind", load_ganmex(cfg, s.net));
    return s;
}

attribution::SaliencyMap attribute_one(const AttributionSetup& s, const data::Image& x, std::size_t c_o,
                                       std::size_t c_t) {
    attribution::AttributionRequest req;
    req.x = x;
    req.c_o = c_o;
    req.c_t = c_t;
    req.method = s.method;
    req.baseline = s.baseline;
    return attribution::attribute(s.net, req, s.train);
}

std::string numbered(const std::string& stem, std::size_t k, std::size_t width = 4) {
    std::string n = std::to_string(k);
    if (n.size() < width) n.insert(0, width - n.size(), '0');
    return stem + "_" + n;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

// ---- commands ------------------------------------------------------------------

void make_dataset(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto& kind = cfg.text("dataset.kind");
    const auto size = cfg.count("dataset.size"), classes = cfg.count("dataset.classes");
    const auto seed = cfg.seed("dataset.seed");
    auto make = [&](std::size_t per_class, data::Split split) -> data::LabeledDataset {
        try {
            if (kind == "glyphs") return data::gen_glyphs(classes, size, per_class, seed, split);
            if (kind == "colored_glyphs") return data::gen_colored_glyphs(classes, size, per_class, seed, split);
            if (kind == "color_fruit") return data::gen_color_fruit(size, per_class, seed, split);
            if (kind == "composite") {
                return data::gen_composite(cfg.count("dataset.objects"), cfg.count("dataset.scenes"), size, per_class,
                                           seed, split);
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("dataset: ") + e.what());
        }
        throw ConfigError("dataset.kind: unknown kind '" + kind +
                          "' (glyphs, colored_glyphs, color_fruit, composite, idx)");
    };
    data::LabeledDataset train, test;
    if (kind == "idx") {
        cfg.require_file("dataset.idx_images");
        cfg.require_file("dataset.idx_labels");
        train = data::load_idx(cfg.text("dataset.idx_images"), cfg.text("dataset.idx_labels"));
        if (!cfg.text("dataset.idx_test_images").empty()) {
            cfg.require_file("dataset.idx_test_images");
            cfg.require_file("dataset.idx_test_labels");
            test = data::load_idx(cfg.text("dataset.idx_test_images"), cfg.text("dataset.idx_test_labels"));
            test.split = data::Split::test;
        }
    } else {
        train = make(cfg.count("dataset.per_class"), data::Split::train);
        if (cfg.count("dataset.test_per_class") > 0) test = make(cfg.count("dataset.test_per_class"), data::Split::test);
    }
    std::string summary = "split,class,count\n";
    auto tally = [&](const data::LabeledDataset& ds, const char* split) {
        for (std::size_t c = 0; c < ds.class_count; ++c) {
            summary += std::string(split) + "," + std::to_string(c) + "," +
                       std::to_string(ds.indices_of_class(c).size()) + "\n";
        }
    };
    data::save_dataset(train, out.path("train.dataset"));
    tally(train, "train");
    if (!test.empty()) {
        data::save_dataset(test, out.path("test.dataset"));
        tally(test, "test");
    }
    out.write("dataset_summary.csv", summary);
    log << "wrote " << train.size() << " train and " << test.size() << " test images\n";
}

void train_classifier_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto train = load_data(cfg, "data.train");
    const auto eval = load_optional_data(cfg, "data.eval");
    const auto& arch = cfg.text("model.arch");
    std::vector<nn::LayerSpec> layers;
    if (arch == "reference") layers = nn::reference_classifier(train.class_count);
    else if (arch == "linear") layers = nn::linear_classifier(train.class_count);
    else throw ConfigError("model.arch: unknown architecture '" + arch + "' (reference, linear)");

    nn::TrainConfig tc;
    tc.epochs = cfg.count("train.epochs");
    tc.batch_size = cfg.count("train.batch_size");
    tc.seed = cfg.seed("train.seed");
    try {
        tc.optimizer.kind = nn::optimizer_kind_from_string(cfg.text("train.optimizer"));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("train.optimizer: ") + e.what());
    }
    tc.optimizer.learning_rate = cfg.number("train.learning_rate");
    try {
        tc.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    nn::TrainLog tlog;
    const auto net = nn::train_classifier(train, layers, tc, &tlog);
    nn::save_network(net, out.path("classifier.bin"));

    std::string loss = "epoch,loss\n";
    for (std::size_t e = 0; e < tlog.epoch_loss.size(); ++e) {
        loss += std::to_string(e + 1) + "," + format_double(tlog.epoch_loss[e]) + "\n";
    }
    out.write("train_log.csv", loss);
    std::string metrics = "split,accuracy,cross_entropy\n";
    metrics += "train," + format_double(nn::accuracy(net, train)) + "," + format_double(nn::cross_entropy(net, train)) + "\n";
    if (eval) {
        check_compatible(net, *eval, "data.eval");
        const double acc = nn::accuracy(net, *eval);
        metrics += "eval," + format_double(acc) + "," + format_double(nn::cross_entropy(net, *eval)) + "\n";
        log << "eval accuracy " << acc << "\n";
    }
    out.write("metrics.csv", metrics);
}

gan::GanmexConfig ganmex_config(const RunConfig& cfg) {
    json nested = unflatten(cfg.resolved(), "ganmex.");
    nested.erase("standalone");
    nested.erase("model");
    try {
        return gan::config_from_json(nested);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("ganmex: ") + e.what());
    }
}

gan::StepCallback step_logger(std::string& csv, std::size_t every, std::size_t total, std::ostream& log) {
    csv = "step,d_loss,cls_real,g_total,adversarial,classification,reconstruction,similarity\n";
    return [&csv, every, total, &log](const gan::StepRecord& r) {
        if (every == 0 || (r.step % every != 0 && r.step + 1 != total)) return;
        csv += std::to_string(r.step) + "," + format_double(r.d_loss) + "," + format_double(r.cls_real) + "," +
               format_double(r.g.total) + "," + format_double(r.g.adversarial) + "," +
               format_double(r.g.classification) + "," + format_double(r.g.reconstruction) + "," +
               format_double(r.g.similarity) + "\n";
        if (r.step % 100 == 0) log << "step " << r.step << "/" << total << " d_loss " << r.d_loss << "\n";
    };
}

std::string summary_csv(const BaselineSummary& s) {
    std::string out = "metric,value\n";
    out += "samples," + std::to_string(s.samples) + "\n";
    out += "success_rate," + format_double(s.success_rate) + "\n";
    out += "mean_distance," + format_double(s.mean_distance) + "\n";
    if (s.color_preservation) out += "color_preservation," + format_double(*s.color_preservation) + "\n";
    return out;
}

gan::GanmexModel train_model(const RunConfig& cfg, const gan::GanmexConfig& gc, const nn::Network& classifier,
                             const data::LabeledDataset& train, std::string& log_csv, std::ostream& log) {
    const auto cb = step_logger(log_csv, cfg.count("log.every"), gc.steps, log);
    return cfg.flag("ganmex.standalone") ? gan::train_standalone_gan(train, gc, cb)
                                         : gan::train_ganmex(classifier, train, gc, cb);
}

void train_ganmex_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto train = load_data(cfg, "data.train");
    const auto eval = load_optional_data(cfg, "data.eval");
    const auto classifier = load_classifier(cfg);
    check_compatible(classifier, train, "data.train");
    const auto gc = ganmex_config(cfg);
    std::string log_csv;
    const auto model = train_model(cfg, gc, classifier, train, log_csv, log);
    gan::save_model(model, out.path("ganmex.bin"));
    out.write("gan_log.csv", log_csv);
    if (eval) {
        check_compatible(classifier, *eval, "data.eval");
        const auto s = summarize_baselines(classifier, model, *eval, cfg.count("summary.samples"), cfg.seed("summary.seed"));
        out.write("summary.csv", summary_csv(s));
        log << "target success " << s.success_rate << ", mean distance " << s.mean_distance << "\n";
    }
}

void sweep_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto train = load_data(cfg, "data.train");
    const auto eval = load_optional_data(cfg, "data.eval");
    const auto classifier = load_classifier(cfg);
    check_compatible(classifier, train, "data.train");
    if (eval) check_compatible(classifier, *eval, "data.eval");
    const auto base = ganmex_config(cfg);
    const auto cls = cfg.numbers("sweep.lambda_cls"), rec = cfg.numbers("sweep.lambda_rec"),
               sim = cfg.numbers("sweep.lambda_sim");
    if (cls.empty() || rec.empty() || sim.empty()) throw ConfigError("sweep: every lambda grid needs a value");

    std::string csv = "cell,lambda_cls,lambda_rec,lambda_sim,status,success_rate,mean_distance,color_preservation\n";
    std::size_t cell = 0;
    for (double a : cls) {
        for (double b : rec) {
            for (double c : sim) {
                const std::string name = numbered("cell", cell, 3);
                std::string row = std::to_string(cell) + "," + format_double(a) + "," + format_double(b) + "," +
                                  format_double(c) + ",";
                try {
                    auto gc = base;
                    gc.lambda_cls = a;
                    gc.lambda_rec = b;
                    gc.lambda_sim = c;
                    gc.validate();
                    log << name << ": lambda_cls " << a << " lambda_rec " << b << " lambda_sim " << c << "\n";
                    std::string log_csv;
                    const auto model = train_model(cfg, gc, classifier, train, log_csv, log);
                    const Output cell_out(out.path(name));
                    gan::save_model(model, cell_out.path("ganmex.bin"));
                    cell_out.write("gan_log.csv", log_csv);
                    row += "ok,";
                    if (eval) {
                        const auto s = summarize_baselines(classifier, model, *eval, cfg.count("summary.samples"),
                                                           cfg.seed("summary.seed"));
                        row += format_double(s.success_rate) + "," + format_double(s.mean_distance) + "," +
                               (s.color_preservation ? format_double(*s.color_preservation) : "");
                    } else {
                        row += ",,";
                    }
                } catch (const std::exception& e) {
                    log << name << " failed: " << e.what() << "\n";
                    row += "failed: " + csv_safe(e.what()) + ",,,";
                }
                csv += row + "\n";
                ++cell;
            }
        }
    }
    out.write("sweep.csv", csv);
}

void attribute_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto s = attribution_setup(cfg);
    const auto picks = choose(s.eval.size(), cfg.count("samples.count"), cfg.seed("samples.seed"));
    std::vector<Pair> pairs;
    for (auto i : picks) pairs.push_back(resolve_pair(cfg, s.net, s.eval, i));

    std::string index = "sample,index,label,c_o,c_t,score_delta,baseline_score_delta,attribution_sum\n";
    for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto i = picks[k];
        const auto& x = s.eval.images[i];
        const auto map = attribute_one(s, x, pairs[k].c_o, pairs[k].c_t);
        const std::string stem = numbered("saliency", k);
        attribution::save_saliency(map, out.path(stem + ".csv"));
        const double bdelta = map.provenance.value("baseline_score_delta", std::nan(""));
        index += std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(s.eval.labels[i]) + "," +
                 std::to_string(pairs[k].c_o) + "," + std::to_string(pairs[k].c_t) + "," +
                 format_double(map.provenance.at("score_delta").get<double>()) + "," + format_double(bdelta) + "," +
                 format_double(map.sum()) + "\n";
        if (cfg.flag("render.png")) {
            write_png(render_saliency(map), out.path(stem + ".png"));
            write_png(render_image(x), out.path(numbered("input", k) + ".png"));
            const auto kind = s.method.kind;
            if (kind != attribution::MethodKind::eg && kind != attribution::MethodKind::deepshap) {
                write_png(render_image(baselines::make_baseline(s.baseline.with_target(pairs[k].c_t), x, s.train)),
                          out.path(numbered("baseline", k) + ".png"));
            }
        }
    }
    out.write("attributions.csv", index);
    log << "attributed " << picks.size() << " samples\n";
}

void evaluate_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto metrics = cfg.list("metrics");
    static const std::vector<std::string> known{"aopc", "gini", "faithfulness", "monotonicity",
                                                "inverse_localization", "roar"};
    if (metrics.empty()) throw ConfigError("metrics: at least one metric is required");
    for (const auto& m : metrics) {
        if (std::find(known.begin(), known.end(), m) == known.end()) {
            throw ConfigError("metrics: unknown metric '" + m +
                              "' (aopc, gini, faithfulness, monotonicity, inverse_localization, roar)");
        }
        if (std::count(metrics.begin(), metrics.end(), m) > 1) throw ConfigError("metrics: '" + m + "' listed twice");
    }
    const auto s = attribution_setup(cfg);
    const auto has = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };

    const bool per_sample = std::any_of(metrics.begin(), metrics.end(), [](const auto& m) { return m != "roar"; });
    if (per_sample) {
        const auto picks = choose(s.eval.size(), cfg.count("samples.count"), cfg.seed("samples.seed"));
        std::map<std::string, evaluation::MetricReport> reports;
        for (const auto& m : metrics) {
            reports[m].metric = m;
            reports[m].config = cfg.resolved();
        }
        if (has("inverse_localization") && !s.eval.has_masks()) {
            throw ConfigError("metrics: inverse_localization needs a dataset with feature masks");
        }
        const std::size_t L = cfg.count("aopc.L");
        for (auto i : picks) {
            const auto [c_o, c_t] = resolve_pair(cfg, s.net, s.eval, i);
            const auto& x = s.eval.images[i];
            const auto map = attribute_one(s, x, c_o, c_t);
            const auto id = std::to_string(i);
            if (has("aopc")) {
                const auto curve = evaluation::perturbation_curve(s.net, x, map, c_o, c_t, L);
                reports["aopc"].add(id, evaluation::aopc(curve));
            }
            if (has("gini")) {
                std::optional<double> g;
                if (map.l1() > 0.0) g = evaluation::gini_index(map);
                reports["gini"].add(id, g);
            }
            if (has("faithfulness")) reports["faithfulness"].add(id, evaluation::faithfulness(s.net, x, map, c_o, c_t));
            if (has("monotonicity")) {
                const auto b = baselines::make_baseline(s.baseline.with_target(c_t), x, s.train);
                reports["monotonicity"].add(id, evaluation::monotonicity(s.net, x, b, map, c_o, c_t));
            }
            if (has("inverse_localization")) {
                const auto sets = data::feature_sets(s.eval, i, c_o, c_t);
                std::optional<double> v;
                if (sets) {
                    const double l = evaluation::inverse_localization(map, *sets);
                    if (std::isfinite(l)) v = l;
                }
                reports["inverse_localization"].add(id, v);
            }
        }
        for (auto& [name, rep] : reports) {
            if (name == "roar") continue;
            out.write(name + ".csv", rep.to_csv());
            log << name << " mean " << rep.aggregate() << " (" << rep.undefined() << " undefined)\n";
        }
    }
    if (has("roar")) {
        const std::size_t a = cfg.count("roar.class_a"), b = cfg.count("roar.class_b");
        if (a >= s.train.class_count || b >= s.train.class_count || a == b) {
            throw ConfigError("roar.class_a/roar.class_b: need two distinct classes below " +
                              std::to_string(s.train.class_count));
        }
        evaluation::RoarConfig rc;
        rc.fractions = cfg.numbers("roar.fractions");
        rc.train.epochs = cfg.count("roar.epochs");
        rc.train.seed = cfg.seed("roar.seed");
        const auto provider = [&](const data::Image& x, std::size_t c_o, std::size_t c_t) {
            return attribute_one(s, x, c_o, c_t);
        };
        const auto r = evaluation::roar_curve(provider, a, b, s.train, s.eval, rc);
        std::string csv = "fraction,accuracy\n";
        for (std::size_t k = 0; k < r.fractions.size(); ++k) {
            csv += format_double(r.fractions[k]) + "," +
                   (r.accuracies[k] ? format_double(*r.accuracies[k]) : std::string("diverged")) + "\n";
        }
        csv += "aoroarc," + format_double(r.aoroarc) + "\n";
        out.write("roar.csv", csv);
        log << "AORoarC " << r.aoroarc << "\n";
    }
}

void sanity_check_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto s = attribution_setup(cfg);
    evaluation::CascadeConfig cc;
    cc.method = s.method;
    cc.baseline = s.baseline;
    cc.samples = cfg.count("cascade.samples");
    cc.seed = cfg.seed("cascade.seed");
    if (s.baseline.model && !s.baseline.model->standalone() && cfg.count("cascade.ganmex_steps") > 0) {
        auto g = s.baseline.model->config;
        g.steps = cfg.count("cascade.ganmex_steps");
        cc.regenerate_ganmex = g;
    }
    auto layers = cfg.list("cascade.layers");
    if (layers.empty()) layers = nn::cascade_order(s.net);
    for (const auto& l : layers) {
        try {
            (void)s.net.layer_index(l);
        } catch (const std::exception&) {
            throw ConfigError("cascade.layers: the classifier has no layer '" + l + "'");
        }
    }
    const auto rep = evaluation::cascading_randomization_report(
        s.net, cc, layers, s.train, s.eval, [&](const std::string& msg) { log << msg << "\n"; });

    std::string stages = "stage,layer,mean_spearman,undefined\n";
    std::string samples = "stage,sample,index,c_o,c_t,spearman\n";
    for (std::size_t k = 0; k < rep.stages.size(); ++k) {
        const auto& st = rep.stages[k];
        stages += std::to_string(k) + "," + (st.layer.empty() ? std::string("original") : st.layer) + "," +
                  format_double(st.mean) + "," + std::to_string(st.undefined) + "\n";
        for (std::size_t j = 0; j < st.per_sample.size(); ++j) {
            samples += std::to_string(k) + "," + std::to_string(j) + "," + std::to_string(rep.sample_indices[j]) + "," +
                       std::to_string(rep.origins[j]) + "," + std::to_string(rep.targets[j]) + "," +
                       (st.per_sample[j] ? format_double(*st.per_sample[j]) : std::string("undefined")) + "\n";
        }
        log << "stage " << k << " " << (st.layer.empty() ? "original" : st.layer) << " spearman " << st.mean << "\n";
    }
    out.write("cascade.csv", stages);
    out.write("cascade_samples.csv", samples);
}

void distance_report_cmd(const RunConfig& cfg, const Output& out, std::ostream& log) {
    const auto train = load_data(cfg, "data.train");
    const auto eval = load_data(cfg, "data.eval");
    const auto kinds = cfg.list("baselines");
    if (kinds.empty()) throw ConfigError("baselines: at least one baseline kind is required");
    std::shared_ptr<const gan::GanmexModel> model;
    if (std::find(kinds.begin(), kinds.end(), "ganmex") != kinds.end()) {
        if (cfg.text("ganmex.model").empty()) throw ConfigError("baselines: ganmex requires ganmex.model");
        model = load_ganmex(cfg, load_classifier(cfg));
    }
    std::vector<baselines::BaselineSpec> specs;
    for (const auto& k : kinds) {
        RunConfig one = cfg;
        one.set("baselines=" + k);
        auto spec = baseline_spec(one, "baselines", model);
        if (spec.needs_target()) spec.target_class = 0;
        specs.push_back(std::move(spec));
    }
    const auto shape = eval.image_shape();
    const auto rep = evaluation::distance_report(eval, train, specs, data::edge_region_mask(shape[1], shape[2]),
                                                 cfg.count("pairs"), cfg.seed("seed"));
    out.write("distance.csv", rep.to_csv());

    std::string samples = "index";
    for (const auto& r : rep.rows) samples += "," + r.baseline + "_l2," + r.baseline + "_edge_l2";
    samples += "\n";
    for (std::size_t i = 0; i < eval.size(); ++i) {
        samples += std::to_string(i);
        for (const auto& r : rep.rows) samples += "," + format_double(r.distances[i]) + "," + format_double(r.edge_distances[i]);
        samples += "\n";
    }
    out.write("distance_samples.csv", samples);

    std::string hist = "baseline,bin_lo,bin_hi,count\n";
    for (const auto& r : rep.rows) {
        const auto h = evaluation::make_histogram(r.edge_distances, cfg.count("histogram.bins"));
        const auto body = h.to_csv();
        std::size_t pos = body.find('\n') + 1;
        while (pos < body.size()) {
            const auto end = body.find('\n', pos);
            hist += r.baseline + "," + body.substr(pos, end - pos) + "\n";
            pos = end + 1;
        }
    }
    out.write("edge_histogram.csv", hist);
    for (const auto& r : rep.rows) log << r.baseline << " mean L2 " << r.mean_distance << "\n";
}

}  // namespace

// ---- public --------------------------------------------------------------------

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"make-dataset", "train-classifier", "train-ganmex",   "attribute",
                                                "evaluate",     "sanity-check",     "distance-report", "sweep"};
    return names;
}

RunConfig default_config(const std::string& command) { return RunConfig(command, schema_for(command)); }

BaselineSummary summarize_baselines(const nn::Network& classifier, const gan::GanmexModel& model,
                                    const data::LabeledDataset& eval, std::size_t max_samples, std::uint64_t seed) {
    BaselineSummary s;
    s.samples = std::min(max_samples, eval.size());
    if (s.samples == 0) return s;
    std::size_t hits = 0, same_color = 0;
    double dist = 0.0;
    for (std::size_t i = 0; i < s.samples; ++i) {
        Rng rng(mix_seed(seed, i));
        const auto target = gan::sample_target(rng, eval.labels[i], eval.class_count);
        const auto& x = eval.images[i];
        const auto b = gan::generate_baseline(model, x, target);
        if (nn::predict_probs(classifier, b.tensor())[target] > kTargetSuccessProbability) ++hits;
        dist += baselines::baseline_distance(x, b);
        if (data::dominant_channel(x) == data::dominant_channel(b)) ++same_color;
    }
    const double n = static_cast<double>(s.samples);
    s.success_rate = static_cast<double>(hits) / n;
    s.mean_distance = dist / n;
    if (!eval.color_ids.empty()) s.color_preservation = static_cast<double>(same_color) / n;
    return s;
}

void execute(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
    const Output out(out_dir);
    out.write("config.resolved.json", cfg.resolved().dump(2) + "\n");
    const auto& c = cfg.command();
    if (c == "make-dataset") make_dataset(cfg, out, log);
    else if (c == "train-classifier") train_classifier_cmd(cfg, out, log);
    else if (c == "train-ganmex") train_ganmex_cmd(cfg, out, log);
    else if (c == "attribute") attribute_cmd(cfg, out, log);
    else if (c == "evaluate") evaluate_cmd(cfg, out, log);
    else if (c == "sanity-check") sanity_check_cmd(cfg, out, log);
    else if (c == "distance-report") distance_report_cmd(cfg, out, log);
    else if (c == "sweep") sweep_cmd(cfg, out, log);
    else throw ConfigError("unknown command '" + c + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Class-targeted baselines for one-vs-one attributions", "ganmex"};
    app.require_subcommand(1);
    struct Options {
        std::string config, out;
        std::vector<std::string> sets;
    };
    std::map<std::string, Options> options;
    for (const auto& name : command_names()) {
        auto* sub = app.add_subcommand(name);
        auto& o = options[name];
        sub->add_option("--config", o.config, "Flat JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--set", o.sets, "Override one key: key=value")->take_all();
        sub->add_option("--out", o.out, "Output directory")->required();
        std::string keys = "\nKeys and defaults:\n";
        for (const auto& k : schema_for(name)) keys += "  " + k.key + " = " + k.default_value.dump() + "\n";
        sub->footer(keys);
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const auto& o = options[command];
    try {
        RunConfig cfg = default_config(command);
        if (!o.config.empty()) cfg.merge_file(o.config);
        for (const auto& s : o.sets) cfg.set(s);
        execute(cfg, o.out, err);
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "ganmex " << command << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "ganmex " << command << ": " << e.what() << "\n";
        return 2;
    }
}

}  // namespace ganmex::cli
