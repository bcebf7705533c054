#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/png.hpp"
#include "ganmex/io/binary.hpp"

using namespace ganmex;
using namespace ganmex::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result ganmex_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("ganmex_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> files_in(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

// Small color-fruit dataset, classifier and GANMEX model shared by the tests.
struct Fixture {
    fs::path root, data, clf, gan;
    std::string train() const { return (data / "train.dataset").string(); }
    std::string test() const { return (data / "test.dataset").string(); }
    std::string classifier() const { return (clf / "classifier.bin").string(); }
    std::string model() const { return (gan / "ganmex.bin").string(); }
    std::vector<std::string> common(std::string command, const fs::path& out) const {
        return {std::move(command),          "--set", "data.train=" + train(), "--set",
                "data.eval=" + test(),       "--set", "classifier=" + classifier(), "--set",
                "ganmex.model=" + model(),   "--out", out.string()};
    }
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture x;
        x.root = scratch("fixture");
        x.data = x.root / "data";
        x.clf = x.root / "clf";
        x.gan = x.root / "gan";
        REQUIRE(ganmex_cli({"make-dataset", "--set", "dataset.kind=color_fruit", "--set", "dataset.size=12", "--set",
                            "dataset.per_class=60", "--set", "dataset.test_per_class=10", "--out", x.data.string()})
                    .code == 0);
        REQUIRE(ganmex_cli({"train-classifier", "--set", "data.train=" + x.train(), "--set", "train.epochs=4", "--out",
                            x.clf.string()})
                    .code == 0);
        REQUIRE(ganmex_cli({"train-ganmex", "--set", "data.train=" + x.train(), "--set",
                            "classifier=" + x.classifier(), "--set", "ganmex.steps=20", "--set",
                            "ganmex.batch_size=4", "--out", x.gan.string()})
                    .code == 0);
        return x;
    }();
    return f;
}

}  // namespace

TEST_CASE("config keys are typed and unknown keys are rejected") {
    auto cfg = default_config("attribute");
    cfg.set("method.steps=32");
    CHECK(cfg.count("method.steps") == 32);
    cfg.set("origin=predicted");
    CHECK(cfg.raw("origin") == "predicted");
    cfg.set("target=3");
    CHECK(cfg.raw("target") == 3);
    cfg.set("data.train=123");
    CHECK(cfg.text("data.train") == "123");
    CHECK_THROWS_AS(cfg.set("method.steps=-1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("method.steps=abc"), ConfigError);
    CHECK_THROWS_AS(cfg.set("baseline.value=true"), ConfigError);
    CHECK_THROWS_AS(cfg.set("nonsense"), ConfigError);
    try {
        cfg.set("method.stepz=3");
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("method.stepz") != std::string::npos);
    }
    CHECK_THROWS_AS(cfg.merge(nlohmann::json{{"unknown.key", 1}}, "test"), ConfigError);
    CHECK_THROWS_AS(default_config("no-such-command"), ConfigError);

    auto ev = default_config("evaluate");
    ev.set("roar.fractions=[0, 0.5]");
    CHECK(ev.numbers("roar.fractions") == std::vector<double>{0.0, 0.5});
    ev.set("metrics= aopc , gini,");
    CHECK(ev.list("metrics") == std::vector<std::string>{"aopc", "gini"});
}

TEST_CASE("flatten and unflatten are inverse") {
    const nlohmann::json nested{{"a", 1}, {"b", {{"c", 2.5}, {"d", {{"e", "x"}}}}}};
    const auto flat = flatten(nested, "p.");
    CHECK(flat == nlohmann::json{{"p.a", 1}, {"p.b.c", 2.5}, {"p.b.d.e", "x"}});
    CHECK(unflatten(flat, "p.") == nested);
}

TEST_CASE("config file then overrides, resolved config written") {
    const auto dir = scratch("resolved");
    const auto cfg_path = dir / "cfg.json";
    std::ofstream(cfg_path) << R"({"dataset.kind": "glyphs", "dataset.classes": 3, "dataset.size": 12,
                                  "dataset.per_class": 4, "dataset.test_per_class": 2})";
    const auto out = dir / "out";
    const auto r = ganmex_cli({"make-dataset", "--config", cfg_path.string(), "--set", "dataset.seed=9", "--out",
                               out.string()});
    REQUIRE(r.code == 0);
    const auto resolved = nlohmann::json::parse(slurp(out / "config.resolved.json"));
    CHECK(resolved["dataset.classes"] == 3);
    CHECK(resolved["dataset.seed"] == 9);
    CHECK(slurp(out / "dataset_summary.csv") ==
          "split,class,count\ntrain,0,4\ntrain,1,4\ntrain,2,4\ntest,0,2\ntest,1,2\ntest,2,2\n");

    std::ofstream(dir / "bad.json") << R"({"dataset.kind": "glyphs", "dataset.colour": 1})";
    const auto bad = ganmex_cli({"make-dataset", "--config", (dir / "bad.json").string(), "--out", out.string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("dataset.colour") != std::string::npos);
}

TEST_CASE("exit codes") {
    const auto& f = fixture();
    const auto dir = scratch("exit");
    CHECK(ganmex_cli({"attribute", "--out"}).code == 1);
    CHECK(ganmex_cli({"frobnicate", "--out", dir.string()}).code == 1);
    CHECK(ganmex_cli({"make-dataset", "--help"}).code == 0);
    auto missing = ganmex_cli({"train-classifier", "--set", "data.train=/nonexistent.dataset", "--out", dir.string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("data.train") != std::string::npos);

    std::ofstream(dir / "garbage.bin") << "not a network";
    auto args = f.common("attribute", dir / "a");
    args.insert(args.end(), {"--set", "classifier=" + (dir / "garbage.bin").string()});
    CHECK(ganmex_cli(args).code == 2);
}

TEST_CASE("attribute rejects identical origin and target") {
    const auto& f = fixture();
    auto args = f.common("attribute", scratch("same") / "out");
    args.insert(args.end(), {"--set", "origin=label", "--set", "target=label"});
    const auto r = ganmex_cli(args);
    CHECK(r.code == 1);
    CHECK(r.err.find("one-vs-one") != std::string::npos);
}

TEST_CASE("a model trained against another classifier is fatal") {
    const auto& f = fixture();
    const auto dir = scratch("mismatch");
    REQUIRE(ganmex_cli({"train-classifier", "--set", "data.train=" + f.train(), "--set", "train.epochs=1", "--set",
                        "train.seed=77", "--out", (dir / "clf").string()})
                .code == 0);
    auto args = f.common("attribute", dir / "out");
    args.insert(args.end(), {"--set", "classifier=" + (dir / "clf" / "classifier.bin").string(), "--set",
                             "baseline.kind=ganmex"});
    const auto r = ganmex_cli(args);
    CHECK(r.code == 2);
    CHECK(r.err.find("classifier hash") != std::string::npos);
}

TEST_CASE("evaluate with two metrics emits exactly two CSVs plus the config") {
    const auto& f = fixture();
    const auto out = scratch("eval") / "out";
    auto args = f.common("evaluate", out);
    args.insert(args.end(), {"--set", "metrics=aopc,gini", "--set", "samples.count=3", "--set", "method.steps=16"});
    REQUIRE(ganmex_cli(args).code == 0);
    CHECK(files_in(out) == std::vector<std::string>{"aopc.csv", "config.resolved.json", "gini.csv"});
    const auto aopc = slurp(out / "aopc.csv");
    CHECK(aopc.rfind("sample,aopc\n", 0) == 0);
    CHECK(std::count(aopc.begin(), aopc.end(), '\n') == 5);
}

TEST_CASE("reruns from the resolved config are byte-identical and inputs are untouched") {
    const auto& f = fixture();
    const auto dir = scratch("rerun");
    const auto before = slurp(f.train()) + slurp(f.classifier()) + slurp(f.model());

    auto args = f.common("attribute", dir / "first");
    args.insert(args.end(), {"--set", "baseline.kind=ganmex", "--set", "samples.count=2", "--set", "method.steps=16"});
    REQUIRE(ganmex_cli(args).code == 0);
    REQUIRE(ganmex_cli({"attribute", "--config", (dir / "first" / "config.resolved.json").string(), "--out",
                        (dir / "second").string()})
                .code == 0);
    const auto names = files_in(dir / "first");
    CHECK(names == files_in(dir / "second"));
    CHECK(std::find(names.begin(), names.end(), "saliency_0001.png") != names.end());
    for (const auto& n : names) CHECK_MESSAGE(slurp(dir / "first" / n) == slurp(dir / "second" / n), n);

    auto ev = f.common("evaluate", dir / "e1");
    ev.insert(ev.end(), {"--set", "metrics=faithfulness,monotonicity,gini", "--set", "samples.count=2", "--set",
                         "method.kind=deeplift", "--set", "baseline.kind=blur"});
    REQUIRE(ganmex_cli(ev).code == 0);
    REQUIRE(ganmex_cli({"evaluate", "--config", (dir / "e1" / "config.resolved.json").string(), "--out",
                        (dir / "e2").string()})
                .code == 0);
    for (const auto& n : files_in(dir / "e1")) CHECK_MESSAGE(slurp(dir / "e1" / n) == slurp(dir / "e2" / n), n);

    CHECK(slurp(f.train()) + slurp(f.classifier()) + slurp(f.model()) == before);
}

TEST_CASE("distance report and sanity check outputs") {
    const auto& f = fixture();
    const auto dir = scratch("reports");
    auto d = f.common("distance-report", dir / "dist");
    d.insert(d.end(), {"--set", "pairs=40", "--set", "histogram.bins=5"});
    REQUIRE(ganmex_cli(d).code == 0);
    const auto dist = slurp(dir / "dist" / "distance.csv");
    for (const char* row : {"\nzero,", "\nmax,", "\nblur(1),", "\nmdts,", "\nrandom_target,", "\nganmex,",
                            "\nclass_intra,", "\nclass_inter,"}) {
        CHECK_MESSAGE(dist.find(row) != std::string::npos, row);
    }
    const auto hist = slurp(dir / "dist" / "edge_histogram.csv");
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 1 + 6 * 5);

    auto s = f.common("sanity-check", dir / "sc");
    s.insert(s.end(), {"--set", "cascade.samples=3", "--set", "method.steps=8", "--set", "baseline.kind=ganmex",
                       "--set", "cascade.ganmex_steps=2"});
    REQUIRE(ganmex_cli(s).code == 0);
    const auto cascade = slurp(dir / "sc" / "cascade.csv");
    CHECK(cascade.rfind("stage,layer,mean_spearman,undefined\n0,original,1,0\n1,Output,", 0) == 0);

    auto bad = f.common("sanity-check", dir / "sc2");
    bad.insert(bad.end(), {"--set", "cascade.layers=Output,Nope"});
    CHECK(ganmex_cli(bad).code == 1);
}

TEST_CASE("sweep grid shape and the 1x1 grid equals train-ganmex") {
    const auto& f = fixture();
    const auto dir = scratch("sweep");
    const std::vector<std::string> base{"--set", "data.train=" + f.train(), "--set", "classifier=" + f.classifier(),
                                        "--set", "ganmex.steps=3",          "--set", "ganmex.batch_size=4"};
    auto one = base;
    one.insert(one.begin(), "sweep");
    one.insert(one.end(), {"--out", (dir / "one").string()});
    REQUIRE(ganmex_cli(one).code == 0);
    auto train = base;
    train.insert(train.begin(), "train-ganmex");
    train.insert(train.end(), {"--out", (dir / "train").string()});
    REQUIRE(ganmex_cli(train).code == 0);
    CHECK(slurp(dir / "one" / "cell_000" / "ganmex.bin") == slurp(dir / "train" / "ganmex.bin"));

    auto grid = base;
    grid.insert(grid.begin(), "sweep");
    grid.insert(grid.end(), {"--set", "sweep.lambda_cls=[0.5,1,2]", "--set", "sweep.lambda_sim=[0,1,-1]", "--set",
                             "data.eval=" + f.test(), "--set", "summary.samples=4", "--out", (dir / "grid").string()});
    REQUIRE(ganmex_cli(grid).code == 0);
    const auto csv = slurp(dir / "grid" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 9);
    // lambda_sim = -1 is invalid: those cells fail and the sweep carries on.
    std::size_t failed = 0, pos = 0;
    while ((pos = csv.find(",failed: ", pos)) != std::string::npos) {
        ++failed;
        ++pos;
    }
    CHECK(failed == 3);
}

TEST_CASE("saliency rendering colors") {
    attribution::SaliencyMap m;
    m.height = 1;
    m.width = 4;
    m.values = {2.0, -2.0, 0.0, 1.0};
    const auto img = render_saliency(m);
    const std::vector<std::uint8_t> expected{0, 0, 255, 255, 0, 0, 255, 255, 255, 128, 128, 255};
    CHECK(img.pixels == expected);
    m.values.assign(4, 0.0);
    for (auto v : render_saliency(m).pixels) CHECK(v == 255);

    const auto png = encode_png(img);
    CHECK(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    CHECK(encode_png(img) == png);
    CHECK_THROWS_AS(encode_png(RgbImage{2, 2, {}}), std::invalid_argument);
}

TEST_CASE("full pipeline on color fruit with default settings") {
    const auto dir = scratch("pipeline");
    const auto data = dir / "data", clf = dir / "clf", gan = dir / "gan", attr = dir / "attr", ev = dir / "eval";
    REQUIRE(ganmex_cli({"make-dataset", "--set", "dataset.kind=color_fruit", "--out", data.string()}).code == 0);
    const auto train = (data / "train.dataset").string(), test = (data / "test.dataset").string();
    REQUIRE(ganmex_cli({"train-classifier", "--set", "data.train=" + train, "--set", "data.eval=" + test, "--out",
                        clf.string()})
                .code == 0);
    const auto classifier = (clf / "classifier.bin").string();
    REQUIRE(ganmex_cli({"train-ganmex", "--set", "data.train=" + train, "--set", "data.eval=" + test, "--set",
                        "classifier=" + classifier, "--out", gan.string()})
                .code == 0);
    const std::vector<std::string> shared{"--set", "data.train=" + train,     "--set", "data.eval=" + test,
                                          "--set", "classifier=" + classifier, "--set",
                                          "ganmex.model=" + (gan / "ganmex.bin").string(), "--set",
                                          "baseline.kind=ganmex"};
    auto a = shared;
    a.insert(a.begin(), "attribute");
    a.insert(a.end(), {"--out", attr.string()});
    REQUIRE(ganmex_cli(a).code == 0);
    auto e = shared;
    e.insert(e.begin(), "evaluate");
    e.insert(e.end(), {"--out", ev.string()});
    REQUIRE(ganmex_cli(e).code == 0);

    const auto summary = slurp(gan / "summary.csv");
    MESSAGE(summary);
    CHECK(summary.find("success_rate,") != std::string::npos);
    CHECK(fs::exists(attr / "saliency_0009.png"));
    CHECK(files_in(ev) == std::vector<std::string>{"aopc.csv", "config.resolved.json", "gini.csv"});
}
