#include "ganmex/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "ganmex/io/binary.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::evaluation {

namespace {

constexpr std::size_t kChunk = 64;

void check_map(const SaliencyMap& map, const data::Image& x, const char* op) {
    if (map.height != x.height() || map.width != x.width()) {
        throw std::invalid_argument(std::string(op) + ": map is " + std::to_string(map.height) + "x" +
                                    std::to_string(map.width) + ", image is " + std::to_string(x.height()) + "x" +
                                    std::to_string(x.width()));
    }
}

data::Image flipped(const data::Image& x) {
    Tensor t = x.tensor();
    for (double& v : t.values()) v = 1.0 - v;
    return data::Image(std::move(t));
}

std::uint64_t content_hash(const Tensor& t) {
    return io::fnv1a(std::string_view(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double)));
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> flip_order(const SaliencyMap& map) {
    std::vector<std::size_t> order(map.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
    return order;
}

PerturbationCurve perturbation_curve(const nn::Network& net, const data::Image& x, const SaliencyMap& map,
                                     std::size_t c_o, std::size_t c_t, std::optional<std::size_t> max_flips) {
    check_map(map, x, "perturbation_curve");
    PerturbationCurve curve;
    curve.order = flip_order(map);
    const std::size_t hw = x.pixel_count(), C = x.channels(), d = x.tensor().numel();
    const std::size_t steps = std::min(max_flips.value_or(hw), hw);
    curve.order.resize(steps);

    Tensor current = x.tensor();
    std::size_t next = 0;  // flips applied to `current`
    for (std::size_t first = 0; first <= steps; first += kChunk) {
        const std::size_t n = std::min(kChunk, steps + 1 - first);
        Tensor batch({n, C, x.height(), x.width()});
        for (std::size_t r = 0; r < n; ++r) {
            for (; next < first + r; ++next) {
                const std::size_t p = curve.order[next];
                for (std::size_t c = 0; c < C; ++c) current[c * hw + p] = 1.0 - x.tensor()[c * hw + p];
            }
            std::copy(current.data(), current.data() + d, batch.data() + r * d);
        }
        const auto f = attribution::score_deltas(net, batch, c_o, c_t);
        curve.values.insert(curve.values.end(), f.begin(), f.end());
    }
    return curve;
}

double aopc(const PerturbationCurve& curve, std::optional<std::size_t> L) {
    if (curve.values.empty()) throw std::invalid_argument("aopc: empty curve");
    const std::size_t last = L.value_or(curve.values.size() - 1);
    if (last >= curve.values.size()) {
        throw std::invalid_argument("aopc: L = " + std::to_string(last) + " exceeds the curve's " +
                                    std::to_string(curve.values.size() - 1) + " steps");
    }
    double s = 0.0;
    for (std::size_t k = 0; k <= last; ++k) s += curve.values[0] - curve.values[k];
    return s / static_cast<double>(last + 1);
}

double gini_index(const SaliencyMap& map) {
    std::vector<double> a;
    a.reserve(map.values.size());
    double l1 = 0.0;
    for (double v : map.values) {
        a.push_back(std::abs(v));
        l1 += std::abs(v);
    }
    if (!(l1 > 0.0)) throw std::domain_error("gini_index: undefined for an all-zero map");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    for (std::size_t k = 1; k <= a.size(); ++k) s += (a[k - 1] / l1) * ((n - static_cast<double>(k) + 0.5) / n);
    return 1.0 - 2.0 * s;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = a.size();
    if (n < 3) return std::nullopt;
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    return pearson(ra, rb);
}

std::vector<double> single_pixel_impacts(const nn::Network& net, const data::Image& x,
                                         const data::Image& replacement, std::size_t c_o, std::size_t c_t) {
    return attribution::occlusion1(net, x, replacement, c_o, c_t).values;
}

std::optional<double> faithfulness(const nn::Network& net, const data::Image& x, const SaliencyMap& map,
                                   std::size_t c_o, std::size_t c_t) {
    check_map(map, x, "faithfulness");
    const auto impacts = single_pixel_impacts(net, x, flipped(x), c_o, c_t);
    return pearson(map.values, impacts);
}

std::optional<double> monotonicity(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                                   const SaliencyMap& map, std::size_t c_o, std::size_t c_t) {
    check_map(map, x, "monotonicity");
    auto impacts = single_pixel_impacts(net, x, baseline, c_o, c_t);
    std::vector<double> mag(map.values.size());
    for (std::size_t i = 0; i < mag.size(); ++i) {
        mag[i] = std::abs(map.values[i]);
        impacts[i] = std::abs(impacts[i]);
    }
    return spearman(mag, impacts);
}

double inverse_localization(const SaliencyMap& map, const data::FeatureSets& sets) {
    const std::size_t n = map.values.size();
    if (sets.common.size() != n || sets.distinguishing.size() != n) {
        throw std::invalid_argument("inverse_localization: feature sets do not match the map size");
    }
    double sc = 0.0, sd = 0.0;
    std::size_t nc = 0, nd = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::abs(map.values[i]);
        if (sets.common[i]) {
            sc += a;
            ++nc;
        }
        if (sets.distinguishing[i]) {
            sd += a;
            ++nd;
        }
    }
    if (nc == 0 || nd == 0) throw std::invalid_argument("inverse_localization: empty common or distinguishing set");
    if (!(sd > 0.0)) return std::numeric_limits<double>::infinity();
    return (sc / static_cast<double>(nc)) / (sd / static_cast<double>(nd));
}

double relative_map_spread(std::span<const SaliencyMap> maps) {
    if (maps.size() < 2) throw std::invalid_argument("relative_map_spread: need at least two maps");
    double dist = 0.0, norm = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        norm += maps[i].l1();
        for (std::size_t j = i + 1; j < maps.size(); ++j) {
            if (maps[j].values.size() != maps[i].values.size()) {
                throw std::invalid_argument("relative_map_spread: maps differ in size");
            }
            for (std::size_t p = 0; p < maps[i].values.size(); ++p) {
                dist += std::abs(maps[i].values[p] - maps[j].values[p]);
            }
            ++pairs;
        }
    }
    norm /= static_cast<double>(maps.size());
    if (!(norm > 0.0)) return 0.0;
    return (dist / static_cast<double>(pairs)) / norm;
}

data::Image remove_pixels(const data::Image& x, std::span<const std::size_t> pixels, const data::Image& fill) {
    if (fill.shape() != x.shape()) throw_shape_error("remove_pixels", {x.shape(), fill.shape()});
    Tensor t = x.tensor();
    const std::size_t hw = x.pixel_count();
    for (auto p : pixels) {
        if (p >= hw) throw std::invalid_argument("remove_pixels: pixel index out of range");
        for (std::size_t c = 0; c < x.channels(); ++c) t[c * hw + p] = fill.tensor()[c * hw + p];
    }
    return data::Image(std::move(t));
}

PairSaliency random_saliency(std::uint64_t seed) {
    return [seed](const data::Image& x, std::size_t c_o, std::size_t c_t) {
        Rng rng(mix_seed(mix_seed(seed, content_hash(x.tensor())), c_o * 1000003 + c_t));
        SaliencyMap m;
        m.height = x.height();
        m.width = x.width();
        m.values.resize(x.pixel_count());
        for (double& v : m.values) v = uniform01(rng);
        m.provenance = {{"method", "random"}, {"seed", seed}, {"c_o", c_o}, {"c_t", c_t}};
        return m;
    };
}

RoarResult roar_curve(const PairSaliency& saliency, std::size_t c, std::size_t c2, const data::LabeledDataset& train,
                      const data::LabeledDataset& test, const RoarConfig& cfg) {
    if (c == c2) throw std::invalid_argument("roar_curve: the class pair must differ");
    for (double t : cfg.fractions) {
        if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("roar_curve: fractions must lie in [0, 1)");
    }
    // Binary subsets with c -> 0 and c2 -> 1, each image paired with its one-vs-one map.
    struct Pair {
        data::LabeledDataset ds;
        std::vector<std::vector<std::size_t>> orders;
    };
    auto subset = [&](const data::LabeledDataset& src, const char* which) {
        Pair p;
        p.ds.name = src.name + "-pair";
        p.ds.class_count = 2;
        p.ds.split = src.split;
        for (std::size_t i = 0; i < src.size(); ++i) {
            const std::size_t l = src.labels[i];
            if (l != c && l != c2) continue;
            p.ds.images.push_back(src.images[i]);
            p.ds.labels.push_back(l == c ? 0 : 1);
            const auto map = l == c ? saliency(src.images[i], c, c2) : saliency(src.images[i], c2, c);
            p.orders.push_back(flip_order(map));
        }
        if (p.ds.indices_of_class(0).empty() || p.ds.indices_of_class(1).empty()) {
            throw std::invalid_argument(std::string("roar_curve: ") + which + " split lacks one of the pair's classes");
        }
        return p;
    };
    const Pair tr = subset(train, "train"), te = subset(test, "test");
    const data::Image fill = data::dataset_mean(tr.ds);
    const std::size_t hw = tr.ds.images[0].pixel_count();

    auto accuracy_at = [&](double t) -> std::optional<double> {
        const auto k = static_cast<std::size_t>(std::lround(t * static_cast<double>(hw)));
        auto removed = [&](const Pair& p) {
            data::LabeledDataset out = p.ds;
            for (std::size_t i = 0; i < out.size(); ++i) {
                out.images[i] = remove_pixels(p.ds.images[i], std::span(p.orders[i]).first(k), fill);
            }
            return out;
        };
        const auto tr_t = removed(tr), te_t = removed(te);
        try {
            const auto net = nn::train_classifier(tr_t, nn::reference_classifier(2), cfg.train);
            return nn::accuracy(net, te_t);
        } catch (const nn::TrainingDiverged&) {
            return std::nullopt;
        }
    };

    RoarResult r;
    r.fractions = cfg.fractions;
    const auto base = accuracy_at(0.0);
    if (!base) throw std::runtime_error("roar_curve: training diverged on the unmodified data");
    r.baseline_accuracy = *base;
    double drop = 0.0;
    std::size_t counted = 0;
    for (double t : cfg.fractions) {
        const auto acc = t == 0.0 ? base : accuracy_at(t);
        r.accuracies.push_back(acc);
        if (!acc) {
            ++r.diverged;
            continue;
        }
        drop += r.baseline_accuracy - *acc;
        ++counted;
    }
    r.aoroarc = counted ? drop / static_cast<double>(counted) : 0.0;
    return r;
}

CascadeReport cascading_randomization_report(const nn::Network& net, const CascadeConfig& cfg,
                                             const std::vector<std::string>& layer_order,
                                             const data::LabeledDataset& train, const data::LabeledDataset& eval,
                                             const std::function<void(const std::string&)>& progress) {
    if (eval.empty()) throw std::invalid_argument("cascading_randomization_report: empty evaluation set");
    if (cfg.samples == 0) throw std::invalid_argument("cascading_randomization_report: samples must be positive");
    cfg.method.validate();
    for (const auto& name : layer_order) (void)net.layer_index(name);

    CascadeReport report;
    Rng rng(cfg.seed);
    std::vector<std::size_t> pool(eval.size());
    std::iota(pool.begin(), pool.end(), 0);
    const std::size_t n = std::min(cfg.samples, pool.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
        report.sample_indices.push_back(pool[i]);
        report.origins.push_back(eval.labels[pool[i]]);
        report.targets.push_back(gan::sample_target(rng, eval.labels[pool[i]], eval.class_count));
    }

    const bool regenerate = cfg.baseline.kind == baselines::BaselineKind::ganmex && cfg.regenerate_ganmex &&
                            cfg.baseline.model && !cfg.baseline.model->standalone();

    auto maps_for = [&](const nn::Network& stage_net, const baselines::BaselineSpec& spec) {
        std::vector<SaliencyMap> maps;
        for (std::size_t s = 0; s < n; ++s) {
            attribution::AttributionRequest req;
            req.x = eval.images[report.sample_indices[s]];
            req.c_o = report.origins[s];
            req.c_t = report.targets[s];
            req.method = cfg.method;
            req.baseline = spec;
            maps.push_back(attribution::attribute(stage_net, req, train));
        }
        return maps;
    };
    auto abs_values = [](const SaliencyMap& m) {
        std::vector<double> a(m.values.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(m.values[i]);
        return a;
    };

    const auto original = maps_for(net, cfg.baseline);
    std::vector<std::vector<double>> original_abs;
    for (const auto& m : original) original_abs.push_back(abs_values(m));

    auto record = [&](std::string layer, const std::vector<SaliencyMap>& maps) {
        CascadeStage st;
        st.layer = std::move(layer);
        double sum = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const auto rho = spearman(original_abs[s], abs_values(maps[s]));
            st.per_sample.push_back(rho);
            if (rho) sum += *rho;
            else ++st.undefined;
        }
        const std::size_t defined = n - st.undefined;
        st.mean = defined ? sum / static_cast<double>(defined) : std::numeric_limits<double>::quiet_NaN();
        report.stages.push_back(std::move(st));
    };
    record("", original);

    nn::Network current = net;
    for (std::size_t k = 0; k < layer_order.size(); ++k) {
        current = nn::randomize_layer(current, layer_order[k], mix_seed(cfg.seed, 1000 + k));
        baselines::BaselineSpec spec = cfg.baseline;
        if (regenerate) {
            gan::GanmexConfig g = *cfg.regenerate_ganmex;
            g.seed = mix_seed(g.seed, 2000 + k);
            if (progress) progress("retraining GANMEX against randomized " + layer_order[k]);
            spec.model = std::make_shared<const gan::GanmexModel>(gan::train_ganmex(current, train, g));
        }
        if (progress) progress("attributing after randomizing " + layer_order[k]);
        record(layer_order[k], maps_for(current, spec));
    }
    return report;
}

void MetricReport::add(std::string id, double value) {
    sample_ids.push_back(std::move(id));
    values.push_back(value);
}

void MetricReport::add(std::string id, std::optional<double> value) {
    add(std::move(id), value.value_or(std::numeric_limits<double>::quiet_NaN()));
}

double MetricReport::aggregate() const {
    double s = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (std::isnan(v)) continue;
        s += v;
        ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

std::size_t MetricReport::undefined() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }));
}

std::string MetricReport::to_csv() const {
    std::string out = "sample," + metric + "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += sample_ids[i] + "," + (std::isnan(values[i]) ? std::string("undefined") : format_double(values[i])) +
               "\n";
    }
    out += "mean," + format_double(aggregate()) + "\n";
    return out;
}

std::string Histogram::to_csv() const {
    std::string out = "bin_lo,bin_hi,count\n";
    const double w = counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out += format_double(lo + w * static_cast<double>(i)) + "," +
               format_double(i + 1 == counts.size() ? hi : lo + w * static_cast<double>(i + 1)) + "," +
               std::to_string(counts[i]) + "\n";
    }
    return out;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("make_histogram: bins must be positive");
    Histogram h;
    h.counts.assign(bins, 0);
    if (values.empty()) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    h.hi = *mx;
    const double w = (h.hi - h.lo) / static_cast<double>(bins);
    for (double v : values) {
        std::size_t b = w > 0.0 ? static_cast<std::size_t>((v - h.lo) / w) : 0;
        h.counts[std::min(b, bins - 1)] += 1;
    }
    return h;
}

std::string DistanceReport::to_csv() const {
    std::string out = "baseline,mean_l2,mean_edge_l2\n";
    for (const auto& r : rows) {
        out += r.baseline + "," + format_double(r.mean_distance) + "," + format_double(r.mean_edge_distance) + "\n";
    }
    out += "class_intra," + format_double(class_stats.intra) + ",\n";
    out += "class_inter," + format_double(class_stats.inter) + ",\n";
    return out;
}

DistanceReport distance_report(const data::LabeledDataset& eval, const data::LabeledDataset& train,
                               std::span<const baselines::BaselineSpec> specs, const data::PixelMask& edge_mask,
                               std::size_t pair_samples, std::uint64_t seed) {
    if (eval.empty()) throw std::invalid_argument("distance_report: empty evaluation set");
    DistanceReport rep;
    for (const auto& spec : specs) {
        DistanceRow row;
        row.baseline = spec.label();
        for (std::size_t i = 0; i < eval.size(); ++i) {
            Rng rng(mix_seed(seed, i));
            const std::size_t target = gan::sample_target(rng, eval.labels[i], eval.class_count);
            const auto b = baselines::make_baseline(spec.with_target(target), eval.images[i], train);
            row.distances.push_back(baselines::baseline_distance(eval.images[i], b));
            row.edge_distances.push_back(baselines::edge_region_distance(eval.images[i], b, edge_mask));
        }
        const double n = static_cast<double>(eval.size());
        row.mean_distance = std::accumulate(row.distances.begin(), row.distances.end(), 0.0) / n;
        row.mean_edge_distance = std::accumulate(row.edge_distances.begin(), row.edge_distances.end(), 0.0) / n;
        rep.rows.push_back(std::move(row));
    }
    rep.class_stats = baselines::class_distance_stats(train, pair_samples, seed);
    return rep;
}

}  // namespace ganmex::evaluation
