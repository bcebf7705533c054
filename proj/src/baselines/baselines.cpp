#include "ganmex/baselines/baselines.hpp"

#include <cmath>
#include <limits>
#include <tuple>
#include <stdexcept>

#include "ganmex/io/binary.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::baselines {

namespace {

constexpr std::pair<BaselineKind, std::string_view> kKindNames[] = {
    {BaselineKind::zero, "zero"},         {BaselineKind::max, "max"},
    {BaselineKind::uniform, "uniform"},   {BaselineKind::blur, "blur"},
    {BaselineKind::mdts, "mdts"},         {BaselineKind::random_target, "random_target"},
    {BaselineKind::ganmex, "ganmex"},
};

void require_same_shape(const char* op, const data::Image& a, const data::Image& b) {
    if (a.shape() != b.shape()) throw_shape_error(op, {a.shape(), b.shape()});
}

std::string trim_double(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

}  // namespace

std::string_view to_string(BaselineKind kind) {
    for (auto [k, n] : kKindNames) {
        if (k == kind) return n;
    }
    return "unknown";
}

BaselineKind baseline_kind_from_string(std::string_view name) {
    for (auto [k, n] : kKindNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown baseline kind '" + std::string(name) +
                                "' (expected zero, max, uniform, blur, mdts, random_target or ganmex)");
}

BaselineSpec BaselineSpec::zero() { return {}; }

BaselineSpec BaselineSpec::max() {
    BaselineSpec s;
    s.kind = BaselineKind::max;
    return s;
}

BaselineSpec BaselineSpec::uniform(double value) {
    BaselineSpec s;
    s.kind = BaselineKind::uniform;
    s.value = value;
    return s;
}

BaselineSpec BaselineSpec::blur(double sigma) {
    BaselineSpec s;
    s.kind = BaselineKind::blur;
    s.sigma = sigma;
    return s;
}

BaselineSpec BaselineSpec::mdts(std::size_t target) {
    BaselineSpec s;
    s.kind = BaselineKind::mdts;
    s.target_class = target;
    return s;
}

BaselineSpec BaselineSpec::random_target(std::size_t target, std::uint64_t seed) {
    BaselineSpec s;
    s.kind = BaselineKind::random_target;
    s.target_class = target;
    s.seed = seed;
    return s;
}

BaselineSpec BaselineSpec::ganmex(std::shared_ptr<const gan::GanmexModel> model, std::size_t target) {
    BaselineSpec s;
    s.kind = BaselineKind::ganmex;
    s.model = std::move(model);
    s.target_class = target;
    return s;
}

bool BaselineSpec::needs_target() const noexcept {
    return kind == BaselineKind::mdts || kind == BaselineKind::random_target || kind == BaselineKind::ganmex;
}

BaselineSpec BaselineSpec::with_target(std::size_t target) const {
    BaselineSpec s = *this;
    if (needs_target()) s.target_class = target;
    return s;
}

void BaselineSpec::validate(std::optional<std::size_t> class_count) const {
    if (kind == BaselineKind::blur && !(sigma > 0.0 && std::isfinite(sigma))) {
        throw std::invalid_argument("blur baseline: sigma must be positive, got " + std::to_string(sigma));
    }
    if (kind == BaselineKind::uniform && !(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument("uniform baseline: value must lie in [0, 1], got " + std::to_string(value));
    }
    if (!needs_target()) return;
    if (!target_class) throw std::invalid_argument(std::string(to_string(kind)) + " baseline requires a target class");
    if (class_count && *target_class >= *class_count) {
        throw std::invalid_argument("baseline target class " + std::to_string(*target_class) + " out of range for " +
                                    std::to_string(*class_count) + " classes");
    }
    if (kind == BaselineKind::ganmex && !model) throw std::invalid_argument("ganmex baseline requires a model");
}

std::string BaselineSpec::label() const {
    switch (kind) {
        case BaselineKind::uniform: return "uniform(" + trim_double(value) + ")";
        case BaselineKind::blur: return "blur(" + trim_double(sigma) + ")";
        default: return std::string(to_string(kind));
    }
}

data::Image gaussian_blur(const data::Image& x, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : k) v /= total;

    const auto C = x.channels();
    const auto H = static_cast<std::ptrdiff_t>(x.height()), W = static_cast<std::ptrdiff_t>(x.width());
    auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::min(std::max(v, std::ptrdiff_t{0}), hi - 1); };
    Tensor tmp(x.shape()), out(x.shape());
    const Tensor& src = x.tensor();
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = c * static_cast<std::size_t>(H * W);
        for (std::ptrdiff_t r = 0; r < H; ++r) {
            for (std::ptrdiff_t col = 0; col < W; ++col) {
                double s = 0.0;
                for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
                    s += k[static_cast<std::size_t>(i + radius)] *
                         src[base + static_cast<std::size_t>(r * W + clampi(col + i, W))];
                }
                tmp[base + static_cast<std::size_t>(r * W + col)] = s;
            }
        }
        for (std::ptrdiff_t r = 0; r < H; ++r) {
            for (std::ptrdiff_t col = 0; col < W; ++col) {
                double s = 0.0;
                for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
                    s += k[static_cast<std::size_t>(i + radius)] *
                         tmp[base + static_cast<std::size_t>(clampi(r + i, H) * W + col)];
                }
                out[base + static_cast<std::size_t>(r * W + col)] = s;
            }
        }
    }
    return data::Image(std::move(out));
}

Neighbor nearest_of_class(const data::Image& x, const data::LabeledDataset& train, std::size_t target) {
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    bool found = false;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.labels[i] != target) continue;
        const double d = baseline_distance(x, train.images[i]);
        if (d < best.distance) {
            best = {i, d};
            found = true;
        }
    }
    if (!found) {
        throw std::invalid_argument("training set has no images of target class " + std::to_string(target));
    }
    return best;
}

data::Image make_baseline(const BaselineSpec& spec, const data::Image& x, const data::LabeledDataset& train) {
    spec.validate();
    switch (spec.kind) {
        case BaselineKind::zero: return data::Image(x.channels(), x.height(), x.width(), 0.0);
        case BaselineKind::max: return data::Image(x.channels(), x.height(), x.width(), 1.0);
        case BaselineKind::uniform: return data::Image(x.channels(), x.height(), x.width(), spec.value);
        case BaselineKind::blur: return gaussian_blur(x, spec.sigma);
        case BaselineKind::mdts: return train.images[nearest_of_class(x, train, *spec.target_class).index];
        case BaselineKind::random_target: {
            const auto pool = train.indices_of_class(*spec.target_class);
            if (pool.empty()) {
                throw std::invalid_argument("training set has no images of target class " +
                                            std::to_string(*spec.target_class));
            }
            // Each input draws its own sample; the draw is fixed by (seed, x).
            const auto& t = x.tensor();
            const std::string_view bytes(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
            Rng rng(mix_seed(spec.seed, io::fnv1a(bytes)));
            const auto& img = train.images[pool[uniform_index(rng, pool.size())]];
            require_same_shape("random_target baseline", x, img);
            return img;
        }
        case BaselineKind::ganmex: {
            if (spec.model->image_shape != x.shape()) {
                throw_shape_error("ganmex baseline", {x.shape(), spec.model->image_shape});
            }
            return gan::generate_baseline(*spec.model, x, *spec.target_class);
        }
    }
    throw std::logic_error("make_baseline: unhandled kind");
}

double baseline_distance(const data::Image& x, const data::Image& baseline) {
    require_same_shape("baseline_distance", x, baseline);
    double s = 0.0;
    const auto& a = x.tensor();
    const auto& b = baseline.tensor();
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double edge_region_distance(const data::Image& x, const data::Image& baseline, const data::PixelMask& mask) {
    require_same_shape("edge_region_distance", x, baseline);
    const std::size_t hw = x.pixel_count();
    if (mask.size() != hw) {
        throw std::invalid_argument("edge_region_distance: mask has " + std::to_string(mask.size()) +
                                    " entries, image has " + std::to_string(hw) + " pixels");
    }
    bool any = false;
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
        if (!mask[p]) continue;
        any = true;
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const double d = x.tensor()[c * hw + p] - baseline.tensor()[c * hw + p];
            s += d * d;
        }
    }
    if (!any) throw std::invalid_argument("edge_region_distance: empty mask");
    return std::sqrt(s);
}

ClassDistanceStats class_distance_stats(const data::LabeledDataset& ds, std::size_t samples, std::uint64_t seed) {
    if (ds.class_count < 2) throw std::invalid_argument("class_distance_stats: need at least two classes");
    if (samples == 0) throw std::invalid_argument("class_distance_stats: samples must be positive");
    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    for (std::size_t c = 0; c < ds.class_count; ++c) {
        if (by_class[c].size() < 2) {
            throw std::invalid_argument("class_distance_stats: class " + std::to_string(c) +
                                        " has fewer than two members");
        }
    }

    Rng rng(seed);
    auto mean_and_stderr = [samples](double sum, double sum_sq) {
        const double n = static_cast<double>(samples);
        const double mean = sum / n;
        const double var = samples > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
        return std::pair{mean, std::sqrt(var / n)};
    };

    double s_in = 0.0, q_in = 0.0, s_out = 0.0, q_out = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t i = uniform_index(rng, ds.size());
        const auto& same = by_class[ds.labels[i]];
        std::size_t j;
        do {
            j = same[uniform_index(rng, same.size())];
        } while (j == i);
        const double d = baseline_distance(ds.images[i], ds.images[j]);
        s_in += d;
        q_in += d * d;
    }
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t i = uniform_index(rng, ds.size());
        const std::size_t other = gan::sample_target(rng, ds.labels[i], ds.class_count);
        const auto& pool = by_class[other];
        const double d = baseline_distance(ds.images[i], ds.images[pool[uniform_index(rng, pool.size())]]);
        s_out += d;
        q_out += d * d;
    }
    ClassDistanceStats st;
    std::tie(st.intra, st.intra_stderr) = mean_and_stderr(s_in, q_in);
    std::tie(st.inter, st.inter_stderr) = mean_and_stderr(s_out, q_out);
    st.samples = samples;
    return st;
}

}  // namespace ganmex::baselines
