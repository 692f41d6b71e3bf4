#include "lch/centroids.hpp"

#include <algorithm>
#include <cmath>

#include "lch/rng.hpp"

namespace lch {

void validate(const Neighborhood& nb) {
    if (nb.count < 1) throw ConfigError("neighborhood: count must be >= 1");
    if (!std::isfinite(nb.radius) || nb.radius < 0.0)
        throw ConfigError("neighborhood: radius must be finite and nonnegative");
    if (!nb.center.all_finite()) throw NumericError("neighborhood: center has non-finite entries");
}

std::vector<Tensor> sample_neighborhood(const Neighborhood& nb) {
    validate(nb);
    std::vector<Tensor> samples;
    samples.reserve(static_cast<std::size_t>(nb.count));
    Rng rng(nb.seed);
    const std::size_t d = nb.center.numel();
    for (int s = 0; s < nb.count; ++s) {
        Tensor x = nb.center;
        if (nb.radius > 0.0) {
            if (nb.sampling == Neighborhood::Sampling::Gaussian) {
                for (std::size_t i = 0; i < d; ++i) x[i] += nb.radius * rng.normal();
            } else {
                // uniform in the ball: gaussian direction scaled by r*u^(1/d)
                std::vector<double> dir(d);
                double n2 = 0.0;
                do {
                    n2 = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        dir[i] = rng.normal();
                        n2 += dir[i] * dir[i];
                    }
                } while (n2 == 0.0);
                const double scale =
                    nb.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / std::sqrt(n2);
                for (std::size_t i = 0; i < d; ++i) x[i] += scale * dir[i];
            }
        }
        samples.push_back(std::move(x));
    }
    return samples;
}

Tensor span_centroid_at(const Network& net, const Tensor& h, int l1, int l2) {
    if (!h.all_finite()) throw NumericError("centroid: non-finite input");
    const Tape tape = tape_span(net, h, l1, l2);
    return vjp(tape, Tensor::ones(tape.output().shape()));
}

Tensor centroid_vector(const Network& net, const Tensor& x, int l1, int l2) {
    if (!x.all_finite()) throw NumericError("centroid: non-finite input");
    const Tensor h = l1 == 1 ? x : forward_span(net, x, 1, l1 - 1);
    return span_centroid_at(net, h, l1, l2);
}

CentroidRecord centroid(const Network& net, const Tensor& x, int l1, int l2, const std::string& input_id) {
    return {input_id, l1, l2, centroid_vector(net, x, l1, l2), network_hash(net)};
}

Tensor local_centroid(const Network& net, const Neighborhood& nb, int l1, int l2) {
    const std::vector<Tensor> samples = sample_neighborhood(nb);
    Tensor acc;
    for (const Tensor& x : samples) {
        Tensor c = centroid_vector(net, x, l1, l2);
        if (acc.numel() == 0)
            acc = std::move(c);
        else
            acc += c;
    }
    acc *= 1.0 / static_cast<double>(samples.size());
    return acc;
}

namespace {

std::vector<double> normalize_scores(const std::vector<double>& scores) {
    std::vector<double> out(scores.size(), 0.0);
    if (scores.empty()) return out;
    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    const double span = *mx - *mn;
    if (span == 0.0) return out;  // all scores equal -> all 0
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *mn) / span;
    return out;
}

}  // namespace

AttributionReport neuron_attribution(const Network& net, const Neighborhood& nb, int layer, int l1, int l2) {
    if (layer < l1 || layer > l2)
        throw ConfigError("neuron_attribution: layer " + std::to_string(layer) + " outside span (" +
                          std::to_string(l1) + "," + std::to_string(l2) + ")");
    const std::size_t width = net.layer_width(layer);
    const std::vector<Tensor> samples = sample_neighborhood(nb);

    // baseline centroids, checked against a zero-norm denominator
    std::vector<Tensor> base;
    std::vector<double> base_norm;
    base.reserve(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        base.push_back(span_centroid_at(net, samples[s], l1, l2));
        const double n = norm2(base.back());
        if (n <= 1e-12)
            throw NumericError("neuron_attribution: baseline centroid norm <= 1e-12 at sample " + std::to_string(s));
        base_norm.push_back(n);
    }

    AttributionReport report;
    report.layer = layer;
    report.neighborhood = nb;
    report.scores.resize(width, 0.0);
    for (std::size_t i = 0; i < width; ++i) {
        const Network cut = ablate(net, {layer, static_cast<int>(i)});
        double acc = 0.0;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            const Tensor mu = span_centroid_at(cut, samples[s], l1, l2);
            acc += norm2(base[s] - mu) / base_norm[s];
        }
        report.scores[i] = acc / static_cast<double>(samples.size());
    }
    report.normalized_scores = normalize_scores(report.scores);
    return report;
}

double percentile_rank(const std::vector<double>& scores, std::size_t index) {
    if (scores.empty()) throw ConfigError("percentile_rank: empty scores");
    const double v = scores.at(index);
    std::size_t less = 0, equal = 0;
    for (double s : scores) {
        if (s < v) ++less;
        if (s == v) ++equal;
    }
    return 100.0 * (static_cast<double>(less) + 0.5 * static_cast<double>(equal)) /
           static_cast<double>(scores.size());
}

RobustnessTable attribution_robustness(const Network& net, const Tensor& x, int layer, int l1, int l2,
                                       int designated_neuron, const RobustnessConfig& cfg) {
    if (cfg.radii.empty()) throw ConfigError("attribution_robustness: no radii given");
    for (double r : cfg.radii)
        if (!(r > 0.0)) throw ConfigError("attribution_robustness: radii must be positive fractions");
    if (cfg.resamples < 1) throw ConfigError("attribution_robustness: resamples must be >= 1");

    const double base_norm = norm2(span_centroid_at(net, x, l1, l2));
    RobustnessTable table;
    table.layer = layer;
    table.designated_neuron = designated_neuron;

    Rng seed_stream(cfg.seed);
    for (std::size_t ri = 0; ri < cfg.radii.size(); ++ri) {
        const double eps = cfg.radii[ri] * base_norm;
        const std::size_t width = net.layer_width(layer);
        std::vector<double> mean(width, 0.0), m2(width, 0.0);
        double p_mean = 0.0, p_m2 = 0.0;
        for (int rs = 0; rs < cfg.resamples; ++rs) {
            Neighborhood nb{x, eps, cfg.samples_per_neighborhood, seed_stream.next(), cfg.sampling};
            const AttributionReport rep = neuron_attribution(net, nb, layer, l1, l2);
            // Welford accumulation per neuron and for the percentile track
            const double n = static_cast<double>(rs + 1);
            for (std::size_t i = 0; i < width; ++i) {
                const double d = rep.scores[i] - mean[i];
                mean[i] += d / n;
                m2[i] += d * (rep.scores[i] - mean[i]);
            }
            const double pct = percentile_rank(rep.scores, static_cast<std::size_t>(designated_neuron));
            const double dp = pct - p_mean;
            p_mean += dp / n;
            p_m2 += dp * (pct - p_mean);
        }
        RobustnessRow row;
        row.radius_fraction = cfg.radii[ri];
        row.epsilon = eps;
        row.score_mean = std::move(mean);
        row.score_std.resize(width, 0.0);
        for (std::size_t i = 0; i < width; ++i)
            row.score_std[i] = cfg.resamples > 1 ? std::sqrt(m2[i] / static_cast<double>(cfg.resamples)) : 0.0;
        row.designated_percentile_mean = p_mean;
        row.designated_percentile_std =
            cfg.resamples > 1 ? std::sqrt(p_m2 / static_cast<double>(cfg.resamples)) : 0.0;
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::vector<CentroidRecord> extract_centroid_dataset(const Network& net, const std::vector<Tensor>& inputs, int l1,
                                                     int l2) {
    std::vector<CentroidRecord> out;
    out.reserve(inputs.size());
    const std::string hash = inputs.empty() ? std::string() : network_hash(net);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        out.push_back({std::to_string(i), l1, l2, centroid_vector(net, inputs[i], l1, l2), hash});
    return out;
}

Tensor minmax_normalize_per_channel(const Tensor& t) {
    Tensor out = t;
    const std::size_t channels = t.ndim() >= 2 ? t.dim(0) : 1;
    const std::size_t per = t.numel() / std::max<std::size_t>(channels, 1);
    for (std::size_t c = 0; c < channels; ++c) {
        double lo = out[c * per], hi = out[c * per];
        for (std::size_t i = 0; i < per; ++i) {
            lo = std::min(lo, out[c * per + i]);
            hi = std::max(hi, out[c * per + i]);
        }
        const double span = hi - lo;
        for (std::size_t i = 0; i < per; ++i)
            out[c * per + i] = span == 0.0 ? 0.0 : (out[c * per + i] - lo) / span;
    }
    return out;
}

}  // namespace lch
