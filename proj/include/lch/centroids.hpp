#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lch/nets.hpp"
#include "lch/tensor.hpp"

namespace lch {

/// Centroid of one input over one layer span: the row-sum of the span's
/// input-output Jacobian, computed as a vjp with an all-ones cotangent.
struct CentroidRecord {
    std::string input_id;
    int l1 = 1, l2 = 1;
    Tensor centroid;           // shaped like the span input, d^(l1-1)
    std::string network_hash;  // digest of the producing network
};

struct Neighborhood {
    enum class Sampling { UniformBall, Gaussian };

    Tensor center;
    double radius = 0.0;  // > 0 in normal use; 0 degenerates to {center}
    int count = 1;
    std::uint64_t seed = 0;
    Sampling sampling = Sampling::UniformBall;
};

void validate(const Neighborhood& nb);
std::vector<Tensor> sample_neighborhood(const Neighborhood& nb);

/// Per-neuron attribution scores for one layer (Eq-style relative centroid
/// displacement under ablation, averaged over a fixed sample set).
struct AttributionReport {
    int layer = 0;
    std::vector<double> scores;             // >= 0
    std::vector<double> normalized_scores;  // min 0 / max 1, or all 0 when flat
    Neighborhood neighborhood;
};

Tensor centroid_vector(const Network& net, const Tensor& x, int l1, int l2);
CentroidRecord centroid(const Network& net, const Tensor& x, int l1, int l2, const std::string& input_id = "");

/// Centroid of the span evaluated directly at a point h in the span's own
/// input space (no prefix layers applied).
Tensor span_centroid_at(const Network& net, const Tensor& h, int l1, int l2);

/// Mean centroid over neighborhood samples; the neighborhood lives in the
/// network input space. Deterministic given nb.seed.
Tensor local_centroid(const Network& net, const Neighborhood& nb, int l1, int l2);

/// Attribution of every neuron of `layer` within the span; nb.center lives in
/// the span's input space d^(l1-1). Samples are drawn once and reused for
/// every neuron.
AttributionReport neuron_attribution(const Network& net, const Neighborhood& nb, int layer, int l1, int l2);

struct RobustnessRow {
    double radius_fraction = 0.0;  // of the base centroid norm
    double epsilon = 0.0;
    std::vector<double> score_mean;
    std::vector<double> score_std;
    double designated_percentile_mean = 0.0;
    double designated_percentile_std = 0.0;
};

struct RobustnessTable {
    int layer = 0;
    int designated_neuron = 0;
    std::vector<RobustnessRow> rows;
};

struct RobustnessConfig {
    std::vector<double> radii;  // fractions of ||centroid(x)||
    int resamples = 10;
    int samples_per_neighborhood = 256;
    std::uint64_t seed = 0;
    Neighborhood::Sampling sampling = Neighborhood::Sampling::UniformBall;
};

/// Sweep of neuron_attribution across neighborhood radii and resamplings;
/// x lives in the span's input space.
RobustnessTable attribution_robustness(const Network& net, const Tensor& x, int layer, int l1, int l2,
                                       int designated_neuron, const RobustnessConfig& cfg);

std::vector<CentroidRecord> extract_centroid_dataset(const Network& net, const std::vector<Tensor>& inputs, int l1,
                                                     int l2);

/// Percentile rank (midrank convention) of scores[index] within scores.
double percentile_rank(const std::vector<double>& scores, std::size_t index);

/// Min-max normalize to [0,1] per leading-axis channel; flat input maps to 0.
Tensor minmax_normalize_per_channel(const Tensor& t);

}  // namespace lch
