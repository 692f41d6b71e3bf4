#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lch/nets.hpp"
#include "lch/tensor.hpp"

namespace lch {

using Point2 = std::array<double, 2>;
using Polygon2 = std::vector<Point2>;  // convex, counter-clockwise

double polygon_area(const Polygon2& poly);
Point2 polygon_interior_point(const Polygon2& poly);
/// Inside test for a convex CCW polygon with boundary tolerance.
bool point_in_convex_polygon(const Polygon2& poly, const Point2& p, double tol = 1e-9);

struct PdSite {
    Tensor mu;
    double tau = 0.0;  // radius weight of the Laguerre distance
};

/// Power diagram over centroid/radius sites; tiles minimize
/// ||x - mu_q||^2 - tau_q.
struct PowerDiagram {
    std::vector<PdSite> sites;
};

/// Index of the site minimizing the Laguerre distance; ties break low.
std::size_t laguerre_assign(const PowerDiagram& pd, const Tensor& x);

/// One linear region of a 2-D CPA network.
struct Region {
    Polygon2 polygon;
    std::vector<std::uint8_t> activation_pattern;  // one bit per relu neuron, layer order
    Tensor affine_a;  // (d_out, 2) local expert A
    Tensor affine_b;  // (d_out)
    Tensor centroid;  // (2) = column sums of A
    double frobenius = 0.0;
};

struct BoundarySegment {
    Point2 a, b;
    int layer_index = 0;   // relu layer (1-based network index)
    int neuron_index = 0;  // neuron within that layer
};

struct Partition {
    std::array<double, 4> domain{};  // xmin, ymin, xmax, ymax
    std::vector<Region> regions;
    std::vector<BoundarySegment> boundary_segments;
};

struct EnumerateOptions {
    int neuron_guard = 256;        // reject nets with more relu neurons
    double clip_eps = 1e-10;       // on normalized signed distances
    double sliver_area = 1e-12;    // pieces below this merge into the sibling
};

/// Exact input-space partition of a 2-D-input relu network over a rectangle,
/// by recursive per-layer hyperplane subdivision.
Partition enumerate_regions(const Network& net, const std::array<double, 4>& domain,
                            const EnumerateOptions& opts = {});

/// Boundary segments originating from one relu layer. An affine layer index
/// whose successor is the relu is accepted and normalized.
std::vector<BoundarySegment> layer_levelsets(const Network& net, const std::array<double, 4>& domain, int layer,
                                             const EnumerateOptions& opts = {});
std::vector<BoundarySegment> filter_levelsets(const Partition& partition, const Network& net, int layer);

struct ParallelVerdict {
    double collinearity_residual = 0.0;  // sqrt(lambda2/lambda1) of the centroid scatter
    double max_angle = 0.0;              // max pairwise angle between boundary normals (rad)
    bool holds = true;                   // residual <= tol_collinear implies max_angle <= tol_angle
};

/// Checks the collinear-centroids => parallel-boundaries direction on an
/// ordered chain of adjacent regions. Throws if a consecutive pair shares no
/// boundary edge.
ParallelVerdict check_parallel_boundaries(const std::vector<Region>& chain, double tol_collinear, double tol_angle);

/// Activation bits (post-relu sign > 0) concatenated over all relu layers.
std::vector<std::uint8_t> activation_pattern_at(const Network& net, const Tensor& x);

/// Grid-bucketed point-to-region lookup.
class RegionLocator {
public:
    RegionLocator(const Partition& partition, int grid = 64);
    /// Region index containing p, or -1.
    int locate(const Point2& p) const;

private:
    const Partition& partition_;
    std::array<double, 4> domain_;
    int grid_;
    std::vector<std::vector<int>> buckets_;
};

/// Indices of the distinct regions crossed while walking from a to b.
std::vector<int> regions_along_segment(const Partition& partition, const Point2& a, const Point2& b, int steps = 512);

std::string partition_to_json(const Partition& partition);

}  // namespace lch
