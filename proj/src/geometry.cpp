#include "lch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace lch {

double polygon_area(const Polygon2& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& p = poly[i];
        const Point2& q = poly[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * acc;
}

Point2 polygon_interior_point(const Polygon2& poly) {
    // vertex mean; interior for convex polygons
    Point2 c{0.0, 0.0};
    for (const Point2& p : poly) {
        c[0] += p[0];
        c[1] += p[1];
    }
    c[0] /= static_cast<double>(poly.size());
    c[1] /= static_cast<double>(poly.size());
    return c;
}

bool point_in_convex_polygon(const Polygon2& poly, const Point2& p, double tol) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = poly[i];
        const Point2& b = poly[(i + 1) % n];
        const double ex = b[0] - a[0], ey = b[1] - a[1];
        const double len = std::hypot(ex, ey);
        if (len == 0.0) continue;
        const double cross = ex * (p[1] - a[1]) - ey * (p[0] - a[0]);
        if (cross / len < -tol) return false;  // right of a CCW edge
    }
    return true;
}

std::size_t laguerre_assign(const PowerDiagram& pd, const Tensor& x) {
    if (pd.sites.empty()) throw ConfigError("laguerre_assign: power diagram has no sites");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < pd.sites.size(); ++q) {
        const PdSite& site = pd.sites[q];
        if (!site.mu.same_shape(x))
            throw ShapeError("laguerre_assign: point " + shape_str(x.shape()) + " vs site " +
                             shape_str(site.mu.shape()));
        double d = -site.tau;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double diff = x[i] - site.mu[i];
            d += diff * diff;
        }
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = q;
        }
    }
    return best;
}

namespace {

// One neuron's level-set line a*x + b*y + o = 0 within a cell.
struct Line {
    double a, b, o;
};

struct SplitOutcome {
    bool split = false;
    Polygon2 pos, neg;
    Point2 chord_a{}, chord_b{};
    bool unsplit_bit = false;  // side of the whole cell when !split
};

SplitOutcome split_polygon(const Polygon2& poly, const Line& line, double eps, double sliver) {
    SplitOutcome out;
    const std::size_t n = poly.size();
    const double nrm = std::hypot(line.a, line.b);
    if (nrm < 1e-300) {
        out.unsplit_bit = line.o > 0.0;
        return out;
    }

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = (line.a * poly[i][0] + line.b * poly[i][1] + line.o) / nrm;

    bool any_pos = false, any_neg = false;
    for (double v : d) {
        if (v > eps) any_pos = true;
        if (v < -eps) any_neg = true;
    }
    const Point2 inner = polygon_interior_point(poly);
    const double inner_val = line.a * inner[0] + line.b * inner[1] + line.o;
    if (!any_pos || !any_neg) {
        out.unsplit_bit = inner_val > 0.0;
        return out;
    }

    Polygon2 pos, neg;
    std::vector<Point2> onpts;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const int si = d[i] > eps ? 1 : (d[i] < -eps ? -1 : 0);
        const int sj = d[j] > eps ? 1 : (d[j] < -eps ? -1 : 0);
        if (si >= 0) pos.push_back(poly[i]);
        if (si <= 0) neg.push_back(poly[i]);
        if (si == 0) onpts.push_back(poly[i]);
        if (si * sj < 0) {
            const double t = d[i] / (d[i] - d[j]);
            const Point2 p{poly[i][0] + t * (poly[j][0] - poly[i][0]), poly[i][1] + t * (poly[j][1] - poly[i][1])};
            pos.push_back(p);
            neg.push_back(p);
            onpts.push_back(p);
        }
    }

    const double area_pos = pos.size() >= 3 ? polygon_area(pos) : 0.0;
    const double area_neg = neg.size() >= 3 ? polygon_area(neg) : 0.0;
    if (area_pos < sliver || area_neg < sliver) {
        // the sliver merges into its sibling across the cut
        out.unsplit_bit = area_pos >= area_neg;
        return out;
    }

    // chord endpoints: extreme contact points along the line direction
    const double dx = -line.b / nrm, dy = line.a / nrm;
    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
    Point2 pmin{}, pmax{};
    for (const Point2& p : onpts) {
        const double t = p[0] * dx + p[1] * dy;
        if (t < tmin) {
            tmin = t;
            pmin = p;
        }
        if (t > tmax) {
            tmax = t;
            pmax = p;
        }
    }
    out.split = true;
    out.pos = std::move(pos);
    out.neg = std::move(neg);
    out.chord_a = pmin;
    out.chord_b = pmax;
    return out;
}

struct WorkCell {
    Polygon2 poly;
    Tensor m;  // (w, 2) current pre-activation map
    Tensor c;  // (w)
    std::vector<std::uint8_t> bits;
};

}  // namespace

Partition enumerate_regions(const Network& net, const std::array<double, 4>& domain, const EnumerateOptions& opts) {
    validate_network(net);
    if (net.input_dim != Shape{2}) throw ConfigError("enumerate_regions: network input must be 2-D");
    if (!net.ablations.empty()) throw ConfigError("enumerate_regions: ablated networks are not supported");
    std::size_t relu_neurons = 0;
    for (int l = 1; l <= net.num_layers(); ++l) {
        const LayerKind kind = net.layers[static_cast<std::size_t>(l - 1)].kind;
        if (kind == LayerKind::Gelu || kind == LayerKind::Conv2d)
            throw ConfigError(std::string("enumerate_regions: non-CPA/unsupported layer '") +
                              layer_kind_name(kind) + "' at index " + std::to_string(l));
        if (kind == LayerKind::Relu) relu_neurons += net.layer_width(l);
    }
    if (relu_neurons > static_cast<std::size_t>(opts.neuron_guard))
        throw ConfigError("enumerate_regions: " + std::to_string(relu_neurons) + " relu neurons exceed the guard (" +
                          std::to_string(opts.neuron_guard) + ")");
    if (!(domain[0] < domain[2]) || !(domain[1] < domain[3]))
        throw ConfigError("enumerate_regions: empty domain rectangle");

    Partition out;
    out.domain = domain;

    WorkCell root;
    root.poly = {{domain[0], domain[1]}, {domain[2], domain[1]}, {domain[2], domain[3]}, {domain[0], domain[3]}};
    root.m = Tensor::identity(2);
    root.c = Tensor({2});

    std::vector<WorkCell> cells;
    cells.push_back(std::move(root));

    for (int l = 1; l <= net.num_layers(); ++l) {
        const LayerSpec& layer = net.layers[static_cast<std::size_t>(l - 1)];
        if (layer.kind == LayerKind::Affine) {
            for (WorkCell& cell : cells) {
                cell.c = matmul(*layer.weight, cell.c) + *layer.bias;
                cell.m = matmul(*layer.weight, cell.m);
            }
        } else if (layer.kind == LayerKind::Relu) {
            const std::size_t width = cells.empty() ? 0 : cells.front().m.dim(0);
            std::vector<WorkCell> next;
            next.reserve(cells.size() * 2);
            for (WorkCell& cell : cells) {
                // split this cell by every neuron of the layer; (m, c) is
                // shared by all pieces until the layer's mask applies
                struct Piece {
                    Polygon2 poly;
                    std::vector<std::uint8_t> lbits;
                };
                std::vector<Piece> pieces{{std::move(cell.poly), {}}};
                for (std::size_t j = 0; j < width; ++j) {
                    const Line line{cell.m.at2(j, 0), cell.m.at2(j, 1), cell.c[j]};
                    std::vector<Piece> grown;
                    grown.reserve(pieces.size() + 4);
                    for (Piece& piece : pieces) {
                        SplitOutcome so = split_polygon(piece.poly, line, opts.clip_eps, opts.sliver_area);
                        if (!so.split) {
                            piece.lbits.push_back(so.unsplit_bit ? 1 : 0);
                            grown.push_back(std::move(piece));
                            continue;
                        }
                        out.boundary_segments.push_back({so.chord_a, so.chord_b, l, static_cast<int>(j)});
                        Piece ppos{std::move(so.pos), piece.lbits};
                        ppos.lbits.push_back(1);
                        Piece pneg{std::move(so.neg), std::move(piece.lbits)};
                        pneg.lbits.push_back(0);
                        grown.push_back(std::move(ppos));
                        grown.push_back(std::move(pneg));
                    }
                    pieces = std::move(grown);
                }
                for (Piece& piece : pieces) {
                    WorkCell wc;
                    wc.poly = std::move(piece.poly);
                    wc.m = cell.m;
                    wc.c = cell.c;
                    for (std::size_t j = 0; j < width; ++j) {
                        if (piece.lbits[j]) continue;
                        wc.m.at2(j, 0) = 0.0;
                        wc.m.at2(j, 1) = 0.0;
                        wc.c[j] = 0.0;
                    }
                    wc.bits = cell.bits;
                    wc.bits.insert(wc.bits.end(), piece.lbits.begin(), piece.lbits.end());
                    next.push_back(std::move(wc));
                }
            }
            cells = std::move(next);
        }
        // flatten on a 1-D carrier is an identity here
    }

    out.regions.reserve(cells.size());
    for (WorkCell& cell : cells) {
        Region region;
        region.polygon = std::move(cell.poly);
        region.activation_pattern = std::move(cell.bits);
        region.centroid = Tensor({2});
        for (std::size_t r = 0; r < cell.m.dim(0); ++r) {
            region.centroid[0] += cell.m.at2(r, 0);
            region.centroid[1] += cell.m.at2(r, 1);
        }
        double fro = 0.0;
        for (std::size_t i = 0; i < cell.m.numel(); ++i) fro += cell.m[i] * cell.m[i];
        region.frobenius = std::sqrt(fro);
        region.affine_a = std::move(cell.m);
        region.affine_b = std::move(cell.c);
        out.regions.push_back(std::move(region));
    }
    return out;
}

namespace {

int normalize_levelset_layer(const Network& net, int layer) {
    if (layer < 1 || layer > net.num_layers()) throw ConfigError("layer_levelsets: layer index out of range");
    const LayerKind kind = net.layers[static_cast<std::size_t>(layer - 1)].kind;
    if (kind == LayerKind::Relu) return layer;
    if (kind == LayerKind::Affine && layer < net.num_layers() &&
        net.layers[static_cast<std::size_t>(layer)].kind == LayerKind::Relu)
        return layer + 1;
    throw ConfigError("layer_levelsets: layer " + std::to_string(layer) + " has no relu level sets");
}

}  // namespace

std::vector<BoundarySegment> filter_levelsets(const Partition& partition, const Network& net, int layer) {
    const int relu_layer = normalize_levelset_layer(net, layer);
    std::vector<BoundarySegment> out;
    for (const BoundarySegment& s : partition.boundary_segments)
        if (s.layer_index == relu_layer) out.push_back(s);
    return out;
}

std::vector<BoundarySegment> layer_levelsets(const Network& net, const std::array<double, 4>& domain, int layer,
                                             const EnumerateOptions& opts) {
    const Partition partition = enumerate_regions(net, domain, opts);
    return filter_levelsets(partition, net, layer);
}

namespace {

// Shared collinear overlapping edge between two convex polygons, if any.
bool shared_edge(const Polygon2& pa, const Polygon2& pb, Point2& ea, Point2& eb) {
    constexpr double kDirTol = 1e-7, kDistTol = 1e-9, kOverlapTol = 1e-11;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const Point2& a0 = pa[i];
        const Point2& a1 = pa[(i + 1) % pa.size()];
        const double ax = a1[0] - a0[0], ay = a1[1] - a0[1];
        const double alen = std::hypot(ax, ay);
        if (alen < kOverlapTol) continue;
        for (std::size_t j = 0; j < pb.size(); ++j) {
            const Point2& b0 = pb[j];
            const Point2& b1 = pb[(j + 1) % pb.size()];
            const double bx = b1[0] - b0[0], by = b1[1] - b0[1];
            const double blen = std::hypot(bx, by);
            if (blen < kOverlapTol) continue;
            if (std::abs(ax * by - ay * bx) / (alen * blen) > kDirTol) continue;
            // b0 must lie on the a-line
            if (std::abs(ax * (b0[1] - a0[1]) - ay * (b0[0] - a0[0])) / alen > kDistTol) continue;
            // overlap along the a-direction
            const double t0 = 0.0, t1 = alen;
            const double s0 = ((b0[0] - a0[0]) * ax + (b0[1] - a0[1]) * ay) / alen;
            const double s1 = ((b1[0] - a0[0]) * ax + (b1[1] - a0[1]) * ay) / alen;
            const double lo = std::max(t0, std::min(s0, s1));
            const double hi = std::min(t1, std::max(s0, s1));
            if (hi - lo > 1e-9) {
                ea = {a0[0] + ax / alen * lo, a0[1] + ay / alen * lo};
                eb = {a0[0] + ax / alen * hi, a0[1] + ay / alen * hi};
                return true;
            }
        }
    }
    return false;
}

}  // namespace

ParallelVerdict check_parallel_boundaries(const std::vector<Region>& chain, double tol_collinear, double tol_angle) {
    if (chain.size() < 2) throw ConfigError("check_parallel_boundaries: need at least two regions");
    std::vector<Point2> normals;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        Point2 ea{}, eb{};
        if (!shared_edge(chain[i].polygon, chain[i + 1].polygon, ea, eb))
            throw ConfigError("check_parallel_boundaries: regions " + std::to_string(i) + " and " +
                              std::to_string(i + 1) + " share no boundary edge");
        const double ex = eb[0] - ea[0], ey = eb[1] - ea[1];
        const double len = std::hypot(ex, ey);
        normals.push_back({-ey / len, ex / len});
    }

    ParallelVerdict verdict;
    // centroid collinearity: sqrt(lambda2/lambda1) of the 2x2 scatter
    const std::size_t n = chain.size();
    double mx = 0.0, my = 0.0;
    for (const Region& r : chain) {
        mx += r.centroid[0];
        my += r.centroid[1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const Region& r : chain) {
        const double dx = r.centroid[0] - mx, dy = r.centroid[1] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double l1 = tr / 2.0 + disc, l2 = std::max(0.0, tr / 2.0 - disc);
    verdict.collinearity_residual = l1 > 0.0 ? std::sqrt(l2 / l1) : 0.0;

    for (std::size_t i = 0; i < normals.size(); ++i)
        for (std::size_t j = i + 1; j < normals.size(); ++j) {
            double c = std::abs(normals[i][0] * normals[j][0] + normals[i][1] * normals[j][1]);
            c = std::min(c, 1.0);
            verdict.max_angle = std::max(verdict.max_angle, std::acos(c));
        }

    verdict.holds = !(verdict.collinearity_residual <= tol_collinear) || verdict.max_angle <= tol_angle;
    return verdict;
}

std::vector<std::uint8_t> activation_pattern_at(const Network& net, const Tensor& x) {
    std::vector<std::uint8_t> bits;
    Tensor h = x;
    for (int l = 1; l <= net.num_layers(); ++l) {
        const Tensor pre = h;
        h = forward_span(net, h, l, l);
        if (net.layers[static_cast<std::size_t>(l - 1)].kind == LayerKind::Relu)
            for (std::size_t i = 0; i < pre.numel(); ++i) bits.push_back(pre[i] > 0.0 ? 1 : 0);
    }
    return bits;
}

RegionLocator::RegionLocator(const Partition& partition, int grid)
    : partition_(partition), domain_(partition.domain), grid_(grid), buckets_(static_cast<std::size_t>(grid * grid)) {
    const double w = domain_[2] - domain_[0], h = domain_[3] - domain_[1];
    for (std::size_t r = 0; r < partition_.regions.size(); ++r) {
        double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
        for (const Point2& p : partition_.regions[r].polygon) {
            xmin = std::min(xmin, p[0]);
            xmax = std::max(xmax, p[0]);
            ymin = std::min(ymin, p[1]);
            ymax = std::max(ymax, p[1]);
        }
        const int gx0 = std::clamp(static_cast<int>((xmin - domain_[0]) / w * grid_), 0, grid_ - 1);
        const int gx1 = std::clamp(static_cast<int>((xmax - domain_[0]) / w * grid_), 0, grid_ - 1);
        const int gy0 = std::clamp(static_cast<int>((ymin - domain_[1]) / h * grid_), 0, grid_ - 1);
        const int gy1 = std::clamp(static_cast<int>((ymax - domain_[1]) / h * grid_), 0, grid_ - 1);
        for (int gy = gy0; gy <= gy1; ++gy)
            for (int gx = gx0; gx <= gx1; ++gx)
                buckets_[static_cast<std::size_t>(gy * grid_ + gx)].push_back(static_cast<int>(r));
    }
}

int RegionLocator::locate(const Point2& p) const {
    const double w = domain_[2] - domain_[0], h = domain_[3] - domain_[1];
    const int gx = std::clamp(static_cast<int>((p[0] - domain_[0]) / w * grid_), 0, grid_ - 1);
    const int gy = std::clamp(static_cast<int>((p[1] - domain_[1]) / h * grid_), 0, grid_ - 1);
    for (int r : buckets_[static_cast<std::size_t>(gy * grid_ + gx)])
        if (point_in_convex_polygon(partition_.regions[static_cast<std::size_t>(r)].polygon, p)) return r;
    return -1;
}

std::vector<int> regions_along_segment(const Partition& partition, const Point2& a, const Point2& b, int steps) {
    const RegionLocator locator(partition);
    std::vector<int> path;
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps);
        const Point2 p{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
        const int r = locator.locate(p);
        if (r < 0) continue;
        if (path.empty() || path.back() != r) path.push_back(r);
    }
    return path;
}

std::string partition_to_json(const Partition& partition) {
    nlohmann::json root;
    root["domain"] = partition.domain;
    nlohmann::json regions = nlohmann::json::array();
    for (const Region& r : partition.regions) {
        nlohmann::json jr;
        nlohmann::json verts = nlohmann::json::array();
        for (const Point2& p : r.polygon) verts.push_back({p[0], p[1]});
        jr["vertices"] = std::move(verts);
        std::string bits;
        bits.reserve(r.activation_pattern.size());
        for (std::uint8_t b : r.activation_pattern) bits.push_back(b ? '1' : '0');
        jr["pattern"] = std::move(bits);
        nlohmann::json affine;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < r.affine_a.dim(0); ++i)
            rows.push_back({r.affine_a.at2(i, 0), r.affine_a.at2(i, 1)});
        affine["a"] = std::move(rows);
        affine["b"] = r.affine_b.vec();
        jr["affine"] = std::move(affine);
        jr["centroid"] = {r.centroid[0], r.centroid[1]};
        jr["frobenius"] = r.frobenius;
        regions.push_back(std::move(jr));
    }
    root["regions"] = std::move(regions);
    nlohmann::json segs = nlohmann::json::array();
    for (const BoundarySegment& s : partition.boundary_segments)
        segs.push_back({{"a", {s.a[0], s.a[1]}},
                        {"b", {s.b[0], s.b[1]}},
                        {"layer", s.layer_index},
                        {"neuron", s.neuron_index}});
    root["boundary_segments"] = std::move(segs);
    return root.dump(2) + "\n";
}

}  // namespace lch
