#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "lch/rng.hpp"
#include "lch/tape.hpp"
#include "lch/tensor.hpp"

using namespace lch;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Keep values away from the ReLU kink so finite differences stay valid.
Tensor random_tensor_off_kink(Shape shape, Rng& rng) {
    Tensor t = random_tensor(std::move(shape), rng);
    for (std::size_t i = 0; i < t.numel(); ++i)
        if (std::abs(t[i]) < 1e-2) t[i] += t[i] >= 0 ? 2e-2 : -2e-2;
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Central finite differences of x -> dot(cotangent, f(x)).
Tensor fd_vjp(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& cot, double h = 1e-5) {
    Tensor g(x.shape());
    Tensor xp = x, xm = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        g[i] = (dot(cot, f(xp)) - dot(cot, f(xm))) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

double rel_err(const Tensor& approx, const Tensor& exact) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < exact.numel(); ++i) {
        num += (approx[i] - exact[i]) * (approx[i] - exact[i]);
        den += exact[i] * exact[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

struct Mlp {
    std::vector<Tensor> weights, biases;
    bool use_gelu = false;

    static Mlp random(const std::vector<std::size_t>& dims, Rng& rng, bool use_gelu = false) {
        Mlp m;
        m.use_gelu = use_gelu;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            m.weights.push_back(random_tensor({dims[l + 1], dims[l]}, rng));
            m.biases.push_back(random_tensor({dims[l + 1]}, rng, -0.5, 0.5));
        }
        return m;
    }

    GraphFn graph() const {
        return [this](GraphBuilder& b, Var x) {
            Var h = x;
            for (std::size_t l = 0; l < weights.size(); ++l) {
                h = b.add(b.matmul(b.constant(weights[l]), h), b.constant(biases[l]));
                if (l + 1 < weights.size()) h = use_gelu ? b.gelu(h) : b.relu(h);
            }
            return h;
        };
    }

    // independent eager evaluation with explicit loops
    Tensor eval(const Tensor& x) const {
        Tensor h = x;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            const Tensor& w = weights[l];
            Tensor y({w.dim(0)});
            for (std::size_t i = 0; i < w.dim(0); ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < w.dim(1); ++k) s += w.at2(i, k) * h[k];
                y[i] = s + biases[l][i];
            }
            if (l + 1 < weights.size())
                for (std::size_t i = 0; i < y.numel(); ++i)
                    y[i] = use_gelu ? gelu_scalar(y[i]) : (y[i] > 0.0 ? y[i] : 0.0);
            h = y;
        }
        return h;
    }
};

}  // namespace

TEST_CASE("forward_record: identity graph") {
    const Tensor x = Tensor::vector({1, 2, 3});
    auto [out, tape] = forward_record([](GraphBuilder&, Var v) { return v; }, x);
    CHECK(out.vec() == std::vector<double>{1, 2, 3});
    CHECK(tape.nodes.size() == 1);
}

TEST_CASE("forward_record: relu definition") {
    auto [out, tape] = forward_record([](GraphBuilder& b, Var v) { return b.relu(v); }, Tensor::vector({-1, 2}));
    CHECK(out.vec() == std::vector<double>{0, 2});
    CHECK(tape.nodes.size() == 2);
}

TEST_CASE("forward_record: taped 3-layer MLP matches independent eager forward to 0 ulp") {
    Rng rng(61);
    const Mlp mlp = Mlp::random({5, 7, 6, 4}, rng);
    const Tensor x = random_tensor({5}, rng);
    auto [out, tape] = forward_record(mlp.graph(), x);
    CHECK(out.vec() == mlp.eval(x).vec());
    // tape replay reproduces the recorded output bit-exactly
    CHECK(replay(tape, x).vec() == out.vec());
}

TEST_CASE("forward_record: shape mismatch errors name the primitive and shapes") {
    const Tensor x = Tensor::vector({1, 2, 3});
    const Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
    try {
        forward_record([&](GraphBuilder& b, Var v) { return b.matmul(b.constant(w), v); }, x);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("(2,2)") != std::string::npos);
        CHECK(msg.find("(3)") != std::string::npos);
    }
}

TEST_CASE("vjp: linear map with ones cotangent gives column sums") {
    const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    auto [out, tape] =
        forward_record([&](GraphBuilder& b, Var v) { return b.matmul(b.constant(a), v); }, Tensor::vector({0, 0, 0}));
    (void)out;
    const Tensor g = vjp(tape, Tensor::ones({2}));
    CHECK(g.vec() == std::vector<double>{5, 7, 9});
}

TEST_CASE("vjp: relu subgradient convention (0 at negative and at exactly 0)") {
    auto [out, tape] = forward_record([](GraphBuilder& b, Var v) { return b.relu(v); }, Tensor::vector({-1, 2}));
    (void)out;
    CHECK(vjp(tape, Tensor::ones({2})).vec() == std::vector<double>{0, 1});

    auto [out0, tape0] = forward_record([](GraphBuilder& b, Var v) { return b.relu(v); }, Tensor::vector({0.0}));
    (void)out0;
    CHECK(vjp(tape0, Tensor::ones({1}))[0] == 0.0);
}

TEST_CASE("vjp: cotangent shape mismatch is an error") {
    auto [out, tape] = forward_record([](GraphBuilder& b, Var v) { return b.relu(v); }, Tensor::vector({-1, 2}));
    (void)out;
    CHECK_THROWS_AS(vjp(tape, Tensor::ones({3})), ShapeError);
}

TEST_CASE("vjp: 2-layer MLP ones-cotangent matches finite differences of summed outputs") {
    Rng rng(103);
    const Mlp mlp = Mlp::random({6, 9, 3}, rng);
    const Tensor x = random_tensor_off_kink({6}, rng);
    auto [out, tape] = forward_record(mlp.graph(), x);
    (void)out;
    const Tensor g = vjp(tape, Tensor::ones({3}));
    const Tensor fd = fd_vjp([&](const Tensor& p) { return mlp.eval(p); }, x, Tensor::ones({3}));
    CHECK(rel_err(fd, g) <= 1e-5);
}

TEST_CASE("full_jacobian: linear map recovered exactly") {
    const Tensor a = Tensor::matrix(3, 2, {1, -2, 0.5, 4, -1, 9});
    auto [out, tape] =
        forward_record([&](GraphBuilder& b, Var v) { return b.matmul(b.constant(a), v); }, Tensor::vector({1, 1}));
    (void)out;
    CHECK(full_jacobian(tape).vec() == a.vec());
}

TEST_CASE("full_jacobian: relu diag at x=[-1,2]") {
    auto [out, tape] = forward_record([](GraphBuilder& b, Var v) { return b.relu(v); }, Tensor::vector({-1, 2}));
    (void)out;
    CHECK(full_jacobian(tape).vec() == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("full_jacobian: row guard rejects huge outputs") {
    Rng rng(7);
    const Tensor w = random_tensor({5000, 2}, rng);
    auto [out, tape] =
        forward_record([&](GraphBuilder& b, Var v) { return b.matmul(b.constant(w), v); }, Tensor::vector({1, 1}));
    (void)out;
    try {
        full_jacobian(tape);
        FAIL("expected guard error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("vjp") != std::string::npos);
    }
}

TEST_CASE("full_jacobian transpose-ones equals vjp(ones) on random MLPs to 1e-12") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Mlp mlp = Mlp::random({4, 8, 8, 3}, rng, trial % 2 == 1);
        const Tensor x = random_tensor({4}, rng);
        auto [out, tape] = forward_record(mlp.graph(), x);
        const Tensor jac = full_jacobian(tape);
        Tensor rowsum({x.numel()});
        for (std::size_t c = 0; c < x.numel(); ++c)
            for (std::size_t r = 0; r < out.numel(); ++r) rowsum[c] += jac.at2(r, c);
        CHECK(max_abs_diff(rowsum, vjp(tape, Tensor::ones(out.shape()))) <= 1e-12);
    }
}

TEST_CASE("vjp is linear in the cotangent") {
    Rng rng(13);
    const Mlp mlp = Mlp::random({5, 6, 4}, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_tensor({5}, rng);
        auto [out, tape] = forward_record(mlp.graph(), x);
        (void)out;
        const Tensor u = random_tensor({4}, rng), v = random_tensor({4}, rng);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Tensor combo({4});
        for (std::size_t i = 0; i < 4; ++i) combo[i] = a * u[i] + b * v[i];
        const Tensor lhs = vjp(tape, combo);
        Tensor rhs = vjp(tape, u) * a + vjp(tape, v) * b;
        CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
    }
}

// One randomized finite-difference check per registered primitive.
TEST_CASE("every registered primitive agrees with central finite differences") {
    struct Case {
        const char* name;
        Shape in_shape;
        std::function<GraphFn()> make;
        bool off_kink;
    };
    Rng setup(17);
    const Tensor mat = random_tensor({4, 5}, setup);
    const Tensor mat2 = random_tensor({5, 4}, setup);
    const Tensor rowvec = random_tensor({5}, setup);
    const Tensor bias4 = random_tensor({4}, setup);
    const Tensor bias3 = random_tensor({3}, setup);
    const Tensor kern = random_tensor({2, 3, 3, 3}, setup);
    const Tensor same35 = random_tensor({3, 5}, setup);
    const Tensor bias5 = random_tensor({5}, setup);

    std::vector<Case> cases = {
        {"matmul Av", {5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.matmul(b.constant(mat), v); }); }, false},
        {"matmul vB", {5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.matmul(v, b.constant(mat2)); }); }, false},
        {"matmul XW^T", {3, 5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.matmul(v, b.constant(mat), false, true); }); }, false},
        {"matmul X^TY", {3, 5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.matmul(v, b.constant(same35), true, false); }); }, false},
        {"add same", {3, 5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.add(v, b.constant(same35)); }); }, false},
        {"add row bias", {3, 5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.add(v, b.constant(bias5)); }); }, false},
        {"add channel bias", {3, 4, 4}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.add(v, b.constant(bias3)); }); }, false},
        {"mul", {3, 5}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.mul(v, b.constant(same35)); }); }, false},
        {"relu", {12}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.relu(v); }); }, true},
        {"gelu", {12}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.gelu(v); }); }, false},
        {"conv2d", {3, 6, 6}, [&] { return GraphFn([&](GraphBuilder& b, Var v) { return b.conv2d(v, b.constant(kern), 2); }); }, false},
        {"conv2d weight", {2, 3, 3, 3},
         [&] {
             const Tensor img = random_tensor({3, 6, 6}, setup);
             return GraphFn([&, img](GraphBuilder& b, Var v) { return b.conv2d(b.constant(img), v, 1); });
         },
         false},
        {"reshape", {3, 4}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.reshape(v, {12}); }); }, false},
        {"slice", {6}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.slice(v, 0, 1, 4); }); }, false},
        {"reduce_sum all", {3, 4}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.reduce_sum(v); }); }, false},
        {"reduce_sum axis", {3, 4}, [&] { return GraphFn([](GraphBuilder& b, Var v) { return b.reduce_sum(v, 0); }); }, false},
    };

    Rng rng(19);
    for (const auto& c : cases) {
        INFO(std::string(c.name));
        const GraphFn fn = c.make();
        for (int trial = 0; trial < 100; ++trial) {
            const Tensor x = c.off_kink ? random_tensor_off_kink(c.in_shape, rng) : random_tensor(c.in_shape, rng);
            auto [out, tape] = forward_record(fn, x);
            const Tensor cot = random_tensor(out.shape(), rng);
            const Tensor g = vjp(tape, cot);
            const Tensor fd = fd_vjp([&](const Tensor& p) { return forward_record(fn, p).first; }, x, cot);
            const double err = rel_err(fd, g);
            CAPTURE(trial);
            CHECK(err <= 1e-4);
            if (err > 1e-4) break;
        }
    }
}

TEST_CASE("tape replay cross-checks a mutated input") {
    Rng rng(23);
    const Mlp mlp = Mlp::random({4, 6, 2}, rng);
    const Tensor x0 = random_tensor({4}, rng);
    auto [out, tape] = forward_record(mlp.graph(), x0);
    (void)out;
    const Tensor x1 = random_tensor({4}, rng);
    CHECK(replay(tape, x1).vec() == mlp.eval(x1).vec());
}

TEST_CASE("gelu tanh approximation: value and derivative sanity") {
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(gelu_scalar(-10.0) == doctest::Approx(0.0).epsilon(1e-6));
    // derivative matches finite differences of the scalar
    for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        const double h = 1e-6;
        const double fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2 * h);
        CHECK(gelu_grad_scalar(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}
