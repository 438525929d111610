#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "okapi/errors.hpp"
#include "okapi/graph.hpp"

using namespace okapi;

namespace {

// Central-difference gradient check against backward(). loss_of must build
// the same scalar loss from the leaf every time it is called.
struct FdProblem {
    // builds loss from leaf x (grad-enabled input of given shape/data)
    std::function<TensorNode*(Graph&, TensorNode*)> loss_of;
    std::vector<int> shape;
};

void check_problem(const FdProblem& p, std::vector<double> x0, double rtol = 1e-4,
                   double eps = 1e-5) {
    std::vector<double> analytic;
    double f0;
    {
        Graph g;
        TensorNode* x = g.input(p.shape, x0, "x");
        TensorNode* loss = p.loss_of(g, x);
        REQUIRE(loss->is_scalar());
        f0 = loss->data[0];
        g.backward(loss);
        analytic = x->grad;
    }
    REQUIRE(std::isfinite(f0));
    for (size_t i = 0; i < x0.size(); ++i) {
        std::vector<double> xp = x0, xm = x0;
        xp[i] += eps;
        xm[i] -= eps;
        Graph gp, gm;
        double fp = p.loss_of(gp, gp.input(p.shape, xp, "x"))->data[0];
        double fm = p.loss_of(gm, gm.input(p.shape, xm, "x"))->data[0];
        double numeric = (fp - fm) / (2 * eps);
        double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        CAPTURE(i);
        CHECK(std::abs(numeric - analytic[i]) / denom < rtol);
    }
}

std::vector<double> rand_vec(Rng& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

} // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(11);
    auto unary_prob = [&](const std::function<TensorNode*(Graph&, TensorNode*)>& f) {
        FdProblem p;
        p.shape = {2, 3};
        p.loss_of = [f](Graph& g, TensorNode* x) {
            // mix into a non-uniform reduction so each element's grad differs
            TensorNode* w = g.constant({2, 3}, {0.3, -1.1, 0.7, 2.0, -0.4, 1.3});
            return g.sum(g.mul(f(g, x), w));
        };
        return p;
    };

    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> x0 = rand_vec(rng, 6);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.sigmoid(x); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.softplus(x); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.gelu(x); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.exp(x); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.scale(x, -1.7); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.softmax(x); }), x0);
        check_problem(unary_prob([](Graph& g, TensorNode* x) { return g.log_softmax(x); }), x0);
    }
}

TEST_CASE("binary op gradients, both sides") {
    Rng rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> a0 = rand_vec(rng, 6);
        std::vector<double> b0 = rand_vec(rng, 6);
        // keep a clear of b so min_elem stays off its ties
        for (size_t i = 0; i < 6; ++i)
            if (std::abs(a0[i] - b0[i]) < 0.05) a0[i] += 0.2;

        for (int side = 0; side < 2; ++side) {
            auto binary_prob = [&](const char* which) {
                FdProblem p;
                p.shape = {2, 3};
                std::vector<double> other = side == 0 ? b0 : a0;
                std::string op = which;
                bool x_is_a = side == 0;
                p.loss_of = [other, op, x_is_a](Graph& g, TensorNode* x) {
                    TensorNode* o = g.input({2, 3}, other, "other");
                    TensorNode* a = x_is_a ? x : o;
                    TensorNode* b = x_is_a ? o : x;
                    TensorNode* y = op == "add"   ? g.add(a, b)
                                    : op == "sub" ? g.sub(a, b)
                                    : op == "mul" ? g.mul(a, b)
                                                  : g.min_elem(a, b);
                    TensorNode* w = g.constant({2, 3}, {1.0, -0.5, 0.25, 2.0, -1.5, 0.75});
                    return g.sum(g.mul(y, w));
                };
                return p;
            };
            check_problem(binary_prob("add"), side == 0 ? a0 : b0);
            check_problem(binary_prob("sub"), side == 0 ? a0 : b0);
            check_problem(binary_prob("mul"), side == 0 ? a0 : b0);
            check_problem(binary_prob("min"), side == 0 ? a0 : b0);
        }
    }
}

TEST_CASE("bias broadcast add gradient") {
    Rng rng(13);
    std::vector<double> m0 = rand_vec(rng, 8);
    std::vector<double> b0 = rand_vec(rng, 4);

    FdProblem pm;
    pm.shape = {2, 4};
    pm.loss_of = [b0](Graph& g, TensorNode* x) {
        return g.sum(g.mul(g.add(x, g.input({4}, b0, "b")),
                           g.constant({2, 4}, {1, 2, -1, 0.5, -2, 1.5, 3, -0.25})));
    };
    check_problem(pm, m0);

    FdProblem pb;
    pb.shape = {4};
    pb.loss_of = [m0](Graph& g, TensorNode* x) {
        return g.sum(g.mul(g.add(g.input({2, 4}, m0, "m"), x),
                           g.constant({2, 4}, {1, 2, -1, 0.5, -2, 1.5, 3, -0.25})));
    };
    check_problem(pb, b0);
}

TEST_CASE("clamp gradient is identity strictly inside, zero outside") {
    FdProblem p;
    p.shape = {5};
    p.loss_of = [](Graph& g, TensorNode* x) {
        return g.sum(g.mul(g.clamp(x, -1.0, 1.0), g.constant({5}, {1, 2, 3, 4, 5})));
    };
    // keep every element far from the clamp knees so fd is valid
    check_problem(p, {-2.0, -0.5, 0.1, 0.7, 3.0});

    Graph g;
    TensorNode* x = g.input({5}, {-2.0, -0.5, 0.1, 0.7, 3.0}, "x");
    g.backward(g.sum(g.clamp(x, -1.0, 1.0)));
    CHECK(x->grad == std::vector<double>{0, 1, 1, 1, 0});
}

TEST_CASE("matmul, transpose, concat, slice gradients") {
    Rng rng(14);
    std::vector<double> a0 = rand_vec(rng, 6);
    std::vector<double> b0 = rand_vec(rng, 12);

    FdProblem pa;
    pa.shape = {2, 3};
    pa.loss_of = [b0](Graph& g, TensorNode* x) {
        return g.mean(g.matmul(x, g.input({3, 4}, b0, "b")));
    };
    check_problem(pa, a0);

    FdProblem pb;
    pb.shape = {3, 4};
    pb.loss_of = [a0](Graph& g, TensorNode* x) {
        return g.mean(g.matmul(g.input({2, 3}, a0, "a"), x));
    };
    check_problem(pb, b0);

    FdProblem pt;
    pt.shape = {2, 3};
    pt.loss_of = [b0](Graph& g, TensorNode* x) {
        TensorNode* y = g.matmul(g.transpose(x), g.constant({2, 2}, {1, -1, 0.5, 2})); // [3,2]
        return g.sum(g.mul(y, g.constant({3, 2}, {1, 2, 3, 4, 5, 6})));
    };
    check_problem(pt, a0);

    for (int axis = 0; axis < 2; ++axis) {
        FdProblem pc;
        pc.shape = {2, 3};
        pc.loss_of = [axis](Graph& g, TensorNode* x) {
            TensorNode* o = g.constant({2, 3}, {9, 8, 7, 6, 5, 4});
            TensorNode* c = g.concat(x, o, axis);
            TensorNode* s = axis == 0 ? g.slice(c, 0, 1, 3) : g.slice(c, 1, 1, 5);
            return g.mean(g.mul(s, s));
        };
        check_problem(pc, rand_vec(rng, 6));
    }
}

TEST_CASE("layer_norm gradients for input, gain, bias") {
    Rng rng(15);
    std::vector<double> x0 = rand_vec(rng, 8);
    std::vector<double> g0 = rand_vec(rng, 4, 0.5);
    std::vector<double> b0 = rand_vec(rng, 4, 0.5);
    for (double& v : g0) v += 1.0;

    FdProblem px;
    px.shape = {2, 4};
    px.loss_of = [g0, b0](Graph& g, TensorNode* x) {
        TensorNode* y = g.layer_norm(x, g.input({4}, g0, "g"), g.input({4}, b0, "b"));
        return g.sum(g.mul(y, g.constant({2, 4}, {1, -2, 3, -4, 0.5, 1.5, -0.5, 2})));
    };
    check_problem(px, x0, 2e-4);

    FdProblem pg;
    pg.shape = {4};
    pg.loss_of = [x0, b0](Graph& g, TensorNode* x) {
        TensorNode* y = g.layer_norm(g.input({2, 4}, x0, "xin"), x, g.input({4}, b0, "b"));
        return g.sum(g.mul(y, g.constant({2, 4}, {1, -2, 3, -4, 0.5, 1.5, -0.5, 2})));
    };
    check_problem(pg, g0);

    FdProblem pbias;
    pbias.shape = {4};
    pbias.loss_of = [x0, g0](Graph& g, TensorNode* x) {
        TensorNode* y = g.layer_norm(g.input({2, 4}, x0, "xin"), g.input({4}, g0, "g"), x);
        return g.sum(g.mul(y, g.constant({2, 4}, {1, -2, 3, -4, 0.5, 1.5, -0.5, 2})));
    };
    check_problem(pbias, b0);
}

TEST_CASE("embedding_lookup and gather_rows route gradients to the right slots") {
    FdProblem pe;
    pe.shape = {3, 2};
    pe.loss_of = [](Graph& g, TensorNode* x) {
        TensorNode* y = g.embedding_lookup(x, {2, 0, 2}); // row 2 used twice
        return g.sum(g.mul(y, g.constant({3, 2}, {1, 2, 3, 4, 5, 6})));
    };
    check_problem(pe, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});

    {
        Graph g;
        TensorNode* t = g.input({3, 2}, {0, 0, 0, 0, 0, 0}, "t");
        g.backward(g.sum(g.embedding_lookup(t, {2, 0, 2})));
        CHECK(t->grad == std::vector<double>{1, 1, 0, 0, 2, 2}); // accumulation on reuse
    }

    FdProblem pg;
    pg.shape = {2, 3};
    pg.loss_of = [](Graph& g, TensorNode* x) {
        TensorNode* y = g.gather_rows(x, {1, 2});
        return g.sum(g.mul(y, g.constant({2}, {3.0, -2.0})));
    };
    check_problem(pg, {0.5, 1.5, 2.5, -0.5, -1.5, -2.5});

    {
        Graph g;
        TensorNode* a = g.input({2, 3}, {1, 2, 3, 4, 5, 6}, "a");
        TensorNode* y = g.gather_rows(a, {1, 2});
        CHECK(y->shape == std::vector<int>{2});
        CHECK(y->data == std::vector<double>{2, 6});
    }
}

TEST_CASE("backward accumulates until zero_grad") {
    Graph g;
    TensorNode* x = g.input({2}, {1.0, 2.0}, "x");
    TensorNode* loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    g.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(4.0));
    g.zero_grad();
    CHECK(x->grad[0] == 0.0);
    g.backward(loss);
    CHECK(x->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("constants stay grad-free and shape errors throw") {
    Graph g;
    TensorNode* c = g.constant({2}, {1, 2});
    TensorNode* x = g.input({2}, {3, 4}, "x");
    g.backward(g.sum(g.mul(c, x)));
    CHECK(c->grad == std::vector<double>{0, 0});
    CHECK(x->grad == std::vector<double>{1, 2});

    CHECK_THROWS_AS(g.add(g.constant({2}, {1, 2}), g.constant({3}, {1, 2, 3})), ShapeError);
    CHECK_THROWS_AS(g.matmul(g.constant({2, 3}, std::vector<double>(6, 0.0)),
                             g.constant({2, 3}, std::vector<double>(6, 0.0))),
                    ShapeError);
    CHECK_THROWS_AS(g.backward(g.constant({2}, {1, 2})), ShapeError);
}

TEST_CASE("no-grad graphs skip backward plumbing") {
    Graph g(0, false);
    TensorNode* x = g.input({2}, {1.0, 2.0}, "x");
    TensorNode* loss = g.sum(g.mul(x, x));
    CHECK(loss->data[0] == doctest::Approx(5.0));
    CHECK_FALSE(static_cast<bool>(loss->backward_fn));
}
