#include "dst/error.hpp"
#include "dst/grad_check.hpp"
#include "dst/tape.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace dst;
using namespace dst::ad;
using testing::random_matrix;

namespace {

// Weighted sum so that every output entry gets a distinct upstream gradient.
Var weighted_sum(Tape& t, Var v, Rng& rng) {
    const Tensor& val = t.value(v);
    return t.sum(t.mul(v, t.constant(random_matrix(val.rows(), val.cols(), rng))));
}

double check(const ScalarExpression& f, std::vector<Tensor>& params) {
    std::vector<Tensor*> ptrs;
    for (auto& p : params) {
        p.set_requires_grad(true);
        ptrs.push_back(&p);
    }
    return grad_check(f, ptrs);
}

}  // namespace

TEST_CASE("forward examples") {
    Tape t;
    CHECK(t.value(t.sigmoid(t.constant(Tensor::scalar(0.0)))).values()[0] == 0.5);
    CHECK(t.value(t.leaky_relu(t.constant(Tensor::scalar(-1.0)), 0.01)).values()[0] == doctest::Approx(-0.01).epsilon(1e-15));
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor id = Tensor::from_rows({{1, 0}, {0, 1}});
    const Tensor& out = t.value(t.matmul(t.constant(a), t.constant(id)));
    CHECK(out.storage() == a.storage());
}

TEST_CASE("matmul matches a naive triple loop") {
    Rng rng(3);
    const Tensor a = random_matrix(5, 7, rng), b = random_matrix(7, 4, rng);
    Tape t;
    const Tensor& c = t.value(t.matmul(t.constant(a), t.constant(b)));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
}

TEST_CASE("errors") {
    Tape t;
    const Var a = t.constant(Tensor::matrix(2, 3, 1.0));
    const Var b = t.constant(Tensor::matrix(2, 3, 1.0));
    try {
        (void)t.matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS((void)primitive_from_name("conv2d"), UnsupportedOpError);
    CHECK(primitive_from_name("segment_softmax") == Primitive::SegmentSoftmax);
    CHECK_THROWS_AS(t.backward(a), ContractError);
    Tape empty;
    CHECK_THROWS_AS(empty.backward(Var{0}), EmptyTapeError);
}

TEST_CASE("analytic derivatives") {
    Tensor x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    {
        Tape t;
        const Var v = t.leaf(x);
        t.backward(t.sum(t.mul(v, v)));
        CHECK(x.grad()[0] == 6.0);
    }
    x.values()[0] = 0.0;
    {
        Tape t;
        t.backward(t.sum(t.sigmoid(t.leaf(x))));
        CHECK(x.grad()[0] == 0.25);
    }
}

TEST_CASE("tape is topologically ordered") {
    Rng rng(1);
    Tensor w = random_matrix(3, 3, rng);
    w.set_requires_grad(true);
    Tape t;
    const Var x = t.constant(random_matrix(2, 3, rng));
    const Var h = t.tanh(t.matmul(x, t.leaf(w)));
    (void)t.sum(t.concat_cols(std::vector<Var>{h, t.sigmoid(h)}));
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (auto in : t.node(i).inputs) CHECK(in < i);
    }
}

TEST_CASE("every primitive passes a finite-difference check") {
    Rng rng(11);
    const auto seg = make_index({0, 0, 1, 2, 2, 2});
    const auto rows = make_index({2, 0, 0, 1});
    struct Case {
        const char* name;
        std::vector<Tensor> params;
        ScalarExpression f;
    };
    std::vector<Case> cases;
    auto unary = [&](const char* name, std::function<Var(Tape&, Var)> op, std::size_t r = 3, std::size_t c = 4) {
        const std::uint64_t weight_seed = rng.next();
        cases.push_back({name, {random_matrix(r, c, rng)}, [op, weight_seed](Tape& t, std::span<const Var> p) {
                             Rng w(weight_seed);
                             return weighted_sum(t, op(t, p[0]), w);
                         }});
    };
    auto binary = [&](const char* name, std::function<Var(Tape&, Var, Var)> op, std::size_t r2, std::size_t c2) {
        const std::uint64_t weight_seed = rng.next();
        cases.push_back({name, {random_matrix(3, 4, rng), random_matrix(r2, c2, rng)},
                         [op, weight_seed](Tape& t, std::span<const Var> p) {
                             Rng w(weight_seed);
                             return weighted_sum(t, op(t, p[0], p[1]), w);
                         }});
    };
    binary("add", [](Tape& t, Var a, Var b) { return t.add(a, b); }, 3, 4);
    binary("add row broadcast", [](Tape& t, Var a, Var b) { return t.add(a, b); }, 1, 4);
    binary("sub column broadcast", [](Tape& t, Var a, Var b) { return t.sub(a, b); }, 3, 1);
    binary("mul", [](Tape& t, Var a, Var b) { return t.mul(a, b); }, 3, 4);
    binary("mul scalar broadcast", [](Tape& t, Var a, Var b) { return t.mul(a, b); }, 1, 1);
    binary("matmul", [](Tape& t, Var a, Var b) { return t.matmul(a, b); }, 4, 5);
    binary("concat", [](Tape& t, Var a, Var b) { return t.concat_cols(std::vector<Var>{a, b}); }, 3, 2);
    unary("sigmoid", [](Tape& t, Var a) { return t.sigmoid(a); });
    unary("tanh", [](Tape& t, Var a) { return t.tanh(a); });
    unary("leaky_relu", [](Tape& t, Var a) { return t.leaky_relu(a, 0.01); });
    unary("avg_pool1d", [](Tape& t, Var a) { return t.avg_pool1d(a, 3); }, 3, 6);
    unary("slice_cols", [](Tape& t, Var a) { return t.slice_cols(a, 1, 3); });
    unary("slice_rows", [](Tape& t, Var a) { return t.slice_rows(a, 1, 3); });
    unary("gather_rows", [rows](Tape& t, Var a) { return t.gather_rows(a, rows); });
    unary("segment_sum", [seg](Tape& t, Var a) { return t.segment_sum(a, seg, 3); }, 6, 2);
    unary("segment_softmax", [seg](Tape& t, Var a) { return t.segment_softmax(a, seg, 3); }, 6, 1);
    unary("mean", [](Tape& t, Var a) { return t.mean(a); });
    unary("sum", [](Tape& t, Var a) { return t.sum(a); });
    unary("matmul chain", [](Tape& t, Var a) {
        return t.matmul(t.tanh(t.matmul(a, t.sigmoid(t.matmul(a, a)))), a);
    }, 4, 4);
    for (auto& c : cases) {
        INFO(c.name);
        CHECK(check(c.f, c.params) < 1e-6);
    }
}

TEST_CASE("grad_check examples") {
    std::vector<Tensor> x{Tensor::scalar(1.0)};
    CHECK(check([](Tape& t, std::span<const Var> p) { return t.sum(t.mul(p[0], p[0])); }, x) < 1e-8);
    CHECK(check([](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(4.0)); }, x) == 0.0);
    std::vector<Tensor> big{Tensor::scalar(1e300)};
    CHECK_THROWS_AS(check([](Tape& t, std::span<const Var> p) { return t.sum(t.mul(p[0], p[0])); }, big),
                    NumericError);
}

TEST_CASE("segment softmax normalises every segment") {
    Rng rng(5);
    const auto seg = make_index({0, 1, 1, 2, 2, 2, 2});
    for (int trial = 0; trial < 50; ++trial) {
        Tape t;
        const Tensor& w = t.value(t.segment_softmax(t.constant(random_matrix(7, 1, rng, -20, 20)), seg, 3));
        double sums[3] = {0, 0, 0};
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(w(i, 0) > 0.0);
            CHECK(w(i, 0) <= 1.0);
            sums[(*seg)[i]] += w(i, 0);
        }
        CHECK(w(0, 0) == 1.0);
        for (double s : sums) CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("average pooling of a constant is that constant") {
    Tape t;
    const Tensor& out = t.value(t.avg_pool1d(t.constant(Tensor::matrix(2, 9, 2.75)), 5));
    for (double v : out.values()) CHECK(v == 2.75);
}

TEST_CASE("independent subgraphs keep their gradients") {
    Rng rng(8);
    Tensor a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    auto fa = [](Tape& t, Var x) { return t.sum(t.tanh(t.matmul(x, x))); };
    auto fb = [](Tape& t, Var x) { return t.mean(t.sigmoid(x)); };
    std::vector<double> ga, gb;
    {
        Tape t;
        t.backward(fa(t, t.leaf(a)));
        ga = a.grad();
    }
    {
        Tape t;
        t.backward(fb(t, t.leaf(b)));
        gb = b.grad();
    }
    Tape t;
    t.backward(t.add(fa(t, t.leaf(a)), fb(t, t.leaf(b))));
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(a.grad()[i] == doctest::Approx(ga[i]).epsilon(1e-14));
        CHECK(b.grad()[i] == doctest::Approx(gb[i]).epsilon(1e-14));
    }
}
