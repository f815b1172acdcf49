#include "dst/error.hpp"
#include "dst/grad_check.hpp"
#include "dst/layers.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace dst;
using namespace dst::layers;
using testing::random_matrix;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill(Tensor& t, Rng& rng, double scale = 0.8) {
    for (double& v : t.values()) v = rng.uniform(-scale, scale);
}

GruParams random_gru(std::size_t in, std::size_t h, Rng& rng) {
    GruParams p = GruParams::zeros(in, h);
    p.visit("", TensorVisitor([&](const std::string&, Tensor& t) { fill(t, rng); }));
    return p;
}

// x W for a row vector x, written out by hand.
std::vector<double> rowmul(const std::vector<double>& x, const Tensor& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w(i, j);
    }
    return out;
}

std::vector<double> gru_oracle(const std::vector<double>& x, const std::vector<double>& h, const GruParams& p) {
    const auto xz = rowmul(x, p.W_z), hz = rowmul(h, p.U_z);
    const auto xr = rowmul(x, p.W_r), hr = rowmul(h, p.U_r);
    const auto xh = rowmul(x, p.W_h);
    const auto uh = rowmul(h, p.U_h);
    std::vector<double> out(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double z = sigm(xz[k] + hz[k] + p.b_z.values()[k]);
        const double r = sigm(xr[k] + hr[k] + p.b_r.values()[k]);
        const double cand = std::tanh(xh[k] + r * uh[k] + p.b_h.values()[k]);
        out[k] = (1.0 - z) * h[k] + z * cand;
    }
    return out;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
    const auto s = t.row(r);
    return {s.begin(), s.end()};
}

double gradcheck_bundle(const ad::ScalarExpression& f, std::vector<Tensor*> params) {
    for (auto* p : params) p->set_requires_grad(true);
    return ad::grad_check(f, params);
}

}  // namespace

TEST_CASE("decomposition examples") {
    DecompositionConfig k3{3};
    const auto c = decompose(Tensor::from_rows({{5, 5, 5, 5}}), k3);
    CHECK(c.trend.storage() == std::vector<double>{5, 5, 5, 5});
    CHECK(c.residual.storage() == std::vector<double>{0, 0, 0, 0});

    Rng rng(2);
    const Tensor x = random_matrix(3, 7, rng);
    const auto id = decompose(x, DecompositionConfig{1});
    CHECK(id.trend.storage() == x.storage());
    for (double v : id.residual.values()) CHECK(v == 0.0);

    const auto ramp = decompose(Tensor::from_rows({{1, 2, 3, 4}}), k3);
    const double expected[4] = {4.0 / 3.0, 2.0, 3.0, 11.0 / 3.0};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(ramp.trend.values()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
        CHECK(ramp.trend.values()[i] + ramp.residual.values()[i] == static_cast<double>(i + 1));
    }
    CHECK_THROWS_AS((void)decompose(x, DecompositionConfig{4}), ConfigError);
    CHECK_THROWS_AS((void)decompose(x, DecompositionConfig{0}), ConfigError);
}

TEST_CASE("decomposition reconstructs count windows bit for bit") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor x = Tensor::matrix(4, 20);
        for (double& v : x.values()) v = std::floor(rng.uniform(0, 2000));
        const auto d = decompose(x, DecompositionConfig{5});
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(d.trend.values()[i] + d.residual.values()[i] == x.values()[i]);
    }
}

TEST_CASE("gru step") {
    GruParams zero = GruParams::zeros(1, 1);
    CHECK(gru_step(std::vector<double>{0.3}, std::vector<double>{1.0}, zero) == std::vector<double>{0.5});

    Rng rng(3);
    GruParams p = random_gru(2, 3, rng);
    for (double& v : p.b_z.values()) v = 40.0;
    const std::vector<double> x{0.4, -0.7}, h{0.9, -0.2, 0.1};
    const auto out = gru_step(x, h, p);
    // z saturates at 1, so the output is the candidate state.
    const auto xr = rowmul(x, p.W_r), hr = rowmul(h, p.U_r);
    const auto xh = rowmul(x, p.W_h), uh = rowmul(h, p.U_h);
    for (std::size_t k = 0; k < 3; ++k) {
        const double r = sigm(xr[k] + hr[k] + p.b_r.values()[k]);
        CHECK(out[k] == doctest::Approx(std::tanh(xh[k] + r * uh[k] + p.b_h.values()[k])));
    }

    for (int trial = 0; trial < 20; ++trial) {
        GruParams q = random_gru(2, 3, rng);
        std::vector<double> hx{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const auto o = gru_step(x, hx, q);
        const auto oracle = gru_oracle(x, hx, q);
        double bound = 1.0;
        for (double v : hx) bound = std::max(bound, std::abs(v));
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(o[k] == doctest::Approx(oracle[k]).epsilon(1e-13));
            CHECK(std::abs(o[k]) <= bound);
        }
    }
    CHECK_THROWS_AS((void)gru_step(std::vector<double>{1.0}, h, p), DimensionError);
}

TEST_CASE("gru step gradient") {
    Rng rng(5);
    GruParams p = random_gru(2, 2, rng);
    Tensor x = random_matrix(3, 2, rng), h = random_matrix(3, 2, rng, -1, 1);
    std::vector<Tensor*> params{&x, &h};
    p.visit("", TensorVisitor([&](const std::string&, Tensor& t) { params.push_back(&t); }));
    const double err = gradcheck_bundle(
        [&](ad::Tape& t, std::span<const ad::Var> v) {
            const GruVars g{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
            const ad::Var out = gru_step(t, v[0], v[1], g);
            return t.sum(t.mul(out, t.constant(Tensor::from_rows({{1.0, -2.0}, {0.5, 3.0}, {-1.5, 0.25}}))));
        },
        params);
    CHECK(err < 1e-6);
}

TEST_CASE("gru sequence") {
    Rng rng(9);
    const GruParams l0 = random_gru(1, 3, rng), l1 = random_gru(3, 3, rng);
    const Tensor one = Tensor::from_rows({{0.7}, {-0.2}});
    const Tensor h = gru_sequence(one, std::vector<GruParams>{l0});
    CHECK(row_of(h, 0) == gru_step(std::vector<double>{0.7}, std::vector<double>(3, 0.0), l0));

    Tensor series = random_matrix(3, 6, rng);
    for (std::size_t k = 0; k < 6; ++k) series(2, k) = series(0, k);
    const Tensor out = gru_sequence(series, std::vector<GruParams>{l0, l1});
    CHECK(row_of(out, 0) == row_of(out, 2));

    // Depth 2 equals layer 1 run over the hidden states of layer 0.
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> h0(3, 0.0), h1(3, 0.0);
        for (std::size_t k = 0; k < 6; ++k) {
            h0 = gru_oracle({series(r, k)}, h0, l0);
            h1 = gru_oracle(h0, h1, l1);
        }
        for (std::size_t j = 0; j < 3; ++j) CHECK(out(r, j) == doctest::Approx(h1[j]).epsilon(1e-13));
    }
}

TEST_CASE("attention weights") {
    Rng rng(4);
    GatParams p = GatParams::zeros(5, 3);
    fill(p.w, rng);
    fill(p.a, rng);

    const auto pair = build_graph(testing::stations(2), {{"s0", "s1"}}, false);
    const auto w1 = gat_edge_weights(random_matrix(2, 5, rng), pair, p);
    CHECK(w1.at({0, 1}) == 1.0);
    CHECK(w1.at({1, 0}) == 1.0);

    // s0's neighbours s1 and s2 carry identical features.
    const auto star = build_graph(testing::stations(3), {{"s0", "s1"}, {"s0", "s2"}}, false);
    Tensor hist = random_matrix(3, 5, rng);
    for (std::size_t k = 0; k < 5; ++k) hist(2, k) = hist(1, k);
    const auto w2 = gat_edge_weights(hist, star, p);
    CHECK(w2.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w2.at({0, 2}) == doctest::Approx(0.5).epsilon(1e-15));

    const auto path = testing::path(3);
    const Tensor x = random_matrix(3, 5, rng);
    const auto w = gat_edge_weights(x, path, p);
    std::vector<std::vector<double>> proj(3);
    for (std::size_t i = 0; i < 3; ++i) proj[i] = rowmul(row_of(x, i), p.w);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> e;
        for (auto j : path.neighbors(i)) {
            double s = 0.0;
            for (std::size_t k = 0; k < 3; ++k) s += p.a.values()[k] * proj[i][k] + p.a.values()[3 + k] * proj[j][k];
            e.push_back(s > 0 ? s : 0.01 * s);
        }
        double z = 0.0;
        for (double v : e) z += std::exp(v);
        double total = 0.0;
        for (std::size_t n = 0; n < e.size(); ++n) {
            const double got = w.at({i, path.neighbors(i)[n]});
            CHECK(got == doctest::Approx(std::exp(e[n]) / z).epsilon(1e-13));
            total += got;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }

    const auto isolated = build_graph(testing::stations(3), {{"s0", "s1"}}, false);
    CHECK_THROWS_AS((void)gat_edge_weights(random_matrix(3, 5, rng), isolated, p), DegenerateNeighborhoodError);
}

TEST_CASE("k-gnn aggregation") {
    Rng rng(6);
    const auto g = testing::triangle();
    KgnnParams p = KgnnParams::zeros(4);
    fill(p.W1, rng);
    const Tensor h = random_matrix(3, 4, rng);
    EdgeWeights w;
    for (std::size_t i = 0; i < 3; ++i) {
        for (auto j : g.neighbors(i)) w[{i, j}] = rng.uniform(0.1, 1.0);
    }
    const Tensor self_only = kgnn_aggregate(h, g, w, p);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto expect = rowmul(row_of(h, i), p.W1);
        for (std::size_t k = 0; k < 4; ++k) CHECK(self_only(i, k) == doctest::Approx(expect[k]).epsilon(1e-14));
    }

    fill(p.W2, rng);
    const auto lonely = build_graph(testing::stations(1), {}, true);
    const Tensor h1 = random_matrix(1, 4, rng);
    const Tensor o1 = kgnn_aggregate(h1, lonely, EdgeWeights{{{0, 0}, 0.7}}, p);
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += h1(0, j) * (p.W1(j, k) + 0.7 * p.W2(j, k));
        CHECK(o1(0, k) == doctest::Approx(s).epsilon(1e-13));
    }

    // Dense oracle: H W1 + A_w H W2 with A_w[i][j] = W_E(j -> i).
    const Tensor out = kgnn_aggregate(h, g, w, p);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> agg(4, 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            const auto it = w.find({i, j});
            const double a = it == w.end() ? 0.0 : it->second;
            for (std::size_t k = 0; k < 4; ++k) agg[k] += a * h(j, k);
        }
        const auto s1 = rowmul(row_of(h, i), p.W1), s2 = rowmul(agg, p.W2);
        for (std::size_t k = 0; k < 4; ++k) CHECK(out(i, k) == doctest::Approx(s1[k] + s2[k]).epsilon(1e-13));
    }

    w.erase({1, 2});
    CHECK_THROWS_AS((void)kgnn_aggregate(h, g, w, p), ContractError);
}

TEST_CASE("feed-forward head") {
    FfnnParams id = FfnnParams::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i) id.weights[0](i, i) = 1.0;
    const std::vector<double> x{0.5, -1.5, 2.0};
    CHECK(ffnn_forward(x, id) == x);

    FfnnParams z = FfnnParams::zeros({3, 4, 2});
    z.biases[1].values()[0] = 0.25;
    z.biases[1].values()[1] = -3.0;
    CHECK(ffnn_forward(x, z) == std::vector<double>{0.25, -3.0});

    Rng rng(12);
    FfnnParams p = FfnnParams::zeros({3, 4, 2});
    p.visit("", TensorVisitor([&](const std::string&, Tensor& t) { fill(t, rng, 1.5); }));
    auto hidden = rowmul(x, p.weights[0]);
    for (std::size_t k = 0; k < 4; ++k) {
        hidden[k] += p.biases[0].values()[k];
        if (hidden[k] < 0) hidden[k] *= 0.01;
    }
    auto y = rowmul(hidden, p.weights[1]);
    const auto got = ffnn_forward(x, p);
    for (std::size_t k = 0; k < 2; ++k) CHECK(got[k] == doctest::Approx(y[k] + p.biases[1].values()[k]).epsilon(1e-14));
    CHECK_THROWS_AS((void)ffnn_forward(std::vector<double>{1.0}, p), DimensionError);
}

TEST_CASE("layer gradients on small random instances") {
    Rng rng(21);
    const auto g = testing::triangle();
    const auto edges = make_edge_index(g);

    SUBCASE("attention") {
        GatParams p = GatParams::zeros(6, 4);
        Tensor hist;
        do {
            fill(p.w, rng);
            fill(p.a, rng);
            hist = random_matrix(3, 6, rng);
        } while (!testing::attention_scores_mixed(hist, p.w, p.a, g));
        const Tensor wts = random_matrix(edges.num_edges(), 1, rng);
        const double err = gradcheck_bundle(
            [&](ad::Tape& t, std::span<const ad::Var> v) {
                const GatVars gv{v[1], t.slice_rows(v[2], 0, 4), t.slice_rows(v[2], 4, 8), p.alpha};
                return t.sum(t.mul(gat_edge_weights(t, v[0], edges, gv), t.constant(wts)));
            },
            {&hist, &p.w, &p.a});
        CHECK(err < 1e-4);
    }
    SUBCASE("k-gnn") {
        KgnnParams p = KgnnParams::zeros(4, Activation::Tanh);
        fill(p.W1, rng);
        fill(p.W2, rng);
        Tensor h = random_matrix(3, 4, rng), ew = random_matrix(edges.num_edges(), 1, rng, 0.1, 1.0);
        const Tensor wts = random_matrix(3, 4, rng);
        const double err = gradcheck_bundle(
            [&](ad::Tape& t, std::span<const ad::Var> v) {
                const KgnnVars kv{v[2], v[3], p.activation};
                return t.sum(t.mul(kgnn_aggregate(t, v[0], edges, v[1], kv), t.constant(wts)));
            },
            {&h, &ew, &p.W1, &p.W2});
        CHECK(err < 1e-4);
    }
    SUBCASE("feed-forward") {
        FfnnParams p = FfnnParams::zeros({4, 5, 1});
        p.visit("", TensorVisitor([&](const std::string&, Tensor& t) { fill(t, rng, 1.0); }));
        Tensor x = random_matrix(3, 4, rng);
        const double err = gradcheck_bundle(
            [&](ad::Tape& t, std::span<const ad::Var> v) {
                const FfnnVars fv{{v[1], v[2]}, {v[3], v[4]}, p.alpha};
                return t.sum(t.mul(ffnn_forward(t, v[0], fv), t.constant(Tensor::column({1.0, -2.0, 0.5}))));
            },
            {&x, &p.weights[0], &p.weights[1], &p.biases[0], &p.biases[1]});
        CHECK(err < 1e-4);
    }
    SUBCASE("gru sequence") {
        GruParams p = random_gru(1, 3, rng);
        Tensor series = random_matrix(3, 6, rng);
        std::vector<Tensor*> params{&series};
        p.visit("", TensorVisitor([&](const std::string&, Tensor& t) { params.push_back(&t); }));
        const Tensor wts = random_matrix(3, 3, rng);
        const double err = gradcheck_bundle(
            [&](ad::Tape& t, std::span<const ad::Var> v) {
                const std::vector<GruVars> layers{{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]}};
                return t.sum(t.mul(gru_sequence(t, v[0], layers), t.constant(wts)));
            },
            params);
        CHECK(err < 1e-4);
    }
}
