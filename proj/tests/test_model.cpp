#include "dst/checkpoint.hpp"
#include "dst/error.hpp"
#include "dst/grad_check.hpp"
#include "dst/model.hpp"
#include "dst/training.hpp"

#include "support.hpp"

#include <doctest.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>

using namespace dst;
using testing::random_matrix;
namespace L = dst::layers;

namespace {

ModelConfig small_config(Variant v, std::size_t stations = 3, std::size_t len = 6, std::size_t hidden = 4) {
    ModelConfig c;
    c.variant = v;
    c.stations = stations;
    c.recent_len = len;
    c.historical_len = len;
    c.hidden = hidden;
    c.kernel = 3;
    return c;
}

std::vector<double> ffnn_rows(const Tensor& x, const L::FfnnParams& p) {
    std::vector<double> out;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<double> row(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j) row[j] = x(i, j);
        out.push_back(L::ffnn_forward(row, p)[0]);
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
    Tensor out = Tensor::matrix(parts[0].rows(), parts.size() * parts[0].cols());
    for (std::size_t b = 0; b < parts.size(); ++b) {
        for (std::size_t i = 0; i < parts[b].rows(); ++i) {
            for (std::size_t j = 0; j < parts[b].cols(); ++j) out(i, b * parts[b].cols() + j) = parts[b](i, j);
        }
    }
    return out;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void write_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

void reseal(std::vector<std::uint8_t>& b) {
    const auto crc = crc32(0L, b.data(), static_cast<uInt>(b.size() - 4));
    write_u32(b, b.size() - 4, static_cast<std::uint32_t>(crc));
}

}  // namespace

TEST_CASE("initialisation") {
    const auto c = small_config(Variant::V1);
    const auto a = init_params(c), b = init_params(c);
    auto c2 = c;
    c2.seed = 2;
    const auto other = init_params(c2);
    std::vector<double> va, vb, vo;
    a.visit([&](const std::string&, const Tensor& t) { va.insert(va.end(), t.values().begin(), t.values().end()); });
    b.visit([&](const std::string&, const Tensor& t) { vb.insert(vb.end(), t.values().begin(), t.values().end()); });
    other.visit([&](const std::string&, const Tensor& t) { vo.insert(vo.end(), t.values().begin(), t.values().end()); });
    CHECK(va == vb);
    CHECK(va != vo);
    a.visit([](const std::string& name, const Tensor& t) {
        INFO(name);
        const bool bias = name.find(".b") != std::string::npos;
        for (double v : t.values()) {
            if (bias) CHECK(v == 0.0);
            else CHECK(std::abs(v) <= 1.0 / std::sqrt(static_cast<double>(t.rows())));
        }
    });

    auto bad = c;
    bad.ffnn_layers = {10, 3, 1};
    CHECK_THROWS_AS((void)init_params(bad), ConfigError);
    bad = c;
    bad.kernel = 4;
    CHECK_THROWS_AS((void)init_params(bad), ConfigError);
}

TEST_CASE("output shape and symmetric stations") {
    Rng rng(3);
    for (Variant v : {Variant::V1, Variant::V2}) {
        const auto p = init_params(small_config(v));
        Tensor recent = random_matrix(3, 6, rng, 0, 1), hist = random_matrix(3, 6, rng, 0, 1);
        for (std::size_t j = 0; j < 6; ++j) {
            recent(2, j) = recent(1, j);
            hist(2, j) = hist(1, j);
        }
        const auto y = predict(recent, hist, testing::triangle(), p);
        REQUIRE(y.size() == 3);
        CHECK(std::abs(y[1] - y[2]) < 1e-12);
        CHECK(predict(recent, hist, testing::triangle(), p) == y);
        CHECK_THROWS_AS((void)predict(random_matrix(3, 5, rng), hist, testing::triangle(), p), DimensionError);
    }
}

TEST_CASE("V1 equals the composition of its layers") {
    Rng rng(5);
    const auto g = testing::path(4);
    const auto p = init_params(small_config(Variant::V1, 4, 7, 5));
    const Tensor recent = random_matrix(4, 7, rng, 0, 1), hist = random_matrix(4, 7, rng, 0, 1);
    const auto parts = L::decompose(recent, {3});
    const std::array<const Tensor*, 4> series = {&recent, &hist, &parts.trend, &parts.residual};
    const auto weights = L::gat_edge_weights(hist, g, p.gat);
    std::vector<Tensor> branch;
    for (std::size_t b = 0; b < 4; ++b) {
        branch.push_back(L::kgnn_aggregate(L::gru_sequence(*series[b], p.gru[b]), g, weights, p.kgnn[b]));
    }
    const auto expected = ffnn_rows(concat(branch), p.ffnn);
    const auto y = forward_v1(recent, hist, g, p);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("V2 with no neighbour term and kernel 1 is a per-station GRU over the four transforms") {
    Rng rng(6);
    auto c = small_config(Variant::V2, 4, 5, 3);
    c.kernel = 1;
    auto p = init_params(c);
    for (auto& k : p.kgnn) std::fill(k.W2.values().begin(), k.W2.values().end(), 0.0);
    const auto g = testing::path(4);
    Tensor recent = random_matrix(4, 5, rng, 0, 1), hist = random_matrix(4, 5, rng, 0, 1);
    const auto y = forward_v2(recent, hist, g, p);

    const std::array<const Tensor*, 4> series = {&recent, &hist, &recent, nullptr};
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> h(3, 0.0);
        for (std::size_t b = 0; b < 4; ++b) {
            std::vector<double> x(5, 0.0);
            if (series[b]) {
                for (std::size_t k = 0; k < 5; ++k) {
                    for (std::size_t m = 0; m < 5; ++m) x[k] += (*series[b])(i, m) * p.kgnn[b].W1(m, k);
                }
            }
            h = L::gru_step(x, h, p.gru[0][0]);
        }
        CHECK(y[i] == doctest::Approx(L::ffnn_forward(h, p.ffnn)[0]).epsilon(1e-12));
    }

    recent(3, 2) += 1.0;
    const auto y2 = forward_v2(recent, hist, g, p);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y2[i] == y[i]);
}

TEST_CASE("V2 has fewer parameters than V1") {
    auto c = small_config(Variant::V1, 10, 20, 64);
    const auto v1 = init_params(c).parameter_count();
    c.variant = Variant::V2;
    CHECK(init_params(c).parameter_count() < v1);
}

TEST_CASE("predictions follow a relabelling of the stations") {
    Rng rng(7);
    const auto p = init_params(small_config(Variant::V1, 5, 6, 4));
    const std::vector<std::pair<int, int>> e = {{0, 1}, {1, 2}, {1, 3}, {3, 4}};
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};  // new index k holds old station perm[k]
    std::vector<EdgeSpec> orig, moved;
    std::vector<std::size_t> where(5);
    for (std::size_t k = 0; k < 5; ++k) where[perm[k]] = k;
    for (auto [a, b] : e) {
        orig.push_back({"s" + std::to_string(a), "s" + std::to_string(b)});
        moved.push_back({"s" + std::to_string(where[a]), "s" + std::to_string(where[b])});
    }
    const auto g = build_graph(testing::stations(5), orig), gp = build_graph(testing::stations(5), moved);
    const Tensor recent = random_matrix(5, 6, rng, 0, 1), hist = random_matrix(5, 6, rng, 0, 1);
    Tensor rp = Tensor::matrix(5, 6), hp = Tensor::matrix(5, 6);
    for (std::size_t k = 0; k < 5; ++k) {
        for (std::size_t j = 0; j < 6; ++j) {
            rp(k, j) = recent(perm[k], j);
            hp(k, j) = hist(perm[k], j);
        }
    }
    const auto y = predict(recent, hist, g, p), yp = predict(rp, hp, gp, p);
    for (std::size_t k = 0; k < 5; ++k) CHECK(yp[k] == doctest::Approx(y[perm[k]]).epsilon(1e-12));
}

TEST_CASE("batched and single passes agree") {
    Rng rng(8);
    const auto p = init_params(small_config(Variant::V2));
    std::vector<Tensor> rs, hs;
    for (int b = 0; b < 5; ++b) {
        rs.push_back(random_matrix(3, 6, rng, 0, 1));
        hs.push_back(random_matrix(3, 6, rng, 0, 1));
    }
    const Tensor out = predict_batch(rs, hs, testing::triangle(), p, 2);
    for (std::size_t b = 0; b < 5; ++b) {
        const auto y = predict(rs[b], hs[b], testing::triangle(), p);
        for (std::size_t i = 0; i < 3; ++i) CHECK(out(b, i) == doctest::Approx(y[i]).epsilon(1e-13));
    }
}

TEST_CASE("checkpoints") {
    Checkpoint ck{init_params(small_config(Variant::V1)), {}};
    ck.params.scaler = ScalerParams{{0, 1, 2}, {10, 11, 12}};
    ck.meta.epochs = 4;
    ck.meta.seed = 1;
    ck.meta.config_hash = "deadbeef";
    ck.meta.station_ids = {"s0", "s1", "s2"};
    ck.meta.lineage = {"run"};
    const auto bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.meta == ck.meta);
    auto resolved = ck.params.config;
    resolved.ffnn_layers = resolved.resolved_ffnn();
    CHECK(back.params.config == resolved);
    CHECK(back.params.scaler.max == ck.params.scaler.max);
    CHECK(back.params.tensor_names() == ck.params.tensor_names());
    auto a = ck.params.tensors();
    auto b = const_cast<ModelParams&>(back.params).tensors();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->storage() == b[k]->storage());
    CHECK(serialize_checkpoint(back) == bytes);

    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK_THROWS_AS((void)deserialize_checkpoint(flipped), IntegrityError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 9);
    CHECK_THROWS_AS((void)deserialize_checkpoint(truncated), IntegrityError);

    auto future = bytes;
    REQUIRE(read_u32(future, 8) == kCheckpointVersion);
    write_u32(future, 8, kCheckpointVersion + 1);
    reseal(future);
    CHECK_THROWS_AS((void)deserialize_checkpoint(future), VersionError);

    ModelConfig full_size;
    full_size.stations = 147;
    const auto full = serialize_checkpoint({init_params(full_size), {}});
    CHECK(full.size() < 5u * 1024 * 1024);
}

TEST_CASE("full-model gradients match finite differences") {
    Rng rng(12);
    for (Variant v : {Variant::V1, Variant::V2}) {
        INFO(variant_name(v));
        const auto g = testing::triangle();
        const auto edges = L::make_edge_index(g, 2);
        ModelParams p;
        Tensor recent, h0, h1;
        do {
            auto c = small_config(v);
            c.seed = rng.next();
            p = init_params(c);
            for (auto* t : p.tensors()) {
                for (double& x : t->values()) x = rng.uniform(-1, 1);
            }
            recent = random_matrix(6, 6, rng, 0, 1);
            h0 = random_matrix(3, 6, rng, 0, 1);
            h1 = random_matrix(3, 6, rng, 0, 1);
        } while (!testing::attention_scores_mixed(h0, p.gat.w, p.gat.a, g) ||
                 !testing::attention_scores_mixed(h1, p.gat.w, p.gat.a, g));
        const Tensor hist = stack_rows(std::vector<Tensor>{h0, h1});
        const Tensor target = random_matrix(6, 1, rng, 0, 1);
        const auto f = [&](ad::Tape& t, std::span<const ad::Var>) {
            const ModelVars vars = bind(t, p);
            return mse_loss(t, forward(t, vars, recent, hist, edges), t.constant(target));
        };
        CHECK(ad::grad_check(f, p.tensors()) < 1e-4);
    }
}
