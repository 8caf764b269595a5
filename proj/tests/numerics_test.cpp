#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "dicos/numerics/grad_check.hpp"
#include "dicos/numerics/ops.hpp"
#include "dicos/numerics/optim.hpp"
#include "dicos/numerics/params.hpp"

using namespace dicos;

namespace {

Tensor random_param(ParameterStore& store, const std::string& name, Shape shape) {
    return store.add(name, std::move(shape));
}

GradCheckOptions strict() {
    GradCheckOptions o;
    o.epsilon = 1e-5;
    o.tolerance = 1e-6;
    return o;
}

}  // namespace

TEST_CASE("matmul: hand-computable products") {
    Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    Tensor col = Tensor::matrix({{3}, {4}});
    Tensor out = ops::matmul(eye, col);
    CHECK(out.shape() == Shape{2, 1});
    CHECK(out.at(0) == 3.0);
    CHECK(out.at(1) == 4.0);

    Tensor r = ops::matmul(Tensor::matrix({{1, 2}}), col);
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r.item() == 11.0);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    try {
        ops::matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x3]", msg.find("[2x3]") + 1) != std::string::npos);
    }
}

TEST_CASE("matmul: gradient of sum(A B) against central differences") {
    ParameterStore store(11);
    Tensor a = random_param(store, "a", {5, 4});
    Tensor b = random_param(store, "b", {4, 3});
    auto report = grad_check([&] { return ops::sum(ops::matmul(a, b)); }, store.all(), strict());
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax: symmetric and overflow-safe rows") {
    Tensor s = ops::softmax(Tensor::row_vector({0, 0}));
    CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-15));

    Tensor big = ops::softmax(Tensor::row_vector({1000, 0}));
    CHECK(std::isfinite(big.at(0)));
    CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(big.at(1) < 1e-300);
}

TEST_CASE("softmax: rows sum to one and ignore constant shifts") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 5.0);
    std::vector<double> v(4 * 9);
    for (auto& x : v) x = nd(rng);
    Tensor x({4, 9}, v);
    Tensor s = ops::softmax(x, 1);
    Tensor shifted = ops::softmax(ops::add_scalar(x, 123.25), 1);
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 9; ++c) {
            total += s.at(r, c);
            CHECK(s.at(r, c) >= 0.0);
            CHECK(std::abs(s.at(r, c) - shifted.at(r, c)) < 1e-9);
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
    Tensor cols = ops::softmax(x, 0);
    for (std::size_t c = 0; c < 9; ++c) {
        double total = 0.0;
        for (std::size_t r = 0; r < 4; ++r) total += cols.at(r, c);
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax: zero-extent axis cannot be formed; bad axis rejected") {
    CHECK_THROWS_AS(Tensor::zeros({3, 0}), DimensionError);
    CHECK_THROWS_AS(ops::softmax(Tensor::zeros({2, 2}), 2), DimensionError);
}

TEST_CASE("softmax and log_softmax: gradient check on a 3x7 block") {
    ParameterStore store(5);
    Tensor x = random_param(store, "x", {3, 7});
    Tensor w = Tensor(Shape{3, 7}, std::vector<double>(21, 0.0));
    for (std::size_t i = 0; i < 21; ++i) w.mutable_data()[i] = std::sin(static_cast<double>(i) + 0.3);
    auto r1 = grad_check([&] { return ops::sum(ops::mul(ops::softmax(x, 1), w)); }, store.all(), strict());
    CHECK(r1.max_rel_error < 1e-6);
    auto r2 = grad_check([&] { return ops::sum(ops::mul(ops::log_softmax(x, 1), w)); }, store.all(), strict());
    CHECK(r2.max_rel_error < 1e-6);
    auto r3 = grad_check([&] { return ops::sum(ops::mul(ops::softmax(x, 0), w)); }, store.all(), strict());
    CHECK(r3.max_rel_error < 1e-6);
}

TEST_CASE("attention: matching key dominates distractors") {
    Tensor q = Tensor::matrix({{3, 0, 0, 0}});
    Tensor k = Tensor::matrix({{3, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
    Tensor v = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
    Tensor out = ops::scaled_dot_attention(q, k, v);
    // values are one-hot, so output coordinates are the attention weights
    CHECK(out.at(0) > out.at(1));
    CHECK(out.at(0) > out.at(2));
}

TEST_CASE("attention: a single key returns its value exactly") {
    Tensor q = Tensor::matrix({{0.3, -1.2, 4.0}, {7.0, 0.1, -2.5}});
    Tensor k = Tensor::matrix({{1.5, 2.5, -0.5}});
    Tensor v = Tensor::matrix({{0.123456789, -9.87654321, 3.14159}});
    Tensor out = ops::scaled_dot_attention(q, k, v);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(r, c) == v.at(0, c));
    }
}

TEST_CASE("attention: gradient check through queries, keys and values") {
    ParameterStore store(17);
    Tensor q = random_param(store, "q", {2, 4});
    Tensor k = random_param(store, "k", {3, 4});
    Tensor v = random_param(store, "v", {3, 4});
    Tensor w = Tensor::matrix({{1, -2, 0.5, 3}, {0.25, 1, -1, 2}});
    auto report = grad_check([&] { return ops::sum(ops::mul(ops::scaled_dot_attention(q, k, v), w)); },
                             store.all(), strict());
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("attention: width mismatch is rejected") {
    CHECK_THROWS_AS(ops::scaled_dot_attention(Tensor::zeros({1, 3}), Tensor::zeros({2, 4}), Tensor::zeros({2, 4})),
                    DimensionError);
}

TEST_CASE("mlp_forward: degenerate layers") {
    ParameterStore store(1);
    Linear zero = Linear::create(store, "zero", 3, 3);
    for (auto& w : zero.weight.mutable_data()) w = 0.0;
    Tensor x = Tensor::matrix({{1, -2, 3}, {4, 5, -6}});
    std::vector<Linear> zl{zero};
    Tensor z = mlp_forward(x, zl, Activation::relu);
    for (double v : z.data()) CHECK(v == 0.0);

    Linear ident = Linear::create(store, "ident", 3, 3);
    auto w = ident.weight.mutable_data();
    for (std::size_t i = 0; i < 9; ++i) w[i] = (i % 4 == 0) ? 1.0 : 0.0;
    std::vector<Linear> il{ident};
    Tensor y = mlp_forward(x, il, Activation::tanh);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("mlp_forward: extent mismatch names the layer") {
    ParameterStore store(1);
    std::vector<Linear> layers{Linear::create(store, "first", 3, 4), Linear::create(store, "second", 5, 2)};
    try {
        mlp_forward(Tensor::zeros({1, 3}), layers, Activation::relu);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("second") != std::string::npos);
    }
}

TEST_CASE("mlp_forward: two-layer tanh gradient check") {
    ParameterStore store(23);
    std::vector<Linear> layers{Linear::create(store, "l1", 4, 6), Linear::create(store, "l2", 6, 2)};
    // non-zero biases so their gradients are exercised at a generic point
    for (auto& b : layers[0].bias.mutable_data()) b = 0.1;
    Tensor x = store.add("x", {3, 4});
    auto report = grad_check([&] { return ops::sum(ops::tanh(mlp_forward(x, layers, Activation::tanh))); },
                             store.all(), strict());
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: exact on linear, zero on constant") {
    ParameterStore store(2);
    Tensor w = store.add("w", {3, 4});
    Tensor x = Tensor::matrix({{1.0}, {2.0}, {-3.0}, {0.5}});
    GradCheckOptions o = strict();
    o.tolerance = 1e-10;
    auto lin = grad_check([&] { return ops::sum(ops::matmul(w, x)); }, store.all(), o);
    CHECK(lin.max_rel_error < 1e-10);

    auto constant = grad_check([] { return Tensor::scalar(4.0); }, store.all(), o);
    CHECK(constant.passed);
    for (double g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("grad_check: rejects bad epsilon and non-finite loss") {
    ParameterStore store(2);
    store.add("w", {2, 2});
    GradCheckOptions o;
    o.epsilon = 0.5;
    CHECK_THROWS_AS(grad_check([] { return Tensor::scalar(1.0); }, store.all(), o), std::invalid_argument);
    CHECK_THROWS_AS(grad_check([] { return Tensor::scalar(std::nan("")); }, store.all()), NumericError);
}

TEST_CASE("composite ops: gradient check") {
    ParameterStore store(31);
    Tensor x = store.add("x", {4, 5});
    Tensor gamma = store.add("gamma", {5});
    Tensor beta = store.add("beta", {5});
    Tensor s = store.add("s", {4});
    Tensor table = store.add("table", {6, 5});
    auto report = grad_check(
        [&] {
            Tensor ln = ops::layer_norm(x, gamma, beta);
            Tensor scaled = ops::scale_rows(ln, ops::sigmoid(s));
            Tensor looked = ops::gather_rows(table, {1, 4, 1, 0});
            Tensor joined = ops::concat_cols({scaled, looked});
            Tensor stacked = ops::concat_rows({ops::slice_cols(ops::slice_rows(joined, 1, 3), 0, 4), ops::transpose(ops::slice_cols(joined, 2, 6))});
            Tensor soft = ops::log_sigmoid(ops::slice_cols(stacked, 0, 3));
            return ops::add(ops::mean(ops::tanh(stacked)), ops::sum(ops::mul(soft, soft)));
        },
        store.all(), strict());
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("tape: backward twice without reset is an error") {
    ParameterStore store(4);
    Tensor w = store.add("w", {2, 2});
    Tape tape;
    TapeGuard guard(tape);
    Tensor loss = ops::sum(ops::mul(w, w));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
    tape.reset();
    CHECK(tape.size() == 0);
    Tensor again = ops::sum(w);
    CHECK_NOTHROW(tape.backward(again));
}

TEST_CASE("tape: nothing is recorded without an active tape") {
    ParameterStore store(4);
    Tensor w = store.add("w", {2, 2});
    Tensor y = ops::sum(ops::mul(w, w));
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_gate: closed gate blocks gradient, flag read at backward time") {
    ParameterStore store(8);
    Tensor w = store.add("w", {1, 3});
    for (bool open_at_backward : {false, true}) {
        store.zero_grad();
        auto open = std::make_shared<bool>(!open_at_backward);
        Tape tape;
        TapeGuard guard(tape);
        Tensor loss = ops::sum(ops::grad_gate(w, open));
        *open = open_at_backward;
        tape.backward(loss);
        for (double g : w.grad()) CHECK(g == (open_at_backward ? 1.0 : 0.0));
    }
}

TEST_CASE("dropout: identity in eval mode, unbiased in train mode") {
    std::mt19937_64 rng(9);
    Tensor x = Tensor::full({1, 20000}, 2.0);
    Tensor eval = ops::dropout(x, 0.1, rng, false);
    CHECK(eval.impl() == x.impl());
    Tensor train = ops::dropout(x, 0.1, rng, true);
    double mean = ops::mean(train).item();
    CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("non-finite outputs raise NumericError") {
    CHECK_THROWS_AS(ops::log(Tensor::row_vector({0.0})), NumericError);
}

TEST_CASE("initialisation and ops are deterministic for a seed") {
    ParameterStore a(42), b(42);
    Tensor wa = a.add("w", {8, 8});
    Tensor wb = b.add("w", {8, 8});
    Tensor oa = ops::softmax(ops::matmul(wa, wa));
    Tensor ob = ops::softmax(ops::matmul(wb, wb));
    for (std::size_t i = 0; i < oa.numel(); ++i) CHECK(oa.at(i) == ob.at(i));
    CHECK_THROWS_AS(a.add("w", {2}), std::invalid_argument);
}

TEST_CASE("AdamW: decreases a quadratic") {
    ParameterStore store(5);
    Tensor w = store.add("w", {2, 3});
    AdamW opt(store, {});
    auto loss_value = [&] { return ops::sum(ops::mul(w, w)).item(); };
    double before = loss_value();
    for (int i = 0; i < 50; ++i) {
        store.zero_grad();
        Tape tape;
        TapeGuard guard(tape);
        tape.backward(ops::sum(ops::mul(w, w)));
        opt.step({0.05});
    }
    CHECK(loss_value() < 0.1 * before);
}
