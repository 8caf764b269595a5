#include <cmath>
#include <random>

#include "doctest.h"
#include "dicos/numerics/grad_check.hpp"
#include "dicos/numerics/ops.hpp"
#include "dicos/update/update_predictor.hpp"

using namespace dicos;
using namespace dicos::update;

namespace {

// A fake current turn: J slot rows at fixed positions of a random matrix.
encoder::EncodedTurn fake_turn(std::size_t J, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t len = 2 * J + 3;
    std::vector<double> h(len * d);
    for (auto& x : h) x = n(rng);
    encoder::EncodedTurn t;
    t.turn = 1;
    t.hidden = Tensor({len, d}, h);
    for (std::size_t j = 0; j < J; ++j) {
        t.layout.slot_pos.push_back(1 + 2 * j);
        t.layout.value_pos.push_back(2 + 2 * j);
    }
    return t;
}

void set_output_bias(const UpdatePredictor& p, double bias) {
    Tensor w = p.output().weight;
    for (auto& x : w.mutable_data()) x = 0.0;
    Tensor b = p.output().bias;
    for (auto& x : b.mutable_data()) x = bias;
}

}  // namespace

TEST_CASE("zero weights with bias -10 select nothing") {
    ParameterStore store(1);
    UpdatePredictor p(store, 6);
    set_output_bias(p, -10.0);
    UpdateDecision d = p.predict(fake_turn(5, 6, 2), 0.5);
    CHECK(d.selected.empty());
    REQUIRE(d.scores.size() == 5);
    for (double s : d.scores) CHECK(s == doctest::Approx(1.0 / (1.0 + std::exp(10.0))));
}

TEST_CASE("zero weights with bias +10 select every slot") {
    ParameterStore store(1);
    UpdatePredictor p(store, 6);
    set_output_bias(p, 10.0);
    UpdateDecision d = p.predict(fake_turn(5, 6, 2), 0.5);
    CHECK(d.selected == std::set<std::size_t>{0, 1, 2, 3, 4});
    CHECK(std::all_of(d.update.begin(), d.update.end(), [](bool b) { return b; }));
}

TEST_CASE("threshold must lie strictly inside (0, 1)") {
    CHECK_THROWS_AS(threshold_updates({0.2}, 0.0), encoder::ConfigError);
    CHECK_THROWS_AS(threshold_updates({0.2}, 1.0), encoder::ConfigError);
    CHECK_THROWS_AS(threshold_updates({0.2}, -0.3), encoder::ConfigError);
    CHECK_NOTHROW(threshold_updates({0.2}, 0.5));
}

TEST_CASE("decision is a strict comparison with the threshold") {
    UpdateDecision d = threshold_updates({0.5, 0.50001, 0.2}, 0.5);
    CHECK(d.selected == std::set<std::size_t>{1});
}

TEST_CASE("raising the threshold never grows the update set") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores(8);
        for (auto& s : scores) s = u(rng);
        std::set<std::size_t> prev = threshold_updates(scores, 0.01).selected;
        for (double delta = 0.05; delta < 1.0; delta += 0.05) {
            std::set<std::size_t> cur = threshold_updates(scores, delta).selected;
            CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            prev = cur;
        }
    }
}

TEST_CASE("loss at probability one half is ln 2") {
    Tensor z = Tensor::zeros({4, 1});
    CHECK(update_loss(z, {}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(update_loss(z, {0, 3}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("confident correct logits give near-zero loss") {
    Tensor z = Tensor::matrix({{12.0}, {-12.0}, {-12.0}, {12.0}});
    CHECK(update_loss(z, {0, 3}).item() < 1e-3);
    CHECK(update_loss(z, {1, 2}).item() > 10.0);
}

TEST_CASE("loss matches binary cross-entropy by hand") {
    Tensor z = Tensor::matrix({{0.3}, {-1.2}, {2.0}});
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    double expect = -(std::log(sig(0.3)) + std::log(1.0 - sig(-1.2)) + std::log(sig(2.0))) / 3.0;
    CHECK(update_loss(z, {0, 2}).item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(update_loss(z, {5}), std::out_of_range);
}

TEST_CASE("update head gradient against central differences") {
    ParameterStore store(17);
    UpdatePredictor p(store, 6);
    encoder::EncodedTurn t = fake_turn(4, 6, 5);
    GradCheckOptions opt;
    opt.tolerance = 1e-6;
    auto report = grad_check([&] { return update_loss(p.logits(t), {1, 2}); }, store.all(), opt);
    CHECK(report.max_rel_error < 1e-6);
    CHECK(report.passed);
}
