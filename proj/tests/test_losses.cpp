#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sicnn/eval.hpp"
#include "sicnn/losses.hpp"

using namespace sicnn;
using testing::random_tensor;
using testing::naive_normalized_softmax;

namespace {

RecognitionNetConfig small_rec() {
    RecognitionNetConfig cfg = RecognitionNetConfig::desk();
    cfg.widths = {4, 4, 8, 8};
    cfg.feature_dim = 8;
    return cfg;
}

}  // namespace

TEST_CASE("super-resolution loss") {
    Rng rng(1);
    const Tensor a = random_tensor({3, 1, 4, 4}, rng);
    CHECK(super_resolution_loss(constant(a), constant(a)).value == 0.0);
    Tensor b = a;
    b[0] += 2.0;
    b[20] -= 1.0;
    // Per-sample sums are 4 and 1; batch mean over 3 samples.
    CHECK(super_resolution_loss(constant(b), constant(a)).value == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
    CHECK_THROWS_AS(super_resolution_loss(constant(a), constant(Tensor({3, 1, 4, 3}))), std::invalid_argument);
}

TEST_CASE("super-identity loss identities") {
    const RecognitionNet rec(small_rec(), 3);
    Rng rng(2);
    const Tensor x = random_tensor({4, 1, 32, 32}, rng, 0.3);
    const Tensor y = random_tensor({4, 1, 32, 32}, rng, 0.3);
    CHECK(std::abs(super_identity_loss(rec, constant(x), constant(x)).value) <= 1e-12);

    const double l = super_identity_loss(rec, constant(x), constant(y)).value;
    CHECK(l >= 0.0);
    CHECK(l <= 4.0);
    const std::vector<double> cos = identity_similarity(rec, x, y);
    double expect = 0.0;
    for (double c : cos) {
        expect += 2.0 * (1.0 - c);
    }
    CHECK(std::abs(l - expect / 4.0) <= 1e-12);

    // Antipodal embeddings give the upper bound.
    const Tensor fx = extract_identity(rec, x);
    Tensor neg = fx;
    for (auto& v : neg.storage()) {
        v = -v;
    }
    const Tensor ex = embed_on_hypersphere(fx);
    const Tensor en = embed_on_hypersphere(neg);
    double chord = 0.0;
    for (std::size_t i = 0; i < ex.size(); ++i) {
        chord += (ex[i] - en[i]) * (ex[i] - en[i]);
    }
    CHECK(chord / 4.0 == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("phi is continuous and non-increasing") {
    for (int m = 1; m <= 4; ++m) {
        for (int k = 1; k < m; ++k) {
            const double b = k * std::numbers::pi / m;
            CHECK(std::abs(phi(b - 1e-13, m) - phi(b + 1e-13, m)) <= 1e-9);
            CHECK(std::abs(phi(b, m) - (std::pow(-1.0, k) * std::cos(m * b) - 2.0 * k)) <= 1e-12);
        }
        CHECK(phi(0.0, m) == doctest::Approx(1.0));
        CHECK(phi(std::numbers::pi, m) == doctest::Approx(-2.0 * m + 1.0));
        double prev = phi(0.0, m);
        for (int i = 1; i <= 2000; ++i) {
            const double v = phi(std::numbers::pi * i / 2000.0, m);
            CHECK(v <= prev + 1e-12);
            prev = v;
        }
    }
    CHECK(phi(0.3, 1) == doctest::Approx(std::cos(0.3)));
    CHECK(phi(-0.5, 2) == doctest::Approx(phi(0.0, 2)));
}

TEST_CASE("lambda anneal") {
    const LambdaAnneal a;
    CHECK(a.at(0) == 1000.0);
    CHECK(a.at(10) == doctest::Approx(500.0));
    CHECK(a.at(100000) == 5.0);
    CHECK(LambdaAnneal::fixed(3.0).at(77) == 3.0);
}

TEST_CASE("a-softmax with m=1 and lambda=0 is normalized softmax") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_tensor({6, 5}, rng, 2.0);
        const Tensor w = random_tensor({4, 5}, rng);
        const std::vector<std::size_t> labels{0, 1, 2, 3, 1, 2};
        const double got = a_softmax_loss(constant(x), constant(w), labels, 1, 0.0).value;
        CHECK(std::abs(got - naive_normalized_softmax(x, w, labels)) <= 1e-9);
    }
}

TEST_CASE("a-softmax margin raises the loss") {
    Rng rng(4);
    const Tensor x = random_tensor({8, 6}, rng, 3.0);
    const Tensor w = random_tensor({3, 6}, rng);
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
    const double l1 = a_softmax_loss(constant(x), constant(w), labels, 1, 0.0).value;
    const double l4 = a_softmax_loss(constant(x), constant(w), labels, 4, 0.0).value;
    const double l4_blend = a_softmax_loss(constant(x), constant(w), labels, 4, 1000.0).value;
    CHECK(l4 > l1);
    CHECK(l4_blend < l4);
    CHECK(std::abs(l4_blend - l1) < std::abs(l4 - l1));
    CHECK_THROWS_AS(a_softmax_loss(constant(x), constant(w), std::vector<std::size_t>{0, 1}, 4, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(a_softmax_loss(constant(x), constant(w), std::vector<std::size_t>(8, 3), 4, 0.0),
                    std::out_of_range);
}

TEST_CASE("joint objectives") {
    const LossValue sr{constant(Tensor::scalar(2.0)), 2.0};
    const LossValue si{constant(Tensor::scalar(0.5)), 0.5};
    const LossValue fr{constant(Tensor::scalar(3.0)), 3.0};
    CHECK(joint_objective_baseline2(sr, si, 8.0).value == 6.0);
    CHECK(joint_objective_baseline2(sr, si, 0.0).node == sr.node);
    CHECK(joint_objective_baseline1(sr, si, fr, 8.0, 1.0).value == 9.0);
    CHECK(joint_objective_baseline1(sr, si, fr, 0.0, 2.0).node->value.item() == 8.0);
}

TEST_CASE("a-softmax head classifies by direction") {
    ASoftmaxHead head(3, 2, 4, LambdaAnneal{}, 1);
    head.params().get("head.weight")->value = Tensor({3, 2}, std::vector<double>{1, 0, 0, 5, -1, -1});
    const auto cls = head.classify(Tensor({3, 2}, std::vector<double>{10, 1, 0.1, 2, -3, -2.5}));
    CHECK(cls == std::vector<std::size_t>{0, 1, 2});
    CHECK(head.lambda() == 1000.0);
    head.advance();
    CHECK(head.lambda() == doctest::Approx(1000.0 / 1.1));
    const ASoftmaxHead copy = head.clone();
    CHECK(copy.iteration() == 1);
    CHECK(copy.weight()->value == head.weight()->value);
}
