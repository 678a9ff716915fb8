#include <doctest.h>

#include "helpers.hpp"
#include "sicnn/models.hpp"

using namespace sicnn;
using testing::random_tensor;

TEST_CASE("desk recognition trace") {
    const auto rows = recognition_shape_trace(RecognitionNetConfig::desk());
    REQUIRE(rows.size() == 15);
    CHECK(rows.front().layer == "Input");
    CHECK(rows[3].layer == "Avepool1");
    CHECK(rows[3].height == 16);
    CHECK(rows.back().layer == "FC1");
    CHECK(rows.back().channels == 32);
    CHECK(rows[rows.size() - 3].layer == "Avepool4");
    CHECK(rows[rows.size() - 3].height == 2);
}

TEST_CASE("recognition trace reports underflow with the layer name") {
    RecognitionNetConfig cfg = RecognitionNetConfig::desk();
    cfg.conv_pad = 0;
    try {
        recognition_shape_trace(cfg);
        FAIL("expected underflow");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("underflows at Conv4") != std::string::npos);
    }
}

TEST_CASE("forward trace agrees with the static trace") {
    const RecognitionNet net(RecognitionNetConfig::desk(), 1);
    Rng rng(1);
    ForwardTrace trace;
    const Var f = net.forward(constant(random_tensor({2, 1, 32, 32}, rng)), &trace);
    CHECK(f->value.shape() == Shape{2, 32});
    const auto expect = recognition_shape_trace(net.config());
    REQUIRE(trace.rows.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(trace.rows[i].layer == expect[i].layer);
        CHECK(trace.rows[i].channels == expect[i].channels);
        CHECK(trace.rows[i].height == expect[i].height);
        CHECK(trace.rows[i].width == expect[i].width);
    }
    CHECK_THROWS_AS(net.forward(constant(Tensor({1, 1, 30, 32}))), std::invalid_argument);
}

TEST_CASE("hallucination net upsamples by the factor") {
    HallucinationNetConfig cfg = HallucinationNetConfig::desk();
    CHECK(cfg.stages() == 2);
    CHECK(HallucinationNetConfig::paper().stages() == 3);
    const HallucinationNet net(cfg, 2);
    Rng rng(2);
    ForwardTrace trace;
    const Tensor sr = hallucinate(net, random_tensor({3, 1, 8, 8}, rng));
    CHECK(sr.shape() == Shape{3, 1, 32, 32});
    net.forward(constant(random_tensor({1, 1, 8, 8}, rng)), &trace);
    CHECK(trace.rows.back().layer == "Reconstruction");
    CHECK(trace.rows[1].channels == 1 + cfg.dense_block_layers * cfg.growth_rate);
    CHECK(trace.rows[2].height == 16);
    CHECK(trace.rows[3].channels == cfg.mapping_channels);

    cfg.upscale_factor = 3;
    CHECK_THROWS_AS(HallucinationNet(cfg, 1), std::invalid_argument);
}

TEST_CASE("same seed gives the same weights, clone is independent") {
    const RecognitionNet a(RecognitionNetConfig::desk(), 5);
    const RecognitionNet b(RecognitionNetConfig::desk(), 5);
    const RecognitionNet c(RecognitionNetConfig::desk(), 6);
    CHECK(a.params().values() == b.params().values());
    CHECK(a.params().values() != c.params().values());
    RecognitionNet d = a.clone();
    d.params().entries()[0].node->value[0] += 1.0;
    CHECK(a.params().values() != d.params().values());
}

TEST_CASE("embeddings are unit norm") {
    const RecognitionNet net(RecognitionNetConfig::desk(), 3);
    Rng rng(3);
    const Tensor e = embed_on_hypersphere(extract_identity(net, random_tensor({4, 1, 32, 32}, rng)));
    for (std::size_t r = 0; r < 4; ++r) {
        double n = 0.0;
        for (std::size_t c = 0; c < e.dim(1); ++c) {
            n += e[r * e.dim(1) + c] * e[r * e.dim(1) + c];
        }
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
}
