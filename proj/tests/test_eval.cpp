#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sicnn/eval.hpp"

using namespace sicnn;
using namespace testing;

TEST_CASE("psnr analytic case") {
    Image a(16, 16, 1, 100.0), b(16, 16, 1, 116.0);
    // 20 log10(255 / 16)
    CHECK(std::abs(psnr(a, b, 255.0) - 24.048403955560612) <= 1e-9);
    CHECK(std::abs(psnr(a, b, 255.0) - 20.0 * std::log10(255.0 / 16.0)) <= 1e-12);
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK_THROWS_AS(psnr(a, Image(16, 15)), std::invalid_argument);
}

TEST_CASE("psnr and ssim match naive oracles") {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const std::size_t c = t % 2 ? 3 : 1;
        const Image a = random_image(13 + t % 5, 12 + t % 7, c, rng);
        Image b = a;
        for (auto& v : b.pixels) {
            v = std::clamp(v + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0);
        }
        CHECK(std::abs(psnr(a, b) - naive_psnr(a, b, 1.0)) <= 1e-9);
        CHECK(std::abs(ssim(a, b) - naive_ssim(a, b, 1.0)) <= 1e-9);
    }
}

TEST_CASE("ssim properties") {
    Rng rng(12);
    const Image a = random_image(20, 20, 1, rng);
    const Image b = random_image(20, 20, 1, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) < 0.5);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(Image(10, 20), Image(10, 20)), std::invalid_argument);
}

TEST_CASE("cubic kernel") {
    CHECK(cubic_kernel(0.0) == 1.0);
    CHECK(cubic_kernel(1.0) == doctest::Approx(0.0).scale(1.0));
    CHECK(cubic_kernel(2.0) == 0.0);
    for (double t = 0.0; t < 1.0; t += 0.05) {
        // Partition of unity.
        const double s = cubic_kernel(t + 1) + cubic_kernel(t) + cubic_kernel(1 - t) + cubic_kernel(2 - t);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(cubic_kernel(t) == doctest::Approx(keys_kernel(t)).epsilon(1e-14));
    }
}

TEST_CASE("bicubic matches direct kernel sum") {
    Rng rng(13);
    const std::pair<std::size_t, std::size_t> sizes[] = {{32, 8}, {8, 32}, {12, 96}, {14, 112}, {7, 5}, {9, 13}};
    for (auto [in, out] : sizes) {
        const Image img = random_image(in, in + 1, 2, rng);
        const Image got = bicubic_resample(img, out, out + 2);
        const Image want = kernel_sum_resample(img, out, out + 2);
        REQUIRE(got.size() == want.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            worst = std::max(worst, std::abs(got.pixels[i] - want.pixels[i]));
        }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("bicubic preserves constants and identity size") {
    const Image flat(9, 7, 1, 0.3);
    const Image up = bicubic_resample(flat, 36, 28);
    for (double v : up.pixels) {
        CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
    }
    Rng rng(14);
    const Image img = random_image(6, 6, 1, rng);
    const Image same = bicubic_resample(img, 6, 6);
    for (std::size_t i = 0; i < img.size(); ++i) {
        CHECK(same.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-14));
    }
}

TEST_CASE("threshold separability") {
    CHECK(threshold_separability({1, 2, 3}, {4, 5, 6}) == 1.0);
    CHECK(threshold_separability({4, 5, 6}, {1, 2, 3}) == 1.0);
    CHECK(threshold_separability({1, 1}, {1, 1}) == 0.5);
    CHECK(threshold_separability({1, 3}, {2, 4}) == doctest::Approx(0.75));
}

TEST_CASE("cosine rows") {
    const Tensor a({2, 2}, std::vector<double>{1, 0, 1, 1});
    const Tensor b({2, 2}, std::vector<double>{0, 2, 2, 2});
    const auto c = cosine_rows(a, b);
    CHECK(c[0] == doctest::Approx(0.0));
    CHECK(c[1] == doctest::Approx(1.0));
    CHECK_THROWS_AS(cosine_rows(a, Tensor({2, 2})), std::domain_error);
}

TEST_CASE("domain divergence on synthetic embeddings") {
    Rng rng(15);
    const std::size_t n = 40, d = 6;
    Tensor hr({n, d}), same({n, d}), shifted({n, d});
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % 4;
        for (std::size_t k = 0; k < d; ++k) {
            const double base = (k == labels[i] ? 3.0 : 0.0) + 0.3 * rng.normal();
            hr[i * d + k] = base;
            same[i * d + k] = (k == labels[i] ? 3.0 : 0.0) + 0.3 * rng.normal();
            shifted[i * d + k] = base + (k == 5 ? 2.0 : 0.0);
        }
    }
    const Tensor eh = embed_on_hypersphere(hr);
    const DivergenceStats close = domain_divergence(embed_on_hypersphere(same), labels, eh, labels);
    const DivergenceStats far = domain_divergence(embed_on_hypersphere(shifted), labels, eh, labels);
    CHECK(far.separability > 0.95);
    CHECK(close.separability < far.separability);
    CHECK(far.mean_geodesic > close.mean_geodesic);
    CHECK(far.projection.size() == 2 * n);
    CHECK(far.projection.front().domain == "sr");
    CHECK(far.projection.back().domain == "hr");

    const DivergenceStats self = domain_divergence(eh, labels, eh, labels);
    CHECK(self.separability == 0.5);
}

TEST_CASE("report writers") {
    EvalReport r;
    r.config_hash = "abc";
    r.rows.push_back({"bicubic", 20.0, 19.5, 0.5, 0.7, 0.6, 0.4, 10});
    std::ostringstream csv;
    write_report_csv(r, csv);
    CHECK(csv.str().rfind("method,mean_psnr,median_psnr,mean_ssim,mean_identity_similarity,separability,"
                          "mean_geodesic,samples,config_hash\n",
                          0) == 0);
    CHECK(csv.str().find("bicubic,20") != std::string::npos);
    std::ostringstream proj;
    write_projection_csv({{"sr", 3, 0.5, -0.25}}, proj);
    CHECK(proj.str() == "domain,identity,pc1,pc2\nsr,3,0.5,-0.25\n");
}
