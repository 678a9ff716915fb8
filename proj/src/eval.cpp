#include "sicnn/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>

#include "sicnn/autodiff.hpp"

namespace sicnn {

namespace {

void require_same(const Image& a, const Image& b, const char* who) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw std::invalid_argument(std::string(who) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                                    std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                                    std::to_string(b.channels) + ")");
    }
}

constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> g{};
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - 5.0;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += g[i];
    }
    for (auto& v : g) {
        v /= total;
    }
    return g;
}

// Valid-region separable Gaussian filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t w, std::size_t h,
                                 const std::array<double, kSsimWindow>& g) {
    const std::size_t ow = w - kSsimWindow + 1;
    const std::size_t oh = h - kSsimWindow + 1;
    std::vector<double> horiz(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < kSsimWindow; ++k) {
                s += g[k] * plane[y * w + x + k];
            }
            horiz[y * ow + x] = s;
        }
    }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < kSsimWindow; ++k) {
                s += g[k] * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
    require_same(a, b, "psnr");
    if (!(peak > 0.0)) {
        throw std::invalid_argument("psnr: peak must be positive");
    }
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse < 1e-12) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Image& a, const Image& b, double peak) {
    require_same(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw std::invalid_argument("ssim: images must be at least 11x11");
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto g = gaussian_window();
    const std::size_t plane = a.width * a.height;
    double total = 0.0;
    for (std::size_t c = 0; c < a.channels; ++c) {
        std::vector<double> pa(a.pixels.begin() + static_cast<std::ptrdiff_t>(c * plane),
                               a.pixels.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        std::vector<double> pb(b.pixels.begin() + static_cast<std::ptrdiff_t>(c * plane),
                               b.pixels.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        std::vector<double> aa(plane), bb(plane), ab(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, a.width, a.height, g);
        const auto mu_b = filter_valid(pb, a.width, a.height, g);
        const auto e_aa = filter_valid(aa, a.width, a.height, g);
        const auto e_bb = filter_valid(bb, a.width, a.height, g);
        const auto e_ab = filter_valid(ab, a.width, a.height, g);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(a.channels);
}

double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) {
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    }
    return 0.0;
}

namespace {

struct Taps {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

std::vector<Taps> axis_taps(std::size_t in, std::size_t out) {
    std::vector<Taps> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const double base = std::floor(src);
        const double t = src - base;
        for (int k = 0; k < 4; ++k) {
            const long long i = static_cast<long long>(base) - 1 + k;
            taps[o].index[k] = static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(in) - 1));
            taps[o].weight[k] = cubic_kernel(t - static_cast<double>(k - 1));
        }
    }
    return taps;
}

}  // namespace

Image bicubic_resample(const Image& img, std::size_t out_width, std::size_t out_height) {
    if (out_width == 0 || out_height == 0) {
        throw std::invalid_argument("bicubic_resample: output dimensions must be positive");
    }
    const auto tx = axis_taps(img.width, out_width);
    const auto ty = axis_taps(img.height, out_height);
    Image horiz(out_width, img.height, img.channels);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < out_width; ++x) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) {
                    s += tx[x].weight[k] * img.at(c, y, tx[x].index[k]);
                }
                horiz.at(c, y, x) = s;
            }
        }
    }
    Image out(out_width, out_height, img.channels);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < out_height; ++y) {
            for (std::size_t x = 0; x < out_width; ++x) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) {
                    s += ty[y].weight[k] * horiz.at(c, ty[y].index[k], x);
                }
                out.at(c, y, x) = s;
            }
        }
    }
    return out;
}

std::vector<double> cosine_rows(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.rank() != 2) {
        throw std::invalid_argument("cosine_rows: expected equal [N,D] shapes");
    }
    const std::size_t n = a.shape()[0];
    const std::size_t d = a.shape()[1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            ab += a[i * d + k] * b[i * d + k];
            aa += a[i * d + k] * a[i * d + k];
            bb += b[i * d + k] * b[i * d + k];
        }
        if (!(aa >= 1e-24) || !(bb >= 1e-24)) {
            throw std::domain_error("identity_similarity: zero feature in row " + std::to_string(i));
        }
        out[i] = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
    }
    return out;
}

std::vector<double> identity_similarity(const RecognitionNet& rec, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("identity_similarity: batch shapes differ");
    }
    return cosine_rows(extract_identity(rec, a), extract_identity(rec, b));
}

double threshold_separability(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::pair<double, int>> all;
    for (double v : a) {
        all.emplace_back(v, 0);
    }
    for (double v : b) {
        all.emplace_back(v, 1);
    }
    std::sort(all.begin(), all.end());
    const double total = static_cast<double>(all.size());
    // Threshold below everything: all predicted "a".
    double a_below = 0.0, b_below = 0.0;
    auto accuracy = [&] {
        // rule: score <= t -> a ; score > t -> b, and its mirror
        const double acc = (a_below + (static_cast<double>(b.size()) - b_below)) / total;
        return std::max(acc, 1.0 - acc);
    };
    double best = accuracy();
    for (std::size_t i = 0; i < all.size(); ++i) {
        (all[i].second == 0 ? a_below : b_below) += 1.0;
        if (i + 1 < all.size() && all[i + 1].first == all[i].first) {
            continue;
        }
        best = std::max(best, accuracy());
    }
    return best;
}

DivergenceStats domain_divergence(const Tensor& sr, const std::vector<std::size_t>& sr_labels, const Tensor& hr,
                                  const std::vector<std::size_t>& hr_labels) {
    if (sr.rank() != 2 || hr.rank() != 2 || sr.shape()[1] != hr.shape()[1]) {
        throw std::invalid_argument("domain_divergence: embeddings must be [N,D] with matching D");
    }
    const std::size_t ns = sr.shape()[0];
    const std::size_t nh = hr.shape()[0];
    const std::size_t d = sr.shape()[1];
    if (ns < 2 || nh < 2) {
        throw std::invalid_argument("domain_divergence: need at least 2 samples per domain");
    }
    if (sr_labels.size() != ns || hr_labels.size() != nh) {
        throw std::invalid_argument("domain_divergence: label count mismatch");
    }
    using Vec = Eigen::VectorXd;
    auto row = [d](const Tensor& t, std::size_t i) {
        return Eigen::Map<const Vec>(t.data().data() + i * d, static_cast<Eigen::Index>(d));
    };

    DivergenceStats stats;
    std::map<std::size_t, Vec> centroids;
    for (std::size_t i = 0; i < nh; ++i) {
        auto [it, fresh] = centroids.try_emplace(hr_labels[i], Vec::Zero(static_cast<Eigen::Index>(d)));
        it->second += row(hr, i);
    }
    double geo = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
        auto it = centroids.find(sr_labels[i]);
        if (it == centroids.end()) {
            throw std::invalid_argument("domain_divergence: identity " + std::to_string(sr_labels[i]) +
                                        " has no HR samples");
        }
        const double cn = it->second.norm();
        const double cosv = cn > 0.0 ? row(sr, i).dot(it->second) / (cn * row(sr, i).norm()) : 0.0;
        geo += std::acos(std::clamp(cosv, -1.0, 1.0));
    }
    stats.mean_geodesic = geo / static_cast<double>(ns);

    Vec mean_sr = Vec::Zero(static_cast<Eigen::Index>(d));
    Vec mean_hr = Vec::Zero(static_cast<Eigen::Index>(d));
    Vec mean_all = Vec::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < ns; ++i) {
        mean_sr += row(sr, i);
    }
    for (std::size_t i = 0; i < nh; ++i) {
        mean_hr += row(hr, i);
    }
    mean_all = (mean_sr + mean_hr) / static_cast<double>(ns + nh);
    mean_sr /= static_cast<double>(ns);
    mean_hr /= static_cast<double>(nh);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < ns; ++i) {
        const Vec c = row(sr, i) - mean_all;
        cov += c * c.transpose();
    }
    for (std::size_t i = 0; i < nh; ++i) {
        const Vec c = row(hr, i) - mean_all;
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(ns + nh);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index top = static_cast<Eigen::Index>(d) - 1;
    std::array<Vec, 2> pcs;
    for (int k = 0; k < 2; ++k) {
        if (top - k >= 0) {
            pcs[k] = eig.eigenvectors().col(top - k);
            Eigen::Index arg = 0;
            pcs[k].cwiseAbs().maxCoeff(&arg);
            if (pcs[k](arg) < 0.0) {
                pcs[k] = -pcs[k];
            }
        } else {
            pcs[k] = Vec::Zero(static_cast<Eigen::Index>(d));
        }
    }

    Vec direction = mean_sr - mean_hr;
    if (direction.norm() < 1e-12) {
        direction = pcs[0];
    } else {
        direction.normalize();
    }
    std::vector<double> proj_sr(ns), proj_hr(nh);
    for (std::size_t i = 0; i < ns; ++i) {
        proj_sr[i] = row(sr, i).dot(direction);
    }
    for (std::size_t i = 0; i < nh; ++i) {
        proj_hr[i] = row(hr, i).dot(direction);
    }
    stats.separability = threshold_separability(proj_sr, proj_hr);

    for (std::size_t i = 0; i < ns; ++i) {
        const Vec c = row(sr, i) - mean_all;
        stats.projection.push_back({"sr", sr_labels[i], c.dot(pcs[0]), c.dot(pcs[1])});
    }
    for (std::size_t i = 0; i < nh; ++i) {
        const Vec c = row(hr, i) - mean_all;
        stats.projection.push_back({"hr", hr_labels[i], c.dot(pcs[0]), c.dot(pcs[1])});
    }
    return stats;
}

DivergenceStats domain_divergence(const RecognitionNet& rec, const Tensor& sr_images,
                                  const std::vector<std::size_t>& sr_labels, const Tensor& hr_images,
                                  const std::vector<std::size_t>& hr_labels) {
    return domain_divergence(embed_on_hypersphere(extract_identity(rec, sr_images)), sr_labels,
                             embed_on_hypersphere(extract_identity(rec, hr_images)), hr_labels);
}

std::vector<Image> super_resolve(const HallucinationNet& net, const std::vector<ImagePair>& pairs, std::size_t batch) {
    std::vector<Image> out;
    out.reserve(pairs.size());
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
        const std::size_t stop = std::min(pairs.size(), start + batch);
        std::vector<Image> lr;
        for (std::size_t i = start; i < stop; ++i) {
            lr.push_back(pairs[i].lr);
        }
        const Tensor sr = hallucinate(net, to_batch(lr));
        for (std::size_t i = 0; i < lr.size(); ++i) {
            out.push_back(clamp01(from_batch(sr, i)));
        }
    }
    return out;
}

EvalRow evaluate_images(const std::string& method, const std::vector<Image>& outputs,
                        const std::vector<ImagePair>& pairs, const RecognitionNet& evaluator) {
    if (pairs.empty()) {
        throw std::invalid_argument("evaluation split is empty");
    }
    if (outputs.size() != pairs.size()) {
        throw std::invalid_argument("evaluate_images: output count mismatch");
    }
    EvalRow row;
    row.method = method;
    row.samples = pairs.size();
    std::vector<double> psnrs;
    double ssim_total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        psnrs.push_back(psnr(outputs[i], pairs[i].hr, 1.0));
        ssim_total += ssim(outputs[i], pairs[i].hr, 1.0);
    }
    double psnr_total = 0.0;
    for (double p : psnrs) {
        psnr_total += p;
    }
    row.mean_psnr = psnr_total / static_cast<double>(psnrs.size());
    std::vector<double> sorted = psnrs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    row.median_psnr = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    row.mean_ssim = ssim_total / static_cast<double>(pairs.size());

    std::vector<Image> hr;
    std::vector<std::size_t> labels;
    for (const auto& p : pairs) {
        hr.push_back(p.hr);
        labels.push_back(p.identity);
    }
    const Tensor f_sr = extract_identity(evaluator, to_batch(outputs));
    const Tensor f_hr = extract_identity(evaluator, to_batch(hr));
    double sim = 0.0;
    for (double c : cosine_rows(f_sr, f_hr)) {
        sim += c;
    }
    row.mean_identity_similarity = sim / static_cast<double>(pairs.size());
    if (pairs.size() >= 2) {
        const auto div = domain_divergence(embed_on_hypersphere(f_sr), labels, embed_on_hypersphere(f_hr), labels);
        row.separability = div.separability;
        row.mean_geodesic = div.mean_geodesic;
    }
    return row;
}

EvalReport evaluate(const HallucinationNet& net, const RecognitionNet& evaluator, const std::vector<ImagePair>& pairs,
                    const std::string& config_hash) {
    if (pairs.empty()) {
        throw std::invalid_argument("evaluation split is empty");
    }
    EvalReport report;
    report.config_hash = config_hash;
    std::vector<Image> bicubic;
    for (const auto& p : pairs) {
        bicubic.push_back(clamp01(bicubic_resample(p.lr, p.hr.width, p.hr.height)));
    }
    report.rows.push_back(evaluate_images("bicubic", bicubic, pairs, evaluator));
    report.rows.push_back(evaluate_images("model", super_resolve(net, pairs), pairs, evaluator));
    return report;
}

void write_report_csv(const EvalReport& report, std::ostream& os) {
    os << "method,mean_psnr,median_psnr,mean_ssim,mean_identity_similarity,separability,mean_geodesic,samples,"
          "config_hash\n";
    os << std::setprecision(10);
    for (const auto& r : report.rows) {
        os << r.method << ',' << r.mean_psnr << ',' << r.median_psnr << ',' << r.mean_ssim << ','
           << r.mean_identity_similarity << ',' << r.separability << ',' << r.mean_geodesic << ',' << r.samples
           << ',' << report.config_hash << '\n';
    }
}

void write_report_text(const EvalReport& report, std::ostream& os) {
    os << "config " << report.config_hash << '\n';
    os << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "PSNR(dB)" << std::setw(12)
       << "median" << std::setw(10) << "SSIM" << std::setw(12) << "identity" << std::setw(10) << "sep"
       << std::setw(9) << "n" << '\n';
    os << std::fixed;
    for (const auto& r : report.rows) {
        os << std::left << std::setw(10) << r.method << std::right << std::setprecision(4) << std::setw(12)
           << r.mean_psnr << std::setw(12) << r.median_psnr << std::setw(10) << r.mean_ssim << std::setw(12)
           << r.mean_identity_similarity << std::setw(10) << r.separability << std::setw(9) << r.samples << '\n';
    }
    os.unsetf(std::ios::fixed);
}

void write_projection_csv(const std::vector<ProjectionRow>& rows, std::ostream& os) {
    os << "domain,identity,pc1,pc2\n" << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.domain << ',' << r.identity << ',' << r.pc1 << ',' << r.pc2 << '\n';
    }
}

}  // namespace sicnn
