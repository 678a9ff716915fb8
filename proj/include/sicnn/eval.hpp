#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sicnn/data.hpp"
#include "sicnn/image.hpp"
#include "sicnn/models.hpp"

namespace sicnn {

inline constexpr double kPsnrCap = 100.0;

/// 10*log10(peak^2 / MSE); kPsnrCap when MSE < 1e-12.
double psnr(const Image& a, const Image& b, double peak = 1.0);
/// Mean SSIM over all valid 11x11 windows (Gaussian sigma 1.5, K1 0.01,
/// K2 0.03), averaged over channels.
double ssim(const Image& a, const Image& b, double peak = 1.0);

/// Catmull-Rom style cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);
/// Separable bicubic resampling, edge-clamped, half-pixel centre mapping.
Image bicubic_resample(const Image& img, std::size_t out_width, std::size_t out_height);

/// Per-pair cosine similarity of FC1 features.
std::vector<double> identity_similarity(const RecognitionNet& rec, const Tensor& a, const Tensor& b);
std::vector<double> cosine_rows(const Tensor& a, const Tensor& b);

struct ProjectionRow {
    std::string domain;  // "sr" or "hr"
    std::size_t identity = 0;
    double pc1 = 0.0;
    double pc2 = 0.0;
};

struct DivergenceStats {
    double mean_geodesic = 0.0;  // SR embedding to same-identity HR centroid, radians
    double separability = 0.5;   // best-threshold accuracy along the SR/HR mean difference
    std::vector<ProjectionRow> projection;
};

/// Works on unit-norm embeddings ([N, D]) with identity labels.
DivergenceStats domain_divergence(const Tensor& sr_embeddings, const std::vector<std::size_t>& sr_labels,
                                  const Tensor& hr_embeddings, const std::vector<std::size_t>& hr_labels);
DivergenceStats domain_divergence(const RecognitionNet& rec, const Tensor& sr_images,
                                  const std::vector<std::size_t>& sr_labels, const Tensor& hr_images,
                                  const std::vector<std::size_t>& hr_labels);
/// Best single-threshold accuracy separating two sets of scalar scores.
double threshold_separability(const std::vector<double>& a, const std::vector<double>& b);

struct EvalRow {
    std::string method;
    double mean_psnr = 0.0;
    double median_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_identity_similarity = 0.0;
    double separability = 0.5;
    double mean_geodesic = 0.0;
    std::size_t samples = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string config_hash;
};

/// Super-resolves every LR input (clamped to [0, 1]) and scores it, next to a
/// bicubic-upsampling row, against HR.
std::vector<Image> super_resolve(const HallucinationNet& net, const std::vector<ImagePair>& pairs,
                                 std::size_t batch = 64);
EvalRow evaluate_images(const std::string& method, const std::vector<Image>& outputs,
                        const std::vector<ImagePair>& pairs, const RecognitionNet& evaluator);
EvalReport evaluate(const HallucinationNet& net, const RecognitionNet& evaluator, const std::vector<ImagePair>& pairs,
                    const std::string& config_hash);

void write_report_csv(const EvalReport& report, std::ostream& os);
void write_report_text(const EvalReport& report, std::ostream& os);
void write_projection_csv(const std::vector<ProjectionRow>& rows, std::ostream& os);

}  // namespace sicnn
