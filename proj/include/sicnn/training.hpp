#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sicnn/data.hpp"
#include "sicnn/losses.hpp"
#include "sicnn/models.hpp"
#include "sicnn/random.hpp"

namespace sicnn {

enum class Approach { BaselineI, BaselineII, BaselineIII, DomainIntegrated };

std::string approach_name(Approach a);  // baseline1, baseline2, baseline3, di
Approach parse_approach(const std::string& name);

/// Step learning rate: start_lr * 10^-(number of drops <= iter).
struct LrSchedule {
    double start_lr = 0.01;
    std::vector<std::uint64_t> drops;
    std::uint64_t final_iter = 1;

    double at(std::uint64_t iter) const;
    void validate(const std::string& name) const;
};

struct TrainConfig {
    Approach approach = Approach::DomainIntegrated;
    double alpha = 8.0;
    double beta = 1.0;
    int margin = 4;
    LambdaAnneal anneal;
    std::size_t batch_n = 16;             // LR/HR pairs per hallucination step
    std::size_t rec_batch = 32;           // 2 * batch_n: SR + HR images per recognition step
    std::size_t pretrain_rec_batch = 32;  // HR images per recognition pretraining step
    LrSchedule rec_schedule;   // recognition pretraining (also evaluator, retraining)
    LrSchedule hall_schedule;  // hallucination pretraining
    LrSchedule di_schedule;      // CNN_H in alternating / finetuning phases
    LrSchedule di_rec_schedule;  // CNN_R in alternating phases; same final_iter
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    std::size_t log_every = 50;
    std::size_t val_samples = 64;
    HallucinationNetConfig hall;
    RecognitionNetConfig rec;

    void validate() const;

    static TrainConfig desk();
    static TrainConfig paper();
};

enum class Phase {
    Evaluator,
    PretrainR,
    PretrainH,
    RetrainR,
    JointH,
    JointHFinetune,
    JointAll,
    JointAllFinetune,
    DomainIntegrated,
};

std::string phase_name(Phase p);

struct PhaseSpec {
    Phase phase;
    std::uint64_t iterations;
};

/// Phase sequence of an approach. Every plan starts by training the
/// independent evaluator network used for identity-similarity metrics.
std::vector<PhaseSpec> phase_plan(const TrainConfig& cfg);

struct MetricRow {
    std::uint64_t iter = 0;
    std::string phase;
    double l_sr = 0.0;
    double l_si = 0.0;
    double l_fr = 0.0;
    double lr_h = 0.0;
    double lr_r = 0.0;
    double val_identity_sim = 0.0;
    double val_psnr = 0.0;

    bool operator==(const MetricRow&) const = default;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& os);
std::vector<MetricRow> read_metrics_csv(std::istream& is);

struct TrainState {
    HallucinationNet hall;
    RecognitionNet rec;
    ASoftmaxHead head;
    RecognitionNet evaluator;
    ASoftmaxHead evaluator_head;

    Rng rng;
    std::vector<std::size_t> order{};  // current epoch permutation of training pairs
    std::size_t cursor = 0;

    std::vector<std::string> completed_phases{};
    std::uint64_t phase_iter = 0;
    std::uint64_t global_iter = 0;
    bool pretrained_r = false;
    bool pretrained_h = false;
    std::vector<MetricRow> metrics{};

    static TrainState create(const TrainConfig& cfg, std::size_t num_identities);
    TrainState clone() const;
};

struct StepLosses {
    double l_sr = 0.0;
    double l_si = 0.0;
    double l_fr = 0.0;
};

/// Called after a named sub-step ("recognition", "hallucination").
using SubstepHook = std::function<void(const std::string& substep, const TrainState& state)>;

/// One iteration of the alternating algorithm on a minibatch of pairs:
/// CNN_H forward; one A-Softmax SGD step for CNN_R and its head on the 2N
/// images {SR, HR} with SR detached; one SGD step for CNN_H on
/// L_SR + alpha * L_SI with CNN_R frozen. Requires both nets pretrained.
StepLosses domain_integrated_step(TrainState& state, const TrainConfig& cfg, std::span<const ImagePair> batch,
                                  std::span<const std::size_t> labels, double lr_h, double lr_r,
                                  const SubstepHook& hook = {});

/// One SGD step of CNN_H on L_SR + alpha * L_SI with CNN_R frozen.
StepLosses hallucination_step(TrainState& state, const TrainConfig& cfg, std::span<const ImagePair> batch,
                              double alpha, double lr);

/// One A-Softmax SGD step of `net` and `head` on fixed images.
double recognition_step(RecognitionNet& net, ASoftmaxHead& head, const TrainConfig& cfg, const Tensor& images,
                        std::span<const std::size_t> labels, double lr);

class Trainer {
public:
    using IterationFn = std::function<void(const TrainState&)>;

    Trainer(TrainConfig cfg, std::vector<ImagePair> train, std::vector<ImagePair> validation);

    const TrainConfig& config() const { return cfg_; }
    const std::vector<PhaseSpec>& plan() const { return plan_; }
    std::size_t num_identities() const { return index_.size(); }

    TrainState initial_state() const;
    bool finished(const TrainState& state) const;
    /// Throws unless the state's completed phases are a prefix of this plan.
    void check_compatible(const TrainState& state) const;

    /// Runs the remaining plan, or stops once global_iter reaches stop_at.
    void run(TrainState& state, std::optional<std::uint64_t> stop_at = {}, const IterationFn& after = {}) const;

    /// Mean evaluator cosine similarity and PSNR on the validation pairs.
    std::pair<double, double> validate(const TrainState& state) const;

private:
    std::vector<std::size_t> next_batch(TrainState& state, std::size_t n) const;
    std::vector<std::size_t> labels_of(std::span<const ImagePair> pairs) const;
    MetricRow step(TrainState& state, Phase phase) const;

    TrainConfig cfg_;
    std::vector<ImagePair> train_;
    std::vector<ImagePair> validation_;
    std::map<std::size_t, std::size_t> index_;
    std::vector<PhaseSpec> plan_;
};

struct CheckpointMeta {
    std::string config_hash;
    std::string model_hash;
    std::string approach;
};

/// Directory with manifest.txt, parameter/velocity tensor files, rng.txt and
/// metrics.csv. Existing files are replaced.
void save_checkpoint(const TrainState& state, const std::filesystem::path& dir, const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg);

}  // namespace sicnn
