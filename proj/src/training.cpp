#include "sicnn/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "sicnn/eval.hpp"
#include "sicnn/log.hpp"

namespace sicnn {

std::string approach_name(Approach a) {
    switch (a) {
        case Approach::BaselineI: return "baseline1";
        case Approach::BaselineII: return "baseline2";
        case Approach::BaselineIII: return "baseline3";
        case Approach::DomainIntegrated: return "di";
    }
    return "?";
}

Approach parse_approach(const std::string& name) {
    for (Approach a : {Approach::BaselineI, Approach::BaselineII, Approach::BaselineIII, Approach::DomainIntegrated}) {
        if (approach_name(a) == name) {
            return a;
        }
    }
    throw std::invalid_argument("unknown approach '" + name + "' (expected baseline1, baseline2, baseline3 or di)");
}

double LrSchedule::at(std::uint64_t iter) const {
    double lr = start_lr;
    for (std::uint64_t d : drops) {
        if (d <= iter) {
            lr /= 10.0;
        }
    }
    return lr;
}

void LrSchedule::validate(const std::string& name) const {
    if (!(start_lr > 0.0) || !std::isfinite(start_lr)) {
        throw std::invalid_argument(name + ": start_lr must be positive");
    }
    if (final_iter == 0) {
        throw std::invalid_argument(name + ": final_iter must be positive");
    }
    for (std::size_t i = 0; i < drops.size(); ++i) {
        if (i > 0 && drops[i] <= drops[i - 1]) {
            throw std::invalid_argument(name + ": drop iterations must be strictly increasing");
        }
        if (drops[i] >= final_iter) {
            throw std::invalid_argument(name + ": drop iteration " + std::to_string(drops[i]) +
                                        " is not below final_iter " + std::to_string(final_iter));
        }
    }
}

void TrainConfig::validate() const {
    if (margin < 1) {
        throw std::invalid_argument("margin must be at least 1");
    }
    if (batch_n == 0 || pretrain_rec_batch == 0) {
        throw std::invalid_argument("batch sizes must be positive");
    }
    if (rec_batch != 2 * batch_n) {
        throw std::invalid_argument("rec_batch must equal 2 * batch_n (N SR + N HR images), got " +
                                    std::to_string(rec_batch) + " vs N=" + std::to_string(batch_n));
    }
    if (log_every == 0) {
        throw std::invalid_argument("log_every must be positive");
    }
    if (!std::isfinite(alpha) || alpha < 0.0 || !std::isfinite(beta) || beta < 0.0) {
        throw std::invalid_argument("alpha and beta must be finite and non-negative");
    }
    if (!(momentum >= 0.0 && momentum < 1.0) || weight_decay < 0.0) {
        throw std::invalid_argument("momentum must lie in [0, 1) and weight_decay must be non-negative");
    }
    rec_schedule.validate("rec_schedule");
    hall_schedule.validate("hall_schedule");
    di_schedule.validate("di_schedule");
    di_rec_schedule.validate("di_rec_schedule");
    if (di_rec_schedule.final_iter != di_schedule.final_iter) {
        throw std::invalid_argument("di_rec_schedule and di_schedule must share final_iter");
    }
    hall.validate();
    rec.validate();
    if (hall.output_width() != rec.input_width || hall.output_height() != rec.input_height ||
        hall.channels != rec.channels) {
        throw std::invalid_argument("hallucination output " + std::to_string(hall.output_width()) + "x" +
                                    std::to_string(hall.output_height()) + " does not match recognition input " +
                                    std::to_string(rec.input_width) + "x" + std::to_string(rec.input_height));
    }
}

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.batch_n = 16;
    cfg.rec_batch = 32;
    cfg.pretrain_rec_batch = 32;
    cfg.rec_schedule = {0.01, {600, 900}, 1000};
    cfg.hall_schedule = {1e-4, {1200, 1800}, 2000};
    cfg.di_schedule = {1e-4, {800}, 1000};
    cfg.di_rec_schedule = {1e-3, {800}, 1000};
    cfg.hall = HallucinationNetConfig::desk();
    cfg.rec = RecognitionNetConfig::desk();
    return cfg;
}

TrainConfig TrainConfig::paper() {
    TrainConfig cfg;
    cfg.batch_n = 128;
    cfg.rec_batch = 256;
    cfg.pretrain_rec_batch = 512;
    cfg.rec_schedule = {0.1, {20000, 30000}, 35000};
    cfg.hall_schedule = {0.02, {30000, 60000}, 80000};
    cfg.di_schedule = {0.01, {6000}, 9000};
    cfg.di_rec_schedule = cfg.di_schedule;
    cfg.hall = HallucinationNetConfig::paper();
    cfg.rec = RecognitionNetConfig::paper();
    return cfg;
}

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::Evaluator: return "evaluator";
        case Phase::PretrainR: return "pretrain_r";
        case Phase::PretrainH: return "pretrain_h";
        case Phase::RetrainR: return "retrain_r";
        case Phase::JointH: return "joint_h";
        case Phase::JointHFinetune: return "joint_h_ft";
        case Phase::JointAll: return "joint_all";
        case Phase::JointAllFinetune: return "joint_all_ft";
        case Phase::DomainIntegrated: return "di";
    }
    return "?";
}

std::vector<PhaseSpec> phase_plan(const TrainConfig& cfg) {
    const std::uint64_t r = cfg.rec_schedule.final_iter;
    const std::uint64_t h = cfg.hall_schedule.final_iter;
    const std::uint64_t d = cfg.di_schedule.final_iter;
    switch (cfg.approach) {
        case Approach::BaselineI:
            return {{Phase::Evaluator, r}, {Phase::JointAll, h}, {Phase::JointAllFinetune, d}};
        case Approach::BaselineII:
            return {{Phase::Evaluator, r}, {Phase::PretrainR, r}, {Phase::JointH, h}, {Phase::JointHFinetune, d}};
        case Approach::BaselineIII:
            return {{Phase::Evaluator, r}, {Phase::PretrainH, h}, {Phase::RetrainR, r}, {Phase::JointHFinetune, d}};
        case Approach::DomainIntegrated:
            return {{Phase::Evaluator, r}, {Phase::PretrainR, r}, {Phase::PretrainH, h}, {Phase::DomainIntegrated, d}};
    }
    return {};
}

namespace {

// Shortest representation that parses back to the same double.
std::string exact(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& os) {
    os << "iter,phase,l_sr,l_si,l_fr,lr_h,lr_r,val_identity_sim,val_psnr\n";
    for (const auto& r : rows) {
        os << r.iter << ',' << r.phase << ',' << exact(r.l_sr) << ',' << exact(r.l_si) << ',' << exact(r.l_fr) << ','
           << exact(r.lr_h) << ',' << exact(r.lr_r) << ',' << exact(r.val_identity_sim) << ',' << exact(r.val_psnr)
           << '\n';
    }
}

std::vector<MetricRow> read_metrics_csv(std::istream& is) {
    std::string line;
    std::getline(is, line);
    if (line != "iter,phase,l_sr,l_si,l_fr,lr_h,lr_r,val_identity_sim,val_psnr") {
        throw std::runtime_error("unexpected metrics header: '" + line + "'");
    }
    std::vector<MetricRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string col; std::getline(ss, col, ',');) {
            cols.push_back(col);
        }
        if (cols.size() != 9) {
            throw std::runtime_error("malformed metrics row: '" + line + "'");
        }
        MetricRow r;
        r.iter = std::stoull(cols[0]);
        r.phase = cols[1];
        r.l_sr = std::stod(cols[2]);
        r.l_si = std::stod(cols[3]);
        r.l_fr = std::stod(cols[4]);
        r.lr_h = std::stod(cols[5]);
        r.lr_r = std::stod(cols[6]);
        r.val_identity_sim = std::stod(cols[7]);
        r.val_psnr = std::stod(cols[8]);
        rows.push_back(std::move(r));
    }
    return rows;
}

TrainState TrainState::create(const TrainConfig& cfg, std::size_t num_identities) {
    if (num_identities == 0) {
        throw std::invalid_argument("training needs at least one identity");
    }
    const std::uint64_t s = cfg.seed;
    return TrainState{
        HallucinationNet(cfg.hall, derive_seed(s, 11)),
        RecognitionNet(cfg.rec, derive_seed(s, 12)),
        ASoftmaxHead(num_identities, cfg.rec.feature_dim, cfg.margin, cfg.anneal, derive_seed(s, 13)),
        RecognitionNet(cfg.rec, derive_seed(s, 21)),
        ASoftmaxHead(num_identities, cfg.rec.feature_dim, cfg.margin, cfg.anneal, derive_seed(s, 22)),
        Rng(derive_seed(s, 31)),
    };
}

TrainState TrainState::clone() const {
    TrainState out{hall.clone(), rec.clone(), head.clone(), evaluator.clone(), evaluator_head.clone(), rng};
    out.order = order;
    out.cursor = cursor;
    out.completed_phases = completed_phases;
    out.phase_iter = phase_iter;
    out.global_iter = global_iter;
    out.pretrained_r = pretrained_r;
    out.pretrained_h = pretrained_h;
    out.metrics = metrics;
    return out;
}

namespace {

struct PairTensors {
    Tensor lr;
    Tensor hr;
};

PairTensors stack(std::span<const ImagePair> batch) {
    std::vector<Image> lr, hr;
    lr.reserve(batch.size());
    hr.reserve(batch.size());
    for (const auto& p : batch) {
        lr.push_back(p.lr);
        hr.push_back(p.hr);
    }
    return {to_batch(lr), to_batch(hr)};
}

// Stacks two same-shaped [N, ...] batches along the leading axis.
Tensor concat_batch(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
        throw std::invalid_argument("concat_batch: shapes differ");
    }
    Shape s = a.shape();
    s[0] += b.shape()[0];
    Tensor out(s);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

std::vector<std::size_t> twice(std::span<const std::size_t> labels) {
    std::vector<std::size_t> out(labels.begin(), labels.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

// Line 5 of the alternating loop given an already built SR graph.
StepLosses update_hallucination(TrainState& state, const TrainConfig& cfg, const Var& sr, const Tensor& hr_batch,
                                double alpha, double lr, bool track_si) {
    FreezeGuard freeze_r(state.rec.params());
    FreezeGuard freeze_head(state.head.params());
    const Var hr = constant(hr_batch);
    const LossValue l_sr = super_resolution_loss(sr, hr);
    StepLosses out;
    out.l_sr = l_sr.value;
    LossValue total = l_sr;
    if (alpha != 0.0 || track_si) {
        const LossValue l_si = super_identity_loss(state.rec, sr, hr);
        out.l_si = l_si.value;
        total = joint_objective_baseline2(l_sr, l_si, alpha);
    }
    backward(total.node);
    sgd_step(state.hall.params(), lr, cfg.momentum, cfg.weight_decay);
    return out;
}

}  // namespace

double recognition_step(RecognitionNet& net, ASoftmaxHead& head, const TrainConfig& cfg, const Tensor& images,
                        std::span<const std::size_t> labels, double lr) {
    const Var features = net.forward(constant(images));
    const LossValue loss = a_softmax_loss(head, features, labels);
    backward(loss.node);
    sgd_step(net.params(), lr, cfg.momentum, cfg.weight_decay);
    sgd_step(head.params(), lr, cfg.momentum, cfg.weight_decay);
    head.advance();
    return loss.value;
}

StepLosses hallucination_step(TrainState& state, const TrainConfig& cfg, std::span<const ImagePair> batch,
                              double alpha, double lr) {
    const PairTensors t = stack(batch);
    const Var sr = state.hall.forward(constant(t.lr));
    return update_hallucination(state, cfg, sr, t.hr, alpha, lr, alpha != 0.0);
}

StepLosses domain_integrated_step(TrainState& state, const TrainConfig& cfg, std::span<const ImagePair> batch,
                                  std::span<const std::size_t> labels, double lr_h, double lr_r,
                                  const SubstepHook& hook) {
    if (!state.pretrained_r || !state.pretrained_h) {
        throw std::logic_error(std::string("domain-integrated step needs a pretrained ") +
                               (!state.pretrained_r ? "CNN_R (run pretrain_r)" : "CNN_H (run pretrain_h)"));
    }
    if (labels.size() != batch.size()) {
        throw std::invalid_argument("domain_integrated_step: label count mismatch");
    }
    const PairTensors t = stack(batch);
    // (a) hallucinate; the graph is reused for the CNN_H update
    const Var sr = state.hall.forward(constant(t.lr));

    // (b) recognition update on {SR, HR}; SR enters as data only
    StepLosses out;
    out.l_fr = recognition_step(state.rec, state.head, cfg, concat_batch(sr->value, t.hr), twice(labels), lr_r);
    if (hook) {
        hook("recognition", state);
    }

    // (c) hallucination update against the refreshed CNN_R
    const StepLosses h = update_hallucination(state, cfg, sr, t.hr, cfg.alpha, lr_h, true);
    out.l_sr = h.l_sr;
    out.l_si = h.l_si;
    if (hook) {
        hook("hallucination", state);
    }
    return out;
}

Trainer::Trainer(TrainConfig cfg, std::vector<ImagePair> train, std::vector<ImagePair> validation)
    : cfg_(std::move(cfg)), train_(std::move(train)), validation_(std::move(validation)) {
    cfg_.validate();
    if (train_.empty()) {
        throw std::invalid_argument("training split is empty");
    }
    for (const auto& p : train_) {
        if (p.hr.width != cfg_.rec.input_width || p.hr.height != cfg_.rec.input_height ||
            p.hr.channels != cfg_.rec.channels || p.lr.width != cfg_.hall.input_width ||
            p.lr.height != cfg_.hall.input_height) {
            throw std::invalid_argument("dataset image sizes do not match the model preset");
        }
    }
    if (validation_.size() > cfg_.val_samples) {
        validation_.resize(cfg_.val_samples);
    }
    index_ = identity_index(train_);
    plan_ = phase_plan(cfg_);
}

TrainState Trainer::initial_state() const { return TrainState::create(cfg_, index_.size()); }

bool Trainer::finished(const TrainState& state) const { return state.completed_phases.size() >= plan_.size(); }

void Trainer::check_compatible(const TrainState& state) const {
    if (state.completed_phases.size() > plan_.size()) {
        throw std::invalid_argument("state has more completed phases than the " + approach_name(cfg_.approach) +
                                    " plan");
    }
    for (std::size_t i = 0; i < state.completed_phases.size(); ++i) {
        if (state.completed_phases[i] != phase_name(plan_[i].phase)) {
            throw std::invalid_argument("state phase history diverges from the " + approach_name(cfg_.approach) +
                                        " plan at '" + state.completed_phases[i] + "' (expected '" +
                                        phase_name(plan_[i].phase) + "')");
        }
    }
    if (state.head.num_identities() != index_.size()) {
        throw std::invalid_argument("state was trained on " + std::to_string(state.head.num_identities()) +
                                    " identities, dataset has " + std::to_string(index_.size()));
    }
}

std::vector<std::size_t> Trainer::next_batch(TrainState& state, std::size_t n) const {
    std::vector<std::size_t> out;
    out.reserve(n);
    while (out.size() < n) {
        if (state.cursor >= state.order.size()) {
            state.order.resize(train_.size());
            for (std::size_t i = 0; i < train_.size(); ++i) {
                state.order[i] = i;
            }
            for (std::size_t i = train_.size(); i > 1; --i) {
                std::swap(state.order[i - 1], state.order[state.rng.index(i)]);
            }
            state.cursor = 0;
        }
        out.push_back(state.order[state.cursor++]);
    }
    return out;
}

std::vector<std::size_t> Trainer::labels_of(std::span<const ImagePair> pairs) const {
    std::vector<std::size_t> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back(index_.at(p.identity));
    }
    return out;
}

std::pair<double, double> Trainer::validate(const TrainState& state) const {
    if (validation_.empty()) {
        return {0.0, 0.0};
    }
    const std::vector<Image> sr = super_resolve(state.hall, validation_);
    std::vector<Image> hr;
    double total_psnr = 0.0;
    for (std::size_t i = 0; i < validation_.size(); ++i) {
        hr.push_back(validation_[i].hr);
        total_psnr += psnr(sr[i], validation_[i].hr);
    }
    const auto cos = identity_similarity(state.evaluator, to_batch(sr), to_batch(hr));
    double total_cos = 0.0;
    for (double c : cos) {
        total_cos += c;
    }
    const double n = static_cast<double>(validation_.size());
    return {total_cos / n, total_psnr / n};
}

MetricRow Trainer::step(TrainState& state, Phase phase) const {
    const std::uint64_t i = state.phase_iter;
    MetricRow row;
    row.phase = phase_name(phase);

    auto gather = [&](std::size_t n) {
        std::vector<ImagePair> batch;
        for (std::size_t idx : next_batch(state, n)) {
            batch.push_back(train_[idx]);
        }
        return batch;
    };
    auto hr_only = [&](RecognitionNet& net, ASoftmaxHead& head) {
        const auto batch = gather(cfg_.pretrain_rec_batch);
        const double lr = cfg_.rec_schedule.at(i);
        row.l_fr = recognition_step(net, head, cfg_, stack(batch).hr, labels_of(batch), lr);
        row.lr_r = lr;
    };

    switch (phase) {
        case Phase::Evaluator:
            hr_only(state.evaluator, state.evaluator_head);
            break;
        case Phase::PretrainR:
            hr_only(state.rec, state.head);
            break;
        case Phase::PretrainH: {
            const auto batch = gather(cfg_.batch_n);
            row.lr_h = cfg_.hall_schedule.at(i);
            row.l_sr = hallucination_step(state, cfg_, batch, 0.0, row.lr_h).l_sr;
            break;
        }
        case Phase::RetrainR: {
            const auto batch = gather(cfg_.batch_n);
            const PairTensors t = stack(batch);
            const Tensor sr = hallucinate(state.hall, t.lr);
            row.lr_r = cfg_.rec_schedule.at(i);
            row.l_fr = recognition_step(state.rec, state.head, cfg_, concat_batch(sr, t.hr),
                                        twice(labels_of(batch)), row.lr_r);
            break;
        }
        case Phase::JointH:
        case Phase::JointHFinetune: {
            const auto batch = gather(cfg_.batch_n);
            row.lr_h = (phase == Phase::JointH ? cfg_.hall_schedule : cfg_.di_schedule).at(i);
            const StepLosses l = hallucination_step(state, cfg_, batch, cfg_.alpha, row.lr_h);
            row.l_sr = l.l_sr;
            row.l_si = l.l_si;
            break;
        }
        case Phase::JointAll:
        case Phase::JointAllFinetune: {
            const auto batch = gather(cfg_.batch_n);
            const PairTensors t = stack(batch);
            const auto labels = labels_of(batch);
            const bool first = phase == Phase::JointAll;
            row.lr_h = (first ? cfg_.hall_schedule : cfg_.di_schedule).at(i);
            row.lr_r = (first ? cfg_.rec_schedule : cfg_.di_rec_schedule).at(i);
            const Var sr = state.hall.forward(constant(t.lr));
            const Var hr = constant(t.hr);
            const LossValue l_sr = super_resolution_loss(sr, hr);
            const LossValue l_si = super_identity_loss(state.rec, sr, hr);
            const LossValue fr_sr = a_softmax_loss(state.head, state.rec.forward(sr), labels);
            const LossValue fr_hr = a_softmax_loss(state.head, state.rec.forward(hr), labels);
            const LossValue l_fr{ops::scale(ops::add(fr_sr.node, fr_hr.node), 0.5), 0.5 * (fr_sr.value + fr_hr.value)};
            const LossValue total = joint_objective_baseline1(l_sr, l_si, l_fr, cfg_.alpha, cfg_.beta);
            backward(total.node);
            sgd_step(state.hall.params(), row.lr_h, cfg_.momentum, cfg_.weight_decay);
            sgd_step(state.rec.params(), row.lr_r, cfg_.momentum, cfg_.weight_decay);
            sgd_step(state.head.params(), row.lr_r, cfg_.momentum, cfg_.weight_decay);
            state.head.advance();
            row.l_sr = l_sr.value;
            row.l_si = l_si.value;
            row.l_fr = l_fr.value;
            break;
        }
        case Phase::DomainIntegrated: {
            const auto batch = gather(cfg_.batch_n);
            row.lr_h = cfg_.di_schedule.at(i);
            row.lr_r = cfg_.di_rec_schedule.at(i);
            const StepLosses l = domain_integrated_step(state, cfg_, batch, labels_of(batch), row.lr_h, row.lr_r);
            row.l_sr = l.l_sr;
            row.l_si = l.l_si;
            row.l_fr = l.l_fr;
            break;
        }
    }
    return row;
}

void Trainer::run(TrainState& state, std::optional<std::uint64_t> stop_at, const IterationFn& after) const {
    check_compatible(state);
    while (!finished(state)) {
        if (stop_at && state.global_iter >= *stop_at) {
            return;
        }
        const PhaseSpec& spec = plan_[state.completed_phases.size()];
        const std::string name = phase_name(spec.phase);
        if (state.phase_iter == 0) {
            log_info("phase " + name + ": " + std::to_string(spec.iterations) + " iterations");
        }
        MetricRow row;
        try {
            row = step(state, spec.phase);
        } catch (const std::exception& e) {
            std::string msg = "phase " + name + ", iteration " + std::to_string(state.phase_iter) + ": " + e.what();
            const std::string what = e.what();
            if (what.find("non-finite") != std::string::npos || what.find("zero norm") != std::string::npos) {
                msg += "; training diverged, try a larger lambda0 or a smaller learning rate";
            }
            throw std::runtime_error(msg);
        }
        ++state.phase_iter;
        ++state.global_iter;
        const bool last = state.phase_iter == spec.iterations;
        if (state.phase_iter % cfg_.log_every == 0 || last) {
            row.iter = state.global_iter;
            std::tie(row.val_identity_sim, row.val_psnr) = validate(state);
            state.metrics.push_back(row);
            std::ostringstream msg;
            msg << std::setprecision(5) << name << " it " << state.phase_iter << "/" << spec.iterations
                << " l_sr " << row.l_sr << " l_si " << row.l_si << " l_fr " << row.l_fr << " val_sim "
                << row.val_identity_sim << " val_psnr " << row.val_psnr;
            log_debug(msg.str());
        }
        if (last) {
            state.completed_phases.push_back(name);
            state.phase_iter = 0;
            if (spec.phase == Phase::PretrainR || spec.phase == Phase::RetrainR) {
                state.pretrained_r = true;
            } else if (spec.phase == Phase::PretrainH) {
                state.pretrained_h = true;
            }
            log_info("phase " + name + " done at iteration " + std::to_string(state.global_iter));
        }
        if (after) {
            after(state);
        }
    }
}

namespace {

void save_store(const ParamStore& store, const std::filesystem::path& dir, const std::string& stem) {
    write_tensor_file(dir / (stem + ".params"), store.values());
    write_tensor_file(dir / (stem + ".velocity"), store.velocities());
}

void load_store(ParamStore& store, const std::filesystem::path& dir, const std::string& stem) {
    store.assign_values(read_tensor_file(dir / (stem + ".params")));
    store.assign_velocities(read_tensor_file(dir / (stem + ".velocity")));
}

constexpr const char* kManifestTag = "sicnn-checkpoint 1";

std::map<std::string, std::string> read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) {
        throw std::runtime_error("no checkpoint manifest at '" + (dir / "manifest.txt").string() + "'");
    }
    std::string line;
    std::getline(is, line);
    if (line != kManifestTag) {
        throw std::runtime_error("'" + (dir / "manifest.txt").string() + "' is not a checkpoint manifest");
    }
    std::map<std::string, std::string> out;
    while (std::getline(is, line)) {
        const auto space = line.find(' ');
        if (space == std::string::npos) {
            out[line] = "";
        } else {
            out[line.substr(0, space)] = line.substr(space + 1);
        }
    }
    return out;
}

const std::string& field(const std::map<std::string, std::string>& m, const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) {
        throw std::runtime_error("checkpoint manifest lacks '" + key + "'");
    }
    return it->second;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir, const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    save_store(state.hall.params(), dir, "hall");
    save_store(state.rec.params(), dir, "rec");
    save_store(state.head.params(), dir, "head");
    save_store(state.evaluator.params(), dir, "evaluator");
    save_store(state.evaluator_head.params(), dir, "evaluator_head");
    {
        std::ofstream os(dir / "rng.txt");
        os << state.rng.serialize() << '\n';
    }
    {
        std::ofstream os(dir / "metrics.csv");
        write_metrics_csv(state.metrics, os);
    }
    std::ofstream os(dir / "manifest.txt");
    os << kManifestTag << '\n';
    os << "config_hash " << meta.config_hash << '\n';
    os << "model_hash " << meta.model_hash << '\n';
    os << "approach " << meta.approach << '\n';
    os << "completed";
    for (const auto& p : state.completed_phases) {
        os << ' ' << p;
    }
    os << '\n';
    os << "phase_iter " << state.phase_iter << '\n';
    os << "global_iter " << state.global_iter << '\n';
    os << "pretrained_r " << state.pretrained_r << '\n';
    os << "pretrained_h " << state.pretrained_h << '\n';
    os << "head_iteration " << state.head.iteration() << '\n';
    os << "evaluator_head_iteration " << state.evaluator_head.iteration() << '\n';
    os << "cursor " << state.cursor << '\n';
    os << "order";
    for (std::size_t v : state.order) {
        os << ' ' << v;
    }
    os << '\n';
    os << "files hall rec head evaluator evaluator_head rng.txt metrics.csv\n";
    if (!os) {
        throw std::runtime_error("failed to write checkpoint manifest in '" + dir.string() + "'");
    }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
    const auto m = read_manifest(dir);
    return {field(m, "config_hash"), field(m, "model_hash"), field(m, "approach")};
}

TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg) {
    const auto m = read_manifest(dir);
    const auto head_values = read_tensor_file(dir / "head.params");
    if (head_values.size() != 1 || head_values[0].second.rank() != 2) {
        throw std::runtime_error("checkpoint head.params is malformed");
    }
    TrainState state = TrainState::create(cfg, head_values[0].second.shape()[0]);
    load_store(state.hall.params(), dir, "hall");
    load_store(state.rec.params(), dir, "rec");
    load_store(state.head.params(), dir, "head");
    load_store(state.evaluator.params(), dir, "evaluator");
    load_store(state.evaluator_head.params(), dir, "evaluator_head");
    {
        std::ifstream is(dir / "rng.txt");
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        state.rng.deserialize(text);
    }
    {
        std::ifstream is(dir / "metrics.csv");
        if (!is) {
            throw std::runtime_error("checkpoint lacks metrics.csv");
        }
        state.metrics = read_metrics_csv(is);
    }
    std::istringstream completed(field(m, "completed"));
    for (std::string p; completed >> p;) {
        state.completed_phases.push_back(p);
    }
    state.phase_iter = std::stoull(field(m, "phase_iter"));
    state.global_iter = std::stoull(field(m, "global_iter"));
    state.pretrained_r = field(m, "pretrained_r") == "1";
    state.pretrained_h = field(m, "pretrained_h") == "1";
    state.head.set_iteration(std::stoull(field(m, "head_iteration")));
    state.evaluator_head.set_iteration(std::stoull(field(m, "evaluator_head_iteration")));
    state.cursor = std::stoull(field(m, "cursor"));
    std::istringstream order(field(m, "order"));
    for (std::size_t v; order >> v;) {
        state.order.push_back(v);
    }
    return state;
}

}  // namespace sicnn
