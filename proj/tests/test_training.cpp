#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "sicnn/training.hpp"

using namespace sicnn;

namespace {

std::vector<std::size_t> dense_labels(std::span<const ImagePair> pairs, const std::map<std::size_t, std::size_t>& idx) {
    std::vector<std::size_t> out;
    for (const auto& p : pairs) out.push_back(idx.at(p.identity));
    return out;
}

// Spearman rank correlation; ties are not expected for real-valued losses.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

std::vector<double> moving_average(const std::vector<double>& v, std::size_t w) {
    std::vector<double> out;
    for (std::size_t i = 0; i + w <= v.size(); ++i) {
        out.push_back(std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(i),
                                      v.begin() + static_cast<std::ptrdiff_t>(i + w), 0.0) /
                      static_cast<double>(w));
    }
    return out;
}

Tensor stack_batch(const Tensor& a, const Tensor& b) {
    Shape s = a.shape();
    s[0] += b.dim(0);
    std::vector<double> v(a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    return Tensor(s, v);
}

}  // namespace

TEST_CASE("step learning rate schedule") {
    const LrSchedule s{0.1, {20000, 30000}, 35000};
    CHECK(s.at(0) == 0.1);
    CHECK(s.at(19999) == 0.1);
    CHECK(s.at(20000) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(s.at(29999) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(s.at(30000) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(s.at(34999) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK_NOTHROW(s.validate("rec"));
    CHECK_THROWS_AS((LrSchedule{0.1, {300, 200}, 400}.validate("x")), std::invalid_argument);
    CHECK_THROWS_AS((LrSchedule{0.1, {500}, 400}.validate("x")), std::invalid_argument);
    CHECK_THROWS_AS((LrSchedule{0.0, {}, 400}.validate("x")), std::invalid_argument);
}

TEST_CASE("paper preset budgets") {
    const TrainConfig p = TrainConfig::paper();
    CHECK(p.rec_schedule.final_iter == 35000);
    CHECK(p.hall_schedule.final_iter == 80000);
    CHECK(p.di_schedule.final_iter == 9000);
    CHECK(p.hall_schedule.at(30000) == doctest::Approx(0.002));
    CHECK(p.di_schedule.at(6000) == doctest::Approx(0.001));
    CHECK(p.batch_n * 2 == p.rec_batch);
    CHECK(p.alpha == 8.0);
    CHECK(p.margin == 4);
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("config validation") {
    TrainConfig c = testing::tiny_config();
    CHECK_NOTHROW(c.validate());
    c.rec_batch = 5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("2 * batch_n"), std::invalid_argument);
    c = testing::tiny_config();
    c.hall.upscale_factor = 2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = testing::tiny_config();
    c.di_rec_schedule.final_iter = 7;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_approach("di") == Approach::DomainIntegrated);
    CHECK(approach_name(Approach::BaselineIII) == "baseline3");
    CHECK_THROWS_AS(parse_approach("baseline4"), std::invalid_argument);
}

TEST_CASE("phase plans") {
    TrainConfig c = testing::tiny_config();
    auto names = [&] {
        std::vector<std::string> out;
        for (const auto& p : phase_plan(c)) out.push_back(phase_name(p.phase));
        return out;
    };
    c.approach = Approach::DomainIntegrated;
    CHECK(names() == std::vector<std::string>{"evaluator", "pretrain_r", "pretrain_h", "di"});
    c.approach = Approach::BaselineII;
    CHECK(names() == std::vector<std::string>{"evaluator", "pretrain_r", "joint_h", "joint_h_ft"});
    c.approach = Approach::BaselineIII;
    CHECK(names() == std::vector<std::string>{"evaluator", "pretrain_h", "retrain_r", "joint_h_ft"});
    c.approach = Approach::BaselineI;
    CHECK(names() == std::vector<std::string>{"evaluator", "joint_all", "joint_all_ft"});
}

TEST_CASE("metrics csv round trip") {
    std::vector<MetricRow> rows{{3, "di", 1.25, 0.5, 3.0, 1e-5, 1e-3, 0.8, 21.5}, {6, "di", 1, 0, 0, 0, 0, 0, 0}};
    std::stringstream ss;
    write_metrics_csv(rows, ss);
    CHECK(ss.str().rfind("iter,phase,l_sr,l_si,l_fr,lr_h,lr_r,val_identity_sim,val_psnr\n", 0) == 0);
    CHECK(read_metrics_csv(ss) == rows);
    std::stringstream bad("nope\n");
    CHECK_THROWS(read_metrics_csv(bad));
}

TEST_CASE("domain-integrated step refuses untrained nets") {
    const TrainConfig cfg = testing::tiny_config();
    const DatasetSplit d = testing::tiny_dataset();
    TrainState s = TrainState::create(cfg, 5);
    const std::vector<std::size_t> labels{0, 1, 2};
    CHECK_THROWS_WITH_AS(domain_integrated_step(s, cfg, std::span(d.train).first(3), labels, 1e-5, 1e-3),
                         doctest::Contains("pretrain_r"), std::logic_error);
}

TEST_CASE("sub-steps touch only their own network") {
    const TrainConfig cfg = testing::tiny_config();
    const DatasetSplit d = testing::tiny_dataset();
    const auto idx = identity_index(d.train);
    TrainState s = TrainState::create(cfg, idx.size());
    s.pretrained_r = s.pretrained_h = true;
    for (int step = 0; step < 5; ++step) {
        const auto batch = std::span(d.train).subspan(static_cast<std::size_t>(step) * 3, 3);
        const auto labels = dense_labels(batch, idx);
        auto h0 = s.hall.params().values();
        auto r0 = s.rec.params().values();
        auto hd0 = s.head.params().values();
        domain_integrated_step(s, cfg, batch, labels, 1e-5, 1e-3, [&](const std::string& sub, const TrainState& st) {
            if (sub == "recognition") {
                CHECK(st.hall.params().values() == h0);
                CHECK(st.rec.params().values() != r0);
                r0 = st.rec.params().values();
                hd0 = st.head.params().values();
            } else {
                CHECK(sub == "hallucination");
                CHECK(st.rec.params().values() == r0);
                CHECK(st.head.params().values() == hd0);
                CHECK(st.hall.params().values() != h0);
            }
        });
    }
}

TEST_CASE("alpha zero equals a pure pixel-loss step") {
    const TrainConfig cfg = testing::tiny_config();
    const DatasetSplit d = testing::tiny_dataset();
    const auto batch = std::span(d.train).first(3);
    TrainState a = TrainState::create(cfg, 5);
    TrainState b = a.clone();

    hallucination_step(a, cfg, batch, 0.0, 1e-4);
    std::vector<Image> lr, hr;
    for (const auto& p : batch) {
        lr.push_back(p.lr);
        hr.push_back(p.hr);
    }
    const Var sr = b.hall.forward(constant(to_batch(lr)));
    backward(super_resolution_loss(sr, constant(to_batch(hr))).node);
    sgd_step(b.hall.params(), 1e-4, cfg.momentum, cfg.weight_decay);
    CHECK(a.hall.params().values() == b.hall.params().values());
    CHECK(a.hall.params().velocities() == b.hall.params().velocities());
}

TEST_CASE("one alternating step replays as loss and sgd primitives") {
    TrainConfig cfg = testing::tiny_config();
    cfg.batch_n = 2;
    cfg.rec_batch = 4;
    const DatasetSplit d = testing::tiny_dataset();
    const auto batch = std::span(d.train).first(2);
    const std::vector<std::size_t> labels{1, 3};
    TrainState a = TrainState::create(cfg, 5);
    a.pretrained_r = a.pretrained_h = true;
    TrainState b = a.clone();
    const double lr_h = 1e-4, lr_r = 1e-2;

    const StepLosses got = domain_integrated_step(a, cfg, batch, labels, lr_h, lr_r);

    std::vector<Image> lr, hr;
    for (const auto& p : batch) {
        lr.push_back(p.lr);
        hr.push_back(p.hr);
    }
    const Tensor hr_t = to_batch(hr);
    const Var sr = b.hall.forward(constant(to_batch(lr)));
    const Var feats = b.rec.forward(constant(stack_batch(sr->value, hr_t)));
    const LossValue fr = a_softmax_loss(b.head, feats, std::vector<std::size_t>{1, 3, 1, 3});
    backward(fr.node);
    sgd_step(b.rec.params(), lr_r, cfg.momentum, cfg.weight_decay);
    sgd_step(b.head.params(), lr_r, cfg.momentum, cfg.weight_decay);
    b.head.advance();
    {
        FreezeGuard fr_rec(b.rec.params());
        FreezeGuard fr_head(b.head.params());
        const LossValue l_sr = super_resolution_loss(sr, constant(hr_t));
        const LossValue l_si = super_identity_loss(b.rec, sr, constant(hr_t));
        backward(joint_objective_baseline2(l_sr, l_si, cfg.alpha).node);
        sgd_step(b.hall.params(), lr_h, cfg.momentum, cfg.weight_decay);
        CHECK(got.l_sr == l_sr.value);
        CHECK(got.l_si == l_si.value);
    }
    CHECK(got.l_fr == fr.value);
    CHECK(a.hall.params().values() == b.hall.params().values());
    CHECK(a.hall.params().velocities() == b.hall.params().velocities());
    CHECK(a.rec.params().values() == b.rec.params().values());
    CHECK(a.rec.params().velocities() == b.rec.params().velocities());
    CHECK(a.head.params().values() == b.head.params().values());
}

TEST_CASE("baselines keep CNN_R fixed through the joint phases") {
    const DatasetSplit d = testing::tiny_dataset();
    for (Approach ap : {Approach::BaselineII, Approach::BaselineIII}) {
        TrainConfig cfg = testing::tiny_config();
        cfg.approach = ap;
        const Trainer t(cfg, d.train, d.test);
        TrainState s = t.initial_state();
        const std::string trained = ap == Approach::BaselineII ? "pretrain_r" : "retrain_r";
        std::optional<decltype(s.rec.params().values())> rec0, head0;
        int checked = 0;
        t.run(s, {}, [&](const TrainState& st) {
            const bool after_r =
                std::find(st.completed_phases.begin(), st.completed_phases.end(), trained) != st.completed_phases.end();
            if (!after_r) return;
            if (!rec0) {
                rec0 = st.rec.params().values();
                head0 = st.head.params().values();
                return;
            }
            CHECK(st.rec.params().values() == *rec0);
            CHECK(st.head.params().values() == *head0);
            ++checked;
        });
        const std::uint64_t joint = ap == Approach::BaselineII
                                        ? cfg.hall_schedule.final_iter + cfg.di_schedule.final_iter
                                        : cfg.di_schedule.final_iter;
        CHECK(checked == static_cast<int>(joint));
    }
}

TEST_CASE("logged rows follow the schedules") {
    const DatasetSplit d = testing::tiny_dataset();
    for (Approach ap : {Approach::BaselineI, Approach::BaselineII, Approach::BaselineIII, Approach::DomainIntegrated}) {
        TrainConfig cfg = testing::tiny_config();
        cfg.approach = ap;
        cfg.log_every = 1;
        const Trainer t(cfg, d.train, d.test);
        TrainState s = t.initial_state();
        t.run(s);
        std::map<std::string, std::uint64_t> start;
        std::uint64_t at = 0;
        for (const auto& p : t.plan()) {
            start[phase_name(p.phase)] = at;
            at += p.iterations;
        }
        REQUIRE(s.metrics.size() == at);
        std::uint64_t prev = 0;
        for (const auto& m : s.metrics) {
            CHECK(m.iter > prev);
            prev = m.iter;
            for (double v : {m.l_sr, m.l_si, m.l_fr, m.lr_h, m.lr_r, m.val_identity_sim, m.val_psnr}) {
                CHECK(std::isfinite(v));
            }
            const std::uint64_t i = m.iter - start.at(m.phase) - 1;
            double want_h = 0.0, want_r = 0.0;
            if (m.phase == "evaluator" || m.phase == "pretrain_r" || m.phase == "retrain_r") {
                want_r = cfg.rec_schedule.at(i);
            } else if (m.phase == "pretrain_h" || m.phase == "joint_h") {
                want_h = cfg.hall_schedule.at(i);
            } else if (m.phase == "joint_h_ft") {
                want_h = cfg.di_schedule.at(i);
            } else if (m.phase == "joint_all") {
                want_h = cfg.hall_schedule.at(i);
                want_r = cfg.rec_schedule.at(i);
            } else {
                want_h = cfg.di_schedule.at(i);
                want_r = cfg.di_rec_schedule.at(i);
            }
            CHECK(m.lr_h == want_h);
            CHECK(m.lr_r == want_r);
        }
    }
}

TEST_CASE("pretraining losses trend down") {
    const DatasetSplit d = testing::tiny_dataset();
    TrainConfig cfg = testing::tiny_config();
    cfg.rec_schedule = {0.01, {}, 60};
    cfg.hall_schedule = {1e-4, {}, 60};
    cfg.log_every = 1;
    const Trainer t(cfg, d.train, d.test);
    TrainState s = t.initial_state();
    t.run(s, 180);  // evaluator, pretrain_r, pretrain_h
    for (const std::string phase : {"pretrain_r", "pretrain_h"}) {
        std::vector<double> it, loss;
        for (const auto& m : s.metrics) {
            if (m.phase != phase) continue;
            it.push_back(static_cast<double>(m.iter));
            loss.push_back(phase == "pretrain_r" ? m.l_fr : m.l_sr);
        }
        REQUIRE(it.size() == 60);
        const auto smooth = moving_average(loss, 10);
        const std::vector<double> x(it.begin(), it.begin() + static_cast<std::ptrdiff_t>(smooth.size()));
        CAPTURE(phase);
        CHECK(spearman(x, smooth) < 0.0);
    }
}

TEST_CASE("trainer runs every approach and logs metrics") {
    const DatasetSplit d = testing::tiny_dataset();
    for (Approach ap : {Approach::BaselineI, Approach::BaselineII, Approach::BaselineIII, Approach::DomainIntegrated}) {
        TrainConfig cfg = testing::tiny_config();
        cfg.approach = ap;
        const Trainer t(cfg, d.train, d.test);
        TrainState s = t.initial_state();
        t.run(s);
        CHECK(t.finished(s));
        CHECK(s.completed_phases.size() == t.plan().size());
        REQUIRE_FALSE(s.metrics.empty());
        for (const auto& m : s.metrics) {
            CHECK(std::isfinite(m.l_sr));
            CHECK(std::isfinite(m.val_psnr));
        }
        CHECK(s.metrics.back().phase == phase_name(t.plan().back().phase));
    }
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
    testing::TempDir tmp("ckpt");
    const TrainConfig cfg = testing::tiny_config();
    const DatasetSplit d = testing::tiny_dataset();
    const Trainer t(cfg, d.train, d.test);

    TrainState full = t.initial_state();
    t.run(full);

    TrainState part = t.initial_state();
    t.run(part, 19);  // inside pretrain_h
    save_checkpoint(part, tmp.path, {"cfg", "model", "di"});
    const CheckpointMeta meta = read_checkpoint_meta(tmp.path);
    CHECK(meta.config_hash == "cfg");
    CHECK(meta.approach == "di");
    TrainState resumed = load_checkpoint(tmp.path, cfg);
    t.check_compatible(resumed);
    t.run(resumed);

    CHECK(resumed.hall.params().values() == full.hall.params().values());
    CHECK(resumed.rec.params().values() == full.rec.params().values());
    CHECK(resumed.head.params().values() == full.head.params().values());
    CHECK(resumed.metrics == full.metrics);
    CHECK(resumed.rng == full.rng);
    CHECK_THROWS(read_checkpoint_meta(tmp.path / "missing"));
}

TEST_CASE("state compatibility across approaches") {
    const DatasetSplit d = testing::tiny_dataset();
    TrainConfig di = testing::tiny_config();
    const Trainer t_di(di, d.train, d.test);
    TrainState s = t_di.initial_state();
    t_di.run(s, di.rec_schedule.final_iter * 2);  // evaluator + pretrain_r
    TrainConfig b2 = di;
    b2.approach = Approach::BaselineII;
    const Trainer t_b2(b2, d.train, d.test);
    CHECK_NOTHROW(t_b2.check_compatible(s));
    TrainConfig b3 = di;
    b3.approach = Approach::BaselineIII;
    CHECK_THROWS_AS(Trainer(b3, d.train, d.test).check_compatible(s), std::invalid_argument);
}
