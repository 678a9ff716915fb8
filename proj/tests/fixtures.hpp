#pragma once

#include "sicnn/data.hpp"
#include "sicnn/training.hpp"

namespace testing {

// Small nets and budgets so a full phase plan runs in well under a second.
inline sicnn::TrainConfig tiny_config() {
    sicnn::TrainConfig cfg = sicnn::TrainConfig::desk();
    cfg.hall.growth_rate = 3;
    cfg.hall.mapping_channels = 4;
    cfg.rec.widths = {4, 4, 8, 8};
    cfg.rec.feature_dim = 8;
    cfg.batch_n = 3;
    cfg.rec_batch = 6;
    cfg.pretrain_rec_batch = 6;
    cfg.rec_schedule = {0.01, {6}, 8};
    cfg.hall_schedule = {1e-4, {}, 6};
    cfg.di_schedule = {1e-5, {4}, 6};
    cfg.di_rec_schedule = {1e-3, {4}, 6};
    cfg.log_every = 3;
    cfg.val_samples = 4;
    return cfg;
}

inline sicnn::DatasetSplit tiny_dataset(std::uint64_t seed = 3) {
    return sicnn::generate_dataset(6, 4, 32, 32, 4, seed);
}

}  // namespace testing
