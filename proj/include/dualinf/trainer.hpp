#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dualinf/datasets.hpp"
#include "dualinf/nets.hpp"
#include "dualinf/objectives.hpp"
#include "dualinf/rng.hpp"

namespace dualinf::train {

struct AdamConfig {
    float beta1 = 0.5f, beta2 = 0.999f, eps = 1e-8f;
};

// Bias-corrected Adam over one ParamStore; applies and clears gradients.
// Entries without requires_grad (running statistics) are skipped.
class Adam {
public:
    Adam() = default;
    Adam(const nets::ParamStore& store, AdamConfig cfg);
    void step(nets::ParamStore& store, float lr);
    i64 step_count() const { return t_; }

    // checkpoint access
    std::vector<std::vector<float>>& moments_m() { return m_; }
    std::vector<std::vector<float>>& moments_v() { return v_; }
    void set_step_count(i64 t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<float>> m_, v_;  // parallel to store.items
    i64 t_ = 0;
};

// lr0 * 0.5^(epoch / period)
float lr_schedule(float lr0, i64 epoch, i64 halving_period_epochs);

struct TrainConfig {
    std::uint64_t seed = 0;
    i64 epochs = 30;
    i64 batch_size = 64;
    float lr0 = 2e-4f;
    i64 lr_halving_period = 10;
    AdamConfig adam;
    nets::NetworkSpec net;
    obj::ObjConfig objectives;
    bool deterministic_embedding = false;  // reduces Eq.-(2)-style augmentation to Eq. (1)
    std::string dataset_dir;
    std::string out_dir = ".";
    i64 checkpoint_every_epochs = 0;  // 0 = only the final checkpoint
    i64 max_train_samples = 0;        // 0 = use the whole split
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

struct StepMetrics {
    float lr = 0;
    float t2i_d = 0, t2i_g = 0, dual_d = 0, dual_g = 0, cycle_d = 0, cycle_g = 0;
    float kl_pc = 0, kl_qz = 0, kl_qc = 0, content_ce = 0;
};

// Append-only CSV with a fixed header and deterministic number formatting.
class MetricsLog {
public:
    static const char* header();  // epoch,step,lr,t2i_d,...
    MetricsLog() = default;
    void open(const std::string& path, bool append);
    void row(i64 epoch, i64 step, const StepMetrics& m);
    bool is_open() const { return out_.is_open(); }

private:
    std::ofstream out_;
};

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    // One D update then one G update; returns the logged loss values.
    StepMetrics train_step(const data::PairBatch& batch, float lr);

    // Runs epochs [current, cfg.epochs); logs every step, checkpoints per
    // config, and invokes on_epoch_end after each epoch if provided.
    void train(const data::Dataset& split, MetricsLog* log,
               const std::function<void(Trainer&, i64)>& on_epoch_end = nullptr);

    void save(const std::string& path) const;
    static Trainer from_checkpoint(const std::string& path);

    TrainConfig& config() { return cfg_; }
    const TrainConfig& config() const { return cfg_; }
    nets::Models& models() { return models_; }
    Rng& rng() { return rng_; }
    i64 epoch() const { return epoch_; }
    i64 global_step() const { return step_; }

private:
    TrainConfig cfg_;
    Rng rng_;
    nets::Models models_;
    Adam d_opt_, g_opt_;
    i64 epoch_ = 0, step_ = 0;
};

}  // namespace dualinf::train
