#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zslfeat/dataset.hpp"
#include "zslfeat/networks.hpp"
#include "zslfeat/optim.hpp"
#include "zslfeat/rng.hpp"
#include "zslfeat/tensor.hpp"

namespace zsl {

enum class CycleTarget { TextFeature, Tfidf };
enum class Ablation { Full, CycOnly, AdvCyc, ClaCyc, SingleGan };
enum class LipschitzMode { GradientPenalty, WeightClip };

struct TrainConfig {
    // loss coefficients
    double cyc_coeff = 10.0;          // lambda, cycle loss
    double cls_inverse_coeff = 12.0;  // mu, classification in the inverse pair
    double gp_coeff = 10.0;
    double pivot_coeff = 1.0;
    // schedule
    std::size_t critic_steps = 5;
    std::size_t batch_size = 1000;
    std::size_t iterations = 3000;
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    std::uint64_t seed = 0;
    // variants
    CycleTarget cycle_target = CycleTarget::TextFeature;
    Ablation ablation = Ablation::Full;
    LipschitzMode lipschitz_mode = LipschitzMode::GradientPenalty;
    double clip_value = 0.01;
    bool half_on_fake_only = false;  // apply the 1/2 only to the fake CE term
    bool shared_cycle_noise = false;
    // architecture
    std::size_t d_embed = 0;  // 0 -> min(1000, d_s)
    std::size_t d_noise = 100;
    std::size_t d_hidden = 4096;
    std::size_t d_hidden_disc = 1024;
    bool attribute_mode = false;
    double leaky_slope = 0.2;

    bool inverse_adversarial() const;
    bool inverse_classification() const;
    bool inverse_enabled() const;
    bool cycle_enabled() const;
    void validate() const;
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);
std::uint64_t config_hash(const TrainConfig& cfg, const NetSpec& spec);

// Per-dimension min-max scaling of visual features onto [-1, 1].
struct FeatureScaler {
    std::vector<double> lo, hi;

    static FeatureScaler fit(const Dataset& ds, const std::vector<std::size_t>& sample_indices);
    std::vector<double> apply(const std::vector<double>& rows) const;
    std::vector<double> invert(const std::vector<double>& rows) const;
};

// Sample-level partition: training pool plus held-out test samples.
struct SamplePartition {
    std::vector<std::size_t> train;        // seen-class samples used for training
    std::vector<std::size_t> seen_test;    // held-out seen-class samples
    std::vector<std::size_t> unseen_test;  // all unseen-class samples
};

SamplePartition make_sample_partition(const Dataset& ds, const Split& split,
                                      double holdout_fraction, std::uint64_t seed);

struct Batch {
    Tensor alpha;                     // b x d_s, per-sample class semantics
    Tensor x;                         // b x d_v, scaled real visual features
    std::vector<std::size_t> labels;  // class indices
};

// ---- loss terms; each flows gradient only into its first parameter set ----

Tensor loss_d1(const NetSpec& spec, const DiscriminatorParams& w, const GeneratorParams& theta,
               const Batch& batch, const TrainConfig& cfg, Rng& rng);

struct G1Loss {
    Tensor total;
    double pivot = 0.0;  // unweighted pivot term, for the loss history
};
G1Loss loss_g1(const NetSpec& spec, const GeneratorParams& theta, const DiscriminatorParams& w,
               const Batch& batch, const TrainConfig& cfg, const ClassStats& stats, Rng& rng);

Tensor visual_pivot(const Tensor& x_hat, const std::vector<std::size_t>& labels,
                    const ClassStats& stats);

Tensor loss_d2(const NetSpec& spec, const DiscriminatorParams& zeta, const GeneratorParams& delta,
               const GeneratorParams& theta, const Batch& batch, const TrainConfig& cfg, Rng& rng);

Tensor loss_g2(const NetSpec& spec, const GeneratorParams& delta, const DiscriminatorParams& zeta,
               const GeneratorParams& theta, const Batch& batch, const TrainConfig& cfg, Rng& rng);

Tensor cycle_loss(const NetSpec& spec, const GeneratorParams& theta, const GeneratorParams& delta,
                  const Batch& batch, const TrainConfig& cfg, Rng& rng);

struct LossRow {
    std::size_t iteration = 0;
    double d1 = 0.0, g1 = 0.0, d2 = 0.0, g2 = 0.0, cyc = 0.0, pivot = 0.0;
};

struct ScheduleCounters {
    std::size_t d1_updates = 0, d2_updates = 0, g1_updates = 0, g2_updates = 0, cyc_updates = 0;
};

class Trainer {
public:
    Trainer(const Dataset& ds, const Split& split, TrainConfig cfg,
            std::vector<std::size_t> train_indices = {});

    void train_step();
    void run();  // cfg.iterations steps total (continues from the current count)

    const Networks& networks() const { return nets_; }
    const NetSpec& spec() const { return nets_.spec; }
    const FeatureScaler& scaler() const { return scaler_; }
    const TrainConfig& config() const { return cfg_; }
    const ClassStats& stats() const { return stats_; }
    std::size_t iteration() const { return iteration_; }
    const std::vector<LossRow>& history() const { return history_; }
    const ScheduleCounters& counters() const { return counters_; }
    ScheduleCounters last_step_counters() const { return last_counters_; }

    void write_loss_csv(std::ostream& out) const;
    void write_loss_csv(const std::string& path) const;

    void save_checkpoint(const std::string& dir) const;
    static Trainer load_checkpoint(const std::string& dir, const Dataset& ds, const Split& split);

    Batch sample_batch();  // exposed for the single-GAN reference comparison

private:
    Trainer(const Dataset& ds, const Split& split, TrainConfig cfg,
            std::vector<std::size_t> train_indices, bool init);

    void update_d1();
    void update_d2();
    void update_g1();
    void update_g2();
    void update_cycle();
    void clip_discriminators();
    void check_finite_params();

    TrainConfig cfg_;
    Networks nets_;
    FeatureScaler scaler_;
    ClassStats stats_;  // scaled-space class means of seen classes
    std::vector<std::size_t> train_indices_;
    std::vector<double> scaled_visual_;  // per training sample, d_v each
    const Dataset* ds_;
    Rng rng_;
    AdamState opt_g1_, opt_d1_, opt_g2_, opt_d2_;
    std::size_t iteration_ = 0;
    std::vector<LossRow> history_;
    ScheduleCounters counters_;
    ScheduleCounters last_counters_;

    friend struct CheckpointAccess;
};

// Generator-side state needed by evaluation, loadable without the dataset.
struct CheckpointView {
    TrainConfig cfg;
    NetSpec spec;
    Networks nets;
    FeatureScaler scaler;
    std::size_t iteration = 0;
    std::uint64_t hash = 0;
};

CheckpointView load_checkpoint_view(const std::string& dir);

}  // namespace zsl
