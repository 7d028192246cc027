#include "zslfeat/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "binio.hpp"

namespace zsl {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----

bool TrainConfig::inverse_adversarial() const {
    return ablation == Ablation::Full || ablation == Ablation::AdvCyc;
}

bool TrainConfig::inverse_classification() const {
    return ablation == Ablation::Full || ablation == Ablation::ClaCyc;
}

bool TrainConfig::inverse_enabled() const {
    return inverse_adversarial() || inverse_classification();
}

bool TrainConfig::cycle_enabled() const {
    return ablation != Ablation::SingleGan && cyc_coeff > 0.0;
}

void TrainConfig::validate() const {
    if (cyc_coeff < 0 || cls_inverse_coeff < 0 || gp_coeff < 0 || pivot_coeff < 0)
        throw std::invalid_argument("TrainConfig: coefficients must be >= 0");
    if (critic_steps < 1) throw std::invalid_argument("TrainConfig: critic_steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

namespace {

std::string to_string(CycleTarget t) {
    return t == CycleTarget::TextFeature ? "text_feature" : "tfidf";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::CycOnly: return "cyc_only";
        case Ablation::AdvCyc: return "adv_cyc";
        case Ablation::ClaCyc: return "cla_cyc";
        case Ablation::SingleGan: return "single_gan";
    }
    return "full";
}

std::string to_string(LipschitzMode m) {
    return m == LipschitzMode::GradientPenalty ? "gradient_penalty" : "weight_clip";
}

CycleTarget cycle_target_from(const std::string& s) {
    if (s == "text_feature") return CycleTarget::TextFeature;
    if (s == "tfidf") return CycleTarget::Tfidf;
    throw std::invalid_argument("unknown cycle_target: " + s);
}

Ablation ablation_from(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "cyc_only") return Ablation::CycOnly;
    if (s == "adv_cyc") return Ablation::AdvCyc;
    if (s == "cla_cyc") return Ablation::ClaCyc;
    if (s == "single_gan") return Ablation::SingleGan;
    throw std::invalid_argument("unknown ablation: " + s);
}

LipschitzMode lipschitz_from(const std::string& s) {
    if (s == "gradient_penalty") return LipschitzMode::GradientPenalty;
    if (s == "weight_clip") return LipschitzMode::WeightClip;
    throw std::invalid_argument("unknown lipschitz_mode: " + s);
}

json config_to_json(const TrainConfig& c) {
    json j;
    j["cyc_coeff"] = c.cyc_coeff;
    j["cls_inverse_coeff"] = c.cls_inverse_coeff;
    j["gp_coeff"] = c.gp_coeff;
    j["pivot_coeff"] = c.pivot_coeff;
    j["critic_steps"] = c.critic_steps;
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["seed"] = c.seed;
    j["cycle_target"] = to_string(c.cycle_target);
    j["ablation"] = to_string(c.ablation);
    j["lipschitz_mode"] = to_string(c.lipschitz_mode);
    j["clip_value"] = c.clip_value;
    j["half_on_fake_only"] = c.half_on_fake_only;
    j["shared_cycle_noise"] = c.shared_cycle_noise;
    j["d_embed"] = c.d_embed;
    j["d_noise"] = c.d_noise;
    j["d_hidden"] = c.d_hidden;
    j["d_hidden_disc"] = c.d_hidden_disc;
    j["attribute_mode"] = c.attribute_mode;
    j["leaky_slope"] = c.leaky_slope;
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.cyc_coeff = j.value("cyc_coeff", c.cyc_coeff);
    c.cls_inverse_coeff = j.value("cls_inverse_coeff", c.cls_inverse_coeff);
    c.gp_coeff = j.value("gp_coeff", c.gp_coeff);
    c.pivot_coeff = j.value("pivot_coeff", c.pivot_coeff);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.seed = j.value("seed", c.seed);
    if (j.contains("cycle_target")) c.cycle_target = cycle_target_from(j.at("cycle_target"));
    if (j.contains("ablation")) c.ablation = ablation_from(j.at("ablation"));
    if (j.contains("lipschitz_mode")) c.lipschitz_mode = lipschitz_from(j.at("lipschitz_mode"));
    c.clip_value = j.value("clip_value", c.clip_value);
    c.half_on_fake_only = j.value("half_on_fake_only", c.half_on_fake_only);
    c.shared_cycle_noise = j.value("shared_cycle_noise", c.shared_cycle_noise);
    c.d_embed = j.value("d_embed", c.d_embed);
    c.d_noise = j.value("d_noise", c.d_noise);
    c.d_hidden = j.value("d_hidden", c.d_hidden);
    c.d_hidden_disc = j.value("d_hidden_disc", c.d_hidden_disc);
    c.attribute_mode = j.value("attribute_mode", c.attribute_mode);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.validate();
    return c;
}

json spec_to_json(const NetSpec& s) {
    json j;
    j["d_s"] = s.d_s;
    j["d_embed"] = s.d_embed;
    j["d_noise"] = s.d_noise;
    j["d_hidden"] = s.d_hidden;
    j["d_v"] = s.d_v;
    j["num_classes"] = s.num_classes;
    j["d_hidden_disc"] = s.d_hidden_disc;
    j["attribute_mode"] = s.attribute_mode;
    j["leaky_slope"] = s.leaky_slope;
    j["d_cycle_out"] = s.d_cycle_out;
    return j;
}

NetSpec spec_from_json(const json& j) {
    NetSpec s;
    s.d_s = j.at("d_s").get<std::size_t>();
    s.d_embed = j.at("d_embed").get<std::size_t>();
    s.d_noise = j.at("d_noise").get<std::size_t>();
    s.d_hidden = j.at("d_hidden").get<std::size_t>();
    s.d_v = j.at("d_v").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.d_hidden_disc = j.at("d_hidden_disc").get<std::size_t>();
    s.attribute_mode = j.at("attribute_mode").get<bool>();
    s.leaky_slope = j.at("leaky_slope").get<double>();
    s.d_cycle_out = j.at("d_cycle_out").get<std::size_t>();
    return s;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    return config_from_json(json::parse(in));
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path);
    out << config_to_json(cfg).dump(2) << "\n";
}

std::uint64_t config_hash(const TrainConfig& cfg, const NetSpec& spec) {
    const std::string text = config_to_json(cfg).dump() + spec_to_json(spec).dump();
    std::uint64_t h = 14695981039346656037ull;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---- scaler ----

FeatureScaler FeatureScaler::fit(const Dataset& ds, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("FeatureScaler::fit: no samples");
    FeatureScaler s;
    s.lo.assign(ds.d_v, std::numeric_limits<double>::max());
    s.hi.assign(ds.d_v, std::numeric_limits<double>::lowest());
    for (auto i : indices) {
        const double* row = ds.visual_row(i);
        for (std::size_t j = 0; j < ds.d_v; ++j) {
            s.lo[j] = std::min(s.lo[j], row[j]);
            s.hi[j] = std::max(s.hi[j], row[j]);
        }
    }
    return s;
}

std::vector<double> FeatureScaler::apply(const std::vector<double>& rows) const {
    const std::size_t d = lo.size();
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t j = i % d;
        const double span = hi[j] - lo[j];
        out[i] = span > 0.0 ? 2.0 * (rows[i] - lo[j]) / span - 1.0 : 0.0;
    }
    return out;
}

std::vector<double> FeatureScaler::invert(const std::vector<double>& rows) const {
    const std::size_t d = lo.size();
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t j = i % d;
        out[i] = lo[j] + (rows[i] + 1.0) * 0.5 * (hi[j] - lo[j]);
    }
    return out;
}

SamplePartition make_sample_partition(const Dataset& ds, const Split& split,
                                      double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("make_sample_partition: holdout_fraction must lie in [0,1)");
    Rng rng(seed);
    SamplePartition part;
    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.num_samples; ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& [c, idx] : by_class) {
        if (!split.is_seen(c)) {
            part.unseen_test.insert(part.unseen_test.end(), idx.begin(), idx.end());
            continue;
        }
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
        auto held = static_cast<std::size_t>(
            std::llround(holdout_fraction * static_cast<double>(idx.size())));
        held = std::min(held, idx.size() - 1);  // keep at least one training sample
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < held ? part.seen_test : part.train).push_back(idx[i]);
        }
    }
    std::sort(part.train.begin(), part.train.end());
    std::sort(part.seen_test.begin(), part.seen_test.end());
    std::sort(part.unseen_test.begin(), part.unseen_test.end());
    return part;
}

// ---- loss terms ----

namespace {

Tensor classification_pair(const Tensor& ce_fake, const Tensor& ce_real, bool half_on_fake_only) {
    if (half_on_fake_only) return add(mul_scalar(ce_fake, 0.5), ce_real);
    return mul_scalar(add(ce_fake, ce_real), 0.5);
}

Tensor gradient_penalty(const DiscriminatorParams& disc, const Tensor& real, const Tensor& fake,
                        double coeff, Rng& rng) {
    Tensor x_tilde = interpolate(real, fake, rng);
    x_tilde.set_requires_grad(true);
    Tensor critic = d1_forward(disc, x_tilde).critic;
    backward(sum_all(critic), /*create_graph=*/true);
    Tensor norms = grad_norm(x_tilde.grad());
    Tensor dev = add_scalar(norms, -1.0);
    return mul_scalar(mean_all(mul(dev, dev)), coeff);
}

Tensor generate_fake_visual(const NetSpec& spec, const GeneratorParams& theta_detached,
                            const Tensor& alpha, Rng& rng, Tensor* s_out = nullptr) {
    Tensor z = gaussian_sample(rng, {alpha.dim(0), spec.d_noise});
    NoGradGuard ng;
    G1Output out = g1_forward(spec, theta_detached, alpha, z);
    if (s_out) *s_out = out.s;
    return out.x_hat;
}

}  // namespace

Tensor loss_d1(const NetSpec& spec, const DiscriminatorParams& w, const GeneratorParams& theta,
               const Batch& batch, const TrainConfig& cfg, Rng& rng) {
    GeneratorParams th = detached(theta);
    Tensor x_hat = generate_fake_visual(spec, th, batch.alpha, rng);

    DiscOutput fake = d1_forward(w, x_hat);
    DiscOutput real = d1_forward(w, batch.x);
    Tensor cls = classification_pair(softmax_cross_entropy(fake.logits, batch.labels),
                                     softmax_cross_entropy(real.logits, batch.labels),
                                     cfg.half_on_fake_only);
    Tensor total = add(cls, sub(mean_all(fake.critic), mean_all(real.critic)));
    if (cfg.lipschitz_mode == LipschitzMode::GradientPenalty && cfg.gp_coeff > 0.0) {
        total = add(total, gradient_penalty(w, batch.x, x_hat, cfg.gp_coeff, rng));
    }
    return total;
}

Tensor visual_pivot(const Tensor& x_hat, const std::vector<std::size_t>& labels,
                    const ClassStats& stats) {
    const std::size_t b = x_hat.dim(0), d = x_hat.dim(1);
    if (labels.size() != b) throw std::invalid_argument("visual_pivot: label count mismatch");

    std::vector<std::size_t> classes;  // in order of first appearance
    std::map<std::size_t, std::size_t> row_of;
    std::vector<std::size_t> counts;
    for (auto l : labels) {
        if (!row_of.count(l)) {
            row_of[l] = classes.size();
            classes.push_back(l);
            counts.push_back(0);
        }
        counts[row_of[l]] += 1;
    }
    const std::size_t k = classes.size();

    std::vector<double> sel(k * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t r = row_of[labels[i]];
        sel[r * b + i] = 1.0 / static_cast<double>(counts[r]);
    }
    Tensor selector = Tensor::from_data({k, b}, std::move(sel));
    Tensor batch_means = matmul(selector, x_hat);

    std::vector<double> target(k * d);
    for (std::size_t r = 0; r < k; ++r) {
        const double* m = stats.mean_of(static_cast<std::uint32_t>(classes[r]));
        std::copy(m, m + d, &target[r * d]);
    }
    Tensor diff = sub(batch_means, Tensor::from_data({k, d}, std::move(target)));
    return mul_scalar(sum_all(mul(diff, diff)), 1.0 / static_cast<double>(k));
}

G1Loss loss_g1(const NetSpec& spec, const GeneratorParams& theta, const DiscriminatorParams& w,
               const Batch& batch, const TrainConfig& cfg, const ClassStats& stats, Rng& rng) {
    Tensor z = gaussian_sample(rng, {batch.alpha.dim(0), spec.d_noise});
    G1Output gen = g1_forward(spec, theta, batch.alpha, z);
    DiscOutput out = d1_forward(detached(w), gen.x_hat);

    Tensor total = add(neg(mean_all(out.critic)), softmax_cross_entropy(out.logits, batch.labels));
    G1Loss result;
    Tensor pivot = visual_pivot(gen.x_hat, batch.labels, stats);
    result.pivot = pivot.item();
    if (cfg.pivot_coeff > 0.0) total = add(total, mul_scalar(pivot, cfg.pivot_coeff));
    result.total = total;
    return result;
}

Tensor loss_d2(const NetSpec& spec, const DiscriminatorParams& zeta, const GeneratorParams& delta,
               const GeneratorParams& theta, const Batch& batch, const TrainConfig& cfg, Rng& rng) {
    GeneratorParams th = detached(theta);
    GeneratorParams dl = detached(delta);
    Tensor s;
    Tensor x_hat = generate_fake_visual(spec, th, batch.alpha, rng, &s);
    Tensor alpha_hat;
    {
        Tensor z2 = gaussian_sample(rng, {batch.alpha.dim(0), spec.d_noise});
        NoGradGuard ng;
        alpha_hat = g2_forward(spec, dl, x_hat, z2);
    }
    Tensor real_text = cfg.cycle_target == CycleTarget::TextFeature ? s : batch.alpha;

    DiscOutput fake = d2_forward(zeta, alpha_hat);
    DiscOutput real = d2_forward(zeta, real_text);

    Tensor total = Tensor::scalar(0.0);
    if (cfg.inverse_classification()) {
        Tensor cls = classification_pair(
            mul_scalar(softmax_cross_entropy(fake.logits, batch.labels), cfg.cls_inverse_coeff),
            mul_scalar(softmax_cross_entropy(real.logits, batch.labels), cfg.cls_inverse_coeff),
            cfg.half_on_fake_only);
        total = add(total, cls);
    }
    if (cfg.inverse_adversarial()) {
        total = add(total, sub(mean_all(fake.critic), mean_all(real.critic)));
        if (cfg.lipschitz_mode == LipschitzMode::GradientPenalty && cfg.gp_coeff > 0.0) {
            total = add(total, gradient_penalty(zeta, real_text, alpha_hat, cfg.gp_coeff, rng));
        }
    }
    return total;
}

Tensor loss_g2(const NetSpec& spec, const GeneratorParams& delta, const DiscriminatorParams& zeta,
               const GeneratorParams& theta, const Batch& batch, const TrainConfig& cfg, Rng& rng) {
    GeneratorParams th = detached(theta);
    Tensor x_hat = generate_fake_visual(spec, th, batch.alpha, rng);
    Tensor z2 = gaussian_sample(rng, {batch.alpha.dim(0), spec.d_noise});
    Tensor alpha_hat = g2_forward(spec, delta, x_hat, z2);
    DiscOutput out = d2_forward(detached(zeta), alpha_hat);

    Tensor total = Tensor::scalar(0.0);
    if (cfg.inverse_adversarial()) total = add(total, neg(mean_all(out.critic)));
    if (cfg.inverse_classification()) {
        total = add(total, mul_scalar(softmax_cross_entropy(out.logits, batch.labels),
                                      cfg.cls_inverse_coeff));
    }
    return total;
}

Tensor cycle_loss(const NetSpec& spec, const GeneratorParams& theta, const GeneratorParams& delta,
                  const Batch& batch, const TrainConfig& cfg, Rng& rng) {
    const std::size_t b = batch.alpha.dim(0);
    Tensor z1 = gaussian_sample(rng, {b, spec.d_noise});
    G1Output gen = g1_forward(spec, theta, batch.alpha, z1);
    Tensor z2 = cfg.shared_cycle_noise ? z1 : gaussian_sample(rng, {b, spec.d_noise});
    Tensor alpha_hat = g2_forward(spec, delta, gen.x_hat, z2);
    Tensor target = cfg.cycle_target == CycleTarget::TextFeature ? gen.s : batch.alpha;
    Tensor diff = sub(alpha_hat, target);
    return mul_scalar(sum_all(mul(diff, diff)), cfg.cyc_coeff / static_cast<double>(b));
}

// ---- trainer ----

Trainer::Trainer(const Dataset& ds, const Split& split, TrainConfig cfg,
                 std::vector<std::size_t> train_indices)
    : cfg_(std::move(cfg)), ds_(&ds), rng_(cfg_.seed) {
    cfg_.validate();
    ds.validate();

    if (train_indices.empty()) {
        for (std::size_t i = 0; i < ds.num_samples; ++i) {
            if (split.is_seen(ds.labels[i])) train_indices.push_back(i);
        }
    }
    if (train_indices.empty()) throw std::invalid_argument("Trainer: no training samples");
    train_indices_ = std::move(train_indices);

    NetSpec spec;
    spec.d_s = ds.d_s;
    spec.d_v = ds.d_v;
    spec.num_classes = ds.num_classes;
    spec.d_embed = cfg_.d_embed;
    spec.d_noise = cfg_.d_noise;
    spec.d_hidden = cfg_.d_hidden;
    spec.d_hidden_disc = cfg_.d_hidden_disc;
    spec.attribute_mode = cfg_.attribute_mode;
    spec.leaky_slope = cfg_.leaky_slope;
    spec.finalize();
    spec.d_cycle_out = cfg_.cycle_target == CycleTarget::TextFeature ? spec.d_embed : spec.d_s;
    nets_ = init_networks(spec, cfg_.seed);

    scaler_ = FeatureScaler::fit(ds, train_indices_);
    scaled_visual_.resize(train_indices_.size() * ds.d_v);
    for (std::size_t i = 0; i < train_indices_.size(); ++i) {
        std::vector<double> row(ds.visual_row(train_indices_[i]),
                                ds.visual_row(train_indices_[i]) + ds.d_v);
        auto scaled = scaler_.apply(row);
        std::copy(scaled.begin(), scaled.end(), &scaled_visual_[i * ds.d_v]);
    }

    // per-class means of scaled real features over the training pool
    std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
    for (std::size_t i = 0; i < train_indices_.size(); ++i) {
        const auto c = ds.labels[train_indices_[i]];
        auto& [sum, count] = acc[c];
        if (sum.empty()) sum.assign(ds.d_v, 0.0);
        for (std::size_t j = 0; j < ds.d_v; ++j) sum[j] += scaled_visual_[i * ds.d_v + j];
        count += 1;
    }
    stats_.dim = ds.d_v;
    for (auto& [c, sc] : acc) {
        stats_.classes.push_back(c);
        for (std::size_t j = 0; j < ds.d_v; ++j)
            stats_.means.push_back(sc.first[j] / static_cast<double>(sc.second));
    }

    auto g1p = nets_.g1.all();
    auto d1p = nets_.d1.all();
    auto g2p = nets_.g2.all();
    auto d2p = nets_.d2.all();
    opt_g1_ = AdamState::create(g1p, cfg_.lr, cfg_.beta1, cfg_.beta2);
    opt_d1_ = AdamState::create(d1p, cfg_.lr, cfg_.beta1, cfg_.beta2);
    opt_g2_ = AdamState::create(g2p, cfg_.lr, cfg_.beta1, cfg_.beta2);
    opt_d2_ = AdamState::create(d2p, cfg_.lr, cfg_.beta1, cfg_.beta2);
}

Batch Trainer::sample_batch() {
    const std::size_t b = cfg_.batch_size;
    const std::size_t d_v = ds_->d_v, d_s = ds_->d_s;
    std::vector<double> alpha(b * d_s), x(b * d_v);
    Batch batch;
    batch.labels.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t pick = rng_.index(train_indices_.size());
        const std::uint32_t label = ds_->labels[train_indices_[pick]];
        batch.labels[i] = label;
        std::copy(&scaled_visual_[pick * d_v], &scaled_visual_[pick * d_v] + d_v, &x[i * d_v]);
        const double* sem = ds_->semantic_row(label);
        std::copy(sem, sem + d_s, &alpha[i * d_s]);
    }
    batch.alpha = Tensor::from_data({b, d_s}, std::move(alpha));
    batch.x = Tensor::from_data({b, d_v}, std::move(x));
    return batch;
}

namespace {

std::vector<Tensor> take_grads(std::vector<Tensor>& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto& p : params) {
        if (p.has_grad()) {
            grads.push_back(p.grad().detach());
        } else {
            grads.push_back(Tensor::zeros(p.shape()));
        }
        p.zero_grad();
    }
    return grads;
}

void zero_grads(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

void clip_params(std::vector<Tensor> params, double c) {
    for (auto& p : params) {
        for (auto& v : p.mutable_data()) v = std::clamp(v, -c, c);
    }
}

bool params_finite(const std::vector<Tensor>& params) {
    for (const auto& p : params) {
        for (double v : p.data()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace

void Trainer::clip_discriminators() {
    if (cfg_.lipschitz_mode != LipschitzMode::WeightClip) return;
    clip_params(nets_.d1.all(), cfg_.clip_value);
    clip_params(nets_.d2.all(), cfg_.clip_value);
}

void Trainer::check_finite_params() {
    for (const auto& group : {nets_.g1.all(), nets_.d1.all(), nets_.g2.all(), nets_.d2.all()}) {
        if (!params_finite(group)) {
            std::ostringstream os;
            write_loss_csv(os);
            throw NonFiniteError("non-finite parameter after update at iteration " +
                                 std::to_string(iteration_) + "\nloss history:\n" + os.str());
        }
    }
}

void Trainer::train_step() {
    LossRow row;
    row.iteration = iteration_ + 1;

    auto d1p = nets_.d1.all();
    for (std::size_t k = 0; k < cfg_.critic_steps; ++k) {
        Batch batch = sample_batch();
        zero_grads(d1p);
        Tensor loss = loss_d1(nets_.spec, nets_.d1, nets_.g1, batch, cfg_, rng_);
        row.d1 += loss.item() / static_cast<double>(cfg_.critic_steps);
        backward(loss);
        auto grads = take_grads(d1p);
        adam_step(d1p, grads, opt_d1_);
        if (cfg_.lipschitz_mode == LipschitzMode::WeightClip)
            clip_params(nets_.d1.all(), cfg_.clip_value);
        counters_.d1_updates += 1;
    }

    if (cfg_.inverse_enabled()) {
        auto d2p = nets_.d2.all();
        for (std::size_t k = 0; k < cfg_.critic_steps; ++k) {
            Batch batch = sample_batch();
            zero_grads(d2p);
            Tensor loss = loss_d2(nets_.spec, nets_.d2, nets_.g2, nets_.g1, batch, cfg_, rng_);
            row.d2 += loss.item() / static_cast<double>(cfg_.critic_steps);
            backward(loss);
            auto grads = take_grads(d2p);
            adam_step(d2p, grads, opt_d2_);
            if (cfg_.lipschitz_mode == LipschitzMode::WeightClip)
                clip_params(nets_.d2.all(), cfg_.clip_value);
            counters_.d2_updates += 1;
        }
    }

    {
        auto g1p = nets_.g1.all();
        Batch batch = sample_batch();
        zero_grads(g1p);
        G1Loss loss = loss_g1(nets_.spec, nets_.g1, nets_.d1, batch, cfg_, stats_, rng_);
        row.g1 = loss.total.item();
        row.pivot = loss.pivot;
        backward(loss.total);
        auto grads = take_grads(g1p);
        adam_step(g1p, grads, opt_g1_);
        counters_.g1_updates += 1;
    }

    if (cfg_.inverse_enabled()) {
        auto g2p = nets_.g2.all();
        Batch batch = sample_batch();
        zero_grads(g2p);
        Tensor loss = loss_g2(nets_.spec, nets_.g2, nets_.d2, nets_.g1, batch, cfg_, rng_);
        row.g2 = loss.item();
        backward(loss);
        auto grads = take_grads(g2p);
        adam_step(g2p, grads, opt_g2_);
        counters_.g2_updates += 1;
    }

    if (cfg_.cycle_enabled()) {
        auto g1p = nets_.g1.all();
        auto g2p = nets_.g2.all();
        Batch batch = sample_batch();
        zero_grads(g1p);
        zero_grads(g2p);
        Tensor loss = cycle_loss(nets_.spec, nets_.g1, nets_.g2, batch, cfg_, rng_);
        row.cyc = loss.item();
        backward(loss);
        auto grads1 = take_grads(g1p);
        auto grads2 = take_grads(g2p);
        adam_step(g1p, grads1, opt_g1_);
        adam_step(g2p, grads2, opt_g2_);
        counters_.cyc_updates += 1;
    }

    iteration_ += 1;
    history_.push_back(row);
    last_counters_ = ScheduleCounters{};
    last_counters_.d1_updates = cfg_.critic_steps;
    last_counters_.d2_updates = cfg_.inverse_enabled() ? cfg_.critic_steps : 0;
    last_counters_.g1_updates = 1;
    last_counters_.g2_updates = cfg_.inverse_enabled() ? 1 : 0;
    last_counters_.cyc_updates = cfg_.cycle_enabled() ? 1 : 0;

    check_finite_params();
}

void Trainer::run() {
    while (iteration_ < cfg_.iterations) train_step();
}

namespace {

void format_double(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

}  // namespace

void Trainer::write_loss_csv(std::ostream& out) const {
    out << "iteration,loss_d1,loss_g1,loss_d2,loss_g2,loss_cyc,pivot\n";
    for (const auto& r : history_) {
        out << r.iteration;
        for (double v : {r.d1, r.g1, r.d2, r.g2, r.cyc, r.pivot}) {
            out << ',';
            format_double(out, v);
        }
        out << '\n';
    }
}

void Trainer::write_loss_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_loss_csv(out);
}

// ---- checkpointing ----

namespace {

constexpr int kCheckpointVersion = 1;

void write_adam(std::ofstream& out, const AdamState& s) {
    std::uint64_t step = s.step;
    out.write(reinterpret_cast<const char*>(&step), sizeof(step));
    std::uint64_t groups = s.m.size();
    out.write(reinterpret_cast<const char*>(&groups), sizeof(groups));
    for (const auto& m : s.m) binio::write_f64(out, m);
    for (const auto& v : s.v) binio::write_f64(out, v);
}

void read_adam(std::ifstream& in, AdamState& s) {
    std::uint64_t step = 0, groups = 0;
    in.read(reinterpret_cast<char*>(&step), sizeof(step));
    in.read(reinterpret_cast<char*>(&groups), sizeof(groups));
    if (groups != s.m.size()) throw std::runtime_error("checkpoint: optimizer group count mismatch");
    s.step = step;
    for (auto& m : s.m) m = binio::read_f64(in);
    for (auto& v : s.v) v = binio::read_f64(in);
}

}  // namespace

void Trainer::save_checkpoint(const std::string& dir) const {
    fs::create_directories(dir);
    json meta;
    meta["version"] = kCheckpointVersion;
    meta["dtype"] = "f64";
    meta["config"] = config_to_json(cfg_);
    meta["spec"] = spec_to_json(nets_.spec);
    meta["scaler"] = {{"lo", scaler_.lo}, {"hi", scaler_.hi}};
    meta["iteration"] = iteration_;
    meta["config_hash"] = config_hash(cfg_, nets_.spec);
    {
        std::ofstream m(fs::path(dir) / "meta.json");
        if (!m) throw std::runtime_error("cannot write checkpoint meta in " + dir);
        m << meta.dump(2) << "\n";
    }
    {
        std::ofstream p(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
        for (const auto& group : {nets_.g1.all(), nets_.d1.all(), nets_.g2.all(), nets_.d2.all()})
            for (const auto& t : group) binio::write_f64(p, t.data());
        if (!p) throw std::runtime_error("cannot write checkpoint params in " + dir);
    }
    {
        std::ofstream o(fs::path(dir) / "optim.bin", std::ios::binary | std::ios::trunc);
        write_adam(o, opt_g1_);
        write_adam(o, opt_d1_);
        write_adam(o, opt_g2_);
        write_adam(o, opt_d2_);
        std::uint64_t rows = history_.size();
        o.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        for (const auto& r : history_) {
            std::uint64_t it = r.iteration;
            o.write(reinterpret_cast<const char*>(&it), sizeof(it));
            for (double v : {r.d1, r.g1, r.d2, r.g2, r.cyc, r.pivot})
                o.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
        // schedule counters
        for (std::size_t v : {counters_.d1_updates, counters_.d2_updates, counters_.g1_updates,
                              counters_.g2_updates, counters_.cyc_updates}) {
            std::uint64_t u = v;
            o.write(reinterpret_cast<const char*>(&u), sizeof(u));
        }
        if (!o) throw std::runtime_error("cannot write checkpoint optimizer state in " + dir);
    }
    {
        std::ofstream r(fs::path(dir) / "rng.txt");
        r << rng_.serialize() << "\n";
        if (!r) throw std::runtime_error("cannot write checkpoint rng state in " + dir);
    }
}

namespace {

json load_checkpoint_meta(const std::string& dir) {
    std::ifstream m(fs::path(dir) / "meta.json");
    if (!m) throw std::runtime_error("missing checkpoint meta.json in " + dir);
    json meta = json::parse(m);
    if (meta.value("version", -1) != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version");
    return meta;
}

void load_params_into(const std::string& dir, Networks& nets) {
    std::ifstream p(fs::path(dir) / "params.bin", std::ios::binary);
    if (!p) throw std::runtime_error("missing checkpoint params.bin in " + dir);
    for (auto group : {nets.g1.all(), nets.d1.all(), nets.g2.all(), nets.d2.all()}) {
        for (auto& t : group) {
            auto data = binio::read_f64(p);
            if (data.size() != t.numel())
                throw std::runtime_error("checkpoint: parameter shape mismatch");
            t.mutable_data() = std::move(data);
        }
    }
}

}  // namespace

Trainer Trainer::load_checkpoint(const std::string& dir, const Dataset& ds, const Split& split) {
    json meta = load_checkpoint_meta(dir);
    TrainConfig cfg = config_from_json(meta.at("config"));
    Trainer t(ds, split, cfg);

    NetSpec stored_spec = spec_from_json(meta.at("spec"));
    const std::uint64_t stored_hash = meta.at("config_hash").get<std::uint64_t>();
    if (config_hash(cfg, stored_spec) != stored_hash)
        throw std::runtime_error("checkpoint: config hash mismatch");
    if (config_hash(cfg, t.nets_.spec) != stored_hash)
        throw std::runtime_error("checkpoint: network spec does not match this dataset");

    load_params_into(dir, t.nets_);
    {
        std::ifstream o(fs::path(dir) / "optim.bin", std::ios::binary);
        if (!o) throw std::runtime_error("missing checkpoint optim.bin in " + dir);
        read_adam(o, t.opt_g1_);
        read_adam(o, t.opt_d1_);
        read_adam(o, t.opt_g2_);
        read_adam(o, t.opt_d2_);
        std::uint64_t rows = 0;
        o.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        t.history_.clear();
        for (std::uint64_t i = 0; i < rows; ++i) {
            LossRow r;
            std::uint64_t it = 0;
            o.read(reinterpret_cast<char*>(&it), sizeof(it));
            r.iteration = it;
            for (double* v : {&r.d1, &r.g1, &r.d2, &r.g2, &r.cyc, &r.pivot})
                o.read(reinterpret_cast<char*>(v), sizeof(double));
            t.history_.push_back(r);
        }
        std::uint64_t u = 0;
        for (std::size_t* v : {&t.counters_.d1_updates, &t.counters_.d2_updates,
                               &t.counters_.g1_updates, &t.counters_.g2_updates,
                               &t.counters_.cyc_updates}) {
            o.read(reinterpret_cast<char*>(&u), sizeof(u));
            *v = u;
        }
        if (!o) throw std::runtime_error("checkpoint: corrupt optim.bin");
    }
    {
        std::ifstream r(fs::path(dir) / "rng.txt");
        if (!r) throw std::runtime_error("missing checkpoint rng.txt in " + dir);
        std::string line;
        std::getline(r, line);
        t.rng_ = Rng::deserialize(line);
    }
    t.scaler_.lo = meta.at("scaler").at("lo").get<std::vector<double>>();
    t.scaler_.hi = meta.at("scaler").at("hi").get<std::vector<double>>();
    t.iteration_ = meta.at("iteration").get<std::size_t>();
    return t;
}

CheckpointView load_checkpoint_view(const std::string& dir) {
    json meta = load_checkpoint_meta(dir);
    CheckpointView view;
    view.cfg = config_from_json(meta.at("config"));
    view.spec = spec_from_json(meta.at("spec"));
    view.nets = init_networks(view.spec, view.cfg.seed);
    load_params_into(dir, view.nets);
    view.scaler.lo = meta.at("scaler").at("lo").get<std::vector<double>>();
    view.scaler.hi = meta.at("scaler").at("hi").get<std::vector<double>>();
    view.iteration = meta.at("iteration").get<std::size_t>();
    view.hash = meta.at("config_hash").get<std::uint64_t>();
    if (config_hash(view.cfg, view.spec) != view.hash)
        throw std::runtime_error("checkpoint: config hash mismatch");
    return view;
}

}  // namespace zsl
