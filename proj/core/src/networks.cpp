#include "zslfeat/networks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zsl {

void NetSpec::finalize() {
    if (d_s == 0 || d_v == 0 || num_classes == 0)
        throw std::invalid_argument("NetSpec: d_s, d_v and num_classes must be set");
    if (d_embed == 0) d_embed = std::min<std::size_t>(1000, d_s);
    if (attribute_mode) d_embed = d_s;
    if (d_cycle_out == 0) d_cycle_out = d_embed;
    if (d_noise == 0 || d_hidden == 0 || d_hidden_disc == 0)
        throw std::invalid_argument("NetSpec: all dimensions must be >= 1");
}

std::vector<Tensor> GeneratorParams::all() {
    std::vector<Tensor> out;
    if (psi_w.defined()) {
        out.push_back(psi_w);
        out.push_back(psi_b);
    }
    out.push_back(w1);
    out.push_back(b1);
    out.push_back(w2);
    out.push_back(b2);
    return out;
}

std::vector<Tensor> GeneratorParams::all() const {
    return const_cast<GeneratorParams*>(this)->all();
}

std::vector<Tensor> DiscriminatorParams::all() {
    return {trunk_w, trunk_b, critic_w, critic_b, cls_w, cls_b};
}

std::vector<Tensor> DiscriminatorParams::all() const {
    return const_cast<DiscriminatorParams*>(this)->all();
}

namespace {

Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> d(rows * cols);
    for (auto& v : d) {
        double x;
        do {
            x = rng.normal() * 0.02;
        } while (std::fabs(x) > 0.04);  // truncate at 2 sigma
        v = x;
    }
    return Tensor::from_data({rows, cols}, std::move(d), true);
}

Tensor init_bias(std::size_t n) { return Tensor::zeros({n}, true); }

GeneratorParams init_generator(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng) {
    GeneratorParams p;
    p.w1 = init_weight(d_in, d_hidden, rng);
    p.b1 = init_bias(d_hidden);
    p.w2 = init_weight(d_hidden, d_out, rng);
    p.b2 = init_bias(d_out);
    return p;
}

DiscriminatorParams init_discriminator(std::size_t d_in, std::size_t d_hidden,
                                       std::size_t num_classes, Rng& rng) {
    DiscriminatorParams p;
    p.trunk_w = init_weight(d_in, d_hidden, rng);
    p.trunk_b = init_bias(d_hidden);
    p.critic_w = init_weight(d_hidden, 1, rng);
    p.critic_b = init_bias(1);
    p.cls_w = init_weight(d_hidden, num_classes, rng);
    p.cls_b = init_bias(num_classes);
    return p;
}

}  // namespace

Networks init_networks(NetSpec spec, std::uint64_t seed) {
    spec.finalize();
    Rng rng(seed);
    Networks nets;
    nets.spec = spec;

    nets.g1 = init_generator(spec.d_embed + spec.d_noise, spec.d_hidden, spec.d_v, rng);
    if (!spec.attribute_mode) {
        nets.g1.psi_w = init_weight(spec.d_s, spec.d_embed, rng);
        nets.g1.psi_b = init_bias(spec.d_embed);
    }
    nets.d1 = init_discriminator(spec.d_v, spec.d_hidden_disc, spec.num_classes, rng);
    nets.g2 = init_generator(spec.d_v + spec.d_noise, spec.d_hidden, spec.d_cycle_out, rng);
    nets.d2 = init_discriminator(spec.d_cycle_out, spec.d_hidden_disc, spec.num_classes, rng);
    return nets;
}

G1Output g1_forward(const NetSpec& spec, const GeneratorParams& theta, const Tensor& alpha,
                    const Tensor& z) {
    Tensor s;
    if (spec.attribute_mode) {
        s = alpha;
    } else {
        s = leaky_relu(add_rowvec(matmul(alpha, theta.psi_w), theta.psi_b), spec.leaky_slope);
    }
    Tensor h = leaky_relu(add_rowvec(matmul(concat_cols(s, z), theta.w1), theta.b1),
                          spec.leaky_slope);
    Tensor x_hat = tanh_op(add_rowvec(matmul(h, theta.w2), theta.b2));
    return {x_hat, s};
}

DiscOutput d1_forward(const DiscriminatorParams& w, const Tensor& x) {
    Tensor h = relu(add_rowvec(matmul(x, w.trunk_w), w.trunk_b));
    Tensor critic = add_rowvec(matmul(h, w.critic_w), w.critic_b);
    Tensor logits = add_rowvec(matmul(h, w.cls_w), w.cls_b);
    return {critic, logits};
}

Tensor g2_forward(const NetSpec& spec, const GeneratorParams& delta, const Tensor& x,
                  const Tensor& z) {
    Tensor h = leaky_relu(add_rowvec(matmul(concat_cols(x, z), delta.w1), delta.b1),
                          spec.leaky_slope);
    return tanh_op(add_rowvec(matmul(h, delta.w2), delta.b2));
}

DiscOutput d2_forward(const DiscriminatorParams& zeta, const Tensor& t) {
    return d1_forward(zeta, t);  // identical topology, different input space
}

GeneratorParams detached(const GeneratorParams& p) {
    GeneratorParams out;
    if (p.psi_w.defined()) {
        out.psi_w = p.psi_w.detach();
        out.psi_b = p.psi_b.detach();
    }
    out.w1 = p.w1.detach();
    out.b1 = p.b1.detach();
    out.w2 = p.w2.detach();
    out.b2 = p.b2.detach();
    return out;
}

DiscriminatorParams detached(const DiscriminatorParams& p) {
    DiscriminatorParams out;
    out.trunk_w = p.trunk_w.detach();
    out.trunk_b = p.trunk_b.detach();
    out.critic_w = p.critic_w.detach();
    out.critic_b = p.critic_b.detach();
    out.cls_w = p.cls_w.detach();
    out.cls_b = p.cls_b.detach();
    return out;
}

}  // namespace zsl
