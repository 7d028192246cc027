#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "zslfeat/rng.hpp"
#include "zslfeat/tensor.hpp"

namespace zsl {

struct NetSpec {
    std::size_t d_s = 0;            // semantic input dim
    std::size_t d_embed = 0;        // text embedding dim (0 -> min(1000, d_s))
    std::size_t d_noise = 100;
    std::size_t d_hidden = 4096;    // generator hidden width
    std::size_t d_v = 0;            // visual dim
    std::size_t num_classes = 0;
    std::size_t d_hidden_disc = 1024;
    bool attribute_mode = false;    // feed semantics straight through, no encoder
    double leaky_slope = 0.2;
    // width of the inverse generator output: d_embed for text-feature cycle
    // targets, d_s for raw TF-IDF targets
    std::size_t d_cycle_out = 0;

    void finalize();  // fills derived defaults, checks invariants
};

// Two fully connected layers; the forward generator additionally owns the
// text encoder psi.
struct GeneratorParams {
    Tensor psi_w, psi_b;  // undefined in attribute mode / inverse generator
    Tensor w1, b1;
    Tensor w2, b2;

    std::vector<Tensor> all();
    std::vector<Tensor> all() const;
};

struct DiscriminatorParams {
    Tensor trunk_w, trunk_b;
    Tensor critic_w, critic_b;  // -> 1, no output activation
    Tensor cls_w, cls_b;        // -> num_classes

    std::vector<Tensor> all();
    std::vector<Tensor> all() const;
};

struct Networks {
    NetSpec spec;
    GeneratorParams g1;      // theta
    DiscriminatorParams d1;  // w
    GeneratorParams g2;      // delta
    DiscriminatorParams d2;  // zeta
};

// Weights ~ N(0, 0.02^2) truncated at +-2 sigma, biases zero.
Networks init_networks(NetSpec spec, std::uint64_t seed);

struct G1Output {
    Tensor x_hat;  // b x d_v, tanh range
    Tensor s;      // b x d_embed, encoder output
};

G1Output g1_forward(const NetSpec& spec, const GeneratorParams& theta, const Tensor& alpha,
                    const Tensor& z);

struct DiscOutput {
    Tensor critic;  // b x 1
    Tensor logits;  // b x num_classes
};

DiscOutput d1_forward(const DiscriminatorParams& w, const Tensor& x);
Tensor g2_forward(const NetSpec& spec, const GeneratorParams& delta, const Tensor& x,
                  const Tensor& z);
DiscOutput d2_forward(const DiscriminatorParams& zeta, const Tensor& t);

// Copies with grads detached, for losses that must not touch these weights.
GeneratorParams detached(const GeneratorParams& p);
DiscriminatorParams detached(const DiscriminatorParams& p);

}  // namespace zsl
