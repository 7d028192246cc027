#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "zslfeat/tensor.hpp"

namespace zsl {

// Deterministic random source. Normal draws use Box-Muller on top of the
// engine's uniforms so the byte stream is fully pinned by the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform();                      // [0, 1)
    double normal();                       // N(0, 1)
    std::size_t index(std::size_t n);      // uniform in [0, n)

    std::string serialize() const;
    static Rng deserialize(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Tensor gaussian_sample(Rng& rng, Shape shape);

// x_tilde = eps*real + (1-eps)*fake, eps ~ U(0,1) per row
Tensor interpolate(const Tensor& real, const Tensor& fake, Rng& rng);

}  // namespace zsl
