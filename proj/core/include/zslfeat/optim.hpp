#pragma once

#include <cstdint>
#include <vector>

#include "zslfeat/tensor.hpp"

namespace zsl {

// Adam with bias correction, one state per parameter group.
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;  // first moments, one entry per parameter
    std::vector<std::vector<double>> v;  // second moments

    static AdamState create(const std::vector<Tensor>& params, double lr, double beta1,
                            double beta2, double eps = 1e-8);
};

// In-place update of params from grads. Shapes must match the state.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace zsl
