#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zslfeat/rng.hpp"

namespace zsl {

// Aligned (visual, semantic, label) triplets with one semantic row per class.
struct Dataset {
    std::size_t num_samples = 0;
    std::size_t num_classes = 0;
    std::size_t d_v = 0;
    std::size_t d_s = 0;
    std::vector<double> visual;           // num_samples x d_v, row-major
    std::vector<double> semantic;         // num_classes x d_s
    std::vector<std::uint32_t> labels;    // num_samples
    std::vector<std::string> class_names;
    std::vector<std::int64_t> super_class;  // per class; empty when absent

    bool has_super_class() const { return !super_class.empty(); }
    const double* visual_row(std::size_t i) const { return &visual[i * d_v]; }
    const double* semantic_row(std::size_t c) const { return &semantic[c * d_s]; }
    void validate() const;
};

enum class SplitStyle { SCS, SCE };

struct Split {
    std::vector<std::uint32_t> seen_classes;    // sorted
    std::vector<std::uint32_t> unseen_classes;  // sorted
    SplitStyle style = SplitStyle::SCS;
    std::uint64_t seed = 0;

    bool is_seen(std::uint32_t c) const;
};

struct ClassStats {
    std::vector<std::uint32_t> classes;
    std::size_t dim = 0;
    std::vector<double> means;  // classes.size() x dim

    const double* mean_of(std::uint32_t c) const;  // throws if absent
};

struct SynthConfig {
    std::size_t num_classes = 10;
    std::size_t num_seen = 7;
    std::size_t samples_per_class = 100;
    std::size_t d_s = 32;
    std::size_t d_v = 64;
    double noise_scale = 0.0;
    std::uint64_t seed = 0;
    std::size_t num_superclasses = 0;
};

Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& ds, const std::string& dir);

Split make_split(const Dataset& ds, SplitStyle style, double unseen_fraction, std::uint64_t seed);
Split load_split(const std::string& path);
void save_split(const Split& split, const std::string& path);

ClassStats class_means(const Dataset& ds, const std::vector<std::uint32_t>& classes);

// Linear ground truth: class visual mean = alpha_c * M, samples = mean + noise.
Dataset generate_synthetic(const SynthConfig& cfg);

// True (noise-free) class means of the synthetic generator, num_classes x d_v.
std::vector<double> synthetic_class_means(const SynthConfig& cfg);

// Median pairwise Euclidean distance between the true synthetic class means.
double median_intermean_distance(const SynthConfig& cfg);

}  // namespace zsl
