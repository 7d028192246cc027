#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zslfeat/dataset.hpp"
#include "zslfeat/networks.hpp"
#include "zslfeat/training.hpp"

namespace zsl {

// n generated visual feature rows per class, in original (unscaled) space.
struct SynthesizedBank {
    std::vector<std::uint32_t> classes;
    std::size_t per_class = 0;
    std::size_t dim = 0;
    std::vector<double> features;  // classes.size() * per_class rows

    const double* row(std::size_t i) const { return &features[i * dim]; }
    std::size_t rows() const { return classes.size() * per_class; }
    std::uint32_t label_of_row(std::size_t i) const { return classes[i / per_class]; }
};

SynthesizedBank synthesize(const NetSpec& spec, const GeneratorParams& theta,
                           const FeatureScaler& scaler, const std::vector<double>& semantics,
                           const std::vector<std::uint32_t>& classes, std::size_t n,
                           std::uint64_t seed);

// Labeled reference set for nearest-neighbor classification.
struct ReferenceSet {
    std::size_t dim = 0;
    std::vector<double> features;  // rows x dim
    std::vector<std::uint32_t> labels;

    std::size_t rows() const { return labels.size(); }
    void append(const double* feat, std::uint32_t label);
};

// Majority vote over the k nearest references (Euclidean). Ties break by
// smaller summed distance, then lower class id.
std::vector<std::uint32_t> knn_classify(const ReferenceSet& refs, const std::vector<double>& queries,
                                        std::size_t k);

double top1(const std::vector<std::uint32_t>& predictions, const std::vector<std::uint32_t>& truth);

struct SUCurve {
    std::vector<double> gamma;           // calibration offsets; +-inf included
    std::vector<double> unseen_accuracy; // A_U per gamma, macro-averaged
    std::vector<double> seen_accuracy;   // A_S per gamma
};

// Per-class score = negative distance to the nearest reference of that class:
// real seen training features for seen classes, the bank for unseen classes.
struct GzslScorer {
    std::vector<std::uint32_t> classes;           // all classes with references
    std::vector<bool> seen_flag;                  // aligned with classes
    std::vector<std::vector<double>> references;  // per class, rows x dim flat
    std::size_t dim = 0;

    static GzslScorer build(const Dataset& ds, const Split& split,
                            const std::vector<std::size_t>& seen_reference_samples,
                            const SynthesizedBank& bank);
    // scores for one query, aligned with `classes`
    std::vector<double> scores(const double* query) const;
};

SUCurve su_curve(const GzslScorer& scorer, const Dataset& ds,
                 const std::vector<std::size_t>& seen_test,
                 const std::vector<std::size_t>& unseen_test,
                 const std::vector<double>& gamma_grid);

// Default grid: 199 offsets spanning +- the 99.9th percentile of absolute
// score differences over the test queries; +-inf limits are added by su_curve.
std::vector<double> default_gamma_grid(const GzslScorer& scorer, const Dataset& ds,
                                       const std::vector<std::size_t>& seen_test,
                                       const std::vector<std::size_t>& unseen_test);

// Trapezoidal area under the (A_U, A_S) polyline, extended to both axes.
double ausuc(const SUCurve& curve);

struct EvalReport {
    double top1_unseen = 0.0;
    double ausuc_value = -1.0;  // < 0 when GZSL was not evaluated
    SUCurve curve;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    double wall_seconds = -1.0;  // < 0 when timing is suppressed

    std::string to_json() const;
};

void write_curve_csv(const SUCurve& curve, const std::string& path);

}  // namespace zsl
