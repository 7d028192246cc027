#include "zslfeat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace zsl {

using nlohmann::json;

SynthesizedBank synthesize(const NetSpec& spec, const GeneratorParams& theta,
                           const FeatureScaler& scaler, const std::vector<double>& semantics,
                           const std::vector<std::uint32_t>& classes, std::size_t n,
                           std::uint64_t seed) {
    if (classes.empty() || n == 0) throw std::invalid_argument("synthesize: empty request");
    if (scaler.lo.size() != spec.d_v)
        throw std::invalid_argument("synthesize: scaler does not match the visual dimension");
    if (semantics.size() != classes.size() * spec.d_s)
        throw std::invalid_argument("synthesize: semantics shape mismatch");

    Rng rng(seed);
    SynthesizedBank bank;
    bank.classes = classes;
    bank.per_class = n;
    bank.dim = spec.d_v;
    bank.features.reserve(classes.size() * n * spec.d_v);

    NoGradGuard ng;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        // n copies of this class's semantics, fresh noise per row
        std::vector<double> alpha(n * spec.d_s);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(&semantics[c * spec.d_s], &semantics[c * spec.d_s] + spec.d_s,
                      &alpha[i * spec.d_s]);
        Tensor a = Tensor::from_data({n, spec.d_s}, std::move(alpha));
        Tensor z = gaussian_sample(rng, {n, spec.d_noise});
        Tensor x_hat = g1_forward(spec, theta, a, z).x_hat;
        auto unscaled = scaler.invert(x_hat.data());
        bank.features.insert(bank.features.end(), unscaled.begin(), unscaled.end());
    }
    return bank;
}

void ReferenceSet::append(const double* feat, std::uint32_t label) {
    features.insert(features.end(), feat, feat + dim);
    labels.push_back(label);
}

namespace {

double sq_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace

std::vector<std::uint32_t> knn_classify(const ReferenceSet& refs, const std::vector<double>& queries,
                                        std::size_t k) {
    if (refs.rows() == 0) throw std::invalid_argument("knn_classify: empty reference set");
    if (k < 1 || k > refs.rows())
        throw std::invalid_argument("knn_classify: k must lie in [1, reference count]");
    if (queries.size() % refs.dim != 0)
        throw std::invalid_argument("knn_classify: query size not a multiple of the feature dim");

    const std::size_t d = refs.dim;
    const std::size_t nq = queries.size() / d;
    std::vector<std::uint32_t> out(nq);

    std::vector<std::pair<double, std::size_t>> dists(refs.rows());
    for (std::size_t q = 0; q < nq; ++q) {
        const double* query = &queries[q * d];
        for (std::size_t r = 0; r < refs.rows(); ++r)
            dists[r] = {sq_distance(query, &refs.features[r * d], d), r};
        std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k),
                          dists.end());

        std::map<std::uint32_t, std::pair<std::size_t, double>> votes;  // label -> (count, dist sum)
        for (std::size_t i = 0; i < k; ++i) {
            auto& v = votes[refs.labels[dists[i].second]];
            v.first += 1;
            v.second += std::sqrt(dists[i].first);
        }
        std::uint32_t best = votes.begin()->first;
        auto best_v = votes.begin()->second;
        for (const auto& [label, v] : votes) {
            if (v.first > best_v.first ||
                (v.first == best_v.first && v.second < best_v.second)) {
                best = label;
                best_v = v;
            }
            // equal count and equal summed distance: the map's ordering keeps
            // the lowest class id since we only replace on strict improvement
        }
        out[q] = best;
    }
    return out;
}

double top1(const std::vector<std::uint32_t>& predictions, const std::vector<std::uint32_t>& truth) {
    if (predictions.size() != truth.size())
        throw std::invalid_argument("top1: prediction/truth length mismatch");
    if (predictions.empty()) throw std::invalid_argument("top1: empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

// ---- generalized ZSL ----

GzslScorer GzslScorer::build(const Dataset& ds, const Split& split,
                             const std::vector<std::size_t>& seen_reference_samples,
                             const SynthesizedBank& bank) {
    GzslScorer s;
    s.dim = ds.d_v;
    if (bank.dim != ds.d_v) throw std::invalid_argument("GzslScorer: bank dimension mismatch");

    std::map<std::uint32_t, std::vector<double>> refs;
    for (auto i : seen_reference_samples) {
        const auto c = ds.labels[i];
        if (!split.is_seen(c)) continue;
        refs[c].insert(refs[c].end(), ds.visual_row(i), ds.visual_row(i) + ds.d_v);
    }
    for (std::size_t i = 0; i < bank.rows(); ++i) {
        const auto c = bank.label_of_row(i);
        refs[c].insert(refs[c].end(), bank.row(i), bank.row(i) + bank.dim);
    }
    for (auto& [c, feats] : refs) {
        s.classes.push_back(c);
        s.seen_flag.push_back(split.is_seen(c));
        s.references.push_back(std::move(feats));
    }
    return s;
}

std::vector<double> GzslScorer::scores(const double* query) const {
    std::vector<double> out(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& feats = references[c];
        const std::size_t rows = feats.size() / dim;
        double best = std::numeric_limits<double>::max();
        for (std::size_t r = 0; r < rows; ++r)
            best = std::min(best, sq_distance(query, &feats[r * dim], dim));
        out[c] = -std::sqrt(best);
    }
    return out;
}

namespace {

struct ScoredQuery {
    std::vector<double> scores;
    std::uint32_t truth;
    bool truth_seen;
};

std::vector<ScoredQuery> score_all(const GzslScorer& scorer, const Dataset& ds,
                                   const std::vector<std::size_t>& seen_test,
                                   const std::vector<std::size_t>& unseen_test) {
    std::vector<ScoredQuery> out;
    out.reserve(seen_test.size() + unseen_test.size());
    auto add = [&](const std::vector<std::size_t>& idx, bool seen) {
        for (auto i : idx) {
            ScoredQuery q;
            q.scores = scorer.scores(ds.visual_row(i));
            q.truth = ds.labels[i];
            q.truth_seen = seen;
            out.push_back(std::move(q));
        }
    };
    add(seen_test, true);
    add(unseen_test, false);
    return out;
}

// macro accuracy over the classes present in the given queries
double macro_accuracy(const std::vector<ScoredQuery>& queries,
                      const std::vector<std::uint32_t>& predictions, bool seen_side) {
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].truth_seen != seen_side) continue;
        auto& [correct, total] = per_class[queries[i].truth];
        total += 1;
        if (predictions[i] == queries[i].truth) correct += 1;
    }
    if (per_class.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& [c, ct] : per_class)
        acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    return acc / static_cast<double>(per_class.size());
}

std::vector<std::uint32_t> predict_at_gamma(const GzslScorer& scorer,
                                            const std::vector<ScoredQuery>& queries, double gamma) {
    std::vector<std::uint32_t> preds(queries.size());
    const bool force_unseen = std::isinf(gamma) && gamma > 0;
    const bool force_seen = std::isinf(gamma) && gamma < 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        double best = -std::numeric_limits<double>::max();
        std::uint32_t best_class = 0;
        bool found = false;
        for (std::size_t c = 0; c < scorer.classes.size(); ++c) {
            if (force_unseen && scorer.seen_flag[c]) continue;
            if (force_seen && !scorer.seen_flag[c]) continue;
            double v = queries[i].scores[c];
            if (!std::isinf(gamma) && scorer.seen_flag[c]) v -= gamma;
            if (!found || v > best || (v == best && scorer.classes[c] < best_class)) {
                best = v;
                best_class = scorer.classes[c];
                found = true;
            }
        }
        preds[i] = best_class;
    }
    return preds;
}

}  // namespace

SUCurve su_curve(const GzslScorer& scorer, const Dataset& ds,
                 const std::vector<std::size_t>& seen_test,
                 const std::vector<std::size_t>& unseen_test,
                 const std::vector<double>& gamma_grid) {
    if (gamma_grid.empty()) throw std::invalid_argument("su_curve: empty gamma grid");
    auto queries = score_all(scorer, ds, seen_test, unseen_test);

    std::vector<double> grid = gamma_grid;
    const double inf = std::numeric_limits<double>::infinity();
    grid.push_back(-inf);
    grid.push_back(inf);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    SUCurve curve;
    for (double g : grid) {
        auto preds = predict_at_gamma(scorer, queries, g);
        curve.gamma.push_back(g);
        curve.unseen_accuracy.push_back(macro_accuracy(queries, preds, false));
        curve.seen_accuracy.push_back(macro_accuracy(queries, preds, true));
    }
    return curve;
}

std::vector<double> default_gamma_grid(const GzslScorer& scorer, const Dataset& ds,
                                       const std::vector<std::size_t>& seen_test,
                                       const std::vector<std::size_t>& unseen_test) {
    auto queries = score_all(scorer, ds, seen_test, unseen_test);
    std::vector<double> diffs;
    for (const auto& q : queries) {
        const double mx = *std::max_element(q.scores.begin(), q.scores.end());
        const double mn = *std::min_element(q.scores.begin(), q.scores.end());
        diffs.push_back(std::fabs(mx - mn));
    }
    std::sort(diffs.begin(), diffs.end());
    double span = 1.0;
    if (!diffs.empty()) {
        const auto pos = static_cast<std::size_t>(0.999 * static_cast<double>(diffs.size() - 1));
        span = std::max(diffs[pos], 1e-12);
    }
    std::vector<double> grid;
    const int n = 199;
    for (int i = 0; i < n; ++i) {
        grid.push_back(-span + 2.0 * span * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return grid;
}

double ausuc(const SUCurve& curve) {
    if (curve.gamma.size() < 2) throw std::invalid_argument("ausuc: need at least 2 curve points");
    std::vector<std::pair<double, double>> pts;  // (A_U, A_S)
    for (std::size_t i = 0; i < curve.gamma.size(); ++i)
        pts.emplace_back(curve.unseen_accuracy[i], curve.seen_accuracy[i]);
    // ascending in A_U; at equal A_U keep the larger A_S first so a vertical
    // drop in the curve contributes its full rectangle to the area
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    // extend to both axes
    if (pts.front().first > 0.0) pts.insert(pts.begin(), {0.0, pts.front().second});
    if (pts.back().second > 0.0) pts.emplace_back(pts.back().first, 0.0);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double du = pts[i].first - pts[i - 1].first;
        area += du * 0.5 * (pts[i].second + pts[i - 1].second);
    }
    return area;
}

std::string EvalReport::to_json() const {
    json j;
    j["top1_unseen"] = top1_unseen;
    if (ausuc_value >= 0.0) {
        j["ausuc"] = ausuc_value;
        json gamma = json::array();
        for (double g : curve.gamma) {
            if (std::isinf(g))
                gamma.push_back(g > 0 ? "inf" : "-inf");
            else
                gamma.push_back(g);
        }
        json c;
        c["gamma"] = gamma;
        c["unseen_accuracy"] = curve.unseen_accuracy;
        c["seen_accuracy"] = curve.seen_accuracy;
        j["curve"] = c;
    }
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    if (wall_seconds >= 0.0) j["wall_seconds"] = wall_seconds;
    return j.dump(2) + "\n";
}

void write_curve_csv(const SUCurve& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "gamma,unseen_accuracy,seen_accuracy\n";
    for (std::size_t i = 0; i < curve.gamma.size(); ++i) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", curve.gamma[i],
                      curve.unseen_accuracy[i], curve.seen_accuracy[i]);
        out << buf;
    }
}

}  // namespace zsl
