#include "zslfeat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "binio.hpp"

namespace zsl {

namespace fs = std::filesystem;
using nlohmann::json;

void Dataset::validate() const {
    if (visual.size() != num_samples * d_v) throw std::runtime_error("dataset: visual size mismatch");
    if (semantic.size() != num_classes * d_s)
        throw std::runtime_error("dataset: semantic size mismatch");
    if (labels.size() != num_samples) throw std::runtime_error("dataset: label count mismatch");
    if (class_names.size() != num_classes)
        throw std::runtime_error("dataset: class name count mismatch");
    if (!super_class.empty() && super_class.size() != num_classes)
        throw std::runtime_error("dataset: super_class count mismatch");
    for (auto l : labels) {
        if (l >= num_classes)
            throw std::runtime_error("dataset: label " + std::to_string(l) + " out of range for C=" +
                                     std::to_string(num_classes));
    }
}

bool Split::is_seen(std::uint32_t c) const {
    return std::binary_search(seen_classes.begin(), seen_classes.end(), c);
}

const double* ClassStats::mean_of(std::uint32_t c) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == c) return &means[i * dim];
    }
    throw std::invalid_argument("ClassStats: no statistics for class " + std::to_string(c));
}

// ---- persistence ----

void save_dataset(const Dataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);
    json meta;
    meta["version"] = 1;
    meta["endianness"] = "little";
    meta["N"] = ds.num_samples;
    meta["C"] = ds.num_classes;
    meta["d_v"] = ds.d_v;
    meta["d_s"] = ds.d_s;
    meta["class_names"] = ds.class_names;
    if (ds.has_super_class()) meta["super_class"] = ds.super_class;
    std::ofstream m(fs::path(dir) / "meta.json");
    if (!m) throw std::runtime_error("cannot write meta.json in " + dir);
    m << meta.dump(2) << "\n";

    binio::write_f32((fs::path(dir) / "visual.bin").string(), ds.visual);
    binio::write_f32((fs::path(dir) / "semantic.bin").string(), ds.semantic);
    binio::write_u32((fs::path(dir) / "labels.bin").string(), ds.labels);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream m(fs::path(dir) / "meta.json");
    if (!m) throw std::runtime_error("missing meta.json in " + dir);
    json meta = json::parse(m);

    Dataset ds;
    ds.num_samples = meta.at("N").get<std::size_t>();
    ds.num_classes = meta.at("C").get<std::size_t>();
    ds.d_v = meta.at("d_v").get<std::size_t>();
    ds.d_s = meta.at("d_s").get<std::size_t>();
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    if (meta.contains("super_class"))
        ds.super_class = meta.at("super_class").get<std::vector<std::int64_t>>();
    if (meta.value("endianness", "little") != "little")
        throw std::runtime_error("dataset: unsupported endianness tag");

    ds.visual = binio::read_f32((fs::path(dir) / "visual.bin").string(), ds.num_samples * ds.d_v);
    ds.semantic =
        binio::read_f32((fs::path(dir) / "semantic.bin").string(), ds.num_classes * ds.d_s);
    ds.labels = binio::read_u32((fs::path(dir) / "labels.bin").string(), ds.num_samples);
    ds.validate();
    return ds;
}

void save_split(const Split& split, const std::string& path) {
    json j;
    j["style"] = split.style == SplitStyle::SCS ? "SCS" : "SCE";
    j["seed"] = split.seed;
    j["seen_classes"] = split.seen_classes;
    j["unseen_classes"] = split.unseen_classes;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write split file " + path);
    out << j.dump(2) << "\n";
}

Split load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read split file " + path);
    json j = json::parse(in);
    Split s;
    const std::string style = j.at("style").get<std::string>();
    if (style == "SCS")
        s.style = SplitStyle::SCS;
    else if (style == "SCE")
        s.style = SplitStyle::SCE;
    else
        throw std::runtime_error("split: unknown style " + style);
    s.seed = j.value("seed", std::uint64_t{0});
    s.seen_classes = j.at("seen_classes").get<std::vector<std::uint32_t>>();
    s.unseen_classes = j.at("unseen_classes").get<std::vector<std::uint32_t>>();
    std::sort(s.seen_classes.begin(), s.seen_classes.end());
    std::sort(s.unseen_classes.begin(), s.unseen_classes.end());
    for (auto c : s.unseen_classes) {
        if (s.is_seen(c)) throw std::runtime_error("split: class in both seen and unseen sets");
    }
    return s;
}

// ---- splitting ----

namespace {

std::vector<std::uint32_t> shuffled_classes(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(ids[i - 1], ids[rng.index(i)]);
    }
    return ids;
}

}  // namespace

Split make_split(const Dataset& ds, SplitStyle style, double unseen_fraction, std::uint64_t seed) {
    if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0))
        throw std::invalid_argument("make_split: unseen_fraction must lie in (0,1)");
    if (style == SplitStyle::SCE && !ds.has_super_class())
        throw std::invalid_argument("make_split: SCE style requires super_class metadata");

    const std::size_t C = ds.num_classes;
    std::size_t target = static_cast<std::size_t>(std::llround(unseen_fraction * static_cast<double>(C)));
    target = std::clamp<std::size_t>(target, 1, C - 1);

    Rng rng(seed);
    Split split;
    split.style = style;
    split.seed = seed;
    std::set<std::uint32_t> unseen;

    if (style == SplitStyle::SCE) {
        // whole super-classes go to the unseen side
        std::set<std::int64_t> supers_set(ds.super_class.begin(), ds.super_class.end());
        std::vector<std::int64_t> supers(supers_set.begin(), supers_set.end());
        for (std::size_t i = supers.size(); i > 1; --i) std::swap(supers[i - 1], supers[rng.index(i)]);
        for (std::int64_t sc : supers) {
            if (unseen.size() >= target) break;
            std::size_t members = 0;
            for (std::size_t c = 0; c < C; ++c)
                if (ds.super_class[c] == sc) ++members;
            if (unseen.size() + members > C - 1) continue;  // keep at least one seen class
            for (std::size_t c = 0; c < C; ++c)
                if (ds.super_class[c] == sc) unseen.insert(static_cast<std::uint32_t>(c));
        }
    } else {
        auto order = shuffled_classes(C, rng);
        // first pass honors the one-seen-per-super-class constraint
        std::map<std::int64_t, std::size_t> seen_per_super;
        if (ds.has_super_class()) {
            for (std::size_t c = 0; c < C; ++c) seen_per_super[ds.super_class[c]] += 1;
        }
        for (auto c : order) {
            if (unseen.size() >= target) break;
            if (ds.has_super_class()) {
                auto& cnt = seen_per_super[ds.super_class[c]];
                if (cnt <= 1) continue;  // would orphan the super-class
                cnt -= 1;
            }
            unseen.insert(c);
        }
        for (auto c : order) {
            if (unseen.size() >= target) break;
            unseen.insert(c);
        }
    }

    for (std::uint32_t c = 0; c < C; ++c) {
        if (unseen.count(c))
            split.unseen_classes.push_back(c);
        else
            split.seen_classes.push_back(c);
    }
    return split;
}

ClassStats class_means(const Dataset& ds, const std::vector<std::uint32_t>& classes) {
    ClassStats stats;
    stats.classes = classes;
    stats.dim = ds.d_v;
    stats.means.assign(classes.size() * ds.d_v, 0.0);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const std::uint32_t c = classes[i];
        std::size_t count = 0;
        double* mean = &stats.means[i * ds.d_v];
        for (std::size_t s = 0; s < ds.num_samples; ++s) {
            if (ds.labels[s] != c) continue;
            const double* row = ds.visual_row(s);
            for (std::size_t j = 0; j < ds.d_v; ++j) mean[j] += row[j];
            ++count;
        }
        if (count == 0)
            throw std::invalid_argument("class_means: class " + std::to_string(c) + " has no samples");
        for (std::size_t j = 0; j < ds.d_v; ++j) mean[j] /= static_cast<double>(count);
    }
    return stats;
}

// ---- synthetic generator ----

namespace {

struct SynthGroundTruth {
    std::vector<double> map;       // d_s x d_v
    std::vector<double> semantic;  // C x d_s, sparse non-negative, L2-normalized rows
    std::vector<double> means;     // C x d_v
};

SynthGroundTruth synth_ground_truth(const SynthConfig& cfg, Rng& rng) {
    SynthGroundTruth gt;
    gt.map.resize(cfg.d_s * cfg.d_v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_s));
    for (auto& v : gt.map) v = rng.normal() * scale;

    gt.semantic.assign(cfg.num_classes * cfg.d_s, 0.0);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        double norm_sq = 0.0;
        while (norm_sq == 0.0) {
            for (std::size_t j = 0; j < cfg.d_s; ++j) {
                const double keep = rng.uniform();
                const double mag = std::fabs(rng.normal());
                gt.semantic[c * cfg.d_s + j] = keep < 0.5 ? mag : 0.0;
            }
            norm_sq = 0.0;
            for (std::size_t j = 0; j < cfg.d_s; ++j) {
                const double v = gt.semantic[c * cfg.d_s + j];
                norm_sq += v * v;
            }
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t j = 0; j < cfg.d_s; ++j) gt.semantic[c * cfg.d_s + j] *= inv;
    }

    gt.means.assign(cfg.num_classes * cfg.d_v, 0.0);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t k = 0; k < cfg.d_s; ++k) {
            const double a = gt.semantic[c * cfg.d_s + k];
            if (a == 0.0) continue;
            for (std::size_t j = 0; j < cfg.d_v; ++j) {
                gt.means[c * cfg.d_v + j] += a * gt.map[k * cfg.d_v + j];
            }
        }
    }
    return gt;
}

// plain k-means over semantic rows, deterministic under the rng
std::vector<std::int64_t> cluster_semantics(const std::vector<double>& semantic, std::size_t C,
                                            std::size_t d, std::size_t k, Rng& rng) {
    std::vector<std::uint32_t> order(C);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = C; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    std::vector<double> centers(k * d);
    for (std::size_t i = 0; i < k; ++i)
        std::copy(&semantic[order[i] * d], &semantic[order[i] * d] + d, &centers[i * d]);

    std::vector<std::int64_t> assign(C, 0);
    for (int iter = 0; iter < 25; ++iter) {
        for (std::size_t c = 0; c < C; ++c) {
            double best = std::numeric_limits<double>::max();
            for (std::size_t j = 0; j < k; ++j) {
                double dist = 0.0;
                for (std::size_t t = 0; t < d; ++t) {
                    const double diff = semantic[c * d + t] - centers[j * d + t];
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    assign[c] = static_cast<std::int64_t>(j);
                }
            }
        }
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t c = 0; c < C; ++c) {
            const auto j = static_cast<std::size_t>(assign[c]);
            for (std::size_t t = 0; t < d; ++t) sums[j * d + t] += semantic[c * d + t];
            counts[j] += 1;
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;  // empty cluster keeps its center
            for (std::size_t t = 0; t < d; ++t)
                centers[j * d + t] = sums[j * d + t] / static_cast<double>(counts[j]);
        }
    }
    return assign;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.num_seen >= cfg.num_classes)
        throw std::invalid_argument("generate_synthetic: num_seen must be < num_classes");
    if (cfg.noise_scale < 0.0)
        throw std::invalid_argument("generate_synthetic: noise_scale must be >= 0");

    Rng rng(cfg.seed);
    SynthGroundTruth gt = synth_ground_truth(cfg, rng);

    Dataset ds;
    ds.num_classes = cfg.num_classes;
    ds.d_s = cfg.d_s;
    ds.d_v = cfg.d_v;
    ds.semantic = gt.semantic;
    ds.num_samples = cfg.num_classes * cfg.samples_per_class;
    ds.visual.resize(ds.num_samples * cfg.d_v);
    ds.labels.resize(ds.num_samples);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03zu", c);
        ds.class_names.emplace_back(name);
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
            const std::size_t i = c * cfg.samples_per_class + s;
            ds.labels[i] = static_cast<std::uint32_t>(c);
            for (std::size_t j = 0; j < cfg.d_v; ++j) {
                ds.visual[i * cfg.d_v + j] =
                    gt.means[c * cfg.d_v + j] + cfg.noise_scale * rng.normal();
            }
        }
    }
    if (cfg.num_superclasses > 0) {
        ds.super_class = cluster_semantics(gt.semantic, cfg.num_classes, cfg.d_s,
                                           std::min(cfg.num_superclasses, cfg.num_classes), rng);
    }
    ds.validate();
    return ds;
}

std::vector<double> synthetic_class_means(const SynthConfig& cfg) {
    Rng rng(cfg.seed);
    return synth_ground_truth(cfg, rng).means;
}

double median_intermean_distance(const SynthConfig& cfg) {
    const auto means = synthetic_class_means(cfg);
    std::vector<double> dists;
    for (std::size_t a = 0; a < cfg.num_classes; ++a) {
        for (std::size_t b = a + 1; b < cfg.num_classes; ++b) {
            double d = 0.0;
            for (std::size_t j = 0; j < cfg.d_v; ++j) {
                const double diff = means[a * cfg.d_v + j] - means[b * cfg.d_v + j];
                d += diff * diff;
            }
            dists.push_back(std::sqrt(d));
        }
    }
    if (dists.empty()) throw std::invalid_argument("median_intermean_distance: need >= 2 classes");
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    return n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

}  // namespace zsl
