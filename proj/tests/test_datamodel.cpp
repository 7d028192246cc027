#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "zslfeat/dataset.hpp"

using namespace zsl;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset() {
    Dataset ds;
    ds.num_samples = 6;
    ds.num_classes = 3;
    ds.d_v = 2;
    ds.d_s = 2;
    ds.visual = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    ds.semantic = {0.5, 0.25, 0.75, 0.0, 0.0, 1.0};
    ds.labels = {0, 0, 1, 1, 2, 2};
    ds.class_names = {"ant", "bee", "cat"};
    ds.validate();
    return ds;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("dataset round trips through disk at f32 precision") {
    TempDir tmp("zslfeat_ds_roundtrip");
    Dataset ds = tiny_dataset();
    ds.super_class = {0, 0, 1};
    save_dataset(ds, tmp.path.string());
    Dataset back = load_dataset(tmp.path.string());

    CHECK(back.num_samples == ds.num_samples);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.d_v == ds.d_v);
    CHECK(back.d_s == ds.d_s);
    CHECK(back.labels == ds.labels);
    CHECK(back.class_names == ds.class_names);
    CHECK(back.super_class == ds.super_class);
    for (std::size_t i = 0; i < ds.visual.size(); ++i)
        CHECK(back.visual[i] == static_cast<double>(static_cast<float>(ds.visual[i])));
    for (std::size_t i = 0; i < ds.semantic.size(); ++i)
        CHECK(back.semantic[i] == static_cast<double>(static_cast<float>(ds.semantic[i])));
}

TEST_CASE("dataset loading rejects truncated payloads and bad labels") {
    TempDir tmp("zslfeat_ds_truncated");
    Dataset ds = tiny_dataset();
    save_dataset(ds, tmp.path.string());

    // chop the last 4 bytes off visual.bin
    const fs::path vpath = tmp.path / "visual.bin";
    fs::resize_file(vpath, fs::file_size(vpath) - 4);
    CHECK_THROWS(load_dataset(tmp.path.string()));

    TempDir tmp2("zslfeat_ds_badlabel");
    ds = tiny_dataset();
    ds.labels[5] = 2;  // fine
    save_dataset(ds, tmp2.path.string());
    // rewrite labels.bin with an out-of-range label
    std::ofstream lab(tmp2.path / "labels.bin", std::ios::binary);
    std::uint32_t raw[6] = {0, 0, 1, 1, 2, 9};
    lab.write(reinterpret_cast<const char*>(raw), sizeof raw);
    lab.close();
    CHECK_THROWS(load_dataset(tmp2.path.string()));
}

TEST_CASE("validate catches inconsistent field sizes") {
    Dataset ds = tiny_dataset();
    ds.visual.pop_back();
    CHECK_THROWS(ds.validate());

    ds = tiny_dataset();
    ds.class_names.pop_back();
    CHECK_THROWS(ds.validate());
}

TEST_CASE("split round trips and rejects overlap") {
    TempDir tmp("zslfeat_split");
    Split s;
    s.seen_classes = {0, 2};
    s.unseen_classes = {1};
    s.style = SplitStyle::SCE;
    s.seed = 77;
    const std::string path = (tmp.path / "split.json").string();
    save_split(s, path);
    Split back = load_split(path);
    CHECK(back.seen_classes == s.seen_classes);
    CHECK(back.unseen_classes == s.unseen_classes);
    CHECK(back.style == SplitStyle::SCE);
    CHECK(back.seed == 77);
    CHECK(back.is_seen(2));
    CHECK_FALSE(back.is_seen(1));

    s.unseen_classes = {0};
    save_split(s, path);
    CHECK_THROWS(load_split(path));
}

TEST_CASE("random split partitions classes and is seed-deterministic") {
    SynthConfig cfg;
    cfg.num_classes = 20;
    cfg.num_seen = 14;
    cfg.samples_per_class = 3;
    cfg.seed = 5;
    Dataset ds = generate_synthetic(cfg);

    Split a = make_split(ds, SplitStyle::SCS, 0.3, 11);
    Split b = make_split(ds, SplitStyle::SCS, 0.3, 11);
    Split c = make_split(ds, SplitStyle::SCS, 0.3, 12);
    CHECK(a.seen_classes == b.seen_classes);
    CHECK(a.unseen_classes == b.unseen_classes);
    CHECK(a.unseen_classes != c.unseen_classes);

    CHECK(a.unseen_classes.size() == 6);
    CHECK(a.seen_classes.size() == 14);
    std::set<std::uint32_t> all(a.seen_classes.begin(), a.seen_classes.end());
    all.insert(a.unseen_classes.begin(), a.unseen_classes.end());
    CHECK(all.size() == 20);

    CHECK_THROWS_AS(make_split(ds, SplitStyle::SCS, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_split(ds, SplitStyle::SCS, 1.0, 1), std::invalid_argument);
    // no super-class metadata present
    CHECK_THROWS_AS(make_split(ds, SplitStyle::SCE, 0.3, 1), std::invalid_argument);
}

TEST_CASE("overlap-aware split keeps every super-class represented on the seen side") {
    SynthConfig cfg;
    cfg.num_classes = 24;
    cfg.num_seen = 16;
    cfg.samples_per_class = 2;
    cfg.seed = 9;
    cfg.num_superclasses = 6;
    Dataset ds = generate_synthetic(cfg);
    REQUIRE(ds.has_super_class());

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Split s = make_split(ds, SplitStyle::SCS, 0.4, seed);
        std::set<std::int64_t> all_supers(ds.super_class.begin(), ds.super_class.end());
        std::set<std::int64_t> seen_supers;
        for (auto c : s.seen_classes) seen_supers.insert(ds.super_class[c]);
        CHECK(seen_supers == all_supers);
    }
}

TEST_CASE("disjoint split removes whole super-classes") {
    SynthConfig cfg;
    cfg.num_classes = 24;
    cfg.num_seen = 16;
    cfg.samples_per_class = 2;
    cfg.seed = 9;
    cfg.num_superclasses = 6;
    Dataset ds = generate_synthetic(cfg);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Split s = make_split(ds, SplitStyle::SCE, 0.3, seed);
        CHECK_FALSE(s.unseen_classes.empty());
        std::set<std::int64_t> seen_supers, unseen_supers;
        for (auto c : s.seen_classes) seen_supers.insert(ds.super_class[c]);
        for (auto c : s.unseen_classes) unseen_supers.insert(ds.super_class[c]);
        for (auto sc : unseen_supers) CHECK(seen_supers.count(sc) == 0);
    }
}

TEST_CASE("class means match a hand computation") {
    Dataset ds = tiny_dataset();
    ClassStats stats = class_means(ds, {0, 2});
    CHECK(stats.mean_of(0)[0] == doctest::Approx(2.0));
    CHECK(stats.mean_of(0)[1] == doctest::Approx(3.0));
    CHECK(stats.mean_of(2)[0] == doctest::Approx(10.0));
    CHECK(stats.mean_of(2)[1] == doctest::Approx(11.0));
    CHECK_THROWS_AS(stats.mean_of(1), std::invalid_argument);
}

TEST_CASE("synthetic dataset is deterministic and structurally sound") {
    SynthConfig cfg;
    cfg.num_classes = 8;
    cfg.num_seen = 5;
    cfg.samples_per_class = 10;
    cfg.d_s = 12;
    cfg.d_v = 16;
    cfg.noise_scale = 0.05;
    cfg.seed = 314;
    Dataset a = generate_synthetic(cfg);
    Dataset b = generate_synthetic(cfg);
    CHECK(a.visual == b.visual);
    CHECK(a.semantic == b.semantic);
    CHECK(a.labels == b.labels);

    // semantic rows: non-negative, sparse, unit norm
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        double norm = 0.0;
        std::size_t zeros = 0;
        for (std::size_t j = 0; j < cfg.d_s; ++j) {
            const double v = a.semantic[c * cfg.d_s + j];
            CHECK(v >= 0.0);
            if (v == 0.0) ++zeros;
            norm += v * v;
        }
        CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-12);
        CHECK(zeros > 0);
    }
}

TEST_CASE("noise-free synthetic samples sit exactly on the true class means") {
    SynthConfig cfg;
    cfg.num_classes = 6;
    cfg.num_seen = 4;
    cfg.samples_per_class = 4;
    cfg.d_s = 8;
    cfg.d_v = 10;
    cfg.noise_scale = 0.0;
    cfg.seed = 2718;
    Dataset ds = generate_synthetic(cfg);
    const auto means = synthetic_class_means(cfg);
    for (std::size_t i = 0; i < ds.num_samples; ++i) {
        const std::size_t c = ds.labels[i];
        for (std::size_t j = 0; j < cfg.d_v; ++j)
            CHECK(ds.visual[i * cfg.d_v + j] == doctest::Approx(means[c * cfg.d_v + j]).epsilon(1e-14));
    }
}

TEST_CASE("noisy samples classify to the nearest true mean when noise is small") {
    SynthConfig cfg;
    cfg.num_classes = 10;
    cfg.num_seen = 7;
    cfg.samples_per_class = 20;
    cfg.d_s = 16;
    cfg.d_v = 24;
    cfg.seed = 161;
    cfg.noise_scale = 0.02 * median_intermean_distance(cfg);
    Dataset ds = generate_synthetic(cfg);
    const auto means = synthetic_class_means(cfg);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.num_samples; ++i) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < cfg.d_v; ++j) {
                const double diff = ds.visual[i * cfg.d_v + j] - means[c * cfg.d_v + j];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        if (arg == ds.labels[i]) ++correct;
    }
    CHECK(correct == ds.num_samples);
}

TEST_CASE("median inter-mean distance is positive and scale-stable across seeds") {
    SynthConfig cfg;
    cfg.num_classes = 12;
    cfg.num_seen = 8;
    cfg.d_s = 16;
    cfg.d_v = 32;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        cfg.seed = seed;
        const double d = median_intermean_distance(cfg);
        CHECK(d > 0.1);
        CHECK(d < 10.0);
    }
}
