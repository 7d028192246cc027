#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "zslfeat/dataset.hpp"
#include "zslfeat/evaluation.hpp"
#include "zslfeat/rng.hpp"
#include "zslfeat/tensor.hpp"
#include "zslfeat/textfeat.hpp"
#include "zslfeat/training.hpp"

using namespace zsl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad) {
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = rng.normal();
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

void bm_matmul_forward(benchmark::State& state) {
    const std::size_t n = state.range(0);
    Rng rng(1);
    Tensor a = random_tensor({n, n}, rng, false);
    Tensor b = random_tensor({n, n}, rng, false);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul_forward)->Arg(64)->Arg(256);

void bm_mlp_backward(benchmark::State& state) {
    const std::size_t b = state.range(0);
    Rng rng(2);
    Tensor x = random_tensor({b, 64}, rng, false);
    Tensor w1 = random_tensor({64, 256}, rng, true);
    Tensor w2 = random_tensor({256, 16}, rng, true);
    for (auto _ : state) {
        Tensor loss = mean_all(mul_scalar(tanh_op(matmul(leaky_relu(matmul(x, w1), 0.2), w2)), 1.0));
        backward(loss);
        w1.zero_grad();
        w2.zero_grad();
    }
}
BENCHMARK(bm_mlp_backward)->Arg(16)->Arg(64);

void bm_knn_classify(benchmark::State& state) {
    Rng rng(3);
    ReferenceSet refs;
    refs.dim = 64;
    for (int i = 0; i < 600; ++i) {
        double row[64];
        for (double& v : row) v = rng.normal();
        refs.append(row, static_cast<std::uint32_t>(rng.index(10)));
    }
    std::vector<double> queries(300 * 64);
    for (auto& v : queries) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(knn_classify(refs, queries, state.range(0)));
}
BENCHMARK(bm_knn_classify)->Arg(1)->Arg(5);

void bm_tfidf(benchmark::State& state) {
    Rng rng(4);
    Corpus corpus;
    for (int d = 0; d < 50; ++d) {
        std::string doc;
        for (int w = 0; w < 400; ++w) doc += "word" + std::to_string(rng.index(500)) + " ";
        corpus.class_ids.push_back("c" + std::to_string(d));
        corpus.documents.push_back(doc);
    }
    Vocabulary vocab = build_vocab(corpus, 2);
    for (auto _ : state) benchmark::DoNotOptimize(tfidf(corpus, vocab));
}
BENCHMARK(bm_tfidf);

void bm_train_step(benchmark::State& state) {
    SynthConfig sc;
    sc.num_classes = 10;
    sc.num_seen = 7;
    sc.samples_per_class = 50;
    sc.d_s = 32;
    sc.d_v = 64;
    sc.noise_scale = 0.1;
    sc.seed = 5;
    Dataset ds = generate_synthetic(sc);
    Split split = make_split(ds, SplitStyle::SCS, 0.3, 5);
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.critic_steps = 5;
    cfg.iterations = 1;
    cfg.lr = 1e-3;
    cfg.d_noise = 32;
    cfg.d_hidden = 256;
    cfg.d_hidden_disc = 128;
    Trainer trainer(ds, split, cfg);
    for (auto _ : state) trainer.train_step();
}
BENCHMARK(bm_train_step);

}  // namespace

BENCHMARK_MAIN();
