#include "zslfeat/textfeat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zsl {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_df) {
    if (min_df < 1) throw std::invalid_argument("build_vocab: min_df must be >= 1");
    if (corpus.size() == 0) throw std::invalid_argument("build_vocab: empty corpus");

    std::map<std::string, std::size_t> df;  // ordered -> lexicographic vocab for free
    for (const auto& doc : corpus.documents) {
        std::set<std::string> uniq;
        for (auto& t : tokenize(doc)) uniq.insert(std::move(t));
        for (const auto& t : uniq) df[t] += 1;
    }

    Vocabulary v;
    for (const auto& [tok, freq] : df) {
        if (freq >= min_df) {
            v.index.emplace(tok, v.tokens.size());
            v.tokens.push_back(tok);
            v.doc_freq.push_back(freq);
        }
    }
    if (v.tokens.empty()) throw std::invalid_argument("build_vocab: no token meets min_df");
    return v;
}

TfidfMatrix tfidf(const Corpus& corpus, const Vocabulary& vocab) {
    const std::size_t n_docs = corpus.size();
    const std::size_t n_tok = vocab.tokens.size();
    TfidfMatrix m;
    m.num_docs = n_docs;
    m.vocab_size = n_tok;
    m.values.assign(n_docs * n_tok, 0.0);

    std::vector<double> idf(n_tok);
    for (std::size_t t = 0; t < n_tok; ++t) {
        idf[t] = std::log((1.0 + static_cast<double>(n_docs)) /
                          (1.0 + static_cast<double>(vocab.doc_freq[t]))) +
                 1.0;
    }

    for (std::size_t d = 0; d < n_docs; ++d) {
        auto toks = tokenize(corpus.documents[d]);
        if (toks.empty()) continue;  // zero row stays zero
        std::unordered_map<std::size_t, std::size_t> counts;
        for (const auto& t : toks) {
            auto it = vocab.index.find(t);
            if (it != vocab.index.end()) counts[it->second] += 1;
        }
        const double doc_len = static_cast<double>(toks.size());
        double norm_sq = 0.0;
        for (const auto& [t, c] : counts) {
            const double w = (static_cast<double>(c) / doc_len) * idf[t];
            m.values[d * n_tok + t] = w;
            norm_sq += w * w;
        }
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (const auto& [t, c] : counts) m.values[d * n_tok + t] *= inv;
        }
    }
    return m;
}

Corpus load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::invalid_argument("load_corpus: not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    Corpus c;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw std::runtime_error("load_corpus: cannot read " + f.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        c.class_ids.push_back(f.stem().string());
        c.documents.push_back(ss.str());
    }
    if (c.documents.empty()) throw std::invalid_argument("load_corpus: no files in " + dir);
    return c;
}

}  // namespace zsl
