#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace zsl {

// One raw text document per class, ordered by class id.
struct Corpus {
    std::vector<std::string> class_ids;
    std::vector<std::string> documents;

    std::size_t size() const { return documents.size(); }
};

struct Vocabulary {
    std::vector<std::string> tokens;                      // lexicographic order
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::size_t> doc_freq;                    // per token
};

struct TfidfMatrix {
    std::size_t num_docs = 0;
    std::size_t vocab_size = 0;
    std::vector<double> values;  // row-major, num_docs x vocab_size

    double at(std::size_t d, std::size_t t) const { return values[d * vocab_size + t]; }
};

// Lowercase, split on non-alphanumeric runs, drop empties.
std::vector<std::string> tokenize(const std::string& text);

// Tokens appearing in at least min_df documents, sorted lexicographically.
Vocabulary build_vocab(const Corpus& corpus, std::size_t min_df = 1);

// tf = raw count / document token count; idf = ln((1+N)/(1+df)) + 1.
// Rows with any nonzero entry are L2-normalized.
TfidfMatrix tfidf(const Corpus& corpus, const Vocabulary& vocab);

// Reads one UTF-8 file per class from a directory; filename = class id.
Corpus load_corpus(const std::string& dir);

}  // namespace zsl
