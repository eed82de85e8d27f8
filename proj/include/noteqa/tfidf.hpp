#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noteqa/text.hpp"

// Deterministic lexical scorer: cosine similarity of L2-normalized TF-IDF
// vectors over lowercased, punctuation-stripped word unigrams. Serves as the
// dependency-free stand-in for a neural reranker; the fit corpus is small and
// local (one case), never shared across cases.

namespace noteqa::tfidf {

// Smoothed IDF, always positive: idf(t) = ln((1 + n) / (1 + df(t))) + 1.
// A term seen in every document still carries weight, so two identical
// non-empty texts always score exactly 1.
class Scorer {
  public:
    static Scorer fit(std::span<const std::string> documents) {
        Scorer scorer;
        scorer.n_documents_ = documents.size();
        for (const std::string& doc : documents) {
            std::map<std::string, int> seen;
            for (const std::string& token : text::tokenize(doc)) seen[token] = 1;
            for (const auto& [token, one] : seen) scorer.document_frequency_[token] += one;
        }
        return scorer;
    }

    double idf(const std::string& token) const {
        auto it = document_frequency_.find(token);
        int df = it == document_frequency_.end() ? 0 : it->second;
        return std::log((1.0 + n_documents_) / (1.0 + df)) + 1.0;
    }

    // L2-normalized TF-IDF vector; empty when the text has no tokens.
    std::map<std::string, double> vectorize(std::string_view s) const {
        std::map<std::string, double> weights;
        for (const std::string& token : text::tokenize(s)) weights[token] += 1.0;
        double norm_sq = 0.0;
        for (auto& [token, w] : weights) {
            w *= idf(token);
            norm_sq += w * w;
        }
        if (norm_sq <= 0.0) return {};
        double norm = std::sqrt(norm_sq);
        for (auto& [token, w] : weights) w /= norm;
        return weights;
    }

    double score(std::string_view a, std::string_view b) const {
        std::map<std::string, double> va = vectorize(a);
        if (va.empty()) return 0.0;
        std::map<std::string, double> vb = vectorize(b);
        if (vb.empty()) return 0.0;
        double dot = 0.0;
        for (const auto& [token, w] : va) {
            auto it = vb.find(token);
            if (it != vb.end()) dot += w * it->second;
        }
        return dot;
    }

  private:
    size_t n_documents_ = 0;
    std::map<std::string, int> document_frequency_;
};

// Standalone pairwise score with the IDF fitted on just the two operands.
inline double lexical_score(const std::string& a, const std::string& b) {
    const std::string docs[] = {a, b};
    return Scorer::fit(docs).score(a, b);
}

}  // namespace noteqa::tfidf
