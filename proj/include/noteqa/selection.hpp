#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"
#include "noteqa/genclient.hpp"
#include "noteqa/logging.hpp"
#include "noteqa/prf.hpp"
#include "noteqa/text.hpp"
#include "noteqa/tfidf.hpp"

// First-step essential-sentence identification: score-and-threshold reranking
// with Youden calibration, prompted list extraction, and prompted per-sentence
// binary classification.

namespace noteqa::selection {

enum class Strategy { rerank, prompt_list, prompt_individual };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::rerank: return "rerank";
        case Strategy::prompt_list: return "prompt_list";
        case Strategy::prompt_individual: return "prompt_individual";
    }
    return "rerank";
}

struct ScoredSentence {
    int sentence_id = 0;
    double score = 0.0;  // higher = more relevant
};

struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct CalibratedThreshold {
    double value = 0.0;
    double youden_j = 0.0;  // tpr - fpr at value
    std::string source_split;
};

struct SelectionResult {
    std::string case_id;
    std::set<int> essentials;
    std::optional<std::vector<ScoredSentence>> scores;  // present iff strategy == rerank
    Strategy strategy = Strategy::rerank;
    std::optional<CalibratedThreshold> threshold;
};

// --- Query and scoring -------------------------------------------------------

// Reranker query: the patient's narrative and the clinician's question,
// concatenated with a newline.
inline std::string build_query(const corpus::Case& c) {
    if (c.patient_narrative.empty())
        log::warn("case " + c.case_id + ": empty patient narrative in query");
    return c.patient_narrative + "\n" + c.clinician_question;
}

class SentenceScorer {
  public:
    virtual ~SentenceScorer() = default;
    virtual std::vector<double> score(const std::string& query,
                                      const std::vector<std::string>& documents) = 0;
    virtual std::string id() const = 0;
};

// Built-in scorer: TF-IDF cosine with the IDF fitted on the case's own
// sentences plus the query. Cases are independent; nothing leaks across them.
class LexicalScorer : public SentenceScorer {
  public:
    std::vector<double> score(const std::string& query,
                              const std::vector<std::string>& documents) override {
        std::vector<std::string> fit_docs = documents;
        fit_docs.push_back(query);
        tfidf::Scorer scorer = tfidf::Scorer::fit(fit_docs);
        std::vector<double> out;
        out.reserve(documents.size());
        for (const std::string& doc : documents) out.push_back(scorer.score(query, doc));
        return out;
    }

    std::string id() const override { return "lexical"; }
};

inline std::vector<ScoredSentence> score_sentences(const corpus::Case& c,
                                                   SentenceScorer& scorer) {
    std::string query = build_query(c);
    std::vector<std::string> documents;
    documents.reserve(c.sentences.size());
    for (const corpus::Sentence& s : c.sentences) documents.push_back(s.text);

    std::vector<double> raw;
    try {
        raw = scorer.score(query, documents);
    } catch (const BackendError& e) {
        throw BackendError("case " + c.case_id + ": " + e.what());
    }
    if (raw.size() != documents.size())
        throw BackendError("case " + c.case_id + ": score arity mismatch: " +
                           std::to_string(raw.size()) + " scores for " +
                           std::to_string(documents.size()) + " sentences");

    std::vector<ScoredSentence> scored;
    scored.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i]))
            throw BackendError("case " + c.case_id + ": non-finite score for sentence " +
                               std::to_string(c.sentences[i].id));
        scored.push_back({c.sentences[i].id, raw[i]});
    }
    return scored;
}

// --- ROC and Youden calibration ----------------------------------------------

// Classification rule everywhere: score >= threshold predicts essential.
// The sweep starts at a +inf sentinel (nothing predicted) and visits every
// distinct score descending, so (0,0) and (1,1) are always endpoints.
inline std::vector<RocPoint> roc_curve(const std::vector<std::pair<double, bool>>& labeled) {
    long positives = 0, negatives = 0;
    for (const auto& [score, is_positive] : labeled) {
        if (!std::isfinite(score)) throw ValidationError("non-finite score in ROC input");
        is_positive ? ++positives : ++negatives;
    }
    if (positives == 0 || negatives == 0)
        throw CalibrationError(
            "degenerate labels: calibration needs at least one positive and one negative");

    std::vector<std::pair<double, bool>> sorted = labeled;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<RocPoint> curve;
    curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long tp = 0, fp = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        double threshold = sorted[i].first;
        while (i < sorted.size() && sorted[i].first == threshold) {
            sorted[i].second ? ++tp : ++fp;
            ++i;
        }
        curve.push_back({threshold, static_cast<double>(tp) / positives,
                         static_cast<double>(fp) / negatives});
    }
    return curve;
}

// Maximizes J = tpr - fpr over the sweep. Ties go to the higher threshold
// (stricter selection), which is the earlier point in the descending sweep.
inline CalibratedThreshold youden_threshold(const std::vector<RocPoint>& curve,
                                            std::string source_split = "") {
    if (curve.empty()) throw CalibrationError("empty ROC curve");
    const RocPoint* best = &curve.front();
    for (const RocPoint& p : curve)
        if (p.tpr - p.fpr > best->tpr - best->fpr) best = &p;
    if (std::isinf(best->threshold))
        log::warn("scores carry no discrimination; calibrated threshold is the +inf sentinel");
    return {best->threshold, best->tpr - best->fpr, std::move(source_split)};
}

// --- Selection strategies ----------------------------------------------------

// Never selects the empty set: when every score falls below the threshold the
// single top-scored sentence is kept, because every answer sentence must cite
// something downstream.
inline SelectionResult select_by_threshold(const std::string& case_id,
                                           std::vector<ScoredSentence> scores,
                                           const CalibratedThreshold& t) {
    if (scores.empty()) throw ValidationError("case " + case_id + ": no scores to select from");
    SelectionResult result;
    result.case_id = case_id;
    result.strategy = Strategy::rerank;
    result.threshold = t;
    for (const ScoredSentence& s : scores)
        if (s.score >= t.value) result.essentials.insert(s.sentence_id);
    if (result.essentials.empty()) {
        auto top = std::max_element(
            scores.begin(), scores.end(),
            [](const ScoredSentence& a, const ScoredSentence& b) { return a.score < b.score; });
        result.essentials.insert(top->sentence_id);
        log::warn("case " + case_id + ": nothing at or above threshold; falling back to sentence " +
                  std::to_string(top->sentence_id));
    }
    result.scores = std::move(scores);
    return result;
}

namespace detail {

inline std::string numbered_sentences(const std::vector<corpus::Sentence>& sentences) {
    std::string out;
    for (const corpus::Sentence& s : sentences) {
        if (!out.empty()) out.push_back('\n');
        out += std::to_string(s.id) + ": " + s.text;
    }
    return out;
}

inline std::string numbered_sentences(const corpus::Case& c) {
    return numbered_sentences(c.sentences);
}

// Top-1 lexical sentence, used when a prompt strategy yields nothing usable.
inline int lexical_top_sentence(const corpus::Case& c) {
    LexicalScorer scorer;
    std::vector<ScoredSentence> scored = score_sentences(c, scorer);
    auto top = std::max_element(
        scored.begin(), scored.end(),
        [](const ScoredSentence& a, const ScoredSentence& b) { return a.score < b.score; });
    return top->sentence_id;
}

inline std::vector<long long> integer_tokens(std::string_view s) {
    std::vector<long long> out;
    size_t i = 0;
    while (i < s.size()) {
        if (std::isdigit(static_cast<unsigned char>(s[i]))) {
            size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            std::string_view digits = s.substr(i, j - i);
            if (digits.size() <= 9) out.push_back(std::stoll(std::string(digits)));
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

inline std::string first_alpha_token(std::string_view s) {
    size_t i = 0;
    while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
    return text::to_lower_ascii(s.substr(i, j - i));
}

}  // namespace detail

// Bindings shared by every prompt family. Both sentence-bearing slots carry
// the id-annotated breakdown so the model can cite sentence numbers; the
// per-sentence strategy overrides {sentences} with a single note.
inline genclient::Bindings case_bindings(const corpus::Case& c) {
    std::string numbered = detail::numbered_sentences(c);
    return {
        {"id", c.case_id},
        {"patient_narrative", c.patient_narrative},
        {"clinical_question", c.clinician_question},
        {"clinician_question", c.clinician_question},
        {"sentences", numbered},
        {"note_excerpt", numbered},
    };
}

// Parses the completion by extracting every integer token, deduplicating and
// discarding ids that do not belong to the case.
inline SelectionResult select_by_prompt_list(const corpus::Case& c, genclient::Backend& backend,
                                             const genclient::PromptTemplate& tmpl,
                                             int max_tokens = 256) {
    genclient::GenerationRequest request;
    request.messages = genclient::render_template(tmpl, case_bindings(c));
    request.max_tokens = max_tokens;
    genclient::GenerationResult completion = backend.generate(request);

    std::set<int> valid = c.sentence_ids();
    SelectionResult result;
    result.case_id = c.case_id;
    result.strategy = Strategy::prompt_list;
    for (long long id : detail::integer_tokens(completion.text)) {
        if (id > 0 && id <= std::numeric_limits<int>::max() &&
            valid.count(static_cast<int>(id)))
            result.essentials.insert(static_cast<int>(id));
    }
    if (result.essentials.empty()) {
        int top = detail::lexical_top_sentence(c);
        result.essentials.insert(top);
        log::warn("case " + c.case_id + ": no valid sentence ids in list completion \"" +
                  text::normalize_inline(completion.text).substr(0, 80) +
                  "\"; falling back to lexical top sentence " + std::to_string(top));
    }
    return result;
}

// One call per sentence; the first alphabetic token decides. "yes" marks the
// sentence essential, anything else counts as no (with a warning when it is
// not literally a no).
inline SelectionResult select_by_prompt_individual(const corpus::Case& c,
                                                   genclient::Backend& backend,
                                                   const genclient::PromptTemplate& tmpl,
                                                   int max_tokens = 8) {
    SelectionResult result;
    result.case_id = c.case_id;
    result.strategy = Strategy::prompt_individual;

    genclient::Bindings bindings = case_bindings(c);
    for (const corpus::Sentence& s : c.sentences) {
        bindings["sentences"] = s.text;
        genclient::GenerationRequest request;
        request.messages = genclient::render_template(tmpl, bindings);
        request.max_tokens = max_tokens;
        genclient::GenerationResult completion;
        try {
            completion = backend.generate(request);
        } catch (const BackendError& e) {
            throw BackendError("case " + c.case_id + ", sentence " + std::to_string(s.id) +
                               ": " + e.what());
        }
        std::string token = detail::first_alpha_token(completion.text);
        if (token == "yes") {
            result.essentials.insert(s.id);
        } else if (token != "no") {
            log::warn("case " + c.case_id + ", sentence " + std::to_string(s.id) +
                      ": completion \"" + text::normalize_inline(completion.text).substr(0, 40) +
                      "\" is neither yes nor no; counting as no");
        }
    }
    if (result.essentials.empty()) {
        int top = detail::lexical_top_sentence(c);
        result.essentials.insert(top);
        log::warn("case " + c.case_id +
                  ": no sentence judged essential; falling back to lexical top sentence " +
                  std::to_string(top));
    }
    return result;
}

// --- Selection evaluation ----------------------------------------------------

enum class Mode { strict, lenient };

inline prf::MetricBlock evaluate_selection(const std::vector<SelectionResult>& results,
                                           const std::vector<corpus::CaseKey>& keys,
                                           Mode mode) {
    std::vector<std::pair<std::set<int>, std::set<int>>> pairs;
    pairs.reserve(results.size());
    for (const SelectionResult& r : results) {
        const corpus::CaseKey* key = nullptr;
        for (const corpus::CaseKey& k : keys)
            if (k.case_id == r.case_id) key = &k;
        if (!key) throw ValidationError("no gold key for case " + r.case_id);
        pairs.emplace_back(r.essentials, key->positives(mode == Mode::lenient));
    }
    return prf::evaluate(pairs);
}

}  // namespace noteqa::selection
