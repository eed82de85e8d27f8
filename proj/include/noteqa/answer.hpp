#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"
#include "noteqa/text.hpp"
#include "noteqa/tfidf.hpp"

// Second step: turn a free-text draft plus the selected essential sentences
// into a format-compliant, citation-grounded answer.

namespace noteqa::answer {

struct DraftAnswer {
    std::string case_id;
    std::string text;  // arbitrary model output
};

struct AnswerSentence {
    std::string text;
    std::vector<int> citations;  // non-empty, ascending, unique
};

struct CitedAnswer {
    std::string case_id;
    std::vector<AnswerSentence> sentences;
};

// --- Sentence handling -------------------------------------------------------

// Line breaks end sentences; within a line, '.', '!' or '?' followed by
// whitespace (or end of line) ends one, with the terminator kept.
// Abbreviations get no special handling.
inline std::vector<std::string> split_sentences(std::string_view draft) {
    std::vector<std::string> out;
    auto flush = [&out](std::string_view fragment) {
        std::string trimmed = text::trim(fragment);
        if (!trimmed.empty()) out.push_back(std::move(trimmed));
    };
    size_t line_start = 0;
    while (line_start <= draft.size()) {
        size_t line_end = draft.find('\n', line_start);
        std::string_view line = draft.substr(
            line_start, line_end == std::string_view::npos ? std::string_view::npos
                                                           : line_end - line_start);
        size_t start = 0;
        for (size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if ((c == '.' || c == '!' || c == '?') &&
                (i + 1 == line.size() || text::is_space(line[i + 1]))) {
                flush(line.substr(start, i - start + 1));
                start = i + 1;
            }
        }
        if (start < line.size()) flush(line.substr(start));
        if (line_end == std::string_view::npos) break;
        line_start = line_end + 1;
    }
    return out;
}

// Section headers and similar non-content lines: colon-terminal, very short,
// or carrying no lowercase letters at all.
inline bool is_title_like(std::string_view s) {
    std::string trimmed = text::trim(s);
    if (trimmed.empty()) return true;
    if (trimmed.back() == ':') return true;
    if (text::whitespace_tokens(trimmed).size() <= 3) return true;
    for (char c : trimmed)
        if (std::islower(static_cast<unsigned char>(c))) return false;
    return true;
}

inline size_t count_words_excluding_citations(std::string_view s) {
    return text::whitespace_tokens(text::strip_citation_spans(s)).size();
}

// Greedy prefix under the word budget, preserving draft order. If even the
// first sentence is over budget it is hard-truncated to the budget.
inline std::vector<std::string> fit_word_budget(const std::vector<std::string>& sentences,
                                                size_t budget = 75) {
    if (budget < 1) throw ValidationError("word budget must be at least 1");
    if (sentences.empty()) throw AssemblyError("no sentences to fit into the word budget");
    std::vector<std::string> kept;
    size_t used = 0;
    for (const std::string& s : sentences) {
        size_t words = count_words_excluding_citations(s);
        if (used + words > budget) break;
        kept.push_back(s);
        used += words;
    }
    if (kept.empty()) {
        std::vector<std::string> tokens =
            text::whitespace_tokens(text::strip_citation_spans(sentences.front()));
        tokens.resize(std::min(tokens.size(), budget));
        std::string truncated;
        for (const std::string& t : tokens) {
            if (!truncated.empty()) truncated.push_back(' ');
            truncated += t;
        }
        kept.push_back(std::move(truncated));
    }
    return kept;
}

namespace detail {

struct Candidate {
    const corpus::Sentence* sentence;
    double score;
};

}  // namespace detail

// Cites, for each kept answer sentence, every non-title essential scoring
// within `band` of that sentence's best lexical score, capped. Ties prefer
// the lower sentence id; the argmax always survives the cap.
inline CitedAnswer attach_citations(const std::string& case_id,
                                    const std::vector<std::string>& kept,
                                    const std::vector<corpus::Sentence>& essentials,
                                    size_t cap = 3, double band = 0.9) {
    if (essentials.empty())
        throw AssemblyError("case " + case_id + ": no essential sentences to cite");
    if (cap < 1) throw ValidationError("citation cap must be at least 1");

    std::vector<const corpus::Sentence*> candidates;
    for (const corpus::Sentence& e : essentials)
        if (!is_title_like(e.text)) candidates.push_back(&e);
    if (candidates.empty())  // all title-like: better an odd citation than none
        for (const corpus::Sentence& e : essentials) candidates.push_back(&e);

    CitedAnswer out;
    out.case_id = case_id;
    for (const std::string& sentence : kept) {
        std::vector<std::string> fit_docs;
        fit_docs.reserve(candidates.size() + 1);
        for (const corpus::Sentence* c : candidates) fit_docs.push_back(c->text);
        fit_docs.push_back(sentence);
        tfidf::Scorer scorer = tfidf::Scorer::fit(fit_docs);

        std::vector<detail::Candidate> scored;
        scored.reserve(candidates.size());
        for (const corpus::Sentence* c : candidates)
            scored.push_back({c, scorer.score(sentence, c->text)});
        std::sort(scored.begin(), scored.end(),
                  [](const detail::Candidate& a, const detail::Candidate& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.sentence->id < b.sentence->id;
                  });
        double cutoff = band * scored.front().score;
        std::vector<int> citations;
        for (const detail::Candidate& c : scored) {
            if (citations.size() >= cap) break;
            if (c.score < cutoff && !citations.empty()) break;
            citations.push_back(c.sentence->id);
        }
        std::sort(citations.begin(), citations.end());
        out.sentences.push_back({sentence, std::move(citations)});
    }
    return out;
}

// --- Serialization -----------------------------------------------------------

inline std::string serialize(const CitedAnswer& a, size_t budget = 75) {
    if (a.sentences.empty())
        throw AssemblyError("case " + a.case_id + ": refusing to serialize an empty answer");
    std::string out;
    size_t words = 0;
    for (const AnswerSentence& s : a.sentences) {
        if (s.citations.empty())
            throw AssemblyError("case " + a.case_id + ": sentence without citations");
        if (!std::is_sorted(s.citations.begin(), s.citations.end()) ||
            std::adjacent_find(s.citations.begin(), s.citations.end()) != s.citations.end())
            throw AssemblyError("case " + a.case_id + ": citations not strictly ascending");
        for (int id : s.citations)
            if (id <= 0) throw AssemblyError("case " + a.case_id + ": non-positive citation id");
        if (s.text.find('\n') != std::string::npos || s.text.find('|') != std::string::npos)
            throw AssemblyError("case " + a.case_id + ": sentence text contains '|' or newline");
        std::string trimmed = text::trim(s.text);
        if (trimmed.empty())
            throw AssemblyError("case " + a.case_id + ": empty sentence text");
        words += text::whitespace_tokens(trimmed).size();
        out += trimmed;
        out += " |";
        for (size_t i = 0; i < s.citations.size(); ++i) {
            if (i) out.push_back(',');
            out += std::to_string(s.citations[i]);
        }
        out += "|\n";
    }
    if (words > budget)
        throw AssemblyError("case " + a.case_id + ": answer exceeds the " +
                            std::to_string(budget) + "-word budget");
    return out;
}

// Draft → clean sentences → budget → citations → CitedAnswer. Citation spans
// and stray bars are scrubbed from the draft so each serialized line carries
// exactly one citation group.
inline CitedAnswer assemble(const std::string& case_id, const std::string& draft,
                            const std::vector<corpus::Sentence>& essentials,
                            size_t budget = 75, size_t cap = 3, double band = 0.9) {
    std::vector<std::string> sentences;
    for (const std::string& raw : split_sentences(draft)) {
        std::string cleaned = text::strip_citation_spans(raw);
        std::replace(cleaned.begin(), cleaned.end(), '|', ' ');
        cleaned = text::normalize_inline(cleaned);
        if (!cleaned.empty()) sentences.push_back(std::move(cleaned));
    }
    if (sentences.empty())
        throw AssemblyError("case " + case_id + ": draft contains no usable sentences");
    return attach_citations(case_id, fit_word_budget(sentences, budget), essentials, cap, band);
}

// --- End-to-end repair -------------------------------------------------------

namespace detail {

// Matches one citation group at position i: |1,2|, [3] or (4), spaces allowed
// around ids. Returns ids and the end position, or nullopt.
inline std::optional<std::pair<std::vector<long long>, size_t>> match_citation_group(
    std::string_view s, size_t i) {
    char open = s[i];
    char close = open == '[' ? ']' : open == '(' ? ')' : open == '|' ? '|' : '\0';
    if (close == '\0') return std::nullopt;
    size_t j = i + 1;
    std::vector<long long> ids;
    while (true) {
        while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
        size_t digits_start = j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        if (j == digits_start) return std::nullopt;
        if (j - digits_start <= 9)
            ids.push_back(std::stoll(std::string(s.substr(digits_start, j - digits_start))));
        while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
        if (j < s.size() && s[j] == ',') {
            ++j;
            continue;
        }
        break;
    }
    if (j >= s.size() || s[j] != close) return std::nullopt;
    return std::make_pair(std::move(ids), j + 1);
}

inline std::string tighten_punctuation(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (!out.empty() && out.back() == ' ' &&
            (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'))
            out.back() = c;
        else
            out.push_back(c);
    }
    return out;
}

}  // namespace detail

// Best-effort normalization of a raw end-to-end completion: citation variants
// ([2], (2), | 2 |, trailing-punctuation forms) become one canonical group per
// line, ids outside valid_ids are dropped, and lines left without any valid
// citation are removed. May return an empty string; callers fall back to the
// similarity-citation path then.
inline std::string repair_end_to_end(std::string_view raw, const std::set<int>& valid_ids) {
    std::string out;
    size_t line_start = 0;
    while (line_start <= raw.size()) {
        size_t line_end = raw.find('\n', line_start);
        std::string_view line = raw.substr(
            line_start,
            line_end == std::string_view::npos ? std::string_view::npos : line_end - line_start);

        std::string kept_text;
        std::set<int> ids;
        size_t i = 0;
        while (i < line.size()) {
            if (line[i] == '[' || line[i] == '(' || line[i] == '|') {
                if (auto group = detail::match_citation_group(line, i)) {
                    for (long long id : group->first)
                        if (id > 0 && id <= std::numeric_limits<int>::max() &&
                            valid_ids.count(static_cast<int>(id)))
                            ids.insert(static_cast<int>(id));
                    i = group->second;
                    continue;
                }
            }
            kept_text.push_back(line[i] == '|' ? ' ' : line[i]);
            ++i;
        }

        std::string normalized =
            detail::tighten_punctuation(text::normalize_inline(kept_text));
        if (!normalized.empty() && !ids.empty()) {
            out += normalized;
            out += " |";
            bool first = true;
            for (int id : ids) {
                if (!first) out.push_back(',');
                out += std::to_string(id);
                first = false;
            }
            out += "|\n";
        }
        if (line_end == std::string_view::npos) break;
        line_start = line_end + 1;
    }
    return out;
}

// --- Submission file ---------------------------------------------------------

struct SubmissionEntry {
    std::string case_id;
    std::string answer;  // serialized lines, "text |ids|\n" each
};

inline corpus::json submission_to_json(const std::vector<SubmissionEntry>& entries) {
    corpus::json arr = corpus::json::array();
    for (const SubmissionEntry& e : entries)
        arr.push_back({{"case_id", e.case_id}, {"answer", e.answer}});
    return arr;
}

inline std::vector<SubmissionEntry> submission_from_json(const corpus::json& j) {
    if (!j.is_array()) throw ValidationError("submission must be a JSON array");
    std::vector<SubmissionEntry> out;
    std::set<std::string> seen;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("case_id") || !item.contains("answer"))
            throw ValidationError("submission entries need \"case_id\" and \"answer\"");
        SubmissionEntry e{item.at("case_id").get<std::string>(),
                          item.at("answer").get<std::string>()};
        if (!seen.insert(e.case_id).second)
            throw ValidationError("duplicate submission entry for case " + e.case_id);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace noteqa::answer
