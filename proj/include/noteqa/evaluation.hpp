#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"
#include "noteqa/prf.hpp"
#include "noteqa/text.hpp"

// Scoring harness: answer-format validation with word-budget truncation,
// citation-based factuality, lexical relevance metrics, and the overall
// aggregation used in the reports.

namespace noteqa::evaluation {

using corpus::json;

// --- Format validation and truncation ----------------------------------------

struct ParsedSubmissionLine {
    std::string text;            // without the citation group
    std::vector<int> citations;  // as written, positive, non-empty
};

struct ParsedAnswer {
    std::vector<ParsedSubmissionLine> lines;
    size_t violations = 0;
    bool truncated = false;
};

namespace detail {

// Strict line grammar: <text> |id[,id]*| with nothing after the group.
inline std::optional<ParsedSubmissionLine> parse_line(std::string_view line) {
    if (line.size() < 3 || line.back() != '|') return std::nullopt;
    size_t open = line.rfind('|', line.size() - 2);
    if (open == std::string_view::npos) return std::nullopt;
    std::string_view inside = line.substr(open + 1, line.size() - open - 2);
    if (inside.empty()) return std::nullopt;

    std::vector<int> ids;
    long long current = 0;
    size_t digits = 0;
    for (char c : inside) {
        if (std::isdigit(static_cast<unsigned char>(c))) {
            if (++digits > 9) return std::nullopt;
            current = current * 10 + (c - '0');
        } else if (c == ',') {
            if (digits == 0) return std::nullopt;
            if (current > 0) ids.push_back(static_cast<int>(current));
            current = 0;
            digits = 0;
        } else {
            return std::nullopt;
        }
    }
    if (digits == 0) return std::nullopt;
    if (current > 0) ids.push_back(static_cast<int>(current));
    if (ids.empty()) return std::nullopt;
    return ParsedSubmissionLine{text::trim(line.substr(0, open)), std::move(ids)};
}

inline std::string join_words(const std::vector<std::string>& words, size_t n) {
    std::string out;
    for (size_t i = 0; i < n && i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

}  // namespace detail

// Parses every line (malformed ones are recorded as violations and excluded),
// then applies the word budget across the parsed lines: the line that would
// cross the budget keeps its citation group with its text cut at the budget
// word — unless nothing of it survives — and everything after it is dropped.
inline ParsedAnswer validate_and_truncate(std::string_view answer, size_t budget = 75) {
    ParsedAnswer out;
    size_t used = 0;
    size_t line_start = 0;
    while (line_start <= answer.size()) {
        size_t line_end = answer.find('\n', line_start);
        std::string trimmed = text::trim(answer.substr(
            line_start,
            line_end == std::string_view::npos ? std::string_view::npos : line_end - line_start));
        if (!trimmed.empty()) {
            std::optional<ParsedSubmissionLine> parsed = detail::parse_line(trimmed);
            if (!parsed) {
                ++out.violations;
            } else if (!out.truncated) {
                std::vector<std::string> words = text::whitespace_tokens(parsed->text);
                if (used + words.size() <= budget) {
                    used += words.size();
                    out.lines.push_back(std::move(*parsed));
                } else {
                    out.truncated = true;
                    size_t keep = budget - used;
                    if (keep > 0) {
                        parsed->text = detail::join_words(words, keep);
                        used = budget;
                        out.lines.push_back(std::move(*parsed));
                    }
                }
            }
        }
        if (line_end == std::string_view::npos) break;
        line_start = line_end + 1;
    }
    return out;
}

// --- Factuality ----------------------------------------------------------------

struct CaseAnswer {
    std::string case_id;
    ParsedAnswer parsed;
};

struct FactualityReport {
    prf::MetricBlock strict;
    prf::MetricBlock lenient;
};

namespace detail {

inline const CaseAnswer* find_answer(const std::vector<CaseAnswer>& answers,
                                     const std::string& case_id) {
    for (const CaseAnswer& a : answers)
        if (a.case_id == case_id) return &a;
    return nullptr;
}

inline std::set<int> cited_ids(const ParsedAnswer& parsed) {
    std::set<int> out;
    for (const ParsedSubmissionLine& line : parsed.lines)
        out.insert(line.citations.begin(), line.citations.end());
    return out;
}

}  // namespace detail

// Predicted set per case = union of cited ids; strict gold = essentials,
// lenient gold = essentials plus supplementary. Cases without a submitted
// answer count as empty predictions. Citations to ids outside the case are
// ordinary false positives.
inline FactualityReport factuality(const std::vector<CaseAnswer>& answers,
                                   const std::vector<corpus::CaseKey>& keys) {
    for (const CaseAnswer& a : answers) {
        bool keyed = false;
        for (const corpus::CaseKey& k : keys) keyed = keyed || k.case_id == a.case_id;
        if (!keyed) throw ValidationError("no gold key for case " + a.case_id);
    }
    std::vector<std::pair<std::set<int>, std::set<int>>> strict, lenient;
    strict.reserve(keys.size());
    lenient.reserve(keys.size());
    for (const corpus::CaseKey& key : keys) {
        std::set<int> predicted;
        if (const CaseAnswer* a = detail::find_answer(answers, key.case_id))
            predicted = detail::cited_ids(a->parsed);
        strict.emplace_back(predicted, key.positives(false));
        lenient.emplace_back(predicted, key.positives(true));
    }
    return {prf::evaluate(strict), prf::evaluate(lenient)};
}

// --- Lexical relevance metrics ------------------------------------------------

// One tokenizer for every metric: citation spans removed, lowercased,
// punctuation-separated.
inline std::vector<std::string> metric_tokens(std::string_view s) {
    return text::tokenize(text::strip_citation_spans(s));
}

namespace detail {

using Counts = std::unordered_map<std::string, long>;

inline Counts ngram_counts(const std::vector<std::string>& tokens, size_t n) {
    Counts out;
    if (tokens.size() < n) return out;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (size_t j = 0; j < n; ++j) {
            if (j) key.push_back('\x1f');
            key += tokens[i + j];
        }
        ++out[key];
    }
    return out;
}

inline long lookup(const Counts& c, const std::string& key) {
    auto it = c.find(key);
    return it == c.end() ? 0 : it->second;
}

inline Counts counts_min(const Counts& a, const Counts& b) {
    Counts out;
    for (const auto& [key, count] : a) {
        long m = std::min(count, lookup(b, key));
        if (m > 0) out[key] = m;
    }
    return out;
}

inline Counts counts_sub(const Counts& a, const Counts& b) {
    Counts out;
    for (const auto& [key, count] : a) {
        long d = count - lookup(b, key);
        if (d > 0) out[key] = d;
    }
    return out;
}

inline Counts counts_scale(const Counts& a, long factor) {
    Counts out;
    for (const auto& [key, count] : a) out[key] = count * factor;
    return out;
}

inline long counts_total(const Counts& a) {
    long total = 0;
    for (const auto& [key, count] : a) total += count;
    return total;
}

inline double f1(double precision, double recall) {
    if (precision <= 0.0 && recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

// BLEU-4 with brevity penalty against the closest reference length (ties to
// the shorter) and add-one smoothing on the higher-order precisions. An empty
// hypothesis, or one sharing no unigram with any reference, scores 0.
inline double bleu(const std::string& hypothesis, const std::vector<std::string>& references,
                   size_t max_n = 4) {
    std::vector<std::string> hyp = metric_tokens(hypothesis);
    if (hyp.empty() || references.empty()) return 0.0;
    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const std::string& r : references) refs.push_back(metric_tokens(r));

    size_t c = hyp.size();
    size_t r = refs.front().size();
    for (const std::vector<std::string>& ref : refs) {
        size_t diff = ref.size() > c ? ref.size() - c : c - ref.size();
        size_t best = r > c ? r - c : c - r;
        if (diff < best || (diff == best && ref.size() < r)) r = ref.size();
    }

    double log_sum = 0.0;
    for (size_t n = 1; n <= max_n; ++n) {
        detail::Counts hyp_counts = detail::ngram_counts(hyp, n);
        long total = c >= n ? static_cast<long>(c - n + 1) : 0;
        long matched = 0;
        for (const auto& [key, count] : hyp_counts) {
            long best = 0;
            for (const std::vector<std::string>& ref : refs)
                best = std::max(best, detail::lookup(detail::ngram_counts(ref, n), key));
            matched += std::min(count, best);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / total;
        } else {
            p = (matched + 1.0) / (total + 1.0);
        }
        log_sum += std::log(p);
    }
    double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
    return bp * std::exp(log_sum / max_n);
}

// ROUGE-L F1 (beta = 1) over word tokens.
inline double rouge_l(const std::string& hypothesis, const std::string& reference) {
    std::vector<std::string> hyp = metric_tokens(hypothesis);
    std::vector<std::string> ref = metric_tokens(reference);
    if (hyp.empty() || ref.empty()) return 0.0;

    std::vector<std::vector<size_t>> lcs(hyp.size() + 1, std::vector<size_t>(ref.size() + 1, 0));
    for (size_t i = 1; i <= hyp.size(); ++i)
        for (size_t j = 1; j <= ref.size(); ++j)
            lcs[i][j] = hyp[i - 1] == ref[j - 1] ? lcs[i - 1][j - 1] + 1
                                                 : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    double l = static_cast<double>(lcs[hyp.size()][ref.size()]);
    if (l == 0.0) return 0.0;
    return detail::f1(l / hyp.size(), l / ref.size());
}

namespace detail {

struct SariParts {
    double keep = 0.0;
    double del = 0.0;
    double add = 0.0;
};

inline SariParts sari_ngram(const std::vector<std::string>& source,
                            const std::vector<std::string>& candidate,
                            const std::vector<std::vector<std::string>>& refs, size_t n) {
    long numref = static_cast<long>(refs.size());
    Counts rc;
    for (const std::vector<std::string>& r : refs)
        for (const auto& [key, count] : ngram_counts(r, n)) rc[key] += count;
    Counts s_rep = counts_scale(ngram_counts(source, n), numref);
    Counts c_rep = counts_scale(ngram_counts(candidate, n), numref);

    SariParts parts;

    // Keep: n-grams present in both source and candidate, credited when the
    // references keep them too. Fractional credit, empty denominators = 1.
    Counts keep_rep = counts_min(s_rep, c_rep);
    Counts keep_good = counts_min(keep_rep, rc);
    Counts keep_all = counts_min(s_rep, rc);
    double keep_p_sum = 0.0, keep_good_total = 0.0;
    for (const auto& [key, count] : keep_good) {
        keep_p_sum += static_cast<double>(count) / lookup(keep_rep, key);
        keep_good_total += count;
    }
    double keep_p = keep_rep.empty() ? 1.0 : keep_p_sum / keep_rep.size();
    double keep_r = keep_all.empty() ? 1.0 : keep_good_total / counts_total(keep_all);
    parts.keep = f1(keep_p, keep_r);

    // Delete: n-grams dropped from the source, credited when the references
    // drop them too. Precision only.
    Counts del_rep = counts_sub(s_rep, c_rep);
    Counts del_good = counts_sub(del_rep, rc);
    double del_p_sum = 0.0;
    for (const auto& [key, count] : del_good)
        del_p_sum += static_cast<double>(count) / lookup(del_rep, key);
    parts.del = del_rep.empty() ? 1.0 : del_p_sum / del_rep.size();

    // Add: new n-grams in the candidate, credited when some reference has
    // them. Set-based.
    std::set<std::string> s_keys, c_keys, r_keys;
    for (const auto& [key, count] : s_rep) s_keys.insert(key);
    for (const auto& [key, count] : c_rep) c_keys.insert(key);
    for (const auto& [key, count] : rc) r_keys.insert(key);
    long add_good = 0, add_count = 0, add_all = 0;
    for (const std::string& key : c_keys)
        if (!s_keys.count(key)) {
            ++add_count;
            if (r_keys.count(key)) ++add_good;
        }
    for (const std::string& key : r_keys)
        if (!s_keys.count(key)) ++add_all;
    double add_p = add_count == 0 ? 1.0 : static_cast<double>(add_good) / add_count;
    double add_r = add_all == 0 ? 1.0 : static_cast<double>(add_good) / add_all;
    parts.add = f1(add_p, add_r);

    return parts;
}

}  // namespace detail

// SARI: mean over n = 1..4 of the keep-F, delete-precision and add-F
// components, averaged equally.
inline double sari(const std::string& source, const std::string& hypothesis,
                   const std::vector<std::string>& references, size_t max_n = 4) {
    if (references.empty()) return 0.0;
    std::vector<std::string> src = metric_tokens(source);
    std::vector<std::string> hyp = metric_tokens(hypothesis);
    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const std::string& r : references) refs.push_back(metric_tokens(r));

    double keep = 0.0, del = 0.0, add = 0.0;
    for (size_t n = 1; n <= max_n; ++n) {
        detail::SariParts parts = detail::sari_ngram(src, hyp, refs, n);
        keep += parts.keep;
        del += parts.del;
        add += parts.add;
    }
    return (keep / max_n + del / max_n + add / max_n) / 3.0;
}

// --- Relevance and overall -----------------------------------------------------

struct RelevanceReport {
    double bleu = 0.0;
    double rouge_l_f = 0.0;
    double sari = 0.0;
    std::map<std::string, double> plugged;  // externally scored metrics
    double aggregate = 0.0;                 // mean of all present components
};

// Per-case reference: the gold-essential sentence texts followed by the
// clinician question; SARI rewrites from the full note excerpt. Cases whose
// parsed answer is empty contribute zeros to every component.
inline RelevanceReport relevance(const std::vector<CaseAnswer>& answers,
                                 const corpus::Dataset& data,
                                 const std::map<std::string, double>& plugged = {}) {
    if (!data.keys) throw ValidationError("relevance evaluation requires gold keys");
    double bleu_sum = 0.0, rouge_sum = 0.0, sari_sum = 0.0;
    size_t cases = 0;
    for (const corpus::CaseKey& key : *data.keys) {
        const corpus::Case* c = data.find_case(key.case_id);
        if (!c) throw ValidationError("key references unknown case " + key.case_id);
        ++cases;

        std::string hypothesis;
        if (const CaseAnswer* a = detail::find_answer(answers, key.case_id))
            for (const ParsedSubmissionLine& line : a->parsed.lines) {
                if (!hypothesis.empty()) hypothesis.push_back(' ');
                hypothesis += line.text;
            }
        if (metric_tokens(hypothesis).empty()) continue;

        std::string reference;
        for (int id : key.ids_with(corpus::RelevanceLabel::essential)) {
            if (const corpus::Sentence* s = c->sentence(id)) {
                if (!reference.empty()) reference.push_back(' ');
                reference += s->text;
            }
        }
        if (!reference.empty()) reference.push_back(' ');
        reference += c->clinician_question;

        bleu_sum += bleu(hypothesis, {reference});
        rouge_sum += rouge_l(hypothesis, reference);
        sari_sum += sari(c->note_excerpt, hypothesis, {reference});
    }

    RelevanceReport report;
    if (cases > 0) {
        report.bleu = bleu_sum / cases;
        report.rouge_l_f = rouge_sum / cases;
        report.sari = sari_sum / cases;
    }
    report.plugged = plugged;
    double sum = report.bleu + report.rouge_l_f + report.sari;
    size_t components = 3;
    for (const auto& [name, value] : plugged) {
        sum += value;
        ++components;
    }
    report.aggregate = sum / components;
    return report;
}

struct OverallReport {
    double overall = 0.0;
    double relevance = 0.0;
    double factuality = 0.0;  // strict micro-F1
};

inline OverallReport overall(double relevance_aggregate, double strict_micro_f1) {
    return {(relevance_aggregate + strict_micro_f1) / 2.0, relevance_aggregate, strict_micro_f1};
}

inline OverallReport overall(const RelevanceReport& rel, const FactualityReport& fact) {
    return overall(rel.aggregate, fact.strict.micro.f1);
}

// --- Report serialization -------------------------------------------------------

namespace detail {

inline json prf_to_json(const prf::Prf& p) {
    return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline json block_to_json(const prf::MetricBlock& b) {
    return {{"micro", prf_to_json(b.micro)}, {"macro", prf_to_json(b.macro)}};
}

}  // namespace detail

inline json report_to_json(const RelevanceReport& rel, const FactualityReport& fact,
                           size_t violations) {
    OverallReport o = overall(rel, fact);
    json relevance_json = {{"bleu", rel.bleu}, {"rouge_l_f", rel.rouge_l_f}, {"sari", rel.sari}};
    for (const auto& [name, value] : rel.plugged) relevance_json[name] = value;
    relevance_json["aggregate"] = rel.aggregate;
    return {{"overall", o.overall},
            {"relevance", relevance_json},
            {"factuality",
             {{"strict", detail::block_to_json(fact.strict)},
              {"lenient", detail::block_to_json(fact.lenient)}}},
            {"violations", violations}};
}

// Recomputes the overall score from a report-like JSON: "relevance" may be a
// number or an object with "aggregate"; "factuality" a number or the nested
// strict-micro block.
inline OverallReport merge_report(const json& j) {
    if (!j.is_object() || !j.contains("relevance") || !j.contains("factuality"))
        throw ValidationError("report must contain \"relevance\" and \"factuality\"");
    const json& rel = j.at("relevance");
    const json& fact = j.at("factuality");
    double relevance_value =
        rel.is_number() ? rel.get<double>() : rel.at("aggregate").get<double>();
    double factuality_value = fact.is_number()
                                  ? fact.get<double>()
                                  : fact.at("strict").at("micro").at("f1").get<double>();
    return overall(relevance_value, factuality_value);
}

inline std::string human_table(const json& report) {
    auto row = [](std::string_view label, double value) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-22s %7.3f\n", std::string(label).c_str(), value);
        return std::string(buf);
    };
    std::string out;
    out += row("overall", report.at("overall").get<double>());
    const json& rel = report.at("relevance");
    out += row("relevance", rel.at("aggregate").get<double>());
    for (const auto& [name, value] : rel.items())
        if (name != "aggregate") out += row("  " + name, value.get<double>());
    const json& fact = report.at("factuality");
    for (const char* mode : {"strict", "lenient"}) {
        const json& block = fact.at(mode);
        out += row(std::string(mode) + " micro-F1", block.at("micro").at("f1").get<double>());
        out += row(std::string(mode) + " macro-F1", block.at("macro").at("f1").get<double>());
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-22s %7zu\n", "violations",
                  report.at("violations").get<size_t>());
    out += buf;
    return out;
}

}  // namespace noteqa::evaluation
