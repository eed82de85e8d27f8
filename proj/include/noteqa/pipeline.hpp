#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "noteqa/answer.hpp"
#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"
#include "noteqa/genclient.hpp"
#include "noteqa/http.hpp"
#include "noteqa/logging.hpp"
#include "noteqa/selection.hpp"

// Pipeline composition: calibration over pooled scores, the four run
// strategies, case-level parallel execution, and manifest serialization.

namespace noteqa::pipeline {

using corpus::json;

enum class PipelineStrategy { e2e, two_step_prompt_list, two_step_prompt_individual, two_step_rerank };

inline std::string to_string(PipelineStrategy s) {
    switch (s) {
        case PipelineStrategy::e2e: return "e2e";
        case PipelineStrategy::two_step_prompt_list: return "two_step_prompt_list";
        case PipelineStrategy::two_step_prompt_individual: return "two_step_prompt_individual";
        case PipelineStrategy::two_step_rerank: return "two_step_rerank";
    }
    return "e2e";
}

inline PipelineStrategy parse_strategy(const std::string& s) {
    if (s == "e2e") return PipelineStrategy::e2e;
    if (s == "two_step_prompt_list") return PipelineStrategy::two_step_prompt_list;
    if (s == "two_step_prompt_individual") return PipelineStrategy::two_step_prompt_individual;
    if (s == "two_step_rerank") return PipelineStrategy::two_step_rerank;
    throw ValidationError("unknown strategy \"" + s + "\"");
}

struct RunConfig {
    PipelineStrategy strategy = PipelineStrategy::two_step_rerank;
    size_t budget = 75;
    size_t cap = 3;
    double band = 0.9;
    size_t concurrency = 4;
    std::optional<selection::CalibratedThreshold> threshold;  // two_step_rerank only
};

// Remote reranker adapter for the sentence-scorer slot.
class RemoteScorer : public selection::SentenceScorer {
  public:
    explicit RemoteScorer(std::string endpoint)
        : endpoint_(std::move(endpoint)), client_(endpoint_) {}

    std::vector<double> score(const std::string& query,
                              const std::vector<std::string>& documents) override {
        return client_.score(query, documents);
    }

    std::string id() const override { return "rerank:" + endpoint_; }

  private:
    std::string endpoint_;
    http::RerankClient client_;
};

// --- Calibration ----------------------------------------------------------------

// Pools (score, is-essential) pairs over every labeled sentence of every
// keyed case, then picks the Youden-optimal cutoff on the pooled ROC curve.
inline selection::CalibratedThreshold calibrate(const corpus::Dataset& data,
                                                selection::SentenceScorer& scorer,
                                                std::string source_split = "dev") {
    if (!data.keys || data.keys->empty())
        throw ValidationError("calibration requires gold labels");
    std::vector<std::pair<double, bool>> pooled;
    for (const corpus::CaseKey& key : *data.keys) {
        const corpus::Case* c = data.find_case(key.case_id);
        if (!c) throw ValidationError("key references unknown case " + key.case_id);
        std::vector<selection::ScoredSentence> scored = selection::score_sentences(*c, scorer);
        for (const selection::ScoredSentence& s : scored) {
            auto label = key.labels.find(s.sentence_id);
            if (label == key.labels.end()) continue;
            pooled.emplace_back(s.score,
                                label->second == corpus::RelevanceLabel::essential);
        }
    }
    return selection::youden_threshold(selection::roc_curve(pooled), std::move(source_split));
}

// --- Per-case execution ----------------------------------------------------------

struct PipelineContext {
    RunConfig config;
    genclient::Backend* backend = nullptr;              // generation
    selection::SentenceScorer* scorer = nullptr;        // two_step_rerank
    const genclient::PromptTemplate* first = nullptr;   // e2e or first-step prompt
    const genclient::PromptTemplate* second = nullptr;  // second-step prompt
};

inline void validate_context(const PipelineContext& ctx) {
    if (!ctx.backend) throw ValidationError("run requires a generation backend");
    if (ctx.config.budget < 1) throw ValidationError("word budget must be at least 1");
    if (ctx.config.cap < 1) throw ValidationError("citation cap must be at least 1");
    if (ctx.config.concurrency < 1) throw ValidationError("concurrency must be at least 1");
    if (ctx.config.strategy == PipelineStrategy::e2e) {
        if (!ctx.first) throw ValidationError("e2e strategy requires a prompt template");
        return;
    }
    if (!ctx.second) throw ValidationError("two-step strategies require a second-step template");
    if (ctx.config.strategy == PipelineStrategy::two_step_rerank) {
        if (!ctx.scorer) throw ValidationError("two_step_rerank requires a scoring backend");
        if (!ctx.config.threshold)
            throw ValidationError("two_step_rerank requires a calibrated threshold");
    } else if (!ctx.first) {
        throw ValidationError("prompt strategies require a first-step template");
    }
}

struct RunCaseResult {
    answer::SubmissionEntry entry;
    std::optional<selection::SelectionResult> selection;  // absent for e2e
};

namespace detail {

inline std::vector<corpus::Sentence> resolve_sentences(const corpus::Case& c,
                                                       const std::set<int>& ids) {
    std::vector<corpus::Sentence> out;
    for (const corpus::Sentence& s : c.sentences)
        if (ids.count(s.id)) out.push_back(s);
    return out;
}

inline std::string generate_draft(const corpus::Case& c, const PipelineContext& ctx,
                                  const genclient::PromptTemplate& tmpl,
                                  const std::vector<corpus::Sentence>& selected) {
    genclient::Bindings bindings = selection::case_bindings(c);
    if (!selected.empty()) bindings["sentences"] = selection::detail::numbered_sentences(selected);
    genclient::GenerationRequest request;
    request.messages = genclient::render_template(tmpl, bindings);
    return ctx.backend->generate(request).text;
}

inline RunCaseResult run_e2e(const corpus::Case& c, const PipelineContext& ctx) {
    std::string draft = generate_draft(c, ctx, *ctx.first, {});
    std::string repaired = answer::repair_end_to_end(draft, c.sentence_ids());
    if (repaired.empty()) {
        log::warn("case " + c.case_id +
                  ": no citable content survived repair; re-grounding by similarity");
        answer::CitedAnswer cited =
            answer::assemble(c.case_id, draft, c.sentences, ctx.config.budget, ctx.config.cap,
                             ctx.config.band);
        repaired = answer::serialize(cited, ctx.config.budget);
    }
    return {{c.case_id, repaired}, std::nullopt};
}

inline RunCaseResult run_two_step(const corpus::Case& c, const PipelineContext& ctx) {
    selection::SelectionResult selected;
    switch (ctx.config.strategy) {
        case PipelineStrategy::two_step_rerank:
            selected = selection::select_by_threshold(
                c.case_id, selection::score_sentences(c, *ctx.scorer), *ctx.config.threshold);
            break;
        case PipelineStrategy::two_step_prompt_list:
            selected = selection::select_by_prompt_list(c, *ctx.backend, *ctx.first);
            break;
        case PipelineStrategy::two_step_prompt_individual:
            selected = selection::select_by_prompt_individual(c, *ctx.backend, *ctx.first);
            break;
        default:
            throw ValidationError("not a two-step strategy");
    }
    std::vector<corpus::Sentence> essentials = resolve_sentences(c, selected.essentials);
    std::string draft = generate_draft(c, ctx, *ctx.second, essentials);
    answer::CitedAnswer cited = answer::assemble(c.case_id, draft, essentials, ctx.config.budget,
                                                 ctx.config.cap, ctx.config.band);
    return {{c.case_id, answer::serialize(cited, ctx.config.budget)}, std::move(selected)};
}

}  // namespace detail

inline RunCaseResult run_case(const corpus::Case& c, const PipelineContext& ctx) {
    if (ctx.config.strategy == PipelineStrategy::e2e) return detail::run_e2e(c, ctx);
    return detail::run_two_step(c, ctx);
}

// --- Dataset execution -----------------------------------------------------------

struct RunReport {
    std::vector<RunCaseResult> results;                       // dataset order
    std::vector<std::pair<std::string, std::string>> failures;  // case_id, reason
};

// Case-level fan-out over a bounded pool; results land in per-case slots so
// output order (and bytes) never depend on scheduling.
inline RunReport run_dataset(const corpus::Dataset& data, const PipelineContext& ctx) {
    validate_context(ctx);
    if (data.cases.empty()) throw ValidationError("dataset has no cases");

    size_t n = data.cases.size();
    std::vector<std::optional<RunCaseResult>> slots(n);
    std::vector<std::optional<std::string>> errors(n);
    std::atomic<size_t> next{0};

    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                slots[i] = run_case(data.cases[i], ctx);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    size_t threads = std::min(ctx.config.concurrency, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    RunReport report;
    for (size_t i = 0; i < n; ++i) {
        if (slots[i])
            report.results.push_back(std::move(*slots[i]));
        else
            report.failures.emplace_back(data.cases[i].case_id,
                                         errors[i] ? *errors[i] : "unknown failure");
    }
    return report;
}

inline std::vector<answer::SubmissionEntry> submission_entries(const RunReport& report) {
    std::vector<answer::SubmissionEntry> out;
    out.reserve(report.results.size());
    for (const RunCaseResult& r : report.results) out.push_back(r.entry);
    return out;
}

// --- Manifest --------------------------------------------------------------------

struct Manifest {
    std::string strategy;
    std::optional<selection::CalibratedThreshold> threshold;
    std::string backend_id;
    std::string template_name;
};

inline json threshold_to_json(const selection::CalibratedThreshold& t) {
    json j = {{"value", t.value}, {"youden_j", t.youden_j}, {"source_split", t.source_split}};
    if (std::isinf(t.value)) j["value"] = t.value > 0 ? "+inf" : "-inf";
    return j;
}

inline selection::CalibratedThreshold threshold_from_json(const json& j) {
    if (!j.is_object() || !j.contains("value") || !j.contains("youden_j"))
        throw ValidationError("threshold needs \"value\" and \"youden_j\"");
    selection::CalibratedThreshold t;
    const json& value = j.at("value");
    if (value.is_string()) {
        std::string s = value.get<std::string>();
        if (s == "+inf")
            t.value = std::numeric_limits<double>::infinity();
        else if (s == "-inf")
            t.value = -std::numeric_limits<double>::infinity();
        else
            throw ValidationError("unrecognized threshold value \"" + s + "\"");
    } else {
        t.value = value.get<double>();
    }
    t.youden_j = j.at("youden_j").get<double>();
    if (j.contains("source_split")) t.source_split = j.at("source_split").get<std::string>();
    return t;
}

inline json manifest_to_json(const Manifest& m) {
    return {{"strategy", m.strategy},
            {"threshold", m.threshold ? threshold_to_json(*m.threshold) : json(nullptr)},
            {"backend_id", m.backend_id},
            {"template_name", m.template_name}};
}

inline Manifest manifest_from_json(const json& j) {
    if (!j.is_object() || !j.contains("strategy"))
        throw ValidationError("manifest needs a \"strategy\" field");
    Manifest m;
    m.strategy = j.at("strategy").get<std::string>();
    if (j.contains("threshold") && !j.at("threshold").is_null())
        m.threshold = threshold_from_json(j.at("threshold"));
    if (j.contains("backend_id")) m.backend_id = j.at("backend_id").get<std::string>();
    if (j.contains("template_name")) m.template_name = j.at("template_name").get<std::string>();
    return m;
}

}  // namespace noteqa::pipeline
