#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noteqa.hpp"

namespace fs = std::filesystem;
using noteqa::corpus::json;

namespace {

struct Options {
    std::string cases;
    std::string key;
    std::string config;
    std::string strategy;
    std::string backend;
    std::string transcript;
    std::string manifest;
    std::string out;
    std::string input;  // positional (evaluate: submission, report-merge: report)
    int concurrency = 0;
    int budget = 0;
    int cap = 0;
    json cfg = json::object();
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    json doc = json::parse(noteqa::corpus::read_file(path));
    if (!doc.is_object()) throw noteqa::ValidationError(path + ": config must be a JSON object");
    return doc;
}

std::string cfg_str(const Options& opt, const std::string& name, const std::string& fallback) {
    if (opt.cfg.contains(name) && opt.cfg.at(name).is_string())
        return opt.cfg.at(name).get<std::string>();
    return fallback;
}

double cfg_num(const Options& opt, const std::string& name, double fallback) {
    if (opt.cfg.contains(name) && opt.cfg.at(name).is_number())
        return opt.cfg.at(name).get<double>();
    return fallback;
}

void write_text(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw noteqa::ValidationError("cannot write " + path);
    out << content;
}

void emit(const std::string& out_path, const json& doc) {
    std::string text = doc.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
}

noteqa::corpus::Dataset load_dataset_opt(const Options& opt) {
    if (opt.cases.empty()) throw noteqa::ValidationError("--cases is required");
    std::optional<std::string> key;
    if (!opt.key.empty()) key = opt.key;
    return noteqa::corpus::load_dataset(opt.cases, key);
}

std::unique_ptr<noteqa::selection::SentenceScorer> make_scorer(const Options& opt,
                                                               const std::string& choice) {
    if (choice == "lexical") return std::make_unique<noteqa::selection::LexicalScorer>();
    if (choice == "rerank") {
        std::string endpoint = cfg_str(opt, "rerank_endpoint", "");
        if (endpoint.empty())
            throw noteqa::ValidationError("rerank scorer requires \"rerank_endpoint\" in config");
        return std::make_unique<noteqa::pipeline::RemoteScorer>(endpoint);
    }
    throw noteqa::ValidationError("unknown scoring backend \"" + choice +
                                  "\" (expected lexical or rerank)");
}

std::unique_ptr<noteqa::genclient::Backend> make_generator(const Options& opt) {
    std::string choice = opt.backend.empty() ? cfg_str(opt, "backend", "") : opt.backend;
    if (choice == "transcript") {
        std::string path =
            opt.transcript.empty() ? cfg_str(opt, "transcript", "") : opt.transcript;
        if (path.empty())
            throw noteqa::ValidationError("transcript backend requires --transcript");
        return std::make_unique<noteqa::genclient::TranscriptBackend>(path);
    }
    if (choice == "http") {
        noteqa::genclient::HttpConfig http;
        http.endpoint = cfg_str(opt, "endpoint", "");
        if (http.endpoint.empty())
            throw noteqa::ValidationError("http backend requires \"endpoint\" in config");
        http.model = cfg_str(opt, "model", "");
        http.path = cfg_str(opt, "path", http.path);
        http.retries = static_cast<int>(cfg_num(opt, "retries", http.retries));
        http.backoff_ms = static_cast<int>(cfg_num(opt, "backoff_ms", http.backoff_ms));
        http.timeout_s = static_cast<int>(cfg_num(opt, "timeout_s", http.timeout_s));
        http.api_key_header = cfg_str(opt, "api_key_header", http.api_key_header);
        const char* key = std::getenv("NOTEQA_API_KEY");
        if (key && *key) {
            http.api_key_value = http.api_key_header == "Authorization"
                                     ? std::string("Bearer ") + key
                                     : std::string(key);
        }
        return std::make_unique<noteqa::http::ChatBackend>(http);
    }
    throw noteqa::ValidationError("unknown generation backend \"" + choice +
                                  "\" (expected transcript or http)");
}

std::map<std::string, noteqa::genclient::PromptTemplate> load_templates(const Options& opt) {
    std::string dir = cfg_str(opt, "templates_dir", "data/templates");
    return noteqa::genclient::load_template_dir(dir);
}

const noteqa::genclient::PromptTemplate& pick_template(
    const std::map<std::string, noteqa::genclient::PromptTemplate>& templates,
    const std::string& name) {
    auto it = templates.find(name);
    if (it == templates.end())
        throw noteqa::ValidationError("no template named \"" + name + "\"");
    return it->second;
}

int cmd_ingest(const Options& opt) {
    noteqa::corpus::Dataset data = load_dataset_opt(opt);
    emit(opt.out, noteqa::corpus::to_json(data));
    return 0;
}

int cmd_calibrate(const Options& opt) {
    noteqa::corpus::Dataset data = load_dataset_opt(opt);
    std::string choice = opt.backend.empty() ? cfg_str(opt, "scorer", "lexical") : opt.backend;
    std::unique_ptr<noteqa::selection::SentenceScorer> scorer = make_scorer(opt, choice);
    noteqa::selection::CalibratedThreshold threshold =
        noteqa::pipeline::calibrate(data, *scorer, cfg_str(opt, "split", "dev"));
    noteqa::pipeline::Manifest manifest{"two_step_rerank", threshold, scorer->id(), ""};
    emit(opt.out, noteqa::pipeline::manifest_to_json(manifest));
    return 0;
}

int cmd_run(const Options& opt) {
    noteqa::corpus::Dataset data = load_dataset_opt(opt);

    noteqa::pipeline::PipelineContext ctx;
    std::string strategy = opt.strategy.empty() ? cfg_str(opt, "strategy", "") : opt.strategy;
    if (strategy.empty()) throw noteqa::ValidationError("--strategy is required");
    ctx.config.strategy = noteqa::pipeline::parse_strategy(strategy);
    ctx.config.budget = opt.budget > 0 ? opt.budget : static_cast<size_t>(cfg_num(opt, "budget", 75));
    ctx.config.cap = opt.cap > 0 ? opt.cap : static_cast<size_t>(cfg_num(opt, "cap", 3));
    ctx.config.band = cfg_num(opt, "band", 0.9);
    ctx.config.concurrency =
        opt.concurrency > 0 ? opt.concurrency : static_cast<size_t>(cfg_num(opt, "concurrency", 4));

    std::unique_ptr<noteqa::genclient::Backend> backend = make_generator(opt);
    backend->set_concurrency_cap(static_cast<int>(ctx.config.concurrency));
    ctx.backend = backend.get();

    std::map<std::string, noteqa::genclient::PromptTemplate> templates = load_templates(opt);
    std::string first_name;
    std::unique_ptr<noteqa::selection::SentenceScorer> scorer;
    switch (ctx.config.strategy) {
        case noteqa::pipeline::PipelineStrategy::e2e:
            first_name = cfg_str(opt, "template", "e2e");
            break;
        case noteqa::pipeline::PipelineStrategy::two_step_prompt_list:
            first_name = cfg_str(opt, "template", "list_cot_oneshot");
            break;
        case noteqa::pipeline::PipelineStrategy::two_step_prompt_individual:
            first_name = cfg_str(opt, "template", "indiv_cot_fewshot");
            break;
        case noteqa::pipeline::PipelineStrategy::two_step_rerank: {
            std::string manifest_path =
                opt.manifest.empty() ? cfg_str(opt, "manifest", "") : opt.manifest;
            if (manifest_path.empty())
                throw noteqa::ValidationError("two_step_rerank requires --manifest");
            noteqa::pipeline::Manifest manifest = noteqa::pipeline::manifest_from_json(
                json::parse(noteqa::corpus::read_file(manifest_path)));
            if (!manifest.threshold)
                throw noteqa::ValidationError(manifest_path + ": manifest has no threshold");
            ctx.config.threshold = manifest.threshold;
            scorer = make_scorer(opt, cfg_str(opt, "scorer", "lexical"));
            ctx.scorer = scorer.get();
            break;
        }
    }
    if (!first_name.empty()) ctx.first = &pick_template(templates, first_name);
    if (ctx.config.strategy != noteqa::pipeline::PipelineStrategy::e2e)
        ctx.second = &pick_template(templates, cfg_str(opt, "second_template", "second_step"));

    noteqa::pipeline::RunReport report = noteqa::pipeline::run_dataset(data, ctx);

    std::string out_dir = opt.out.empty() ? "." : opt.out;
    fs::create_directories(out_dir);
    json submission = noteqa::answer::submission_to_json(
        noteqa::pipeline::submission_entries(report));
    write_text((fs::path(out_dir) / "submission.json").string(), submission.dump(2) + "\n");

    noteqa::pipeline::Manifest manifest{noteqa::pipeline::to_string(ctx.config.strategy),
                                        ctx.config.threshold, ctx.backend->id(),
                                        ctx.first ? ctx.first->name
                                                  : (ctx.second ? ctx.second->name : "")};
    write_text((fs::path(out_dir) / "manifest.json").string(),
               noteqa::pipeline::manifest_to_json(manifest).dump(2) + "\n");

    for (const auto& [case_id, reason] : report.failures)
        std::cerr << "case " << case_id << " failed: " << reason << "\n";
    return report.failures.empty() ? 0 : 3;
}

int cmd_evaluate(const Options& opt) {
    if (opt.input.empty()) throw noteqa::ValidationError("evaluate requires a submission file");
    noteqa::corpus::Dataset data = load_dataset_opt(opt);
    if (!data.keys) throw noteqa::ValidationError("evaluation requires gold keys");

    std::vector<noteqa::answer::SubmissionEntry> entries =
        noteqa::answer::submission_from_json(json::parse(noteqa::corpus::read_file(opt.input)));
    size_t budget = opt.budget > 0 ? opt.budget : static_cast<size_t>(cfg_num(opt, "budget", 75));

    std::vector<noteqa::evaluation::CaseAnswer> answers;
    size_t violations = 0;
    for (const noteqa::answer::SubmissionEntry& e : entries) {
        noteqa::evaluation::ParsedAnswer parsed =
            noteqa::evaluation::validate_and_truncate(e.answer, budget);
        violations += parsed.violations;
        answers.push_back({e.case_id, std::move(parsed)});
    }

    std::map<std::string, double> plugged;
    if (opt.cfg.contains("plugged") && opt.cfg.at("plugged").is_object())
        for (const auto& [name, value] : opt.cfg.at("plugged").items())
            plugged[name] = value.get<double>();

    noteqa::evaluation::FactualityReport fact =
        noteqa::evaluation::factuality(answers, *data.keys);
    noteqa::evaluation::RelevanceReport rel =
        noteqa::evaluation::relevance(answers, data, plugged);
    json report = noteqa::evaluation::report_to_json(rel, fact, violations);

    if (opt.out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        write_text(opt.out, report.dump(2) + "\n");
        std::cout << noteqa::evaluation::human_table(report);
    }
    return 0;
}

int cmd_report_merge(const Options& opt) {
    if (opt.input.empty()) throw noteqa::ValidationError("report-merge requires an input file");
    json doc = json::parse(noteqa::corpus::read_file(opt.input));
    noteqa::evaluation::OverallReport merged = noteqa::evaluation::merge_report(doc);
    json out;
    if (doc.is_object() && doc.at("relevance").is_object()) {
        out = doc;  // full report: recompute overall in place
        out["overall"] = merged.overall;
    } else {
        out = {{"overall", merged.overall},
               {"relevance", merged.relevance},
               {"factuality", merged.factuality}};
    }
    emit(opt.out, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grounded patient-question answering over clinical note excerpts"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--cases", opt.cases, "case file (.xml) or canonical dataset (.json)");
        sub->add_option("--key", opt.key, "gold relevance key JSON");
        sub->add_option("--config", opt.config, "config JSON; flags override its fields");
        sub->add_option("--out", opt.out, "output path (directory for run)");
    };

    CLI::App* ingest = app.add_subcommand("ingest", "Parse cases (+ key) into canonical JSON");
    add_common(ingest);

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "Fit the selection threshold on labeled data");
    add_common(calibrate);
    calibrate->add_option("--backend", opt.backend, "scoring backend: lexical or rerank");

    CLI::App* run = app.add_subcommand("run", "Run a pipeline and write submission + manifest");
    add_common(run);
    run->add_option("--strategy", opt.strategy,
                    "e2e, two_step_prompt_list, two_step_prompt_individual, two_step_rerank");
    run->add_option("--backend", opt.backend, "generation backend: transcript or http");
    run->add_option("--transcript", opt.transcript, "recorded transcript JSON (replay backend)");
    run->add_option("--manifest", opt.manifest, "calibrated threshold manifest (rerank)");
    run->add_option("--concurrency", opt.concurrency, "max concurrent cases");
    run->add_option("--budget", opt.budget, "word budget per answer");
    run->add_option("--cap", opt.cap, "citation cap per sentence");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Score a submission against gold keys");
    add_common(evaluate);
    evaluate->add_option("submission", opt.input, "submission JSON")->required();
    evaluate->add_option("--budget", opt.budget, "word budget for truncation");

    CLI::App* merge = app.add_subcommand("report-merge", "Recompute overall from a report");
    add_common(merge);
    merge->add_option("report", opt.input, "report JSON (full or {relevance, factuality})")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        opt.cfg = load_config_file(opt.config);
        if (ingest->parsed()) return cmd_ingest(opt);
        if (calibrate->parsed()) return cmd_calibrate(opt);
        if (run->parsed()) return cmd_run(opt);
        if (evaluate->parsed()) return cmd_evaluate(opt);
        if (merge->parsed()) return cmd_report_merge(opt);
    } catch (const noteqa::BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const noteqa::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
