#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "noteqa/errors.hpp"
#include "noteqa/text.hpp"
#include "noteqa/xml.hpp"

// Task data model: patient inquiries with numbered note sentences and
// optional gold relevance labels. XML is accepted only at the ingestion
// boundary; the canonical interchange format is JSON.

namespace noteqa::corpus {

using json = nlohmann::ordered_json;

struct Sentence {
    int id = 0;  // strictly positive, unique within its case, preserved as given
    std::string text;

    bool operator==(const Sentence&) const = default;
};

struct Case {
    std::string case_id;
    std::string patient_narrative;
    std::string clinician_question;
    std::string note_excerpt;
    std::vector<Sentence> sentences;

    bool operator==(const Case&) const = default;

    const Sentence* sentence(int id) const {
        for (const Sentence& s : sentences)
            if (s.id == id) return &s;
        return nullptr;
    }

    std::set<int> sentence_ids() const {
        std::set<int> ids;
        for (const Sentence& s : sentences) ids.insert(s.id);
        return ids;
    }
};

enum class RelevanceLabel { essential, supplementary, not_relevant };

inline std::string to_string(RelevanceLabel label) {
    switch (label) {
        case RelevanceLabel::essential: return "essential";
        case RelevanceLabel::supplementary: return "supplementary";
        case RelevanceLabel::not_relevant: return "not-relevant";
    }
    return "not-relevant";
}

inline RelevanceLabel parse_label(std::string_view raw) {
    std::string s = text::to_lower_ascii(text::trim(raw));
    if (s == "essential") return RelevanceLabel::essential;
    if (s == "supplementary") return RelevanceLabel::supplementary;
    if (s == "not-relevant") return RelevanceLabel::not_relevant;
    throw ValidationError("unknown relevance label \"" + std::string(raw) + "\"");
}

struct CaseKey {
    std::string case_id;
    std::map<int, RelevanceLabel> labels;

    bool operator==(const CaseKey&) const = default;

    std::set<int> ids_with(RelevanceLabel wanted) const {
        std::set<int> out;
        for (const auto& [id, label] : labels)
            if (label == wanted) out.insert(id);
        return out;
    }

    // Gold positives for factuality: essentials only (strict) or essentials
    // plus supplementary (lenient).
    std::set<int> positives(bool lenient) const {
        std::set<int> out = ids_with(RelevanceLabel::essential);
        if (lenient) {
            for (int id : ids_with(RelevanceLabel::supplementary)) out.insert(id);
        }
        return out;
    }
};

struct Dataset {
    std::vector<Case> cases;
    std::optional<std::vector<CaseKey>> keys;

    bool operator==(const Dataset&) const = default;

    const Case* find_case(std::string_view case_id) const {
        for (const Case& c : cases)
            if (c.case_id == case_id) return &c;
        return nullptr;
    }

    const CaseKey* find_key(std::string_view case_id) const {
        if (!keys) return nullptr;
        for (const CaseKey& k : *keys)
            if (k.case_id == case_id) return &k;
        return nullptr;
    }
};

namespace detail {

inline int parse_sentence_id(const std::string& raw, const std::string& case_id) {
    size_t pos = 0;
    int id = 0;
    try {
        id = std::stoi(raw, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != raw.size() || id <= 0)
        throw ValidationError("case " + case_id + ": sentence id \"" + raw +
                              "\" is not a positive integer");
    return id;
}

inline void check_case(const Case& c) {
    if (c.case_id.empty()) throw ValidationError("case with empty id");
    if (c.sentences.empty())
        throw ValidationError("case " + c.case_id + ": no sentences");
    if (c.clinician_question.empty())
        throw ValidationError("case " + c.case_id + ": empty clinician question");
    std::set<int> seen;
    for (const Sentence& s : c.sentences) {
        if (s.id <= 0)
            throw ValidationError("case " + c.case_id + ": sentence id " +
                                  std::to_string(s.id) + " is not strictly positive");
        if (!seen.insert(s.id).second)
            throw ValidationError("case " + c.case_id + ": duplicate sentence id " +
                                  std::to_string(s.id));
        if (text::trim(s.text).empty())
            throw ValidationError("case " + c.case_id + ": sentence " +
                                  std::to_string(s.id) + " is empty");
    }
}

}  // namespace detail

// --- XML ingestion ---------------------------------------------------------

inline std::vector<Case> parse_cases_xml(std::string_view raw) {
    xml::Node root = xml::parse(raw);
    if (root.name != "annotations")
        throw ParseError("expected <annotations> root, found <" + root.name + ">",
                         root.line, root.column);
    std::vector<Case> cases;
    for (const xml::Node* case_node : root.children_named("case")) {
        Case c;
        const std::string* id = case_node->attr("id");
        if (!id || text::trim(*id).empty())
            throw ParseError("<case> without id attribute", case_node->line,
                             case_node->column);
        c.case_id = text::trim(*id);

        auto block = [&](const char* tag) -> std::string {
            const xml::Node* n = case_node->child(tag);
            return n ? text::normalize_block(n->text) : std::string();
        };
        c.patient_narrative = block("patient_narrative");
        c.clinician_question = block("clinician_question");
        c.note_excerpt = block("note_excerpt");

        const xml::Node* sentences = case_node->child("sentences");
        if (sentences) {
            for (const xml::Node* s : sentences->children_named("sentence")) {
                const std::string* sid = s->attr("id");
                if (!sid)
                    throw ParseError("case " + c.case_id + ": <sentence> without id",
                                     s->line, s->column);
                Sentence sentence;
                sentence.id = detail::parse_sentence_id(text::trim(*sid), c.case_id);
                sentence.text = text::normalize_inline(s->text);
                c.sentences.push_back(std::move(sentence));
            }
        }
        detail::check_case(c);
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw ValidationError("no <case> elements in input");
    std::set<std::string> ids;
    for (const Case& c : cases)
        if (!ids.insert(c.case_id).second)
            throw ValidationError("duplicate case id " + c.case_id);
    return cases;
}

// --- Key JSON ---------------------------------------------------------------

inline std::vector<CaseKey> parse_keys_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("key file: expected a top-level object");
    std::vector<CaseKey> keys;
    for (const auto& [case_id, labels] : doc.items()) {
        CaseKey key;
        key.case_id = case_id;
        if (!labels.is_object())
            throw ValidationError("case " + case_id + ": expected sentence-id to label mapping");
        for (const auto& [sid, label] : labels.items()) {
            int id = detail::parse_sentence_id(sid, case_id);
            if (!label.is_string())
                throw ValidationError("case " + case_id + ": label for sentence " + sid +
                                      " is not a string");
            try {
                key.labels[id] = parse_label(label.get<std::string>());
            } catch (const ValidationError& e) {
                throw ValidationError("case " + case_id + ", sentence " + sid + ": " +
                                      e.what());
            }
        }
        keys.push_back(std::move(key));
    }
    return keys;
}

inline std::vector<CaseKey> parse_key_json(std::string_view raw) {
    json doc;
    try {
        doc = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("key file: ") + e.what());
    }
    return parse_keys_json(doc);
}

inline json keys_to_json(const std::vector<CaseKey>& keys) {
    json out = json::object();
    for (const CaseKey& key : keys) {
        json labels = json::object();
        for (const auto& [id, label] : key.labels)
            labels[std::to_string(id)] = to_string(label);
        out[key.case_id] = std::move(labels);
    }
    return out;
}

// --- Canonical dataset JSON --------------------------------------------------

inline json to_json(const Dataset& dataset) {
    json cases = json::array();
    for (const Case& c : dataset.cases) {
        json sentences = json::array();
        for (const Sentence& s : c.sentences)
            sentences.push_back({{"id", s.id}, {"text", s.text}});
        cases.push_back({{"case_id", c.case_id},
                         {"patient_narrative", c.patient_narrative},
                         {"clinician_question", c.clinician_question},
                         {"note_excerpt", c.note_excerpt},
                         {"sentences", std::move(sentences)}});
    }
    json out{{"cases", std::move(cases)}};
    if (dataset.keys) out["keys"] = keys_to_json(*dataset.keys);
    return out;
}

// Cross-validates keys against cases: every key must name a known case and
// only label sentence ids that exist there.
inline void validate_keys(const std::vector<Case>& cases, const std::vector<CaseKey>& keys) {
    for (const CaseKey& key : keys) {
        const Case* c = nullptr;
        for (const Case& candidate : cases)
            if (candidate.case_id == key.case_id) c = &candidate;
        if (!c) throw ValidationError("key references unknown case " + key.case_id);
        std::set<int> ids = c->sentence_ids();
        for (const auto& [id, label] : key.labels) {
            (void)label;
            if (!ids.count(id))
                throw ValidationError("case " + key.case_id + ": key labels unknown sentence id " +
                                      std::to_string(id));
        }
    }
}

inline Dataset from_json(const json& doc) {
    Dataset dataset;
    if (!doc.is_object() || !doc.contains("cases"))
        throw ValidationError("dataset JSON: missing \"cases\"");
    for (const json& jc : doc.at("cases")) {
        Case c;
        c.case_id = jc.at("case_id").get<std::string>();
        c.patient_narrative = jc.value("patient_narrative", std::string());
        c.clinician_question = jc.value("clinician_question", std::string());
        c.note_excerpt = jc.value("note_excerpt", std::string());
        for (const json& js : jc.at("sentences")) {
            Sentence s;
            s.id = js.at("id").get<int>();
            s.text = js.at("text").get<std::string>();
            c.sentences.push_back(std::move(s));
        }
        detail::check_case(c);
        dataset.cases.push_back(std::move(c));
    }
    std::set<std::string> ids;
    for (const Case& c : dataset.cases)
        if (!ids.insert(c.case_id).second)
            throw ValidationError("duplicate case id " + c.case_id);
    if (doc.contains("keys") && !doc.at("keys").is_null()) {
        dataset.keys = parse_keys_json(doc.at("keys"));
        validate_keys(dataset.cases, *dataset.keys);
    }
    return dataset;
}

// --- Loading -----------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Loads cases from XML or canonical JSON (by extension), optionally merges a
// key file, and cross-validates. The returned Dataset is immutable by
// convention: nothing in the library mutates it after load.
inline Dataset load_dataset(const std::string& cases_path,
                            const std::optional<std::string>& key_path = std::nullopt) {
    std::string raw = read_file(cases_path);
    Dataset dataset;
    bool looks_xml = cases_path.size() >= 4 &&
                     cases_path.compare(cases_path.size() - 4, 4, ".xml") == 0;
    if (looks_xml) {
        dataset.cases = parse_cases_xml(raw);
    } else {
        json doc;
        try {
            doc = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError(cases_path + ": " + e.what());
        }
        dataset = from_json(doc);
    }
    if (key_path) {
        dataset.keys = parse_key_json(read_file(*key_path));
        validate_keys(dataset.cases, *dataset.keys);
    }
    return dataset;
}

}  // namespace noteqa::corpus
