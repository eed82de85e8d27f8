#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"

// Uniform interface to text-generation backends plus prompt-template
// rendering. Nothing here interprets completion content; parsing of model
// output lives with the selection and answer stages.

namespace noteqa::genclient {

using json = nlohmann::ordered_json;

struct Message {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const Message&) const = default;
};

struct GenerationRequest {
    std::vector<Message> messages;
    int max_tokens = 512;
    double temperature = 0.0;
    std::optional<int> seed;
};

struct GenerationResult {
    std::string text;
    std::string backend_id;
    long latency_ms = 0;
};

// --- Prompt templates --------------------------------------------------------

inline const std::set<std::string>& allowed_placeholders() {
    static const std::set<std::string> names = {
        "patient_narrative", "clinical_question", "clinician_question",
        "sentences",         "note_excerpt",      "id",
    };
    return names;
}

using Bindings = std::map<std::string, std::string>;

namespace detail {

inline bool is_placeholder_char(char c, bool first) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (first) return std::isalpha(uc) || c == '_';
    return std::isalnum(uc) || c == '_';
}

// Finds {name} tokens. Brace content that is not a bare identifier is left
// alone (it is ordinary text).
template <typename Fn>
inline void scan_placeholders(std::string_view s, Fn&& on_token) {
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '{') {
            ++i;
            continue;
        }
        size_t j = i + 1;
        while (j < s.size() && s[j] != '}' && s[j] != '{') ++j;
        if (j < s.size() && s[j] == '}' && j > i + 1) {
            std::string_view name = s.substr(i + 1, j - i - 1);
            bool identifier = is_placeholder_char(name[0], true);
            for (size_t k = 1; identifier && k < name.size(); ++k)
                identifier = is_placeholder_char(name[k], false);
            if (identifier) {
                on_token(name, i, j + 1);
                i = j + 1;
                continue;
            }
        }
        ++i;
    }
}

inline std::set<std::string> placeholders_in(std::string_view s) {
    std::set<std::string> out;
    scan_placeholders(s, [&](std::string_view name, size_t, size_t) {
        out.insert(std::string(name));
    });
    return out;
}

inline std::string substitute(std::string_view s, const Bindings& bindings) {
    std::string out;
    out.reserve(s.size());
    size_t last = 0;
    scan_placeholders(s, [&](std::string_view name, size_t begin, size_t end) {
        out.append(s.substr(last, begin - last));
        auto it = bindings.find(std::string(name));
        if (it == bindings.end())
            throw ValidationError("unbound placeholder: " + std::string(name));
        out.append(it->second);
        last = end;
    });
    out.append(s.substr(last));
    return out;
}

}  // namespace detail

struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;
    std::optional<std::string> assistant_prefix;

    std::set<std::string> placeholders() const {
        std::set<std::string> all = detail::placeholders_in(system);
        for (const std::string& p : detail::placeholders_in(user)) all.insert(p);
        if (assistant_prefix)
            for (const std::string& p : detail::placeholders_in(*assistant_prefix))
                all.insert(p);
        return all;
    }
};

// Parses a template document and rejects unknown placeholders immediately, so
// a bad template fails at load time rather than mid-run.
inline PromptTemplate parse_template(const json& doc, const std::string& fallback_name = "") {
    if (!doc.is_object()) throw ValidationError("template: expected a JSON object");
    PromptTemplate t;
    t.name = doc.value("name", fallback_name);
    t.system = doc.value("system", std::string());
    if (!doc.contains("user") || !doc.at("user").is_string())
        throw ValidationError("template " + t.name + ": missing \"user\" text");
    t.user = doc.at("user").get<std::string>();
    if (doc.contains("assistant") && doc.at("assistant").is_string())
        t.assistant_prefix = doc.at("assistant").get<std::string>();
    for (const std::string& p : t.placeholders())
        if (!allowed_placeholders().count(p))
            throw ValidationError("template " + t.name + ": unknown placeholder {" + p + "}");
    return t;
}

inline PromptTemplate load_template(const std::string& path) {
    std::string raw = corpus::read_file(path);
    json doc;
    try {
        doc = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return parse_template(doc, std::filesystem::path(path).stem().string());
}

inline std::map<std::string, PromptTemplate> load_template_dir(const std::string& dir) {
    std::map<std::string, PromptTemplate> templates;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        PromptTemplate t = load_template(entry.path().string());
        templates[t.name] = std::move(t);
    }
    return templates;
}

// Literal substitution of bindings into the template. Extra bindings are
// allowed; an unresolved placeholder is an error naming the placeholder.
inline std::vector<Message> render_template(const PromptTemplate& t, const Bindings& bindings) {
    std::vector<Message> messages;
    if (!t.system.empty())
        messages.push_back({"system", detail::substitute(t.system, bindings)});
    messages.push_back({"user", detail::substitute(t.user, bindings)});
    if (t.assistant_prefix && !t.assistant_prefix->empty())
        messages.push_back({"assistant", detail::substitute(*t.assistant_prefix, bindings)});
    return messages;
}

// Stable 64-bit fingerprint of a rendered message list (FNV-1a over
// role/content with unit separators). Mock and transcript backends key on it.
inline std::uint64_t fingerprint(const std::vector<Message>& messages) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&](std::string_view s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    };
    for (const Message& m : messages) {
        mix(m.role);
        mix("\x1f");
        mix(m.content);
        mix("\x1e");
    }
    return h;
}

inline std::string fingerprint_hex(const std::vector<Message>& messages) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fingerprint(messages);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

// --- Backends ----------------------------------------------------------------

// Bounds in-flight requests across threads.
class ConcurrencyLimiter {
  public:
    explicit ConcurrencyLimiter(int cap) : available_(cap > 0 ? cap : 1) {}

    class Guard {
      public:
        Guard() = default;
        explicit Guard(ConcurrencyLimiter* l) : limiter_(l) {}
        Guard(Guard&& other) noexcept : limiter_(other.limiter_) { other.limiter_ = nullptr; }
        Guard& operator=(Guard&& other) noexcept {
            if (this != &other) {
                release();
                limiter_ = other.limiter_;
                other.limiter_ = nullptr;
            }
            return *this;
        }
        ~Guard() { release(); }

      private:
        void release() {
            if (limiter_) limiter_->release();
            limiter_ = nullptr;
        }
        ConcurrencyLimiter* limiter_ = nullptr;
    };

    Guard acquire() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
        return Guard(this);
    }

  private:
    void release() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

class Backend {
  public:
    virtual ~Backend() = default;

    GenerationResult generate(const GenerationRequest& req) {
        validate(req);
        ConcurrencyLimiter::Guard guard = limiter_->acquire();
        return do_generate(req);
    }

    virtual std::string id() const = 0;

    // Default cap is 4 concurrent in-flight requests.
    void set_concurrency_cap(int cap) {
        limiter_ = std::make_shared<ConcurrencyLimiter>(cap);
    }

  protected:
    virtual GenerationResult do_generate(const GenerationRequest& req) = 0;

  private:
    static void validate(const GenerationRequest& req) {
        bool has_user = false;
        for (const Message& m : req.messages) has_user = has_user || m.role == "user";
        if (!has_user) throw ValidationError("generation request without a user message");
        if (req.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
        if (req.temperature < 0) throw ValidationError("temperature must be non-negative");
    }

    std::shared_ptr<ConcurrencyLimiter> limiter_ = std::make_shared<ConcurrencyLimiter>(4);
};

// Canned completions keyed by message fingerprint. Deterministic by
// construction: identical rendered requests always replay the same text.
class MockBackend : public Backend {
  public:
    MockBackend() = default;
    explicit MockBackend(std::map<std::uint64_t, std::string> responses)
        : responses_(std::move(responses)) {}

    void add(const std::vector<Message>& messages, std::string completion) {
        responses_[fingerprint(messages)] = std::move(completion);
    }

    std::string id() const override { return "mock"; }

  protected:
    GenerationResult do_generate(const GenerationRequest& req) override {
        auto it = responses_.find(fingerprint(req.messages));
        if (it == responses_.end())
            throw BackendError("mock backend has no completion for fingerprint " +
                               fingerprint_hex(req.messages));
        return {it->second, id(), 0};
    }

  private:
    std::map<std::uint64_t, std::string> responses_;
};

// Replays a recorded transcript file: a JSON array of
// {"fingerprint": "<16 hex digits>", "completion": "..."} entries. Matching is
// by fingerprint, so replay is independent of request order and safe under
// concurrent fan-out.
class TranscriptBackend : public Backend {
  public:
    explicit TranscriptBackend(const std::string& path) : path_(path) {
        std::string raw = corpus::read_file(path);
        json doc;
        try {
            doc = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": " + e.what());
        }
        const json& entries = doc.is_array() ? doc : doc.at("entries");
        for (const json& entry : entries) {
            std::string hex = entry.at("fingerprint").get<std::string>();
            responses_[std::stoull(hex, nullptr, 16)] =
                entry.at("completion").get<std::string>();
        }
    }

    std::string id() const override { return "transcript"; }

  protected:
    GenerationResult do_generate(const GenerationRequest& req) override {
        auto it = responses_.find(fingerprint(req.messages));
        if (it == responses_.end())
            throw BackendError("transcript " + path_ + " has no completion for fingerprint " +
                               fingerprint_hex(req.messages));
        return {it->second, id(), 0};
    }

  private:
    std::string path_;
    std::map<std::uint64_t, std::string> responses_;
};

// Wraps another backend and records every successful completion, for
// producing transcript fixtures from a live endpoint.
class RecordingBackend : public Backend {
  public:
    explicit RecordingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

    std::string id() const override { return inner_->id(); }

    json transcript() const {
        std::lock_guard<std::mutex> lock(mutex_);
        json out = json::array();
        for (const auto& [fp, completion] : entries_) {
            json entry;
            entry["fingerprint"] = fp;
            entry["completion"] = completion;
            out.push_back(std::move(entry));
        }
        return out;
    }

  protected:
    GenerationResult do_generate(const GenerationRequest& req) override {
        GenerationResult result = inner_->generate(req);
        std::lock_guard<std::mutex> lock(mutex_);
        entries_[fingerprint_hex(req.messages)] = result.text;
        return result;
    }

  private:
    std::shared_ptr<Backend> inner_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> entries_;
};

struct HttpConfig {
    std::string endpoint;  // e.g. http://localhost:8000
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_header = "Authorization";
    std::string api_key_value;  // empty: header omitted
    int retries = 2;            // additional attempts after the first
    int backoff_ms = 100;       // doubled per retry, no jitter
    int timeout_s = 120;
};

}  // namespace noteqa::genclient
