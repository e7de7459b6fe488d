#pragma once

// LLM labeling client for real documents.
//
// Sends one chat-completions request per document to an OpenAI-compatible
// endpoint (system message: codebook and answer instruction, user message:
// the document, temperature 0) and parses a leading yes/no from the reply.
// Replies that do not start with yes or no are reported as parse failures.
//
// Define CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) for https endpoints.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

// Eigen (via io.hpp) must come before httplib.h, whose resolver headers
// define a `_res` macro that collides with Eigen parameter names.
#include "cbi/core_model.hpp"
#include "cbi/io.hpp"

#include "httplib.h"
#include "json.hpp"

namespace cbi::annotator {

enum class DefinitionType { SurfaceForm, Dictionary, Stipulative };

inline std::string_view to_string(DefinitionType t) {
    switch (t) {
        case DefinitionType::SurfaceForm: return "surface_form";
        case DefinitionType::Dictionary: return "dictionary";
        case DefinitionType::Stipulative: return "stipulative";
    }
    return "";
}

inline DefinitionType parse_definition_type(std::string_view s) {
    if (s == "surface_form") return DefinitionType::SurfaceForm;
    if (s == "dictionary") return DefinitionType::Dictionary;
    if (s == "stipulative") return DefinitionType::Stipulative;
    throw Error("unknown definition_type '" + std::string(s) + "'");
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

struct Codebook {
    std::string name;
    std::string definition_text;
    DefinitionType definition_type = DefinitionType::Stipulative;
};

/// A surface-form codebook carries nothing but the class label.
inline void validate(const Codebook& c) {
    if (trim(c.name).empty()) throw Error("codebook: name is empty");
    if (trim(c.definition_text).empty()) throw Error("codebook: definition_text is empty");
    if (c.definition_type == DefinitionType::SurfaceForm && trim(c.definition_text) != trim(c.name)) {
        throw Error("codebook: a surface_form definition must consist only of the label '" +
                    c.name + "'");
    }
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
    try {
        Codebook c{j.at("name").get<std::string>(), j.at("definition_text").get<std::string>(),
                   parse_definition_type(j.at("definition_type").get<std::string>())};
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("codebook: ") + e.what());
    }
}

inline Codebook read_codebook(const std::string& path) {
    try {
        return codebook_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("'" + path + "': " + e.what());
    }
}

inline constexpr std::string_view kAnswerInstruction =
    "Answer with exactly one word: yes or no.";

/// System message: the codebook followed by the answer instruction.
inline std::string system_message(const Codebook& c) {
    std::string out;
    if (c.definition_type == DefinitionType::SurfaceForm) {
        out = "Classify as " + trim(c.definition_text) + ": yes/no";
    } else {
        out = "Classify the document as " + trim(c.name) +
              " or not, using this definition:\n\n" + trim(c.definition_text);
    }
    out += "\n\n";
    out += kAnswerInstruction;
    return out;
}

/// Full prompt as a single text: codebook, document, answer instruction.
inline std::string build_prompt(const Codebook& c, std::string_view document) {
    if (trim(document).empty()) throw Error("build_prompt: document is empty");
    return system_message(c) + "\n\nDocument:\n" + std::string(document);
}

/// Leading yes/no, ignoring case, surrounding whitespace, quotes and
/// markdown emphasis. "No." is 0; "Not sure" and "maybe" are failures.
inline std::optional<Label> parse_answer(std::string_view raw) {
    std::size_t i = 0;
    while (i < raw.size() && !std::isalnum(static_cast<unsigned char>(raw[i]))) ++i;
    std::string word;
    while (i < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i]))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i])));
        ++i;
    }
    if (word == "yes") return 1;
    if (word == "no") return 0;
    return std::nullopt;
}

struct Document {
    std::string id;
    std::string text;
};

struct AnnotationJob {
    std::vector<Document> documents;
    Codebook codebook;
    std::string endpoint;  // scheme://host[:port][/path]
    std::string model;
    std::chrono::milliseconds timeout{30'000};
    int max_retries = 3;
    std::size_t concurrency = 4;
    std::chrono::milliseconds backoff{250};  // doubled after every failed attempt
    std::optional<std::string> api_key;      // defaults to $ANNOTATOR_API_KEY
};

enum class Status { Labeled, ParseFailure, RequestFailure };

struct AnnotationOutcome {
    std::string id;
    std::optional<Label> label;
    std::string raw;  // model reply, or the error for request failures
    Status status = Status::Labeled;
};

class AuthenticationError : public Error {
public:
    using Error::Error;
};

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint must start with http:// or https://");
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error("endpoint must start with http:// or https://");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    e.path = path_start == std::string::npos ? "" : url.substr(path_start);
    if (e.path.empty() || e.path == "/") e.path = "/v1/chat/completions";
    return e;
}

inline std::string request_body(const AnnotationJob& job, const Document& doc) {
    nlohmann::ordered_json body{
        {"model", job.model},
        {"messages",
         nlohmann::ordered_json::array(
             {{{"role", "system"}, {"content", system_message(job.codebook)}},
              {{"role", "user"}, {"content", doc.text}}})},
        {"temperature", 0}};
    return body.dump();
}

namespace detail {

inline std::optional<std::string> reply_content(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

inline bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace detail

/// Labels every document. Output has one row per document, in input order.
/// Throws AuthenticationError on 401/403 and Error on invalid jobs.
inline std::vector<AnnotationOutcome> annotate_documents(const AnnotationJob& job) {
    validate(job.codebook);
    if (job.model.empty()) throw Error("annotation job: model is empty");
    if (job.concurrency < 1) throw Error("annotation job: concurrency must be at least 1");
    if (job.max_retries < 0) throw Error("annotation job: max_retries must be non-negative");
    {
        std::set<std::string> ids;
        for (const auto& d : job.documents) {
            if (!ids.insert(d.id).second) throw Error("annotation job: duplicate id '" + d.id + "'");
            if (trim(d.text).empty()) throw Error("annotation job: document '" + d.id + "' is empty");
        }
    }
    const Endpoint ep = parse_endpoint(job.endpoint);
    std::optional<std::string> key = job.api_key;
    if (!key) {
        if (const char* env = std::getenv("ANNOTATOR_API_KEY"); env && *env) key = env;
    }

    std::vector<AnnotationOutcome> out(job.documents.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> auth_failed{false};
    std::mutex auth_mutex;
    std::string auth_message;

    auto worker = [&] {
        httplib::Client client(ep.origin);
        client.set_connection_timeout(job.timeout);
        client.set_read_timeout(job.timeout);
        client.set_write_timeout(job.timeout);
        if (key) client.set_bearer_token_auth(*key);

        for (std::size_t i = next++; i < job.documents.size() && !auth_failed; i = next++) {
            const auto& doc = job.documents[i];
            auto& o = out[i];
            o.id = doc.id;
            const std::string body = request_body(job, doc);
            auto delay = job.backoff;
            std::string last_error;
            bool done = false;
            for (int attempt = 0; attempt <= job.max_retries && !done; ++attempt) {
                if (attempt > 0) {
                    std::this_thread::sleep_for(delay);
                    delay *= 2;
                }
                auto res = client.Post(ep.path, body, "application/json");
                if (!res) {
                    last_error = "request failed: " + httplib::to_string(res.error());
                    continue;
                }
                if (res->status == 401 || res->status == 403) {
                    std::lock_guard lock(auth_mutex);
                    if (!auth_failed.exchange(true)) {
                        auth_message = "authentication failed with HTTP " +
                                       std::to_string(res->status) + ": " + res->body;
                    }
                    return;
                }
                if (res->status != 200) {
                    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
                    if (detail::retryable(res->status)) continue;
                    break;
                }
                const auto content = detail::reply_content(res->body);
                if (!content) {
                    last_error = "malformed response body: " + res->body;
                    break;
                }
                o.raw = *content;
                o.label = parse_answer(*content);
                o.status = o.label ? Status::Labeled : Status::ParseFailure;
                done = true;
            }
            if (!done) {
                o.status = Status::RequestFailure;
                o.label.reset();
                o.raw = last_error;
            }
        }
    };

    const std::size_t threads =
        std::max<std::size_t>(1, std::min(job.concurrency, job.documents.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (auth_failed) throw AuthenticationError(auth_message);
    return out;
}

/// id,llm_label,raw. Failure rows keep an empty llm_label; request failures
/// carry the error text prefixed with "ERROR: ".
inline std::string outcomes_to_csv(const std::vector<AnnotationOutcome>& rows) {
    std::string out = "id,llm_label,raw\n";
    for (const auto& r : rows) {
        out += csv_quote(r.id) + ',';
        if (r.label) out += std::to_string(*r.label);
        out += ',';
        out += csv_quote(r.status == Status::RequestFailure ? "ERROR: " + r.raw : r.raw);
        out += '\n';
    }
    return out;
}

/// Documents CSV with header id,text.
inline std::vector<Document> documents_from_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].fields != std::vector<std::string>{"id", "text"}) {
        throw Error("line 1: documents header must be id,text");
    }
    std::vector<Document> docs;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].fields.size() != 2) {
            throw Error("line " + std::to_string(rows[i].line) + ": expected 2 fields");
        }
        docs.push_back({rows[i].fields[0], rows[i].fields[1]});
    }
    return docs;
}

}  // namespace cbi::annotator
