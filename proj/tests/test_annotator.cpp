#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <thread>

#include "cbi/annotator.hpp"
#include "stub_server.hpp"

using cbi::Error;
using namespace cbi::annotator;
using testing_stub::StubServer;

namespace {

AnnotationJob job_for(const StubServer& s, std::size_t docs) {
    AnnotationJob job;
    for (std::size_t i = 0; i < docs; ++i) {
        job.documents.push_back({"doc" + std::to_string(i), "text of document " + std::to_string(i)});
    }
    job.codebook = {"protest", "protest", DefinitionType::SurfaceForm};
    job.endpoint = s.url();
    job.model = "stub-model";
    job.timeout = std::chrono::milliseconds(5000);
    job.max_retries = 2;
    job.concurrency = 3;
    job.backoff = std::chrono::milliseconds(1);
    job.api_key = "test-key";
    return job;
}

Codebook fixture(const std::string& name) {
    return read_codebook(std::string(CBI_DATA_DIR) + "/codebooks/" + name + ".json");
}

}  // namespace

TEST(ParseAnswer, YesNoAndFailures) {
    EXPECT_EQ(parse_answer("yes"), 1);
    EXPECT_EQ(parse_answer("  YES, it is a protest"), 1);
    EXPECT_EQ(parse_answer("No."), 0);
    EXPECT_EQ(parse_answer("**no**"), 0);
    EXPECT_EQ(parse_answer("\"No\""), 0);
    EXPECT_EQ(parse_answer("maybe"), std::nullopt);
    EXPECT_EQ(parse_answer("Not sure"), std::nullopt);
    EXPECT_EQ(parse_answer("yesterday"), std::nullopt);
    EXPECT_EQ(parse_answer(""), std::nullopt);
}

TEST(BuildPrompt, SurfaceForm) {
    const Codebook cb{"protest", "protest", DefinitionType::SurfaceForm};
    const auto p = build_prompt(cb, "Crowds gathered downtown.");
    EXPECT_EQ(p,
              "Classify as protest: yes/no\n\nAnswer with exactly one word: yes or no.\n\n"
              "Document:\nCrowds gathered downtown.");
    EXPECT_EQ(p, build_prompt(cb, "Crowds gathered downtown."));
    EXPECT_THROW(build_prompt(cb, "   "), Error);
}

TEST(BuildPrompt, StipulativeFixtureIsEmbeddedVerbatim) {
    const auto acled = fixture("acled");
    EXPECT_EQ(acled.definition_type, DefinitionType::Stipulative);
    const auto p = build_prompt(acled, "A group of angry youth smashed the windows of businesses.");
    EXPECT_NE(p.find(acled.definition_text), std::string::npos);
    EXPECT_NE(p.find("in-person public demonstration of three or more participants"),
              std::string::npos);
    for (const auto* name : {"ace", "ccc", "cameo", "protest_surface_form"}) {
        EXPECT_NO_THROW(fixture(name)) << name;
    }
}

TEST(Codebook, SurfaceFormMayOnlyHoldTheLabel) {
    EXPECT_THROW(validate(Codebook{"protest", "protest: a public gathering", DefinitionType::SurfaceForm}),
                 Error);
    EXPECT_NO_THROW(validate(Codebook{"protest", "protest", DefinitionType::SurfaceForm}));
}

TEST(AnnotateDocuments, AlwaysYes) {
    StubServer s([](const std::string&) { return std::pair{200, std::string("yes")}; });
    const auto rows = annotate_documents(job_for(s, 10));
    ASSERT_EQ(rows.size(), 10u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].id, "doc" + std::to_string(i));
        EXPECT_EQ(rows[i].label, 1);
        EXPECT_EQ(rows[i].status, Status::Labeled);
    }
}

TEST(AnnotateDocuments, CaseAndPunctuationTolerant) {
    StubServer s([](const std::string&) { return std::pair{200, std::string("No.")}; });
    for (const auto& r : annotate_documents(job_for(s, 4))) EXPECT_EQ(r.label, 0);
}

TEST(AnnotateDocuments, UnparseableRepliesAreNotGuessed) {
    StubServer s([](const std::string& doc) {
        return std::pair{200, std::string(doc.back() == '1' ? "maybe" : "Yes")};
    });
    const auto rows = annotate_documents(job_for(s, 4));
    EXPECT_EQ(rows[0].label, 1);
    EXPECT_EQ(rows[1].status, Status::ParseFailure);
    EXPECT_FALSE(rows[1].label);
    EXPECT_EQ(rows[1].raw, "maybe");
    const auto csv = outcomes_to_csv(rows);
    EXPECT_NE(csv.find("doc1,,maybe\n"), std::string::npos) << csv;
}

TEST(AnnotateDocuments, RequestShape) {
    StubServer s([](const std::string&) { return std::pair{200, std::string("yes")}; });
    auto job = job_for(s, 1);
    job.codebook = fixture("acled");
    annotate_documents(job);
    const auto bodies = s.bodies();
    ASSERT_EQ(bodies.size(), 1u);
    const auto b = nlohmann::json::parse(bodies[0]);
    EXPECT_EQ(b["model"], "stub-model");
    EXPECT_EQ(b["temperature"], 0);
    EXPECT_EQ(b["messages"][0]["role"], "system");
    EXPECT_NE(b["messages"][0]["content"].get<std::string>().find(job.codebook.definition_text),
              std::string::npos);
    EXPECT_EQ(b["messages"][1]["role"], "user");
    EXPECT_EQ(b["messages"][1]["content"], "text of document 0");
    EXPECT_EQ(s.auth_headers()[0], "Bearer test-key");
}

TEST(AnnotateDocuments, RetriesTransientFailures) {
    std::atomic<int> calls{0};
    StubServer s([&](const std::string&) {
        return ++calls <= 2 ? std::pair{503, std::string("busy")} : std::pair{200, std::string("yes")};
    });
    auto job = job_for(s, 1);
    job.max_retries = 2;
    const auto rows = annotate_documents(job);
    EXPECT_EQ(rows[0].label, 1);
    EXPECT_EQ(calls.load(), 3);
}

TEST(AnnotateDocuments, ExhaustedRetriesGiveFailureRows) {
    StubServer s([](const std::string&) { return std::pair{500, std::string("down")}; });
    auto job = job_for(s, 3);
    job.max_retries = 1;
    const auto rows = annotate_documents(job);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.status, Status::RequestFailure);
        EXPECT_FALSE(r.label);
    }
    EXPECT_EQ(s.bodies().size(), 6u);
    EXPECT_NE(outcomes_to_csv(rows).find("ERROR: HTTP 500"), std::string::npos);
}

TEST(AnnotateDocuments, UnreachableEndpointGivesFailureRows) {
    AnnotationJob job;
    job.documents = {{"a", "text"}};
    job.codebook = {"protest", "protest", DefinitionType::SurfaceForm};
    job.endpoint = "http://127.0.0.1:1";
    job.model = "m";
    job.max_retries = 1;
    job.backoff = std::chrono::milliseconds(1);
    job.timeout = std::chrono::milliseconds(500);
    const auto rows = annotate_documents(job);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].status, Status::RequestFailure);
}

TEST(AnnotateDocuments, AuthenticationFailureIsJobLevel) {
    StubServer s([](const std::string&) { return std::pair{401, std::string("bad key")}; });
    EXPECT_THROW(annotate_documents(job_for(s, 5)), AuthenticationError);
}

TEST(AnnotateDocuments, RespectsConcurrencyLimit) {
    StubServer s([](const std::string&) { return std::pair{200, std::string("no")}; });
    s.delay_ms = 30;
    auto job = job_for(s, 12);
    job.concurrency = 2;
    const auto rows = annotate_documents(job);
    EXPECT_EQ(rows.size(), 12u);
    EXPECT_LE(s.max_in_flight(), 2);
    EXPECT_GE(s.max_in_flight(), 1);
}

TEST(AnnotateDocuments, IdenticalResponsesGiveIdenticalOutput) {
    auto reply = [](const std::string& doc) {
        return std::pair{200, std::string(doc.back() % 2 ? "Yes." : "no")};
    };
    StubServer a(reply), b(reply);
    EXPECT_EQ(outcomes_to_csv(annotate_documents(job_for(a, 9))),
              outcomes_to_csv(annotate_documents(job_for(b, 9))));
}

TEST(AnnotateDocuments, RejectsDuplicateIds) {
    StubServer s([](const std::string&) { return std::pair{200, std::string("yes")}; });
    auto job = job_for(s, 2);
    job.documents[1].id = job.documents[0].id;
    EXPECT_THROW(annotate_documents(job), Error);
}

TEST(Documents, ParseCsv) {
    const auto docs = documents_from_csv("id,text\n1,\"Protesters, 200 of them, marched\"\n2,calm day\n");
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(docs[0].text, "Protesters, 200 of them, marched");
    EXPECT_THROW(documents_from_csv("id,body\n"), Error);
}

TEST(Endpoint, DefaultsToChatCompletionsPath) {
    EXPECT_EQ(parse_endpoint("http://localhost:8080").path, "/v1/chat/completions");
    EXPECT_EQ(parse_endpoint("https://host/v2/chat").path, "/v2/chat");
    EXPECT_EQ(parse_endpoint("https://host/v2/chat").origin, "https://host");
    EXPECT_THROW(parse_endpoint("ftp://host"), Error);
}
