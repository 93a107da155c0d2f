#include "kvalign/cip.hpp"
#include "kvalign/errors.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <thread>

using namespace kvalign;

namespace {

const std::string kReply =
    "<SUMMARY>\nLook at plumage and bill.\n</SUMMARY>\n\n<CAPTION>\nA duck on a pond.\n</CAPTION>\n\n"
    "<REASONING>\nGreen head, yellow bill.\n</REASONING>\n\n<CONCLUSION>\nA dabbling duck with a green head.\n</CONCLUSION>";

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Serves POST /v1/chat on a free local port; the handler sees the attempt index.
class MockServer {
 public:
  using Handler = std::function<void(int attempt, const httplib::Request&, httplib::Response&)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      handler_(attempts_++, req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  ClientConfig client() const {
    ClientConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat";
    c.model = "mock-model";
    c.token = "secret";
    c.timeout = std::chrono::milliseconds(2000);
    c.initial_backoff = std::chrono::milliseconds(1);
    return c;
  }
  int attempts() const { return attempts_; }
  std::string last_auth() const { return last_auth_; }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  Handler handler_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> attempts_{0};
  std::string last_auth_, last_body_;
};

}  // namespace

TEST(Prompt, ContainsClassImagesAndTags) {
  const std::string p = cip::build_prompt("mallard", {"a.jpg", "b.jpg"}, PromptVariant::Strategy);
  EXPECT_NE(p.find("mallard"), std::string::npos);
  EXPECT_NE(p.find("b.jpg"), std::string::npos);
  for (const auto& tag : cip::stage_tags(PromptVariant::Strategy)) EXPECT_NE(p.find("<" + tag + ">"), std::string::npos);
  EXPECT_THROW(cip::build_prompt("  ", {}), EmptyClassName);
}

TEST(Prompt, VariantNames) {
  for (const auto v : {PromptVariant::Strategy, PromptVariant::Summary})
    EXPECT_EQ(parse_prompt_variant(prompt_variant_name(v)), v);
  EXPECT_THROW(parse_prompt_variant("other"), InvalidArgument);
}

TEST(Stages, FormatParseRoundTrip) {
  for (const auto v : {PromptVariant::Strategy, PromptVariant::Summary}) {
    std::map<std::string, std::string> bodies;
    for (const auto& tag : cip::stage_tags(v)) bodies[tag] = "body of " + tag;
    const auto d = cip::parse_stages(cip::format_stages(bodies, v), v);
    EXPECT_EQ(d.stage_outputs, bodies);
    EXPECT_EQ(d.conclusion, "body of CONCLUSION");
    EXPECT_TRUE(d.complete);
    EXPECT_TRUE(d.warnings.empty());
  }
}

TEST(Stages, ProseReplyListsEveryMissingStage) {
  try {
    cip::parse_stages("It is a duck.");
    FAIL() << "expected MissingStage";
  } catch (const MissingStage& e) {
    for (const auto& tag : cip::stage_tags(PromptVariant::Summary))
      EXPECT_NE(std::string(e.what()).find(tag), std::string::npos);
  }
}

TEST(Stages, MalformedTags) {
  EXPECT_THROW(cip::parse_stages("<SUMMARY>a<CAPTION>b</CAPTION></SUMMARY>"), MalformedTags);
  EXPECT_THROW(cip::parse_stages("<SUMMARY>a</SUMMARY><SUMMARY>b</SUMMARY>"), MalformedTags);
  EXPECT_THROW(cip::parse_stages("</SUMMARY>"), MalformedTags);
  EXPECT_THROW(cip::parse_stages("<SUMMARY>never closed"), MalformedTags);
  EXPECT_THROW(cip::parse_stages("<SUMMARY>a</SUMMARY>"), ParseError);
}

TEST(Stages, OutOfOrderWarnsAndEmptyConclusionIsIncomplete) {
  const std::string reordered =
      "<CAPTION>c</CAPTION><SUMMARY>s</SUMMARY><REASONING>r</REASONING><CONCLUSION> </CONCLUSION>";
  const auto d = cip::parse_stages(reordered);
  EXPECT_FALSE(d.warnings.empty());
  EXPECT_FALSE(d.complete);
}

TEST(Client, ConfigValidation) {
  ClientConfig c;
  c.endpoint = "ftp://example.com/x";
  c.model = "m";
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.endpoint = "https://example.com:8443/v1/chat";
  EXPECT_NO_THROW(c.validate());
  c.model.clear();
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Client, ReplyContentShapes) {
  EXPECT_EQ(cip::reply_content(completion("hi")), "hi");
  EXPECT_THROW(cip::reply_content("{}"), ParseError);
  EXPECT_THROW(cip::reply_content("not json"), ParseError);
  const auto body = nlohmann::json::parse(cip::request_body("m", "p"));
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_EQ(body.at("messages").at(0).at("content"), "p");
}

TEST(Client, RetriesServerErrorsThenSucceeds) {
  MockServer server([](int attempt, const httplib::Request&, httplib::Response& res) {
    if (attempt < 2) {
      res.status = 500;
      return;
    }
    res.set_content(completion(kReply), "application/json");
  });
  const auto d = cip::request_description(server.client(), "prompt text");
  EXPECT_EQ(server.attempts(), 3);
  EXPECT_TRUE(d.complete);
  EXPECT_EQ(d.conclusion, "A dabbling duck with a green head.");
  EXPECT_EQ(server.last_auth(), "Bearer secret");
  EXPECT_EQ(nlohmann::json::parse(server.last_body()).at("model"), "mock-model");
}

TEST(Client, GivesUpAfterRetryBudget) {
  MockServer server([](int, const httplib::Request&, httplib::Response& res) { res.status = 503; });
  ClientConfig c = server.client();
  c.max_retries = 2;
  try {
    cip::request_description(c, "p");
    FAIL() << "expected HttpStatusError";
  } catch (const HttpStatusError& e) {
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(server.attempts(), 3);
}

TEST(Client, ClientErrorsAreNotRetried) {
  MockServer server([](int, const httplib::Request&, httplib::Response& res) { res.status = 401; });
  EXPECT_THROW(cip::request_description(server.client(), "p"), HttpStatusError);
  EXPECT_EQ(server.attempts(), 1);
}

TEST(Client, SlowServerTimesOut) {
  MockServer server([](int, const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(completion(kReply), "application/json");
  });
  ClientConfig c = server.client();
  c.timeout = std::chrono::milliseconds(150);
  c.max_retries = 0;
  EXPECT_THROW(cip::request_description(c, "p"), Timeout);
}

TEST(Client, UnreachableHostIsNetworkError) {
  ClientConfig c;
  c.endpoint = "http://127.0.0.1:1/v1/chat";
  c.model = "m";
  c.timeout = std::chrono::milliseconds(300);
  c.max_retries = 1;
  c.initial_backoff = std::chrono::milliseconds(1);
  EXPECT_THROW(cip::request_description(c, "p"), NetworkError);
}

TEST(Client, ProseReplyIsMissingStage) {
  MockServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.set_content(completion("It is a duck."), "application/json");
  });
  EXPECT_THROW(cip::request_description(server.client(), "p"), MissingStage);
}
