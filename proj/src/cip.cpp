#include "kvalign/cip.hpp"

#include "kvalign/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <regex>
#include <sstream>
#include <thread>

namespace kvalign {

std::string prompt_variant_name(PromptVariant v) {
  return v == PromptVariant::Strategy ? "strategy" : "summary";
}

PromptVariant parse_prompt_variant(const std::string& name) {
  if (name == "strategy") return PromptVariant::Strategy;
  if (name == "summary") return PromptVariant::Summary;
  throw InvalidArgument("unknown prompt variant '" + name + "' (expected strategy or summary)");
}

namespace {

const std::regex kUrl(R"(^(https?)://([^/:\s]+)(:\d{1,5})?(/\S*)?$)");

struct UrlParts {
  std::string origin;
  std::string path;
};

UrlParts split_url(const std::string& url) {
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw InvalidArgument("malformed endpoint URL '" + url + "'");
  return {m[1].str() + "://" + m[2].str() + m[3].str(), m[4].matched ? m[4].str() : "/"};
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct StageText {
  const char* tag;
  const char* instruction;
};

constexpr StageText kStrategyTags[] = {
    {"STRATEGY",
     "Take the role of a specialist in visual categories. State what the class name most likely refers to and outline how you will "
     "use the images to settle it."},
    {"PERCEPTION",
     "List the visual traits shared by the images that set this category apart: objects, parts, shapes, "
     "textures, colors, surroundings."},
    {"REFINEMENT",
     "Reconcile the name with the observed evidence step by step. Drop attributes the images do not support."},
    {"CONCLUSION",
     "Give one short, accurate, visually grounded definition paragraph of the class without repetition."},
};

constexpr StageText kSummaryTags[] = {
    {"SUMMARY",
     "Outline your approach: read the class name and its possible senses, check them against the images, then "
     "settle on a description supported by both."},
    {"CAPTION",
     "Note what every image has in common that pins down the category: the things shown, their outlines, "
     "surfaces, colouring and setting."},
    {"REASONING",
     "Explain, one step at a time, where the pictures support the name and where they narrow or correct it; "
     "take extra care with vague or abstract names."},
    {"CONCLUSION",
     "Write the class definition as one concise, accurate paragraph consistent with the images.\n"
     "Example: The mallard is a dabbling duck; males show a glossy green head, a white neck ring and a grey "
     "body, females are mottled brown. It lives on ponds, lakes and marshes across the northern hemisphere."},
};

const StageText* stage_text(PromptVariant v) { return v == PromptVariant::Strategy ? kStrategyTags : kSummaryTags; }

}  // namespace

void ClientConfig::validate() const {
  split_url(endpoint);
  if (model.empty()) throw InvalidArgument("model identifier is empty");
  if (timeout.count() <= 0) throw InvalidArgument("timeout must be > 0");
  if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  if (initial_backoff.count() < 0) throw InvalidArgument("initial_backoff must be >= 0");
}

namespace cip {

const std::array<std::string, 4>& stage_tags(PromptVariant v) {
  static const std::array<std::string, 4> strategy{"STRATEGY", "PERCEPTION", "REFINEMENT", "CONCLUSION"};
  static const std::array<std::string, 4> summary{"SUMMARY", "CAPTION", "REASONING", "CONCLUSION"};
  return v == PromptVariant::Strategy ? strategy : summary;
}

std::string build_prompt(const std::string& class_name, const std::vector<std::string>& image_refs,
                         PromptVariant variant) {
  if (trim(class_name).empty()) throw EmptyClassName("class name is empty");
  std::ostringstream out;
  out << "You are a specialist in image understanding who writes precise category definitions.\n\n"
      << "You receive a class name and a few example images. Produce a short, accurate definition of the class "
         "that is led by the meaning of the name and refined by what the images show.\n\n"
      << "Answer in exactly the four tagged sections below, in this order:\n\n";
  const StageText* stages = stage_text(variant);
  for (int i = 0; i < 4; ++i)
    out << '<' << stages[i].tag << ">\n" << stages[i].instruction << "\n</" << stages[i].tag << ">\n\n";
  out << "Class name: " << class_name << '\n';
  out << "Images (" << image_refs.size() << "):";
  if (image_refs.empty()) out << " none";
  out << '\n';
  for (std::size_t i = 0; i < image_refs.size(); ++i) out << "  [" << i + 1 << "] " << image_refs[i] << '\n';
  return out.str();
}

std::string format_stages(const std::map<std::string, std::string>& bodies, PromptVariant variant) {
  std::string out;
  for (const auto& tag : stage_tags(variant)) {
    const auto it = bodies.find(tag);
    if (it == bodies.end()) throw MissingStage("no body for stage " + tag);
    if (!out.empty()) out += "\n\n";
    out += '<' + tag + ">\n" + it->second + "\n</" + tag + '>';
  }
  return out;
}

ClassDescriptor parse_stages(const std::string& text, PromptVariant variant) {
  const auto& tags = stage_tags(variant);
  static const std::regex tag_re(R"(<(/?)([A-Z]+)>)");

  ClassDescriptor d;
  std::map<std::string, std::size_t> opened;  // tag -> body start
  std::string open_tag;
  std::vector<std::string> order;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), tag_re); it != std::sregex_iterator(); ++it) {
    const std::string name = (*it)[2].str();
    if (std::find(tags.begin(), tags.end(), name) == tags.end()) continue;
    const bool closing = (*it)[1].length() > 0;
    const auto pos = static_cast<std::size_t>(it->position());
    if (!closing) {
      if (!open_tag.empty()) throw MalformedTags("<" + name + "> opened inside <" + open_tag + ">");
      if (d.stage_outputs.count(name) || opened.count(name)) throw MalformedTags("duplicate <" + name + ">");
      open_tag = name;
      opened[name] = pos + static_cast<std::size_t>(it->length());
    } else {
      if (open_tag != name) throw MalformedTags("</" + name + "> without matching <" + name + ">");
      d.stage_outputs[name] = trim(text.substr(opened[name], pos - opened[name]));
      order.push_back(name);
      open_tag.clear();
    }
  }
  if (!open_tag.empty()) throw MalformedTags("<" + open_tag + "> is never closed");

  std::string missing;
  for (const auto& tag : tags)
    if (!d.stage_outputs.count(tag)) missing += (missing.empty() ? "" : ", ") + tag;
  if (!missing.empty()) throw MissingStage("missing stages: " + missing);

  if (!std::equal(order.begin(), order.end(), tags.begin())) {
    std::string seen;
    for (const auto& t : order) seen += (seen.empty() ? "" : ",") + t;
    d.warnings.push_back("stages out of order: " + seen);
  }
  d.conclusion = d.stage_outputs.at("CONCLUSION");
  d.complete = !d.conclusion.empty();
  return d;
}

std::string request_body(const std::string& model, const std::string& prompt) {
  nlohmann::json body = {{"model", model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  return body.dump();
}

std::string reply_content(const std::string& response_body) {
  const auto j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded()) throw ParseError("response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("response has no choices[0].message.content string");
  }
}

ClassDescriptor request_description(const ClientConfig& cfg, const std::string& prompt, PromptVariant variant) {
  cfg.validate();
  const UrlParts url = split_url(cfg.endpoint);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!cfg.token.empty()) headers.emplace("Authorization", "Bearer " + cfg.token);
  const std::string body = request_body(cfg.model, prompt);

  auto backoff = cfg.initial_backoff;
  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    const auto res = client.Post(url.path, headers, body, "application/json");
    bool transient = false;
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        if (attempt >= cfg.max_retries) throw Timeout("request timed out: " + httplib::to_string(err));
      } else if (attempt >= cfg.max_retries) {
        throw NetworkError("request failed: " + httplib::to_string(err));
      }
      transient = true;
    } else if (res->status >= 500 || res->status == 429) {
      if (attempt >= cfg.max_retries) throw HttpStatusError(res->status);
      transient = true;
    } else if (res->status >= 300) {
      throw HttpStatusError(res->status);
    }
    if (!transient) {
      ClassDescriptor d = parse_stages(reply_content(res->body), variant);
      return d;
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

}  // namespace cip
}  // namespace kvalign
