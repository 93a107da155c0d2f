#pragma once

#include <array>
#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace kvalign {

/// Which set of four stage tags a prompt uses.
enum class PromptVariant { Strategy, Summary };

std::string prompt_variant_name(PromptVariant v);
PromptVariant parse_prompt_variant(const std::string& name);

struct ClassDescriptor {
  std::string class_name;
  std::map<std::string, std::string> stage_outputs;  ///< tag -> trimmed body
  std::string conclusion;
  bool complete = false;
  std::vector<std::string> warnings;
};

struct ClientConfig {
  std::string endpoint;  ///< full URL of the chat-completions route
  std::string model;
  std::string token;     ///< sent as "Authorization: Bearer <token>" when non-empty
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};

  /// Throws InvalidArgument for a malformed URL, empty model or bad timeout.
  void validate() const;
};

namespace cip {

/// Tags in stage order; the last one is always CONCLUSION.
const std::array<std::string, 4>& stage_tags(PromptVariant v);

std::string build_prompt(const std::string& class_name, const std::vector<std::string>& image_refs,
                         PromptVariant variant = PromptVariant::Summary);

/// "<TAG>\nbody\n</TAG>" blocks in stage order, separated by blank lines.
std::string format_stages(const std::map<std::string, std::string>& bodies,
                          PromptVariant variant = PromptVariant::Summary);

/// Throws MalformedTags for unbalanced/duplicated/nested tags and MissingStage
/// listing every absent tag.
ClassDescriptor parse_stages(const std::string& llm_output, PromptVariant variant = PromptVariant::Summary);

/// Request body {"model", "messages": [{"role": "user", "content": prompt}]}.
std::string request_body(const std::string& model, const std::string& prompt);

/// Text of choices[0].message.content. Throws ParseError on other shapes.
std::string reply_content(const std::string& response_body);

/// POSTs the prompt and parses the reply. 5xx, 429 and connection failures
/// are retried with doubling backoff up to max_retries extra attempts.
ClassDescriptor request_description(const ClientConfig& cfg, const std::string& prompt,
                                    PromptVariant variant = PromptVariant::Summary);

}  // namespace cip
}  // namespace kvalign
