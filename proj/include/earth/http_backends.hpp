#pragma once

// HTTP backends speaking the chat-completions / embeddings conventions of
// common self-hosted model servers.

#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "earth/gateway.hpp"

namespace earth::gateway {

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  std::string model;
  std::string api_key_env;  // name of the env var holding a bearer token; empty for none
  int timeout_seconds = 60;
};

nlohmann::json chat_request_body(const GenerationRequest& request, const std::string& model);
std::vector<RawGeneration> parse_chat_response(const nlohmann::json& body);

nlohmann::json embedding_request_body(const std::string& text, const std::string& model);
std::vector<double> parse_embedding_response(const nlohmann::json& body);

// POSTs JSON and maps transport failures, 5xx and 429 to backend_unavailable;
// other non-2xx statuses and unparseable bodies to malformed_response.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body);

class HttpTextBackend : public TextBackend {
 public:
  explicit HttpTextBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string id() const override { return "http:" + endpoint_.model + "@" + endpoint_.base_url; }
  std::vector<RawGeneration> complete(const GenerationRequest& request) override;

 private:
  HttpEndpoint endpoint_;
};

struct EmbeddingEndpoints {
  HttpEndpoint sentence;
  std::optional<std::string> token_path;  // set when the server exposes token embeddings
  std::optional<std::string> pair_relevance_path;
};

// Token endpoint:    {"model","input"} -> {"tokens":[{"token","embedding"}]}
// Relevance endpoint: {"model","candidate","reference"} -> {"score"}
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(EmbeddingEndpoints endpoints) : ep_(std::move(endpoints)) {}
  std::string id() const override { return "http:" + ep_.sentence.model + "@" + ep_.sentence.base_url; }
  std::vector<double> embed(const std::string& text) override;
  bool supports_token_embeddings() const override { return ep_.token_path.has_value(); }
  std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(const std::string& text) override;
  bool supports_pair_relevance() const override { return ep_.pair_relevance_path.has_value(); }
  std::optional<double> pair_relevance(const std::string& candidate, const std::string& reference) override;

 private:
  EmbeddingEndpoints ep_;
};

// {"model","prompt","n":1,"response_format":"b64_json"} -> {"data":[{"b64_json"}]}
class HttpImageBackend : public ImageBackend {
 public:
  explicit HttpImageBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string id() const override { return "http:" + endpoint_.model + "@" + endpoint_.base_url; }
  ImageArtifact generate(const std::string& prompt) override;

 private:
  HttpEndpoint endpoint_;
};

// {"model","image_b64","text"} -> {"similarity"}
class HttpImageTextBackend : public ImageTextBackend {
 public:
  explicit HttpImageTextBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string id() const override { return "http:" + endpoint_.model + "@" + endpoint_.base_url; }
  double similarity(const ImageArtifact& image, const std::string& text) override;

 private:
  HttpEndpoint endpoint_;
};

// {"model","image_b64"} -> {"caption"}
class HttpCaptionBackend : public CaptionBackend {
 public:
  explicit HttpCaptionBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string id() const override { return "http:" + endpoint_.model + "@" + endpoint_.base_url; }
  std::string caption(const ImageArtifact& image) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace earth::gateway
