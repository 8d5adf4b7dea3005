#include "earth/http_backends.hpp"

#include <cstdlib>

#include "httplib.h"

#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::gateway {

using nlohmann::json;

json chat_request_body(const GenerationRequest& request, const std::string& model) {
  return json{
      {"model", model},
      {"messages", json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                {{"role", "user"}, {"content", request.user_prompt}}})},
      {"temperature", request.profile.temperature},
      {"top_p", request.profile.top_p},
      {"max_tokens", request.profile.max_new_tokens},
      {"n", request.profile.variants},
      {"logprobs", true},
      {"seed", request.seed & 0x7fffffffffffffffULL},
  };
}

std::vector<RawGeneration> parse_chat_response(const json& body) {
  std::vector<RawGeneration> out;
  try {
    for (const auto& choice : body.at("choices")) {
      RawGeneration g;
      const auto& content = choice.at("message").at("content");
      g.text = content.is_null() ? std::string{} : content.get<std::string>();
      const auto lp = choice.find("logprobs");
      if (lp != choice.end() && lp->is_object()) {
        const auto items = lp->find("content");
        if (items != lp->end() && items->is_array()) {
          std::vector<std::pair<std::string, double>> tokens;
          for (const auto& t : *items) {
            const double v = t.at("logprob").get<double>();
            // Servers occasionally report tiny positive values through rounding.
            tokens.emplace_back(t.at("token").get<std::string>(), v > 0.0 && v < 1e-6 ? 0.0 : v);
          }
          g.token_logprobs = std::move(tokens);
        }
      }
      out.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("chat response: ") + e.what());
  }
  return out;
}

json embedding_request_body(const std::string& text, const std::string& model) {
  return json{{"model", model}, {"input", text}};
}

std::vector<double> parse_embedding_response(const json& body) {
  try {
    return body.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("embedding response: ") + e.what());
  }
}

json post_json(const HttpEndpoint& endpoint, const std::string& path, const json& body) {
  httplib::Client client(endpoint.base_url);
  if (!client.is_valid()) throw Error(ErrorCode::config, "invalid backend base URL: " + endpoint.base_url);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  client.set_write_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::backend_unavailable,
                endpoint.base_url + path + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429 || res->status == 408) {
    throw Error(ErrorCode::backend_unavailable, endpoint.base_url + path + ": HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::malformed_response, endpoint.base_url + path + ": HTTP " + std::to_string(res->status) +
                                                   ": " + res->body.substr(0, 200));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, endpoint.base_url + path + ": invalid JSON: " + e.what());
  }
}

std::vector<RawGeneration> HttpTextBackend::complete(const GenerationRequest& request) {
  return parse_chat_response(post_json(endpoint_, endpoint_.path, chat_request_body(request, endpoint_.model)));
}

std::vector<double> HttpEmbeddingBackend::embed(const std::string& text) {
  return parse_embedding_response(
      post_json(ep_.sentence, ep_.sentence.path, embedding_request_body(text, ep_.sentence.model)));
}

std::vector<std::pair<std::string, std::vector<double>>> HttpEmbeddingBackend::embed_tokens(const std::string& text) {
  if (!ep_.token_path) return EmbeddingBackend::embed_tokens(text);
  const auto body = post_json(ep_.sentence, *ep_.token_path, embedding_request_body(text, ep_.sentence.model));
  std::vector<std::pair<std::string, std::vector<double>>> out;
  try {
    for (const auto& t : body.at("tokens")) {
      out.emplace_back(t.at("token").get<std::string>(), t.at("embedding").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("token embedding response: ") + e.what());
  }
  return out;
}

std::optional<double> HttpEmbeddingBackend::pair_relevance(const std::string& candidate, const std::string& reference) {
  if (!ep_.pair_relevance_path) return std::nullopt;
  const auto body = post_json(ep_.sentence, *ep_.pair_relevance_path,
                              json{{"model", ep_.sentence.model}, {"candidate", candidate}, {"reference", reference}});
  try {
    return body.at("score").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("relevance response: ") + e.what());
  }
}

ImageArtifact HttpImageBackend::generate(const std::string& prompt) {
  const auto body = post_json(endpoint_, endpoint_.path,
                              json{{"model", endpoint_.model}, {"prompt", prompt}, {"n", 1}, {"response_format", "b64_json"}});
  ImageArtifact a;
  try {
    a.image_bytes = text::base64_decode(body.at("data").at(0).at("b64_json").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("image response: ") + e.what());
  }
  a.format = "png";
  a.prompt_used = prompt;
  a.backend_id = id();
  return a;
}

double HttpImageTextBackend::similarity(const ImageArtifact& image, const std::string& text) {
  const auto body = post_json(endpoint_, endpoint_.path,
                              json{{"model", endpoint_.model}, {"image_b64", text::base64_encode(image.image_bytes)},
                                   {"text", text}});
  try {
    return body.at("similarity").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("similarity response: ") + e.what());
  }
}

std::string HttpCaptionBackend::caption(const ImageArtifact& image) {
  const auto body = post_json(endpoint_, endpoint_.path,
                              json{{"model", endpoint_.model}, {"image_b64", text::base64_encode(image.image_bytes)}});
  try {
    return body.at("caption").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_response, std::string("caption response: ") + e.what());
  }
}

}  // namespace earth::gateway
