#include "earth/service.hpp"

#include <charconv>

#include "httplib.h"
#include "json.hpp"

#include "earth/config.hpp"
#include "earth/error.hpp"
#include "earth/feedback.hpp"
#include "earth/report.hpp"
#include "earth/run_store.hpp"

namespace earth::service {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::invalid_argument:
    case ErrorCode::degenerate_input: return 422;
    case ErrorCode::conflict: return 409;
    case ErrorCode::backend_unavailable: return 503;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::size_t parse_limit(const std::string& s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v == 0) {
    throw Error(ErrorCode::invalid_argument, "limit must be a positive integer");
  }
  return std::min(v, kMaxPageSize);
}

// Runs a handler and maps earth::Error onto the documented status codes.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::config, "serve address must be host:port: " + addr);
  int port = -1;
  const auto ps = addr.substr(colon + 1);
  auto [p, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
  if (ec != std::errc() || p != ps.data() + ps.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::config, "invalid port in serve address: " + addr);
  }
  return {addr.substr(0, colon), port};
}

Service::Service(store::RunStore& store, feedback::FeedbackHub& hub, ServiceOptions options)
    : store_(store), hub_(hub), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

bool Service::running() const { return server_->is_running(); }

void Service::install_routes() {
  auto& s = *server_;
  const auto origin = options_.cors_origin;
  s.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& id : store_.list_runs()) {
      if (auto m = store_.load_manifest(id)) out.push_back(store::to_json(*m));
    }
    send_json(res, 200, out);
  }));

  s.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    auto m = store_.load_manifest(id);
    if (!m) throw Error(ErrorCode::not_found, "unknown run: " + id);
    send_json(res, 200, store::to_json(*m));
  }));

  s.Get(R"(/runs/([^/]+)/candidates)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    if (!store_.has_run(id)) throw Error(ErrorCode::not_found, "unknown run: " + id);
    store::CandidateFilter f;
    if (req.has_param("stage")) f.stage = stage_from_string(req.get_param_value("stage"));
    if (req.has_param("method")) f.method = req.get_param_value("method");
    if (req.has_param("cursor")) f.after_id = req.get_param_value("cursor");
    const auto limit = req.has_param("limit") ? parse_limit(req.get_param_value("limit")) : kDefaultPageSize;
    f.limit = limit + 1;
    auto rows = store_.load_candidates(id, f);
    json next = nullptr;
    if (rows.size() > limit) {
      rows.resize(limit);
      next = rows.back().id;
    }
    json cands = json::array();
    for (const auto& c : rows) cands.push_back(to_json(c));
    send_json(res, 200, {{"candidates", cands}, {"next_cursor", next}});
  }));

  s.Get(R"(/runs/([^/]+)/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    const auto cid = req.matches[2].str();
    if (!store_.has_run(id)) throw Error(ErrorCode::not_found, "unknown run: " + id);
    for (const auto& [ext, mime] : {std::pair{"png", "image/png"}, std::pair{"jpeg", "image/jpeg"}}) {
      if (auto bytes = store_.read_file(id, "images/" + cid + "." + ext)) {
        res.status = 200;
        res.set_content(*bytes, mime);
        return;
      }
    }
    throw Error(ErrorCode::not_found, "no image for candidate " + cid);
  }));

  s.Get(R"(/runs/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    if (!store_.has_run(id)) throw Error(ErrorCode::not_found, "unknown run: " + id);
    if (auto data = store_.read_file(id, "report/summary.json")) {
      send_json(res, 200, json::parse(*data));
      return;
    }
    send_json(res, 200, report::report_summary(store_, id, pipeline_config_from_json(store_.load_config(id))));
  }));

  s.Post("/batches", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.is_object() || !body.contains("run_id") || !body["run_id"].is_string()) {
      throw Error(ErrorCode::invalid_argument, "run_id is required");
    }
    std::optional<std::vector<std::string>> ids;
    if (body.contains("candidate_ids") && !body["candidate_ids"].is_null()) {
      if (!body["candidate_ids"].is_array()) throw Error(ErrorCode::invalid_argument, "candidate_ids must be an array");
      ids.emplace();
      for (const auto& v : body["candidate_ids"]) {
        if (!v.is_string()) throw Error(ErrorCode::invalid_argument, "candidate_ids must hold strings");
        ids->push_back(v.get<std::string>());
      }
    }
    int raters = 5;
    if (body.contains("raters_expected")) {
      if (!body["raters_expected"].is_number_integer()) {
        throw Error(ErrorCode::invalid_argument, "raters_expected must be an integer");
      }
      raters = body["raters_expected"].get<int>();
    }
    send_json(res, 201, feedback::to_json(hub_.create_batch(body["run_id"].get<std::string>(), ids, raters)));
  }));

  s.Get(R"(/batches/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    auto b = hub_.get_batch(id);
    if (!b) throw Error(ErrorCode::not_found, "unknown batch: " + id);
    send_json(res, 200, feedback::to_json(*b));
  }));

  s.Get(R"(/batches/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    auto b = hub_.get_batch(id);
    if (!b) throw Error(ErrorCode::not_found, "unknown batch: " + id);
    const auto rater = req.get_param_value("rater");
    if (rater.empty()) throw Error(ErrorCode::invalid_argument, "rater query parameter is required");
    const auto next = hub_.next_for_rater(id, rater);
    if (!next) {
      res.status = 204;
      return;
    }
    store::CandidateFilter f;
    const auto rows = store_.load_candidates(b->run_id, f);
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const Candidate& c) { return c.id == *next; });
    if (it == rows.end()) throw Error(ErrorCode::not_found, "candidate " + *next + " missing from run");
    const auto pos = std::find(b->candidate_ids.begin(), b->candidate_ids.end(), *next) - b->candidate_ids.begin();
    json body{{"batch_id", id},
              {"rater_id", rater},
              {"position", pos},
              {"total", b->candidate_ids.size()},
              {"candidate", to_json(*it)}};
    body["image_url"] = store_.has_file(b->run_id, "images/" + *next + ".png")
                            ? json("/runs/" + b->run_id + "/images/" + *next)
                            : json(nullptr);
    send_json(res, 200, body);
  }));

  s.Post(R"(/batches/([^/]+)/ratings)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    if (!hub_.get_batch(id)) throw Error(ErrorCode::not_found, "unknown batch: " + id);
    const auto r = feedback::rating_from_json(parse_body(req));
    const auto ack = hub_.submit_rating(id, r);
    send_json(res, 200, {{"batch_id", id},
                         {"rater_id", r.rater_id},
                         {"candidate_id", r.candidate_id},
                         {"replaced", ack.replaced},
                         {"ratings_in_batch", ack.ratings_in_batch}});
  }));

  s.Get(R"(/batches/([^/]+)/ratings)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : hub_.ratings(req.matches[1].str())) out.push_back(feedback::to_json(r));
    send_json(res, 200, out);
  }));

  s.Post(R"(/batches/([^/]+)/close)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, feedback::to_json(hub_.close_batch(req.matches[1].str())));
  }));

  s.Get(R"(/batches/([^/]+)/analytics)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, hub_.analytics(req.matches[1].str()));
  }));
}

}  // namespace earth::service
