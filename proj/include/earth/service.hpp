#pragma once

// JSON-over-HTTP API over the run store and the feedback hub.
//
//   GET  /runs                         GET  /runs/{id}
//   GET  /runs/{id}/candidates         GET  /runs/{id}/images/{candidate}
//   GET  /runs/{id}/report
//   POST /batches                      GET  /batches/{id}
//   GET  /batches/{id}/next?rater=     POST /batches/{id}/ratings
//   GET  /batches/{id}/ratings         POST /batches/{id}/close
//   GET  /batches/{id}/analytics
//
// Unknown ids map to 404, validation failures to 422, closed batches to 409.

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace earth::store {
class RunStore;
}
namespace earth::feedback {
class FeedbackHub;
}

namespace earth::service {

inline constexpr std::size_t kDefaultPageSize = 100;
inline constexpr std::size_t kMaxPageSize = 1000;

struct ServiceOptions {
  std::string cors_origin = "*";
};

class Service {
 public:
  Service(store::RunStore& store, feedback::FeedbackHub& hub, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds host:port (0 picks a free port) and returns the bound port; -1 on failure.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  bool run();
  void stop();
  bool running() const;

 private:
  void install_routes();

  store::RunStore& store_;
  feedback::FeedbackHub& hub_;
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

// "host:port" -> (host, port); config error when malformed.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace earth::service
