#pragma once

#include <map>
#include <memory>
#include <string>

#include "dynanet/pipeline.hpp"

namespace dynanet {

// Largest |α| accepted over HTTP.
inline constexpr double kServiceAlphaBound = 4.0;
inline constexpr int kDefaultPort = 8787;

struct HttpResponse {
  int status = 200;
  std::string body;
};

// Read-only inference session: one trained network plus its validation
// images and loss targets. Handlers are pure functions of the request and
// may run concurrently.
class Service {
 public:
  Service(DynamicNet<Real> net, RunConfig cfg, TaskData data);

  // Loads model_dir and data_dir of `cfg` (paths relative to `workdir`).
  static Service from_workdir(const RunConfig& cfg, const std::string& workdir);

  HttpResponse model() const;
  HttpResponse infer(const std::string& body) const;
  HttpResponse sweep(const std::map<std::string, std::string>& query) const;

  const DynamicNet<Real>& net() const { return net_; }
  const TaskData& data() const { return data_; }

 private:
  const Sample<Real>* find(const std::string& id) const;

  DynamicNet<Real> net_;
  RunConfig cfg_;
  TaskData data_;
};

// HTTP front end over a Service. start() returns once the socket is bound.
class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 binds an ephemeral port. Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dynanet
