#include "dynanet/service.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace dynanet {

using nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& message) {
  return HttpResponse{status, json{{"error", message}}.dump()};
}

json describe(const Objective& o) {
  json terms = json::array();
  for (const auto& t : o.terms) {
    terms.push_back({{"kind", term_kind_name(t.kind)}, {"weight", t.weight}, {"target", t.target}});
  }
  return terms;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

Service::Service(DynamicNet<Real> net, RunConfig cfg, TaskData data)
    : net_(std::move(net)), cfg_(std::move(cfg)), data_(std::move(data)) {
  if (cfg_.task == Task::Regress1d) throw UsageError("the inference service needs an image task");
  if (data_.val.empty()) throw UsageError("the inference service needs at least one image");
}

Service Service::from_workdir(const RunConfig& cfg, const std::string& workdir) {
  auto model = load_model(join_path(workdir, cfg.model_dir));
  // The model's own config decides the task; paths come from the caller.
  RunConfig effective = model.cfg;
  effective.data_dir = cfg.data_dir;
  effective.model_dir = cfg.model_dir;
  effective.out_dir = cfg.out_dir;
  auto assets = read_assets(effective, join_path(workdir, effective.data_dir));
  auto data = build_task(effective, assets, *model.net.extractor);
  return Service(std::move(model.net), effective, std::move(data));
}

const Sample<Real>* Service::find(const std::string& id) const {
  for (const auto& s : data_.val) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

HttpResponse Service::model() const {
  json ids = json::array();
  for (const auto& s : data_.val) ids.push_back(s.id);
  json body{{"blocks", net_.blocks()},
            {"image_size", cfg_.image_size},
            {"image_ids", ids},
            {"task", task_name(cfg_.task)},
            {"alpha_bound", kServiceAlphaBound},
            {"objectives", {{"o0", describe(data_.o0)}, {"o1", describe(data_.o1)}}},
            {"lambda_ref", data_.eval.lambda_ref}};
  return HttpResponse{200, body.dump()};
}

HttpResponse Service::infer(const std::string& body) const {
  try {
    const json req = json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error(400, "request body must be a JSON object");
    if (!req.contains("image_id") || !req["image_id"].is_string()) return error(400, "image_id must be a string");
    const auto* sample = find(req["image_id"].get<std::string>());
    if (!sample) return error(404, "unknown image_id '" + req["image_id"].get<std::string>() + "'");
    if (!req.contains("alpha") || !req["alpha"].is_array()) return error(400, "alpha must be an array");
    const auto& arr = req["alpha"];
    if (arr.size() != net_.blocks()) {
      return error(400, "alpha must have " + std::to_string(net_.blocks()) + " entries, got " +
                            std::to_string(arr.size()));
    }
    AlphaVector alpha;
    for (const auto& v : arr) {
      if (!v.is_number()) return error(400, "alpha entries must be numbers");
      const double a = v.get<double>();
      if (!std::isfinite(a) || std::abs(a) > kServiceAlphaBound) {
        return error(400, "alpha entries must be finite with |alpha| <= 4");
      }
      alpha.values.push_back(a);
    }

    const auto output = forward(net_, sample->input, alpha);
    const auto scores = score_output(net_, output, *sample, data_.eval.terms);
    json res{{"image_id", sample->id},
             {"alpha", alpha.values},
             {"width", output.dim(2)},
             {"height", output.dim(1)},
             {"rgb_base64", httplib::detail::base64_encode(to_rgb_bytes(output))},
             {"content_loss", scores.terms.at(0)},
             {"style_loss", scores.terms.at(1)}};
    // Lets clients discard stale responses.
    if (req.contains("seq")) res["seq"] = req["seq"];
    return HttpResponse{200, res.dump()};
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

HttpResponse Service::sweep(const std::map<std::string, std::string>& query) const {
  try {
    auto get = [&](const std::string& key) -> const std::string* {
      auto it = query.find(key);
      return it == query.end() ? nullptr : &it->second;
    };
    const auto* id = get("image_id");
    if (!id) return error(400, "image_id is required");
    const auto* sample = find(*id);
    if (!sample) return error(404, "unknown image_id '" + *id + "'");

    const auto* steps_arg = get("steps");
    double steps_value = 0.0;
    if (!steps_arg || !parse_double(*steps_arg, steps_value) || steps_value != std::floor(steps_value) ||
        steps_value < 2 || steps_value > 101) {
      return error(400, "steps must be an integer in [2, 101]");
    }
    const auto steps = static_cast<std::size_t>(steps_value);
    double lo = -1.0, hi = 2.0;
    if (const auto* v = get("lo"); v && !parse_double(*v, lo)) return error(400, "lo must be a finite number");
    if (const auto* v = get("hi"); v && !parse_double(*v, hi)) return error(400, "hi must be a finite number");
    if (!(lo <= hi) || std::abs(lo) > kServiceAlphaBound || std::abs(hi) > kServiceAlphaBound) {
      return error(400, "range must satisfy lo <= hi within |alpha| <= 4");
    }

    std::vector<double> alphas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      alphas[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    alphas.back() = hi;
    const auto records = sweep_uniform(net_, std::vector<Sample<Real>>{*sample}, alphas, data_.eval);
    json out = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      out.push_back({{"alpha", alphas[i]},
                     {"content_loss", records[i].content()},
                     {"style_loss", records[i].style()}});
    }
    return HttpResponse{200, out.dump()};
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

struct HttpServer::Impl {
  explicit Impl(const Service& s) : service(s) {}
  const Service& service;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  const Service& s = service;
  auto reply = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  svr.Get("/api/model", [&s, reply](const httplib::Request&, httplib::Response& res) { reply(res, s.model()); });
  svr.Post("/api/infer",
           [&s, reply](const httplib::Request& req, httplib::Response& res) { reply(res, s.infer(req.body)); });
  svr.Get("/api/sweep", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    reply(res, s.sweep(query));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = svr.bind_to_any_port(host);
  } else if (!svr.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  return bound;
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  wait();
}

}  // namespace dynanet
