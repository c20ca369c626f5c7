#include <doctest.h>

// Eigen first: httplib pulls in <resolv.h>, whose `_res` macro collides
// with Eigen parameter names.
#include "dynanet/service.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace dynanet;
using nlohmann::json;

namespace {

// RFC 4648 decoder written against the alphabet table.
std::string base64_decode(const std::string& in) {
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  unsigned buffer = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    const auto v = alphabet.find(c);
    REQUIRE(v != std::string::npos);
    buffer = (buffer << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.image_size = 16;
  cfg.n_train = 2;
  cfg.n_val = 2;
  return cfg;
}

Service make_service() {
  const auto cfg = small_config();
  auto net = DynamicNet<Real>::create(image_backbone(), 4);
  Rng rng(9);
  for (auto& p : net.psi) {
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] += static_cast<Real>(rng.uniform(-0.1, 0.1));
  }
  auto data = build_task(cfg, generate_assets(cfg), *net.extractor);
  return Service(std::move(net), cfg, std::move(data));
}

json body_of(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("model description") {
  const auto service = make_service();
  const auto r = service.model();
  REQUIRE(r.status == 200);
  const auto j = body_of(r);
  CHECK(j["blocks"] == 3);
  CHECK(j["image_size"] == 16);
  CHECK(j["image_ids"] == json::array({"val-000", "val-001"}));
  CHECK(j["task"] == "stylize");
  CHECK(j["alpha_bound"] == 4.0);
  CHECK(j["lambda_ref"] == 1.0);
  CHECK(j["objectives"]["o1"][1]["weight"] == 100.0);
  CHECK(j["objectives"]["o0"][0]["kind"] == "content");
}

TEST_CASE("infer at alpha zero returns the quantized main-network image") {
  const auto service = make_service();
  const auto& sample = service.data().val[1];
  const auto r = service.infer(R"({"image_id": "val-001", "alpha": [0, 0, 0], "seq": 17})");
  REQUIRE(r.status == 200);
  const auto j = body_of(r);
  CHECK(j["seq"] == 17);
  CHECK(j["width"] == 16);
  CHECK(j["height"] == 16);
  CHECK(j["alpha"] == json::array({0.0, 0.0, 0.0}));
  const auto main = forward_main(service.net(), sample.input);
  CHECK(base64_decode(j["rgb_base64"].get<std::string>()) == to_rgb_bytes(main));
  const auto scores = score_output(service.net(), main, sample, service.data().eval.terms);
  CHECK(j["content_loss"].get<double>() == scores.terms[0]);
  CHECK(j["style_loss"].get<double>() == scores.terms[1]);

  const auto moved = body_of(service.infer(R"({"image_id": "val-001", "alpha": [1, -0.5, 4]})"));
  CHECK_FALSE(moved.contains("seq"));
  const auto expected = forward(service.net(), sample.input, AlphaVector{{1, -0.5, 4}});
  CHECK(base64_decode(moved["rgb_base64"].get<std::string>()) == to_rgb_bytes(expected));
}

TEST_CASE("infer rejects malformed requests") {
  const auto service = make_service();
  auto status = [&](const std::string& body) { return service.infer(body).status; };
  CHECK(status("not json") == 400);
  CHECK(status("[1, 2]") == 400);
  CHECK(status(R"({"alpha": [0, 0, 0]})") == 400);
  CHECK(status(R"({"image_id": 3, "alpha": [0, 0, 0]})") == 400);
  CHECK(status(R"({"image_id": "nope", "alpha": [0, 0, 0]})") == 404);
  CHECK(status(R"({"image_id": "val-000"})") == 400);
  CHECK(status(R"({"image_id": "val-000", "alpha": [0, 0]})") == 400);
  CHECK(status(R"({"image_id": "val-000", "alpha": [0, "1", 0]})") == 400);
  CHECK(status(R"({"image_id": "val-000", "alpha": [0, 4.01, 0]})") == 400);
  CHECK(status(R"({"image_id": "val-000", "alpha": [-4, 4, 0]})") == 200);
  const auto err = body_of(service.infer(R"({"image_id": "nope", "alpha": [0, 0, 0]})"));
  CHECK(err["error"].get<std::string>().find("nope") != std::string::npos);
}

TEST_CASE("sweep matches the sweep module") {
  const auto service = make_service();
  const auto r = service.sweep({{"image_id", "val-000"}, {"steps", "4"}, {"lo", "-0.5"}, {"hi", "1"}});
  REQUIRE(r.status == 200);
  const auto j = body_of(r);
  REQUIRE(j.size() == 4);
  const std::vector<double> alphas{-0.5, 0.0, 0.5, 1.0};
  const auto records =
      sweep_uniform(service.net(), std::vector<Sample<Real>>{service.data().val[0]}, alphas, service.data().eval);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(j[i]["alpha"].get<double>() == alphas[i]);
    CHECK(j[i]["content_loss"].get<double>() == records[i].content());
    CHECK(j[i]["style_loss"].get<double>() == records[i].style());
  }
  const auto defaults = body_of(service.sweep({{"image_id", "val-001"}, {"steps", "3"}}));
  CHECK(defaults[0]["alpha"] == -1.0);
  CHECK(defaults[1]["alpha"] == 0.5);
  CHECK(defaults[2]["alpha"] == 2.0);

  auto status = [&](std::map<std::string, std::string> q) { return service.sweep(q).status; };
  CHECK(status({{"steps", "3"}}) == 400);
  CHECK(status({{"image_id", "zzz"}, {"steps", "3"}}) == 404);
  CHECK(status({{"image_id", "val-000"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "1"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "102"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "2.5"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "3"}, {"lo", "2"}, {"hi", "1"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "3"}, {"hi", "5"}}) == 400);
  CHECK(status({{"image_id", "val-000"}, {"steps", "3"}, {"lo", "x"}}) == 400);
}

TEST_CASE("the service needs an image task") {
  auto cfg = small_config();
  cfg.task = Task::Regress1d;
  const FeatureExtractor<Real> fx;
  auto data = build_task(cfg, generate_assets(cfg), fx);
  CHECK_THROWS_AS(Service(DynamicNet<Real>::create(regression_backbone(), 1), cfg, data), UsageError);
}

TEST_CASE("HTTP round trip") {
  const auto service = make_service();
  HttpServer server(service);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);

  auto model = client.Get("/api/model");
  REQUIRE(model);
  CHECK(model->status == 200);
  CHECK(model->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(model->body)["blocks"] == 3);

  const std::string request = R"({"image_id": "val-000", "alpha": [0.5, 0.5, 0.5], "seq": 2})";
  auto infer = client.Post("/api/infer", request, "application/json");
  REQUIRE(infer);
  CHECK(infer->status == 200);
  CHECK(infer->body == service.infer(request).body);

  auto bad = client.Post("/api/infer", "{}", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto sweep = client.Get("/api/sweep?image_id=val-000&steps=5&lo=0&hi=1");
  REQUIRE(sweep);
  CHECK(sweep->status == 200);
  CHECK(sweep->body == service.sweep({{"image_id", "val-000"}, {"steps", "5"}, {"lo", "0"}, {"hi", "1"}}).body);

  auto options = client.Options("/api/infer");
  REQUIRE(options);
  CHECK(options->status == 204);
  CHECK(options->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  auto missing = client.Get("/api/nothing");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
}
