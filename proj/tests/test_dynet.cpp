#include <doctest.h>

#include <cmath>
#include <set>

#include "dynanet/data.hpp"
#include "dynanet/dynet.hpp"
#include "dynanet/gradcheck.hpp"

using namespace dynanet;

namespace {

template <class S>
void perturb_psi(DynamicNet<S>& net, std::uint64_t seed, double amount) {
  Rng rng(seed);
  for (auto& p : net.psi) {
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] += static_cast<S>(rng.uniform(-amount, amount));
  }
}

std::vector<Sample<float>> regression_samples() {
  const auto task = make_regression_task<float>(RegressionKind::ConstantPair, 16);
  Sample<float> s{"grid", task.grid, {}};
  s.context.pixels["t0"] = task.target0;
  s.context.pixels["t1"] = task.target1;
  return {s};
}

Objective pixel_objective(const std::string& target) { return Objective{{{TermKind::MSEPixel, 1.0, target}}}; }

}  // namespace

TEST_CASE("alpha vector validation") {
  CHECK_NOTHROW(AlphaVector::uniform(3, -2.5).validate(3));
  CHECK_THROWS_AS(AlphaVector::uniform(2, 0).validate(3), UsageError);
  CHECK_THROWS_AS((AlphaVector{{0, NAN, 1}}.validate(3)), UsageError);
  CHECK_THROWS_AS((AlphaVector{{0, INFINITY, 1}}.validate(3)), UsageError);
}

TEST_CASE("alpha zero reproduces the main network bit for bit") {
  auto net = DynamicNet<float>::create(image_backbone(), 3);
  perturb_psi(net, 4, 0.2);
  for (const auto& img : gen_content<float>(3, 16, 5)) {
    const auto main = forward_main(net, img);
    CHECK(forward(net, img, AlphaVector::uniform(3, 0.0)).bit_equal(main));
    CHECK_FALSE(forward(net, img, AlphaVector::uniform(3, 0.5)).bit_equal(main));
  }
}

TEST_CASE("fresh tuning-blocks are inert at any alpha") {
  const auto net = DynamicNet<float>::create(image_backbone(), 3);
  const auto img = gen_content<float>(1, 16, 5)[0];
  CHECK(forward(net, img, AlphaVector{{2.0, -1.0, 0.5}}).bit_equal(forward_main(net, img)));
}

TEST_CASE("forward trace records latents and residual updates") {
  auto net = DynamicNet<double>::create(image_backbone(), 6);
  perturb_psi(net, 7, 0.2);
  const auto img = gen_content<double>(1, 16, 8)[0];
  const AlphaVector alpha{{0.25, -0.5, 1.5}};
  Tape<double> tape;
  auto vars = bind(tape, net, Phase::Inference);
  const auto trace = forward_trace(net, vars, tape.constant(img), &alpha);
  REQUIRE(trace.latent.size() == 3);
  CHECK(trace.latent[0].shape() == Shape{32, 4, 4});
  for (std::size_t l = 0; l < 3; ++l) {
    // Re-evaluate ψ^l on the recorded latent and rebuild z + α·ψ(z).
    Tape<double> t2;
    ParamVars<double> psi(t2, net.psi, false);
    const auto residual =
        forward_block(tuning_block(32), psi, tuning_prefix(l), t2.constant(trace.latent[l].value())).value();
    const auto& z = trace.latent[l].value();
    const auto& adj = trace.adjusted[l].value();
    for (Index i = 0; i < z.size(); ++i) CHECK(adj[i] == doctest::Approx(z[i] + alpha[l] * residual[i]));
  }
  CHECK_THROWS_AS(forward(net, Tensor<double>({1, 16, 16}), alpha), ShapeError);
  CHECK_THROWS_AS(forward(net, img, AlphaVector::uniform(2, 0)), UsageError);
}

TEST_CASE("full network gradient matches finite differences in double precision") {
  auto net = DynamicNet<double>::create(image_backbone(), 7);
  perturb_psi(net, 77, 0.1);
  Rng rng(1);
  for (int seed = 0; seed < 3; ++seed) {
    Tensor<double> a({3, 8, 8}), b({3, 8, 8});
    for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0, 1);
    for (Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(0, 1);
    Context<double> ctx;
    ctx.contents["input"] = make_content_target(*net.extractor, b);
    ctx.styles["style"] = make_style_target(*net.extractor, b);
    auto fn = [&](Tape<double>& tape, const std::vector<Var<double>>& v) {
      auto vars = bind(tape, net, Phase::Inference);
      const AlphaVector alpha{{0.7, 0.3, 1.0}};
      auto out = forward_trace(net, vars, v[0], &alpha).output;
      return evaluate(style_transfer_objective(10.0), *net.extractor, out, ctx).total;
    };
    GradCheckOptions opt;
    opt.step = 1e-6;
    const auto report = grad_check<double>(fn, {a}, opt);
    INFO("seed " << seed << " analytic " << report.worst_analytic << " numeric " << report.worst_numeric);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("Adam matches a hand-computed update") {
  ParamStore<double> store;
  store.add("p", Tensor<double>({2}, {1.0, -2.0}));
  store.add("frozen", Tensor<double>({1}, {5.0}), false);
  store.add("nograd", Tensor<double>({1}, {7.0}));
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState<double> state;
  const std::vector<Tensor<double>> g1{Tensor<double>({2}, {0.5, -4.0}), Tensor<double>({1}, {1.0}), {}};
  adam_step(store, g1, state, cfg);
  // First bias-corrected step moves each entry by lr·g/(|g| + eps') = lr·sign(g).
  CHECK(store.at("p").value[0] == doctest::Approx(0.9));
  CHECK(store.at("p").value[1] == doctest::Approx(-1.9));
  CHECK(store.at("frozen").value[0] == 5.0);
  CHECK(store.at("nograd").value[0] == 7.0);

  const std::vector<Tensor<double>> g2{Tensor<double>({2}, {1.0, 1.0}), Tensor<double>({1}, {1.0}), {}};
  adam_step(store, g2, state, cfg);
  auto expected = [&](double p, double ga, double gb) {
    const double m = 0.9 * (0.1 * ga) + 0.1 * gb;
    const double v = 0.999 * (0.001 * ga * ga) + 0.001 * gb * gb;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    return p - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  };
  CHECK(store.at("p").value[0] == doctest::Approx(expected(0.9, 0.5, 1.0)));
  CHECK(store.at("p").value[1] == doctest::Approx(expected(-1.9, -4.0, 1.0)));
  CHECK(state.t == 2);

  const std::vector<Tensor<double>> wrong{Tensor<double>({3}), {}, {}};
  CHECK_THROWS_AS(adam_step(store, wrong, state, cfg), ShapeError);
  CHECK_THROWS_AS(adam_step(store, std::vector<Tensor<double>>{}, state, cfg), ShapeError);
}

TEST_CASE("training configuration checks") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.eps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("shuffled batches visit every sample once per epoch") {
  std::vector<Sample<float>> data;
  for (int i = 0; i < 10; ++i) data.push_back({std::to_string(i), Tensor<float>({1}), {}});
  const auto stream = shuffled_batches(data, 5, 3);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::string> seen;
    for (std::size_t step = 2 * epoch; step < 2 * epoch + 2; ++step) {
      for (const auto& s : stream(step)) seen.insert(s.get().id);
    }
    CHECK(seen.size() == 10);
    CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 10);
  }
  auto ids = [&](const BatchStream<float>& st, std::size_t step) {
    std::vector<std::string> out;
    for (const auto& s : st(step)) out.push_back(s.get().id);
    return out;
  };
  CHECK(ids(stream, 4) == ids(shuffled_batches(data, 5, 3), 4));
  bool differs = false;
  const auto other = shuffled_batches(data, 5, 4);
  for (std::size_t step = 0; step < 6; ++step) differs = differs || ids(stream, step) != ids(other, step);
  CHECK(differs);

  // Batches larger than the set wrap into the next epoch.
  const auto wide = shuffled_batches(data, 15, 3);
  CHECK(wide(0).size() == 15);
  CHECK_THROWS_AS(shuffled_batches(std::vector<Sample<float>>{}, 2, 0), UsageError);
  CHECK_THROWS_AS(shuffled_batches(data, 0, 0), ConfigError);
}

TEST_CASE("two-phase training on the regression task") {
  const auto data = regression_samples();
  const auto stream = shuffled_batches(data, 1, 0);
  auto net = DynamicNet<float>::create(regression_backbone(), 2);
  const auto psi_before = net.psi;
  TrainConfig cfg;
  cfg.steps = 150;
  cfg.learning_rate = 1e-2;
  const auto log1 = train_main(net, stream, pixel_objective("t0"), cfg);
  REQUIRE(log1.steps.size() == 150);
  CHECK(log1.steps.back().total < 0.1 * log1.steps.front().total);
  CHECK(net.psi == psi_before);

  const auto theta_after_main = net.theta;
  std::vector<double> steps_seen;
  const auto log2 = train_tuning(net, stream, pixel_objective("t1"), cfg,
                                 [&](std::size_t step, const StepRecord&) { steps_seen.push_back(double(step)); });
  CHECK(steps_seen.size() == 150);
  CHECK(log2.steps.back().total < 0.1 * log2.steps.front().total);
  for (std::size_t i = 0; i < net.theta.size(); ++i) CHECK(net.theta[i].value.bit_equal(theta_after_main[i].value));

  const auto at0 = evaluate_net(net, data, pixel_objective("t0"), nullptr);
  const AlphaVector zeros = AlphaVector::uniform(3, 0);
  const auto via_alpha0 = evaluate_net(net, data, pixel_objective("t0"), &zeros);
  CHECK(at0 == via_alpha0);
  const AlphaVector ones = AlphaVector::uniform(3, 1);
  CHECK(evaluate_net(net, data, pixel_objective("t1"), &ones).total < 0.01);

  // Re-running with the same seeds gives the same log and weights.
  auto again = DynamicNet<float>::create(regression_backbone(), 2);
  CHECK(train_main(again, stream, pixel_objective("t0"), cfg) == log1);
  CHECK(again.theta == net.theta);
}

TEST_CASE("phase checks and divergence") {
  auto spec = regression_backbone();
  spec.insertion_points.clear();
  auto plain = DynamicNet<float>::create(spec, 1);
  const auto data = regression_samples();
  const auto stream = shuffled_batches(data, 1, 0);
  TrainConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS_AS(train_tuning(plain, stream, pixel_objective("t1"), cfg), UsageError);
  CHECK_THROWS_AS(train_main(plain, stream, pixel_objective("missing"), cfg), UsageError);

  auto net = DynamicNet<float>::create(regression_backbone(), 1);
  auto bad = data;
  bad[0].context.pixels["t0"][0] = std::numeric_limits<float>::infinity();
  const auto bad_stream = shuffled_batches(bad, 1, 0);
  CHECK_THROWS_AS(train_main(net, bad_stream, pixel_objective("t0"), cfg), DivergenceError);
}
