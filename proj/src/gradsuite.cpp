#include "dynanet/gradsuite.hpp"

#include "dynanet/objectives.hpp"

namespace dynanet {

namespace {

Tensor<double> random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform in ±[margin, 1]: keeps every entry away from the kink at zero.
Tensor<double> away_from_zero(Rng& rng, const Shape& shape, double margin = 0.05) {
  Tensor<double> t(shape);
  for (Index i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(margin, 1.0);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

template <class S>
Tensor<S> as(const Tensor<double>& t) {
  return t.template cast<S>();
}

// Reduces a tensor-valued op to a scalar with a fixed random projection.
template <class S>
Var<S> project(const Var<S>& y, const Tensor<double>& weights) {
  return sum(mul(y, y.tape().constant(as<S>(weights))));
}

class Suite {
 public:
  explicit Suite(std::size_t seeds) : seeds_(seeds) {}

  // `make(rng)` returns {inputs, projection weights}; `fn` maps
  // (tape, vars) to a tensor that is projected to a scalar.
  template <class Scalar, class Make, class Fn>
  void tensor_case(const std::string& name, Make&& make, Fn&& fn) {
    GradCase c{name, seeds_, 0.0, 0};
    for (std::size_t s = 0; s < seeds_; ++s) {
      Rng rng(mix_seed(0x6EAD, s * 131 + cases_.size()));
      auto [inputs, out_shape] = make(rng);
      const auto weights = random_tensor(rng, out_shape);
      auto scalar_fn = [&](auto& tape, const auto& vars) { return project(fn(tape, vars), weights); };
      record(c, grad_check<Scalar>(scalar_fn, inputs));
    }
    cases_.push_back(c);
  }

  // `fn` already returns a scalar (losses).
  template <class Scalar, class Make, class Fn>
  void scalar_case(const std::string& name, Make&& make, Fn&& fn, const GradCheckOptions& opt = {}) {
    GradCase c{name, seeds_, 0.0, 0};
    for (std::size_t s = 0; s < seeds_; ++s) {
      Rng rng(mix_seed(0x1055, s * 131 + cases_.size()));
      auto inputs = make(rng);
      record(c, grad_check<Scalar>(fn, inputs, opt));
    }
    cases_.push_back(c);
  }

  std::vector<GradCase> take() { return std::move(cases_); }

 private:
  static void record(GradCase& c, const GradCheckReport& r) {
    c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
    c.checked += r.checked;
  }

  std::size_t seeds_;
  std::vector<GradCase> cases_;
};

using Inputs = std::vector<Tensor<double>>;

// Input 1 is a reference image whose targets are constants of the loss,
// so only input 0 is differentiated.
GradCheckOptions first_input_only() {
  GradCheckOptions opt;
  opt.exclude = [](std::size_t input, Index) { return input != 0; };
  return opt;
}
using Made = std::pair<Inputs, Shape>;

template <class S>
const FeatureExtractor<S>& extractor() {
  static const FeatureExtractor<S> instance;
  return instance;
}

// Targets are computed once in double so both precisions see the same values.
template <class S>
StyleTarget<S> cast_style(const StyleTarget<double>& t) {
  StyleTarget<S> out;
  for (const auto& g : t.grams) out.grams.push_back(as<S>(g));
  return out;
}

template <class S>
Var<S> block_forward(const BlockSpec& spec, Tape<S>& tape, const std::vector<Var<S>>& vars) {
  (void)tape;
  const auto names = block_param_names(spec, "b.");
  std::vector<Var<S>> params(vars.begin() + 1, vars.end());
  ParamVars<S> p(names, std::move(params));
  return forward_block(spec, p, "b.", vars[0]);
}

// Block parameters with random (not identity/zero) values so every path
// carries gradient.
Inputs block_inputs(Rng& rng, const BlockSpec& spec, const Shape& x_shape) {
  Inputs in{random_tensor(rng, x_shape)};
  auto store = init_params<double>(spec, rng.next(), "b.");
  for (const auto& p : store) {
    auto t = p.value;
    for (Index i = 0; i < t.size(); ++i) t[i] += rng.uniform(-0.3, 0.3);
    in.push_back(t);
  }
  return in;
}

}  // namespace

template <class Scalar>
GradSuiteResult run_grad_suite(std::size_t seeds) {
  if (seeds == 0) throw UsageError("gradient suite needs at least one seed");
  Suite suite(seeds);

  for (Index stride : {1, 2}) {
    for (Index pad : {0, 1}) {
      const std::string name = "conv2d(stride=" + std::to_string(stride) + ",pad=" + std::to_string(pad) + ")";
      suite.tensor_case<Scalar>(
          name,
          [&](Rng& rng) {
            const Index h = 5 + 2 * (stride - 1) + pad;  // keeps the output extent integral
            Inputs in{random_tensor(rng, {2, h, h}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})};
            const Index out = (h + 2 * pad - 3) / stride + 1;
            return Made{in, {3, out, out}};
          },
          [&](auto&, const auto& v) { return conv2d(v[0], v[1], v[2], stride, pad); });
    }
  }
  suite.tensor_case<Scalar>(
      "conv2d(1x1)",
      [](Rng& rng) {
        return Made{{random_tensor(rng, {3, 4, 5}), random_tensor(rng, {2, 3, 1, 1}), random_tensor(rng, {2})},
                    {2, 4, 5}};
      },
      [](auto&, const auto& v) { return conv2d(v[0], v[1], v[2], 1, 0); });
  suite.tensor_case<Scalar>(
      "relu", [](Rng& rng) { return Made{{away_from_zero(rng, {2, 4, 4})}, {2, 4, 4}}; },
      [](auto&, const auto& v) { return relu(v[0]); });
  suite.tensor_case<Scalar>(
      "squash", [](Rng& rng) { return Made{{random_tensor(rng, {2, 4, 4}, -3.0, 3.0)}, {2, 4, 4}}; },
      [](auto&, const auto& v) { return squash(v[0]); });
  suite.tensor_case<Scalar>(
      "instance_norm",
      [](Rng& rng) {
        return Made{{random_tensor(rng, {3, 4, 4}), random_tensor(rng, {3}, 0.5, 1.5), random_tensor(rng, {3})},
                    {3, 4, 4}};
      },
      [](auto&, const auto& v) {
        using S = typename std::decay_t<decltype(v[0])>::scalar_type;
        return instance_norm(v[0], v[1], v[2], static_cast<S>(kInstanceNormEps));
      });
  suite.tensor_case<Scalar>(
      "upsample_nearest", [](Rng& rng) { return Made{{random_tensor(rng, {2, 3, 3})}, {2, 6, 6}}; },
      [](auto&, const auto& v) { return upsample_nearest(v[0], 2); });
  auto pair = [](Rng& rng) {
    return Made{{random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 3})}, {2, 3, 3}};
  };
  suite.tensor_case<Scalar>("add", pair, [](auto&, const auto& v) { return add(v[0], v[1]); });
  suite.tensor_case<Scalar>("sub", pair, [](auto&, const auto& v) { return sub(v[0], v[1]); });
  suite.tensor_case<Scalar>("mul", pair, [](auto&, const auto& v) { return mul(v[0], v[1]); });
  suite.tensor_case<Scalar>(
      "scalar_mul", [](Rng& rng) { return Made{{random_tensor(rng, {2, 3, 3})}, {2, 3, 3}}; },
      [](auto&, const auto& v) {
        using S = typename std::decay_t<decltype(v[0])>::scalar_type;
        return scalar_mul(v[0], static_cast<S>(-1.75));
      });
  suite.tensor_case<Scalar>(
      "square", [](Rng& rng) { return Made{{random_tensor(rng, {2, 3, 3})}, {2, 3, 3}}; },
      [](auto&, const auto& v) { return square(v[0]); });
  suite.tensor_case<Scalar>(
      "abs", [](Rng& rng) { return Made{{away_from_zero(rng, {2, 3, 3})}, {2, 3, 3}}; },
      [](auto&, const auto& v) { return abs(v[0]); });
  suite.tensor_case<Scalar>(
      "gram", [](Rng& rng) { return Made{{random_tensor(rng, {3, 4, 5})}, {3, 3}}; },
      [](auto&, const auto& v) { return gram(v[0]); });

  suite.scalar_case<Scalar>(
      "sum", [](Rng& rng) { return Inputs{random_tensor(rng, {2, 3, 3})}; },
      [](auto&, const auto& v) { return sum(square(v[0])); });
  suite.scalar_case<Scalar>(
      "mean", [](Rng& rng) { return Inputs{random_tensor(rng, {2, 3, 3})}; },
      [](auto&, const auto& v) { return mean(square(v[0])); });
  suite.scalar_case<Scalar>(
      "mse", [](Rng& rng) { return Inputs{random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 3})}; },
      [](auto&, const auto& v) { return mse(v[0], v[1]); });
  suite.scalar_case<Scalar>(
      "l1",
      [](Rng& rng) {
        auto a = random_tensor(rng, {2, 3, 3});
        auto b = a;
        const auto d = away_from_zero(rng, {2, 3, 3});
        for (Index i = 0; i < b.size(); ++i) b[i] += d[i];
        return Inputs{a, b};
      },
      [](auto&, const auto& v) { return l1(v[0], v[1]); });

  const std::vector<std::pair<BlockSpec, Shape>> blocks{
      {BlockSpec{BlockKind::ConvINRelu, 2, 3, 3, 2}, {2, 6, 6}},
      {BlockSpec{BlockKind::ResidualBlock, 2, 2}, {2, 4, 4}},
      {BlockSpec{BlockKind::UpsampleConv, 2, 2}, {2, 3, 3}},
      {BlockSpec{BlockKind::OutputConv, 2, 3}, {2, 4, 4}},
      {tuning_block(2), {2, 4, 4}},
  };
  for (const auto& [spec, x_shape] : blocks) {
    const Index out_side = spec.kind == BlockKind::UpsampleConv ? x_shape[1] * spec.upsample
                                                               : (x_shape[1] + 2 * spec.padding() - spec.kernel) /
                                                                         spec.stride + 1;
    const Shape out_shape{spec.out_channels, out_side, out_side};
    suite.tensor_case<Scalar>(
        "block:" + std::string(block_kind_name(spec.kind)),
        [&](Rng& rng) { return Made{block_inputs(rng, spec, x_shape), out_shape}; },
        [&](auto& tape, const auto& v) { return block_forward(spec, tape, v); });
  }

  // Losses through the fixed feature extractor, on 3×8×8 images in [0,1].
  auto image = [](Rng& rng) { return random_tensor(rng, {3, 8, 8}, 0.0, 1.0); };
  suite.scalar_case<Scalar>(
      "style_loss", [&](Rng& rng) { return Inputs{image(rng), image(rng)}; },
      [](auto& tape, const auto& v) {
        using S = typename std::decay_t<decltype(v[0])>::scalar_type;
        (void)tape;
        // The second input supplies the style image; its Gram targets are
        // treated as constants.
        auto target = make_style_target(extractor<S>(), v[1].value());
        return style_loss(extractor<S>(), v[0], target);
      },
      first_input_only());
  suite.scalar_case<Scalar>(
      "content_loss", [&](Rng& rng) { return Inputs{image(rng), image(rng)}; },
      [](auto&, const auto& v) {
        using S = typename std::decay_t<decltype(v[0])>::scalar_type;
        return content_loss(extractor<S>(), v[0], v[1]);
      });
  suite.scalar_case<Scalar>(
      "objective(content+style+l1+mse)", [&](Rng& rng) { return Inputs{image(rng)}; },
      [](auto&, const auto& v) {
        using S = typename std::decay_t<decltype(v[0])>::scalar_type;
        Rng fixed(99);
        Tensor<double> ref({3, 8, 8}), style({3, 8, 8});
        for (Index i = 0; i < ref.size(); ++i) ref[i] = fixed.uniform();
        for (Index i = 0; i < style.size(); ++i) style[i] = fixed.uniform();
        Context<S> ctx;
        ctx.contents["input"] = make_content_target(extractor<S>(), as<S>(ref));
        ctx.styles["style"] = cast_style<S>(make_style_target(extractor<double>(), style));
        ctx.pixels["ref"] = as<S>(ref);
        Objective o{{Term{TermKind::Content, 1.0, "input"}, Term{TermKind::Style, 30.0, "style"},
                     Term{TermKind::L1Pixel, 0.5, "ref"}, Term{TermKind::MSEPixel, 2.0, "ref"}}};
        return evaluate(o, extractor<S>(), v[0], ctx).total;
      });

  // End to end: the Dynamic-Net forward at α = (0.7, 0.3, 1) on an 8×8
  // image followed by content + style loss, differentiated w.r.t. the image.
  return GradSuiteResult{grad_tolerance<Scalar>(), suite.take()};
}

template GradSuiteResult run_grad_suite<float>(std::size_t);
template GradSuiteResult run_grad_suite<double>(std::size_t);

}  // namespace dynanet
