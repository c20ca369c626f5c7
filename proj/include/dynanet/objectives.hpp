#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dynanet/nn.hpp"

namespace dynanet {

// Seed for the fixed random-weight perceptual feature network.
inline constexpr std::uint64_t kExtractorSeed = 0x5EEDF00Dull;
inline constexpr std::size_t kFeatureLayers = 3;
// Image gain applied by the extractor. Content loss scales with its square
// and style loss with its fourth power.
inline constexpr double kExtractorInputGain = 4.0;
// Layer (1-based) whose activations define the content loss.
inline constexpr std::size_t kContentLayer = 2;

// Three untrained conv-relu layers (3→8 s1, 8→16 s2, 16→16 s2, all k3)
// standing in for a pretrained perceptual network.
template <class Scalar>
class FeatureExtractor {
 public:
  // `input_gain` is a fixed preprocessing scale applied to the image before
  // the first layer. With zero biases every feature scales linearly with it.
  explicit FeatureExtractor(std::uint64_t seed = kExtractorSeed, double input_gain = kExtractorInputGain)
      : input_gain_(static_cast<Scalar>(input_gain)) {
    Rng rng(seed);
    const std::array<std::array<Index, 3>, kFeatureLayers> layout{{{3, 8, 1}, {8, 16, 2}, {16, 16, 2}}};
    for (std::size_t l = 0; l < kFeatureLayers; ++l) {
      const auto [in, out, stride] = layout[l];
      detail::init_conv(params_, rng, "feat." + std::to_string(l), out, in, 3, false);
      strides_[l] = stride;
    }
    freeze_all(params_);
  }

  const ParamStore<Scalar>& params() const { return params_; }

  static void check_input(const Shape& shape) {
    if (shape.size() != 3 || shape[0] != 3) {
      throw ShapeError("feature extractor expects a 3xHxW image, got " + shape_string(shape));
    }
    if (shape[1] < 8 || shape[2] < 8 || shape[1] % 4 != 0 || shape[2] % 4 != 0) {
      throw ShapeError("feature extractor needs H, W >= 8 and divisible by 4, got " + shape_string(shape));
    }
  }

  // Post-relu activations of each layer, recorded on `img`'s tape.
  std::vector<Var<Scalar>> extract(const Var<Scalar>& img, std::size_t depth = kFeatureLayers) const {
    check_input(img.shape());
    Tape<Scalar>& tape = img.tape();
    std::vector<Var<Scalar>> features;
    Var<Scalar> x = input_gain_ == Scalar(1) ? img : scalar_mul(img, input_gain_);
    for (std::size_t l = 0; l < depth; ++l) {
      const std::string name = "feat." + std::to_string(l);
      auto w = tape.constant(params_.at(name + ".weight").value);
      auto b = tape.constant(params_.at(name + ".bias").value);
      x = relu(conv2d(x, w, b, strides_[l], 1));
      features.push_back(x);
    }
    return features;
  }

  std::vector<Tensor<Scalar>> extract(const Tensor<Scalar>& img, std::size_t depth = kFeatureLayers) const {
    Tape<Scalar> tape;
    std::vector<Tensor<Scalar>> out;
    for (const auto& v : extract(tape.constant(img), depth)) out.push_back(v.value());
    return out;
  }

 private:
  ParamStore<Scalar> params_;
  std::array<Index, kFeatureLayers> strides_{};
  Scalar input_gain_ = Scalar(1);
};

// Gram matrices of a style image, one per extractor layer.
template <class Scalar>
struct StyleTarget {
  std::vector<Tensor<Scalar>> grams;
};

// Content-layer activations of a reference image.
template <class Scalar>
struct ContentTarget {
  Tensor<Scalar> features;
};

template <class Scalar>
Tensor<Scalar> gram(const Tensor<Scalar>& feature) {
  Tape<Scalar> tape;
  return gram(tape.constant(feature)).value();
}

template <class Scalar>
StyleTarget<Scalar> make_style_target(const FeatureExtractor<Scalar>& extractor, const Tensor<Scalar>& style) {
  StyleTarget<Scalar> target;
  for (const auto& f : extractor.extract(style)) target.grams.push_back(gram(f));
  return target;
}

template <class Scalar>
ContentTarget<Scalar> make_content_target(const FeatureExtractor<Scalar>& extractor, const Tensor<Scalar>& reference) {
  return ContentTarget<Scalar>{extractor.extract(reference, kContentLayer).back()};
}

// Σ over layers of mean squared Gram difference, given precomputed features.
template <class Scalar>
Var<Scalar> style_loss_from_features(const std::vector<Var<Scalar>>& features, const StyleTarget<Scalar>& target) {
  if (target.grams.size() != features.size()) throw ShapeError("style target layer count mismatch");
  Tape<Scalar>& tape = features.front().tape();
  Var<Scalar> total;
  for (std::size_t l = 0; l < features.size(); ++l) {
    auto term = mse(gram(features[l]), tape.constant(target.grams[l]));
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

template <class Scalar>
Var<Scalar> style_loss(const FeatureExtractor<Scalar>& extractor, const Var<Scalar>& img,
                       const StyleTarget<Scalar>& target) {
  return style_loss_from_features(extractor.extract(img), target);
}

template <class Scalar>
Var<Scalar> content_loss(const FeatureExtractor<Scalar>& extractor, const Var<Scalar>& img,
                         const ContentTarget<Scalar>& target) {
  auto features = extractor.extract(img, kContentLayer).back();
  return mse(features, img.tape().constant(target.features));
}

// Content loss between two recorded images; symmetric in its arguments.
template <class Scalar>
Var<Scalar> content_loss(const FeatureExtractor<Scalar>& extractor, const Var<Scalar>& a, const Var<Scalar>& b) {
  return mse(extractor.extract(a, kContentLayer).back(), extractor.extract(b, kContentLayer).back());
}

enum class TermKind { Content, Style, L1Pixel, MSEPixel };

std::string_view term_kind_name(TermKind kind);
TermKind parse_term_kind(std::string_view name);

struct Term {
  TermKind kind = TermKind::Content;
  double weight = 1.0;
  // Key into the evaluation context.
  std::string target;

  friend bool operator==(const Term&, const Term&) = default;
};

// Weighted sum of loss terms.
struct Objective {
  std::vector<Term> terms;

  // Throws ConfigError unless there is at least one term and all weights
  // are finite and non-negative.
  void validate() const;

  friend bool operator==(const Objective&, const Objective&) = default;
};

// content + lambda·style against the named targets.
Objective style_transfer_objective(double lambda, const std::string& style_target = "style",
                                   const std::string& content_target = "input");

// Targets an objective's terms refer to, keyed by name.
template <class Scalar>
struct Context {
  std::map<std::string, ContentTarget<Scalar>> contents;
  std::map<std::string, StyleTarget<Scalar>> styles;
  std::map<std::string, Tensor<Scalar>> pixels;
};

template <class Scalar>
struct Evaluation {
  Var<Scalar> total;
  std::vector<Var<Scalar>> terms;

  std::vector<double> term_values() const {
    std::vector<double> out;
    for (const auto& t : terms) out.push_back(static_cast<double>(t.item()));
    return out;
  }
};

// Evaluates every term (weight-0 terms included) and the weighted total,
// summed in term order.
template <class Scalar>
Evaluation<Scalar> evaluate(const Objective& objective, const FeatureExtractor<Scalar>& extractor,
                            const Var<Scalar>& output, const Context<Scalar>& context) {
  objective.validate();
  Tape<Scalar>& tape = output.tape();
  auto missing = [](const Term& t) {
    return UsageError("objective term " + std::string(term_kind_name(t.kind)) + " refers to missing target '" +
                      t.target + "'");
  };
  std::vector<Var<Scalar>> features;
  auto ensure_features = [&](std::size_t depth) {
    if (features.size() < depth) features = extractor.extract(output, kFeatureLayers);
  };

  Evaluation<Scalar> result;
  for (const auto& term : objective.terms) {
    Var<Scalar> value;
    switch (term.kind) {
      case TermKind::Content: {
        auto it = context.contents.find(term.target);
        if (it == context.contents.end()) throw missing(term);
        ensure_features(kContentLayer);
        value = mse(features[kContentLayer - 1], tape.constant(it->second.features));
        break;
      }
      case TermKind::Style: {
        auto it = context.styles.find(term.target);
        if (it == context.styles.end()) throw missing(term);
        ensure_features(kFeatureLayers);
        value = style_loss_from_features(features, it->second);
        break;
      }
      case TermKind::L1Pixel:
      case TermKind::MSEPixel: {
        auto it = context.pixels.find(term.target);
        if (it == context.pixels.end()) throw missing(term);
        auto ref = tape.constant(it->second);
        value = term.kind == TermKind::L1Pixel ? l1(output, ref) : mse(output, ref);
        break;
      }
    }
    auto weighted = scalar_mul(value, static_cast<Scalar>(term.weight));
    result.total = result.terms.empty() ? weighted : add(result.total, weighted);
    result.terms.push_back(value);
  }
  return result;
}

}  // namespace dynanet
