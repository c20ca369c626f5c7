#pragma once

#include <algorithm>
#include <exception>
#include <cstdint>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dynanet/dynet.hpp"

namespace dynanet {

// One point of the objective space: the α used and the per-term losses.
// losses[0] is the content (L_A) column, losses[1] the style (L_B) column;
// any further entries are extra terms.
struct SweepRecord {
  AlphaVector alpha;
  std::vector<double> losses;
  double total_at_lambda = 0.0;
  std::string image_id;

  double content() const { return losses.at(0); }
  double style() const { return losses.at(1); }

  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

// Loss terms reported by sweeps and the λ used for the combined column.
struct EvalSetup {
  Objective terms;
  double lambda_ref = 1.0;
};

struct GridSpec {
  std::vector<std::vector<double>> values;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& v : values) n *= v.size();
    return values.empty() ? 0 : n;
  }

  // Combination `index` in lexicographic order (last block varies fastest).
  AlphaVector at(std::size_t index) const {
    AlphaVector a{std::vector<double>(values.size())};
    for (std::size_t l = values.size(); l-- > 0;) {
      a.values[l] = values[l][index % values[l].size()];
      index /= values[l].size();
    }
    return a;
  }

  void validate(std::size_t blocks, std::size_t cap) const;
};

inline constexpr std::size_t kDefaultGridCap = 10000;

namespace detail {

// Runs fn(i) for i in [0, n) over `threads` workers; results are written by
// index so the outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

inline SweepRecord make_record(const AlphaVector& alpha, const StepRecord& eval, const EvalSetup& setup,
                        std::string image_id) {
  SweepRecord rec{alpha, eval.terms, 0.0, std::move(image_id)};
  if (rec.losses.size() < 2) throw UsageError("sweep evaluation needs at least two loss terms");
  rec.total_at_lambda = rec.content() + setup.lambda_ref * rec.style();
  return rec;
}

// One record per (image, α) with every α^l = α; image-major order.
template <class Scalar>
std::vector<SweepRecord> sweep_uniform(const DynamicNet<Scalar>& net, const std::vector<Sample<Scalar>>& images,
                                       const std::vector<double>& alphas, const EvalSetup& setup,
                                       std::size_t threads = 1) {
  std::vector<SweepRecord> records(images.size() * alphas.size());
  detail::parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& sample = images[i / alphas.size()];
    const auto alpha = AlphaVector::uniform(net.blocks(), alphas[i % alphas.size()]);
    const std::vector<Sample<Scalar>> one{sample};
    records[i] = make_record(alpha, evaluate_net(net, one, setup.terms, &alpha), setup, sample.id);
  });
  return records;
}

// One record per grid combination, losses averaged over `images`.
template <class Scalar>
std::vector<SweepRecord> grid_search(const DynamicNet<Scalar>& net, const std::vector<Sample<Scalar>>& images,
                                     const GridSpec& grid, const EvalSetup& setup,
                                     std::size_t cap = kDefaultGridCap, std::size_t threads = 1) {
  grid.validate(net.blocks(), cap);
  std::vector<SweepRecord> records(grid.size());
  detail::parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto alpha = grid.at(i);
    records[i] = make_record(alpha, evaluate_net(net, images, setup.terms, &alpha), setup, "mean");
  });
  return records;
}

template <class Scalar>
struct FixedNet {
  DynamicNet<Scalar> net;
  SweepRecord record;
  TrainLog log;
};

// Conventional training of the backbone alone for content + λ·style. The
// returned record (empty α) is the net's working point on `validation`.
template <class Scalar>
FixedNet<Scalar> train_fixed(double lambda, const BackboneSpec& backbone, const BatchStream<Scalar>& data,
                             const std::vector<Sample<Scalar>>& validation, const EvalSetup& setup,
                             const TrainConfig& cfg, const std::string& style_target = "style") {
  BackboneSpec spec = backbone;
  spec.insertion_points.clear();
  FixedNet<Scalar> fixed{DynamicNet<Scalar>::create(spec, cfg.seed), {}, {}};
  fixed.log = train_main(fixed.net, data, style_transfer_objective(lambda, style_target), cfg);
  fixed.record = make_record(AlphaVector{}, evaluate_net(fixed.net, validation, setup.terms, nullptr),
                                     setup, "fixed");
  return fixed;
}

// Pixelwise (1 − α)·A + α·B.
template <class Scalar>
Tensor<Scalar> image_interp(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double alpha) {
  if (a.shape() != b.shape()) {
    throw ShapeError("image_interp: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const auto t = static_cast<Scalar>(alpha);
  return Tensor<Scalar>(a.shape(), (Scalar(1) - t) * a.data() + t * b.data());
}

// Records not strictly dominated in (content, style); ties are kept and
// input order is preserved.
std::vector<SweepRecord> pareto_front(const std::vector<SweepRecord>& records);

// True when every point of `b` is weakly dominated by some point of `a`.
bool weakly_dominates(const std::vector<SweepRecord>& a, const std::vector<SweepRecord>& b);

inline constexpr std::string_view kCsvHeader =
    "alpha_0,alpha_1,alpha_2,content_loss,style_loss,total_at_lambda,image_id";

std::string format_number(double v);
std::string format_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_csv(std::string_view text);
void export_csv(const std::vector<SweepRecord>& records, const std::string& path);

// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dynanet
