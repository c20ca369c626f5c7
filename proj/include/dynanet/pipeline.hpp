#pragma once

#include <string>
#include <vector>

#include "dynanet/config.hpp"
#include "dynanet/sweep.hpp"

namespace dynanet {

// Generated inputs of one task. Images are quantized to 8 bits so the
// in-memory copy equals what gen-data writes to disk.
struct TaskAssets {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<Tensor<Real>> train;
  std::vector<Tensor<Real>> val;
  // Image tasks only.
  Tensor<Real> style;
  Tensor<Real> style2;
  // regress1d only.
  Regression1DTask<Real> regression;
};

TaskAssets generate_assets(const RunConfig& cfg);
void write_assets(const TaskAssets& assets, const RunConfig& cfg, const std::string& dir);
TaskAssets read_assets(const RunConfig& cfg, const std::string& dir);

// Samples, objectives and evaluation terms for one task.
struct TaskData {
  BackboneSpec backbone;
  std::vector<Sample<Real>> train;
  std::vector<Sample<Real>> val;
  Objective o0;
  Objective o1;
  EvalSetup eval;
};

BackboneSpec task_backbone(Task task);

// Phase objectives. Image tasks: content + λ·style, where the tuning
// objective targets "style2" for two-styles/two-scales. regress1d:
// (1 − λ)·MSE(t0) + λ·MSE(t1).
Objective task_objective(const RunConfig& cfg, double lambda, bool tuning);

TaskData build_task(const RunConfig& cfg, const TaskAssets& assets, const FeatureExtractor<Real>& extractor);

// Phase drivers. Batches are drawn from data.train with seeds derived from
// cfg.seed; a batch never exceeds the training set size.
DynamicNet<Real> run_train_main(const RunConfig& cfg, const TaskData& data, TrainLog* log = nullptr,
                                const StepCallback& on_step = {});
TrainLog run_train_tuning(DynamicNet<Real>& net, const RunConfig& cfg, const TaskData& data,
                          const StepCallback& on_step = {});

// Fixed backbone trained for content + λ·style (image tasks only).
FixedNet<Real> run_train_fixed(const RunConfig& cfg, const TaskData& data, double lambda);

// Image interpolation baseline: pixelwise blend of the α=0 and α=1 outputs
// of `net`, scored with the evaluation terms. One record per (image, α).
std::vector<SweepRecord> interp_baseline(const DynamicNet<Real>& net, const TaskData& data,
                                         const std::vector<double>& alphas, const EvalSetup& eval);

// Loss terms of an already computed output image.
StepRecord score_output(const DynamicNet<Real>& net, const Tensor<Real>& output, const Sample<Real>& sample,
                        const Objective& terms);

// `step,total,<term>...` rows, one per training step.
std::string format_log_csv(const TrainLog& log, const Objective& objective);

// Mean number of brightness transitions per row: each row is thresholded
// at its mean luminance and adjacent differing pairs are counted.
double row_transitions(const Tensor<Real>& img);

// Model directory layout: theta.dynw, psi.dynw, model.cfg.
void save_model(const DynamicNet<Real>& net, const RunConfig& cfg, const std::string& dir);

struct LoadedModel {
  DynamicNet<Real> net;
  RunConfig cfg;
};

// Rebuilds the network from model.cfg and checks every weight tensor
// against the architecture.
LoadedModel load_model(const std::string& dir);

std::string join_path(const std::string& a, const std::string& b);
void ensure_dir(const std::string& dir);

}  // namespace dynanet
