#pragma once

// Toy-scale supervised training of the aggregation module on one synthetic
// scene, plus gradient verification and the comparison experiments.
//
// The model is the aggregation module followed by a bias-free linear
// readout (Dm -> 3) standing in for a full flow head. Training minimizes
// the mean squared flow error over all points, occluded ones included.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gma3d/aggregation.hpp"
#include "gma3d/flowmetrics.hpp"
#include "gma3d/synthgen.hpp"

namespace gma3d::trainer {

using aggregation::Gma3dConfig;
using aggregation::Gma3dParams;
using numkern::DenseArray;
using numkern::Var;

enum class OptimizerKind { kSgd, kAdam };

struct AblationFlags {
  bool disable_local = false;
  bool disable_global = false;
  bool plain_aggregator = false;
};

struct TrainConfig {
  std::size_t steps = 300;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  bool freeze_alpha = false;  // keep alpha at its initial value (zero)

  void validate() const;
};

struct ModelState {
  Gma3dParams params;
  DenseArray decoder;  // Dm×3
};

// Uniform(±1/sqrt(fan_in)) weights and biases, alpha = 0, head scale 1 and
// shift 0. Deterministic in seed.
ModelState init_model(const Gma3dConfig& cfg, std::uint64_t seed);

// Module config with the ablation flags applied.
Gma3dConfig effective_config(const Gma3dConfig& base, const AblationFlags& flags);

// Mean over points of the squared flow error.
double loss_epe(const flowmetrics::FlowField& pred, const flowmetrics::FlowField& gt);
Var loss_epe(Var pred, Var gt);

// Per-point linear readout y_tilde · decoder.
flowmetrics::FlowField decode_flow(const DenseArray& decoder, const DenseArray& y_tilde);
Var decode_flow(Var decoder, Var y_tilde);

// Predicted flow of a model on a scene (neighbors built from cfg).
flowmetrics::FlowField predict(const ModelState& model, const synthgen::SyntheticScene& scene,
                               const Gma3dConfig& cfg);

struct ExperimentReport {
  std::string variant;
  std::vector<double> loss;  // one entry per step
  flowmetrics::SplitMetrics initial;
  flowmetrics::SplitMetrics final;
  ModelState final_state;
  flowmetrics::FlowField final_prediction;
  std::vector<std::pair<std::string, std::string>> config_echo;
  double wall_seconds = 0.0;
};

// Throws DivergenceError on a non-finite loss.
ExperimentReport train(const synthgen::SyntheticScene& scene, const Gma3dConfig& module,
                       const TrainConfig& cfg);

// Applies one optimizer update to every tensor of `params` given matching
// gradients. Exposed for testing the update rules.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<DenseArray*>& params);
  void step(const std::vector<const DenseArray*>& grads);

 private:
  TrainConfig cfg_;
  std::vector<DenseArray*> params_;
  std::vector<DenseArray> m_;
  std::vector<DenseArray> v_;
  std::size_t t_ = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  bool zero_alpha = false;    // check the pure residual path
  bool inject_fault = false;  // corrupt one analytic entry (negative control)
};

struct GradCheckResult {
  double max_discrepancy = 0.0;  // max |analytic - numeric| / max(1, |numeric|)
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients with central differences for every tensor
// of the module parameters and the decoder, on loss
// Σ_i ||decode(y_tilde)_i - f_gt,i||². Parameters come from init_model(seed)
// with alpha set to 0.5 unless zero_alpha.
GradCheckResult grad_check(const synthgen::SyntheticScene& scene, const Gma3dConfig& module,
                           std::uint64_t seed, const GradCheckOptions& opts = {});

struct OcclusionExperiment {
  ExperimentReport full;
  ExperimentReport baseline;  // alpha frozen at zero
};

OcclusionExperiment run_occlusion_experiment(const synthgen::SyntheticScene& scene,
                                             const Gma3dConfig& module, const TrainConfig& cfg);

inline constexpr const char* kAblationVariants[] = {
    "backbone_only",
    "wo_offset_aggregator",
    "wo_offset_aggregator_and_local",
    "wo_offset_aggregator_and_global",
    "full",
};

// Variant name -> training config adjustments.
TrainConfig ablation_variant(const TrainConfig& base, const std::string& variant);

// The five variants, in kAblationVariants order, on identical data and seeds.
std::vector<ExperimentReport> run_ablation(const synthgen::SyntheticScene& scene,
                                           const Gma3dConfig& module, const TrainConfig& cfg);

// Line-oriented key=value rendering. Split keys for a subset are present
// only when that subset is non-empty. Wall time is not included, so the text
// is a pure function of the inputs.
std::string format_report(const ExperimentReport& report);

// All tensors of a model keyed "gma3d.<name>" and "decoder".
std::vector<std::pair<std::string, DenseArray>> named_tensors(const ModelState& model);
ModelState model_from_tensors(const std::vector<std::pair<std::string, DenseArray>>& tensors,
                              const Gma3dConfig& cfg);

}  // namespace gma3d::trainer
