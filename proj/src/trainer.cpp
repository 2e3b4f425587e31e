#include "gma3d/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "gma3d/errors.hpp"
#include "gma3d/format.hpp"
#include "gma3d/numkern/finite_diff.hpp"
#include "gma3d/numkern/ops.hpp"
#include "gma3d/random.hpp"

namespace gma3d::trainer {

namespace nk = numkern;
using synthgen::SyntheticScene;

namespace {

std::vector<DenseArray*> tensor_ptrs(ModelState& m) {
  std::vector<DenseArray*> out;
  aggregation::visit_params(m.params, [&](const std::string&, DenseArray& a) { out.push_back(&a); });
  out.push_back(&m.decoder);
  return out;
}

std::vector<std::string> tensor_names(const ModelState& m) {
  std::vector<std::string> out;
  aggregation::visit_params(m.params,
                            [&](const std::string& n, const DenseArray&) { out.push_back(n); });
  out.push_back("decoder");
  return out;
}

struct TracedModel {
  Var loss;
  Var prediction;
  std::vector<Var> leaves;  // in tensor_ptrs order
};

// Loss is the mean squared flow error; `sum_loss` switches to the sum.
TracedModel trace_model(nk::Tape& tape, const ModelState& model, const SyntheticScene& scene,
                        const spatial::NeighborIndex& nbrs, const Gma3dConfig& cfg,
                        bool train_alpha, bool sum_loss) {
  auto vars = aggregation::bind(tape, model.params, true);
  if (!train_alpha) vars.alpha = tape.constant(model.params.alpha);
  const Var decoder = tape.parameter(model.decoder);
  const Var context = tape.constant(scene.context);
  const Var motion = tape.constant(scene.motion_in);
  const auto fwd = aggregation::forward(vars, scene.frame1, context, motion, nbrs, cfg);
  const Var pred = decode_flow(decoder, fwd.y_tilde);
  Var loss = loss_epe(pred, tape.constant(scene.gt_flow.to_array()));
  if (sum_loss) loss = nk::scale(loss, static_cast<double>(scene.size()));

  TracedModel out{loss, pred, {}};
  aggregation::visit_params(vars, [&](const std::string&, const Var& v) { out.leaves.push_back(v); });
  out.leaves.push_back(decoder);
  return out;
}

void init_uniform(DenseArray& a, double bound, Rng& rng) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
}

void init_linear(nk::LinearParams& l, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.rows()));
  init_uniform(l.weight, bound, rng);
  init_uniform(l.bias, bound, rng);
}

void init_mlp(nk::MlpParams& m, Rng& rng) {
  for (auto& l : m.layers) init_linear(l, rng);
}

void append_metrics(std::ostringstream& out, const std::string& prefix,
                    const flowmetrics::SplitMetrics& m) {
  const auto block = [&](const std::string& subset, const flowmetrics::FlowMetrics& r) {
    out << prefix << "epe_" << subset << '=' << format_double(r.epe_m) << '\n';
    out << prefix << "acc_strict_" << subset << '=' << format_double(r.acc_strict) << '\n';
    out << prefix << "acc_relax_" << subset << '=' << format_double(r.acc_relax) << '\n';
    out << prefix << "outliers_" << subset << '=' << format_double(r.outliers) << '\n';
    out << prefix << "n_points_" << subset << '=' << r.n_points << '\n';
  };
  block("all", m.all);
  if (m.occluded) block("occluded", *m.occluded);
  if (m.non_occluded) block("non_occluded", *m.non_occluded);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train config: learning_rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be positive");
}

ModelState init_model(const Gma3dConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ModelState m{aggregation::zero_params(cfg), DenseArray::zeros({cfg.motion_dim, 3})};
  auto& p = m.params;
  init_uniform(p.qk, 1.0 / std::sqrt(static_cast<double>(cfg.context_dim)), rng);
  init_uniform(p.value, 1.0 / std::sqrt(static_cast<double>(cfg.motion_dim)), rng);
  init_mlp(p.encoder, rng);
  init_mlp(p.scorer, rng);
  init_mlp(p.global_map, rng);
  init_linear(p.head.linear, rng);
  init_mlp(p.plain, rng);
  init_uniform(m.decoder, 1.0 / std::sqrt(static_cast<double>(cfg.motion_dim)), rng);
  return m;
}

Gma3dConfig effective_config(const Gma3dConfig& base, const AblationFlags& flags) {
  Gma3dConfig cfg = base;
  cfg.disable_local = cfg.disable_local || flags.disable_local;
  cfg.disable_global = cfg.disable_global || flags.disable_global;
  if (flags.plain_aggregator) cfg.aggregator = aggregation::Aggregator::kPlainMlp;
  return cfg;
}

double loss_epe(const flowmetrics::FlowField& pred, const flowmetrics::FlowField& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("loss_epe: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(gt.size()) + " targets");
  }
  return nk::mean_row_sq_norm(nk::sub(pred.to_array(), gt.to_array()));
}

Var loss_epe(Var pred, Var gt) { return nk::mean_row_sq_norm(nk::sub(pred, gt)); }

flowmetrics::FlowField decode_flow(const DenseArray& decoder, const DenseArray& y_tilde) {
  if (decoder.rank() != 2 || decoder.cols() != 3) {
    throw ShapeError("decode_flow: decoder must be Dm×3, got " + nk::shape_string(decoder.shape()));
  }
  return flowmetrics::FlowField::from_array(nk::matmul(y_tilde, decoder));
}

Var decode_flow(Var decoder, Var y_tilde) {
  if (decoder.value().rank() != 2 || decoder.value().cols() != 3) {
    throw ShapeError("decode_flow: decoder must be Dm×3, got " +
                     nk::shape_string(decoder.value().shape()));
  }
  return nk::matmul(y_tilde, decoder);
}

flowmetrics::FlowField predict(const ModelState& model, const SyntheticScene& scene,
                               const Gma3dConfig& cfg) {
  const auto nbrs = aggregation::build_neighbors(scene.frame1, cfg);
  const auto out = aggregation::forward(model.params, scene.frame1,
                                        {scene.context, scene.motion_in}, nbrs, cfg);
  return decode_flow(model.decoder, out.y_tilde);
}

Optimizer::Optimizer(const TrainConfig& cfg, const std::vector<DenseArray*>& params)
    : cfg_(cfg), params_(params) {
  for (const DenseArray* p : params_) {
    m_.push_back(DenseArray::zeros(p->shape()));
    v_.push_back(DenseArray::zeros(p->shape()));
  }
}

void Optimizer::step(const std::vector<const DenseArray*>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("optimizer: gradient count mismatch");
  ++t_;
  const double lr = cfg_.learning_rate;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t s = 0; s < params_.size(); ++s) {
    if (grads[s] == nullptr) continue;
    DenseArray& p = *params_[s];
    const DenseArray& g = *grads[s];
    if (!g.same_shape(p)) throw ShapeError("optimizer: gradient shape mismatch");
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] - lr * g[i];
      continue;
    }
    DenseArray& m = m_[s];
    DenseArray& v = v_[s];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] = p[i] - lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
    }
  }
}

ExperimentReport train(const SyntheticScene& scene, const Gma3dConfig& module,
                       const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Gma3dConfig mcfg = effective_config(module, cfg.ablation);
  if (scene.context.cols() != mcfg.context_dim || scene.motion_in.cols() != mcfg.motion_dim) {
    throw ShapeError("scene features are " + std::to_string(scene.context.cols()) + "/" +
                     std::to_string(scene.motion_in.cols()) + " wide, module expects " +
                     std::to_string(mcfg.context_dim) + "/" + std::to_string(mcfg.motion_dim));
  }
  const auto nbrs = aggregation::build_neighbors(scene.frame1, mcfg);

  ExperimentReport report;
  report.final_state = init_model(mcfg, cfg.seed);
  ModelState& model = report.final_state;
  report.initial = flowmetrics::evaluate_split(predict(model, scene, mcfg), scene.gt_flow,
                                               scene.occlusion_mask);

  Optimizer opt(cfg, tensor_ptrs(model));
  const bool train_alpha = !cfg.freeze_alpha && mcfg.aggregator == aggregation::Aggregator::kOffset;
  report.loss.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    nk::Tape tape;
    TracedModel traced;
    try {
      traced = trace_model(tape, model, scene, nbrs, mcfg, train_alpha, false);
    } catch (const NumericalError&) {
      throw DivergenceError(step);
    }
    const double loss = traced.loss.value().item();
    if (!std::isfinite(loss)) throw DivergenceError(step);
    report.loss.push_back(loss);

    std::vector<DenseArray> g(traced.leaves.size());
    std::vector<const DenseArray*> gp(traced.leaves.size(), nullptr);
    try {
      const nk::Gradients grads = nk::backward(tape, traced.loss);
      for (std::size_t s = 0; s < traced.leaves.size(); ++s) {
        if (!tape.requires_grad(traced.leaves[s])) continue;
        g[s] = grads.of(traced.leaves[s]);
        gp[s] = &g[s];
      }
    } catch (const NumericalError&) {
      throw DivergenceError(step);
    }
    opt.step(gp);
    for (const DenseArray* p : tensor_ptrs(model)) {
      for (double x : p->data()) {
        if (!std::isfinite(x)) throw DivergenceError(step);
      }
    }
  }

  report.final_prediction = predict(model, scene, mcfg);
  report.final = flowmetrics::evaluate_split(report.final_prediction, scene.gt_flow,
                                             scene.occlusion_mask);
  report.variant = "custom";
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckResult grad_check(const SyntheticScene& scene, const Gma3dConfig& module,
                           std::uint64_t seed, const GradCheckOptions& opts) {
  module.validate();
  const auto nbrs = aggregation::build_neighbors(scene.frame1, module);
  ModelState model = init_model(module, seed);
  model.params.alpha[0] = opts.zero_alpha ? 0.0 : 0.5;

  nk::Tape tape;
  const TracedModel traced = trace_model(tape, model, scene, nbrs, module, true, true);
  const nk::Gradients grads = nk::backward(tape, traced.loss);

  const auto names = tensor_names(model);
  auto ptrs = tensor_ptrs(model);
  GradCheckResult result;
  for (std::size_t s = 0; s < ptrs.size(); ++s) {
    DenseArray analytic = grads.of(traced.leaves[s]);
    if (opts.inject_fault && s == 0) analytic[0] = analytic[0] * 2.0 + 1.0;

    DenseArray& slot = *ptrs[s];
    const DenseArray original = slot;
    const auto f = [&](const DenseArray& probe) {
      slot = probe;
      nk::Tape t;
      return trace_model(t, model, scene, nbrs, module, true, true).loss.value().item();
    };
    DenseArray numeric;
    try {
      numeric = nk::finite_diff_grad(f, original, opts.eps);
    } catch (const NumericalError& e) {
      slot = original;
      throw NumericalError("grad_check: tensor '" + names[s] + "': " + e.what(), e.index());
    }
    slot = original;

    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double d = std::fabs(analytic[i] - numeric[i]) / std::max(1.0, std::fabs(numeric[i]));
      if (d > result.max_discrepancy || result.entries_checked == 0) {
        result.max_discrepancy = d;
        result.worst_tensor = names[s];
        result.worst_index = i;
      }
      ++result.entries_checked;
    }
  }
  return result;
}

OcclusionExperiment run_occlusion_experiment(const SyntheticScene& scene,
                                             const Gma3dConfig& module, const TrainConfig& cfg) {
  OcclusionExperiment out;
  out.full = train(scene, module, cfg);
  out.full.variant = "full";
  TrainConfig base = cfg;
  base.freeze_alpha = true;
  base.ablation = {};
  out.baseline = train(scene, module, base);
  out.baseline.variant = "backbone_only";
  return out;
}

TrainConfig ablation_variant(const TrainConfig& base, const std::string& variant) {
  TrainConfig cfg = base;
  cfg.ablation = {};
  cfg.freeze_alpha = false;
  if (variant == "full") return cfg;
  if (variant == "backbone_only") {
    cfg.freeze_alpha = true;
    return cfg;
  }
  cfg.ablation.plain_aggregator = true;
  if (variant == "wo_offset_aggregator") return cfg;
  if (variant == "wo_offset_aggregator_and_local") {
    cfg.ablation.disable_local = true;
    return cfg;
  }
  if (variant == "wo_offset_aggregator_and_global") {
    cfg.ablation.disable_global = true;
    return cfg;
  }
  throw ConfigError("unknown ablation variant '" + variant + "'");
}

std::vector<ExperimentReport> run_ablation(const SyntheticScene& scene, const Gma3dConfig& module,
                                           const TrainConfig& cfg) {
  std::vector<ExperimentReport> rows;
  for (const char* name : kAblationVariants) {
    rows.push_back(train(scene, module, ablation_variant(cfg, name)));
    rows.back().variant = name;
  }
  return rows;
}

std::string format_report(const ExperimentReport& report) {
  std::ostringstream out;
  out << "variant=" << report.variant << '\n';
  for (const auto& [k, v] : report.config_echo) out << "config." << k << '=' << v << '\n';
  out << "steps=" << report.loss.size() << '\n';
  append_metrics(out, "initial_", report.initial);
  append_metrics(out, "final_", report.final);
  out << "final_alpha=" << format_double(report.final_state.params.alpha.item()) << '\n';
  if (!report.loss.empty()) {
    out << "initial_loss=" << format_double(report.loss.front()) << '\n';
    out << "final_loss=" << format_double(report.loss.back()) << '\n';
  }
  for (std::size_t i = 0; i < report.loss.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof(key), "loss.%06zu=", i);
    out << key << format_double(report.loss[i]) << '\n';
  }
  return out.str();
}

std::vector<std::pair<std::string, DenseArray>> named_tensors(const ModelState& model) {
  std::vector<std::pair<std::string, DenseArray>> out;
  aggregation::visit_params(model.params, [&](const std::string& n, const DenseArray& a) {
    out.emplace_back("gma3d." + n, a);
  });
  out.emplace_back("decoder", model.decoder);
  return out;
}

ModelState model_from_tensors(const std::vector<std::pair<std::string, DenseArray>>& tensors,
                              const Gma3dConfig& cfg) {
  std::map<std::string, const DenseArray*> by_name;
  for (const auto& [n, a] : tensors) by_name[n] = &a;
  ModelState m{aggregation::zero_params(cfg), DenseArray::zeros({cfg.motion_dim, 3})};
  const auto take = [&](const std::string& name, DenseArray& slot) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("params container lacks tensor '" + name + "'");
    if (!it->second->same_shape(slot)) {
      throw ShapeError("tensor '" + name + "' has shape " + nk::shape_string(it->second->shape()) +
                       ", expected " + nk::shape_string(slot.shape()));
    }
    slot = *it->second;
  };
  aggregation::visit_params(m.params,
                            [&](const std::string& n, DenseArray& a) { take("gma3d." + n, a); });
  take("decoder", m.decoder);
  return m;
}

}  // namespace gma3d::trainer
