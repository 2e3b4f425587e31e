#include "gma3d/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "gma3d/cli/container.hpp"
#include "gma3d/cli/run_config.hpp"
#include "gma3d/errors.hpp"
#include "gma3d/format.hpp"
#include "gma3d/flowmetrics.hpp"
#include "gma3d/synthgen.hpp"
#include "gma3d/trainer.hpp"

namespace gma3d::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

synthgen::SyntheticScene make_scene(const synthgen::SceneConfig& cfg) {
  auto scene = synthgen::generate_scene(cfg);
  auto feats = synthgen::synth_features(scene, cfg);
  scene.context = std::move(feats.context);
  scene.motion_in = std::move(feats.motion_in);
  return scene;
}

void check_scene_widths(const synthgen::SyntheticScene& scene, const RunConfig& cfg) {
  if (scene.context.cols() != cfg.module.context_dim ||
      scene.motion_in.cols() != cfg.module.motion_dim) {
    throw ConfigError("scene features are " + std::to_string(scene.context.cols()) + "/" +
                      std::to_string(scene.motion_in.cols()) +
                      " wide but the config sets scene.context_dim/scene.motion_dim to " +
                      std::to_string(cfg.module.context_dim) + "/" +
                      std::to_string(cfg.module.motion_dim));
  }
}

void print_metrics(std::ostream& out, const flowmetrics::SplitMetrics& m) {
  const auto block = [&](const std::string& subset, const flowmetrics::FlowMetrics& r) {
    out << "epe_" << subset << '=' << format_double(r.epe_m) << '\n';
    out << "acc_strict_" << subset << '=' << format_double(r.acc_strict) << '\n';
    out << "acc_relax_" << subset << '=' << format_double(r.acc_relax) << '\n';
    out << "outliers_" << subset << '=' << format_double(r.outliers) << '\n';
    out << "n_points_" << subset << '=' << r.n_points << '\n';
  };
  block("all", m.all);
  if (m.occluded) block("occluded", *m.occluded);
  if (m.non_occluded) block("non_occluded", *m.non_occluded);
}

std::string occluded_epe(const flowmetrics::SplitMetrics& m) {
  return m.occluded ? format_double(m.occluded->epe_m) : "n/a";
}

int cmd_gen(const fs::path& config, const fs::path& out_path, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  const auto scene = make_scene(cfg.scene);
  write_container(out_path, scene_to_tensors(scene));
  out << "wrote " << out_path.string() << ": " << scene.size() << " points, "
      << scene.occluded_count() << " occluded, frame2 " << scene.frame2.size() << " points\n";
  return kExitOk;
}

int cmd_train(const fs::path& config, const fs::path& scene_path, const fs::path& out_dir,
              std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  const auto scene = scene_from_tensors(read_container(scene_path));
  check_scene_widths(scene, cfg);
  ensure_dir(out_dir);

  auto report = trainer::train(scene, cfg.module, cfg.train);
  report.variant = "train";
  report.config_echo = config_entries(cfg);
  write_text(out_dir / "report.txt", trainer::format_report(report));
  write_container(out_dir / "params.gtc", trainer::named_tensors(report.final_state));
  write_container(out_dir / "pred.gtc", {{"flow", report.final_prediction.to_array()}});
  out << "steps=" << report.loss.size() << " final_epe_all=" << format_double(report.final.all.epe_m)
      << " final_epe_occluded=" << occluded_epe(report.final)
      << " wall_seconds=" << format_double(report.wall_seconds) << '\n';
  return kExitOk;
}

int cmd_eval(const fs::path& pred_path, const fs::path& scene_path, std::ostream& out) {
  const auto scene = scene_from_tensors(read_container(scene_path));
  const auto pred_tensors = read_container(pred_path);
  const auto& flow = find_tensor(pred_tensors, "flow");
  if (flow.rank() != 2 || flow.cols() != 3 || flow.rows() != scene.size()) {
    throw ShapeError("prediction 'flow' has shape " + numkern::shape_string(flow.shape()) +
                     ", scene has " + std::to_string(scene.size()) + " points");
  }
  const auto metrics = flowmetrics::evaluate_split(flowmetrics::FlowField::from_array(flow),
                                                   scene.gt_flow, scene.occlusion_mask);
  print_metrics(out, metrics);
  return kExitOk;
}

int cmd_gradcheck(const fs::path& config, bool inject_fault, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  const auto scene = make_scene(cfg.scene);
  trainer::GradCheckOptions opts;
  opts.inject_fault = inject_fault;
  const auto r = trainer::grad_check(scene, cfg.module, cfg.train.seed, opts);
  const bool pass = r.max_discrepancy < kGradCheckTolerance;
  out << "max_discrepancy=" << format_double(r.max_discrepancy) << '\n'
      << "worst_tensor=" << r.worst_tensor << '\n'
      << "worst_index=" << r.worst_index << '\n'
      << "entries_checked=" << r.entries_checked << '\n'
      << "tolerance=" << format_double(kGradCheckTolerance) << '\n'
      << "result=" << (pass ? "pass" : "fail") << '\n';
  return pass ? kExitOk : kExitVerification;
}

int cmd_ablate(const fs::path& config, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  const auto scene = make_scene(cfg.scene);
  ensure_dir(out_dir);
  auto rows = trainer::run_ablation(scene, cfg.module, cfg.train);
  std::string text;
  for (auto& r : rows) {
    r.config_echo = config_entries(cfg);
    if (!text.empty()) text += '\n';
    text += trainer::format_report(r);
  }
  write_text(out_dir / "ablation.txt", text);
  char line[160];
  std::snprintf(line, sizeof(line), "%-34s %14s %14s\n", "variant", "epe_occluded", "epe_all");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-34s %14s %14.6f\n", r.variant.c_str(),
                  occluded_epe(r.final).c_str(), r.final.all.epe_m);
    out << line;
  }
  return kExitOk;
}

// Maps library exceptions onto the exit-code contract.
int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    // Remaining library failures (scene generation, empty metric subsets)
    // stem from the requested configuration.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GMA3D motion aggregation: synthetic scenes, training and checks", "gma3d"};
  app.require_subcommand(1);

  std::string config, out_path, scene_path, pred_path;
  bool inject_fault = false;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene container");
  gen->add_option("--config", config, "Run config file")->required();
  gen->add_option("--out", out_path, "Output scene container")->required();

  auto* train = app.add_subcommand("train", "Train on a scene; writes report.txt, params.gtc, pred.gtc");
  train->add_option("--config", config, "Run config file")->required();
  train->add_option("--scene", scene_path, "Scene container")->required();
  train->add_option("--out", out_path, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Print flow metrics of a prediction");
  eval->add_option("--pred", pred_path, "Container holding tensor 'flow'")->required();
  eval->add_option("--scene", scene_path, "Scene container")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  gradcheck->add_option("--config", config, "Run config file")->required();
  gradcheck->add_flag("--inject-fault", inject_fault, "Corrupt one analytic gradient entry");

  auto* ablate = app.add_subcommand("ablate", "Train the five ablation variants");
  ablate->add_option("--config", config, "Run config file")->required();
  ablate->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (e.get_exit_code() == 0) return kExitOk;
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  return guarded(
      [&] {
        if (*gen) return cmd_gen(config, out_path, out);
        if (*train) return cmd_train(config, scene_path, out_path, out);
        if (*eval) return cmd_eval(pred_path, scene_path, out);
        if (*gradcheck) return cmd_gradcheck(config, inject_fault, out);
        return cmd_ablate(config, out_path, out);
      },
      err);
}

}  // namespace gma3d::cli
