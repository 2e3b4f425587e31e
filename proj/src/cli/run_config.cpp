#include "gma3d/cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gma3d/errors.hpp"
#include "gma3d/format.hpp"

namespace gma3d::cli {

namespace {

using synthgen::MotionEmbedding;
using synthgen::OccludedMotion;

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

unsigned long long parse_unsigned(const std::string& s) {
  unsigned long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}


template <class S, class F>
Key size_field(const char* name, S RunConfig::*section, F S::*field) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*field = static_cast<F>(parse_unsigned(v));
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*field); }};
}

template <class S>
Key double_field(const char* name, S RunConfig::*section, double S::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { (c.*section).*field = parse_double(v); },
          [=](const RunConfig& c) { return format_double((c.*section).*field); }};
}

template <class S>
Key bool_field(const char* name, S RunConfig::*section, bool S::*field) {
  return {name, [=](RunConfig& c, const std::string& v) { (c.*section).*field = parse_bool(v); },
          [=](const RunConfig& c) { return std::string((c.*section).*field ? "true" : "false"); }};
}

// Two-valued enum keys.
template <class S, class E>
Key enum_field(const char* name, S RunConfig::*section, E S::*field,
               std::vector<std::pair<const char*, E>> names) {
  return {name,
          [=](RunConfig& c, const std::string& v) {
            for (const auto& [n, e] : names) {
              if (v == n) {
                (c.*section).*field = e;
                return;
              }
            }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
            throw ConfigError("expected one of {" + allowed + "}, got '" + v + "'");
          },
          [=](const RunConfig& c) {
            for (const auto& [n, e] : names) {
              if ((c.*section).*field == e) return std::string(n);
            }
            return std::string("?");
          }};
}

const std::vector<Key>& keys() {
  using A = aggregation::Gma3dConfig;
  using S = synthgen::SceneConfig;
  using T = trainer::TrainConfig;
  constexpr auto sc = &RunConfig::scene;
  constexpr auto mc = &RunConfig::module;
  constexpr auto tc = &RunConfig::train;
  static const std::vector<Key> table = [&] {
    std::vector<Key> k;
    k.push_back(size_field("scene.n_clusters", sc, &S::n_clusters));
    k.push_back(size_field("scene.points_per_cluster", sc, &S::points_per_cluster));
    k.push_back(size_field("scene.parts_per_cluster", sc, &S::parts_per_cluster));
    k.push_back(double_field("scene.cluster_spread", sc, &S::cluster_spread));
    k.push_back(double_field("scene.part_spacing", sc, &S::part_spacing));
    k.push_back(double_field("scene.scene_extent", sc, &S::scene_extent));
    k.push_back(double_field("scene.min_cluster_separation", sc, &S::min_cluster_separation));
    k.push_back(double_field("scene.translation_range", sc, &S::translation_range));
    k.push_back(double_field("scene.rotation_range", sc, &S::rotation_range));
    k.push_back(double_field("scene.occlusion_fraction", sc, &S::occlusion_fraction));
    k.push_back({"scene.occlusion_mode",
                 [](RunConfig& c, const std::string& v) {
                   c.scene.occlusion_mode = synthgen::occlusion_mode_from_string(v);
                 },
                 [](const RunConfig& c) { return synthgen::to_string(c.scene.occlusion_mode); }});
    k.push_back(size_field("scene.neighbor_k", sc, &S::neighbor_k));
    k.push_back(double_field("scene.r_match", sc, &S::r_match));
    k.push_back(size_field("scene.context_dim", sc, &S::context_dim));
    k.push_back(size_field("scene.motion_dim", sc, &S::motion_dim));
    k.push_back(double_field("scene.feature_noise_std", sc, &S::feature_noise_std));
    k.push_back(enum_field("scene.occluded_motion", sc, &S::occluded_motion,
                           {{"zero", OccludedMotion::kZero}, {"noise", OccludedMotion::kNoise}}));
    k.push_back(double_field("scene.occluded_noise_std", sc, &S::occluded_noise_std));
    k.push_back(enum_field("scene.motion_embedding", sc, &S::motion_embedding,
                           {{"random", MotionEmbedding::kRandom},
                            {"identity", MotionEmbedding::kIdentity}}));
    k.push_back(size_field("scene.seed", sc, &S::seed));

    k.push_back(size_field("module.qk_dim", mc, &A::qk_dim));
    k.push_back(size_field("module.enc_dim", mc, &A::enc_dim));
    k.push_back(size_field("module.k", mc, &A::k));
    k.push_back(size_field("module.enc_hidden", mc, &A::enc_hidden));
    k.push_back(size_field("module.score_hidden", mc, &A::score_hidden));
    k.push_back(size_field("module.global_map_hidden", mc, &A::global_map_hidden));
    k.push_back(size_field("module.plain_hidden", mc, &A::plain_hidden));
    k.push_back(bool_field("module.scale_logits", mc, &A::scale_logits));
    k.push_back(bool_field("module.raw_context_logits", mc, &A::raw_context_logits));
    k.push_back(bool_field("module.global_map", mc, &A::global_map));
    k.push_back(bool_field("module.include_self", mc, &A::include_self));

    k.push_back(size_field("train.steps", tc, &T::steps));
    k.push_back(double_field("train.learning_rate", tc, &T::learning_rate));
    k.push_back(enum_field("train.optimizer", tc, &T::optimizer,
                           {{"sgd", trainer::OptimizerKind::kSgd},
                            {"adam", trainer::OptimizerKind::kAdam}}));
    k.push_back(double_field("train.beta1", tc, &T::beta1));
    k.push_back(double_field("train.beta2", tc, &T::beta2));
    k.push_back(double_field("train.adam_eps", tc, &T::adam_eps));
    k.push_back(size_field("train.seed", tc, &T::seed));
    k.push_back({"train.disable_local",
                 [](RunConfig& c, const std::string& v) { c.train.ablation.disable_local = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.train.ablation.disable_local ? "true" : "false"); }});
    k.push_back({"train.disable_global",
                 [](RunConfig& c, const std::string& v) { c.train.ablation.disable_global = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.train.ablation.disable_global ? "true" : "false"); }});
    k.push_back({"train.plain_aggregator",
                 [](RunConfig& c, const std::string& v) { c.train.ablation.plain_aggregator = parse_bool(v); },
                 [](const RunConfig& c) { return std::string(c.train.ablation.plain_aggregator ? "true" : "false"); }});
    k.push_back(bool_field("train.freeze_alpha", tc, &T::freeze_alpha));
    return k;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void sync_module_dims(RunConfig& cfg) {
  cfg.module.context_dim = cfg.scene.context_dim;
  cfg.module.motion_dim = cfg.scene.motion_dim;
}

}  // namespace

void RunConfig::validate() const {
  scene.validate();
  module.validate();
  train.validate();
  if (module.context_dim != scene.context_dim || module.motion_dim != scene.motion_dim) {
    throw ConfigError("module feature widths must match scene.context_dim/scene.motion_dim");
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Key* entry = nullptr;
    for (const auto& k : keys()) {
      if (key == k.name) entry = &k;
    }
    if (entry == nullptr) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": repeated key '" + key + "'");
    try {
      entry->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
  }
  sync_module_dims(cfg);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << f.rdbuf();
  if (f.bad()) throw IoError("read from '" + path.string() + "' failed");
  return parse_run_config(text.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

std::string render_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + "=" + v + "\n";
  return out;
}

}  // namespace gma3d::cli
