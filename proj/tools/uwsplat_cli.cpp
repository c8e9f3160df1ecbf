#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <streambuf>
#include <string>
#include <vector>

#include "uwsplat/backward.hpp"
#include "uwsplat/checkpoint.hpp"
#include "uwsplat/scene.hpp"
#include "uwsplat/trainer.hpp"

namespace fs = std::filesystem;
using namespace uwsplat;

namespace {

// Duplicates writes to two buffers (console + log file).
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return !traits_type::eof();
    const int ra = a_ ? a_->sputc(static_cast<char>(ch)) : ch;
    const int rb = b_ ? b_->sputc(static_cast<char>(ch)) : ch;
    return (ra == traits_type::eof() || rb == traits_type::eof())
               ? traits_type::eof()
               : ch;
  }
  int sync() override {
    const int ra = a_ ? a_->pubsync() : 0;
    const int rb = b_ ? b_->pubsync() : 0;
    return (ra == 0 && rb == 0) ? 0 : -1;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

int cmd_train(const std::string& config_path) {
  TrainConfig cfg = load_train_config(config_path);
  require(!cfg.scene_dir.empty(), "train: config must set scene_dir");
  Scene scene = load_scene(cfg.scene_dir);
  for (const std::string& w : scene.warnings)
    std::cerr << "warning: " << w << '\n';
  Trainer trainer(cfg, std::move(scene));

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_file.open(fs::path(cfg.out_dir) / "train_log.jsonl");
    require(log_file.good(), "train: cannot open log file in " + cfg.out_dir);
  }
  TeeBuf tee(std::cout.rdbuf(), log_file.is_open() ? log_file.rdbuf() : nullptr);
  std::ostream log(&tee);
  trainer.run(&log);
  log.flush();
  return 0;
}

int cmd_render(const std::string& checkpoint_path, int camera_index,
               const std::string& out_path, bool clean,
               const std::string& scene_override) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const TrainConfig cfg =
      train_config_from_json(nlohmann::json::parse(ck.config_json));
  std::string scene_dir = scene_override.empty() ? cfg.scene_dir : scene_override;
  require(!scene_dir.empty(),
          "render: checkpoint has no scene_dir, pass --scene");
  const Scene scene = load_scene(scene_dir);
  require(camera_index >= 0 &&
              camera_index < static_cast<int>(scene.views.size()),
          "render: camera index out of range, scene has " +
              std::to_string(scene.views.size()) + " views");
  const SceneView& view = scene.views[static_cast<std::size_t>(camera_index)];
  const ViewRender vr = render_view(ck.cloud, view.camera, ck.medium, cfg.raster);
  write_png(clean ? vr.render.color : vr.observed, out_path, 16);
  std::cout << "wrote " << out_path << " (" << (clean ? "clean" : "observed")
            << ", view '" << view.image_id << "')\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& scene_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const TrainConfig cfg =
      train_config_from_json(nlohmann::json::parse(ck.config_json));
  const std::string dir = scene_dir.empty() ? cfg.scene_dir : scene_dir;
  require(!dir.empty(), "eval: checkpoint has no scene_dir, pass --scene");
  const Scene scene = load_scene(dir);
  const auto holdout = scene.holdout_view_indices();
  require(!holdout.empty(), "eval: scene has no holdout views");

  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::size_t ssim_count = 0;
  for (const std::size_t vi : holdout) {
    const SceneView& view = scene.views[vi];
    const ViewRender vr = render_view(ck.cloud, view.camera, ck.medium, cfg.raster);
    nlohmann::json line;
    line["split"] = "holdout";
    line["view"] = view.image_id;
    line["psnr"] = psnr(vr.observed, view.image);
    psnr_sum += line["psnr"].get<double>();
    if (view.image.height >= 11 && view.image.width >= 11) {
      const double s = ssim_index(vr.observed, view.image);
      line["ssim"] = s;
      ssim_sum += s;
      ++ssim_count;
    } else {
      line["ssim"] = nullptr;
    }
    std::cout << line.dump() << '\n';
  }
  nlohmann::json summary;
  summary["split"] = "holdout_mean";
  summary["views"] = holdout.size();
  summary["psnr"] = psnr_sum / static_cast<double>(holdout.size());
  if (ssim_count > 0)
    summary["ssim"] = ssim_sum / static_cast<double>(ssim_count);
  else
    summary["ssim"] = nullptr;
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& group, double epsilon, double tolerance) {
  const GradCheckScene scene = make_gradcheck_scene();
  std::vector<ParamGroup> groups;
  if (group == "all") {
    for (int g = 0; g < kNumParamGroups; ++g)
      groups.push_back(static_cast<ParamGroup>(g));
  } else {
    groups.push_back(param_group_from_name(group));
  }
  bool ok = true;
  for (const ParamGroup g : groups) {
    const GradCheckReport report =
        grad_check(scene.cloud, scene.camera, scene.medium, scene.supervision(),
                   scene.weights, scene.stage, g, epsilon,
                   SemanticReduction::Sum, scene.raster);
    const bool pass = report.max_rel_err < tolerance;
    ok = ok && pass;
    std::printf("%-9s checked=%-5zu max_rel_err=%.3e worst=%zu analytic=%+.9e numeric=%+.9e  %s\n",
                param_group_name(g), report.checked, report.max_rel_err,
                report.worst_index, report.analytic_at_worst,
                report.numeric_at_worst, pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_synth(std::uint64_t seed, const std::string& out_dir,
              std::size_t gaussians, std::size_t views, int width, int height) {
  const MediumParams medium = MediumParams::from_coefficients(
      Vec3(0.2, 0.2, 0.2), Vec3(0.2, 0.2, 0.2), Vec3(0.1, 0.3, 0.4));
  SynthOptions opts;
  opts.width = width;
  opts.height = height;
  const Scene scene = synth_scene(seed, gaussians, views, medium, opts);
  save_scene(scene, out_dir);
  std::cout << "wrote synthetic scene with " << scene.views.size()
            << " views to " << out_dir << '\n';
  return 0;
}

int cmd_ablate(const std::string& config_path) {
  TrainConfig cfg = load_train_config(config_path);
  require(!cfg.scene_dir.empty(), "ablate: config must set scene_dir");
  Scene scene = load_scene(cfg.scene_dir);
  for (const std::string& w : scene.warnings)
    std::cerr << "warning: " << w << '\n';

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_file.open(fs::path(cfg.out_dir) / "ablation.jsonl");
  }
  TeeBuf tee(std::cout.rdbuf(), log_file.is_open() ? log_file.rdbuf() : nullptr);
  std::ostream log(&tee);
  run_ablation(cfg, scene, &log);
  log.flush();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater Gaussian splatting trainer"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Optimize a scene from a config file");
  train->add_option("--config", config_path, "Path to the JSON config")->required();

  std::string ckpt_path, out_path, scene_dir;
  int camera_index = 0;
  bool flag_clean = false, flag_observed = false;
  auto* render = app.add_subcommand("render", "Render one view from a checkpoint");
  render->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  render->add_option("--camera", camera_index, "View index in the scene")->required();
  render->add_option("--out", out_path, "Output PNG path")->required();
  render->add_option("--scene", scene_dir, "Override the scene directory");
  auto* opt_clean = render->add_flag("--clean", flag_clean, "Render without the water medium");
  render->add_flag("--observed", flag_observed, "Render through the water medium (default)")
      ->excludes(opt_clean);

  std::string eval_ckpt, eval_scene;
  auto* eval = app.add_subcommand("eval", "Holdout metrics for a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--scene", eval_scene, "Scene directory");

  std::string group = "all";
  double epsilon = 1e-5, tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "Finite-difference check of the analytic gradients");
  gradcheck->add_option("--group", group,
                        "position|scale|rotation|sh|opacity|semantic|medium|all");
  gradcheck->add_option("--epsilon", epsilon, "Finite-difference step");
  gradcheck->add_option("--tolerance", tolerance, "Max relative error to pass");

  std::uint64_t seed = 1;
  std::string synth_out;
  std::size_t n_gaussians = 200, n_views = 8;
  int synth_w = 64, synth_h = 64;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic underwater scene");
  synth->add_option("--seed", seed, "RNG seed")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--gaussians", n_gaussians, "Number of Gaussians");
  synth->add_option("--views", n_views, "Number of views");
  synth->add_option("--width", synth_w, "Image width");
  synth->add_option("--height", synth_h, "Image height");

  std::string ablate_config;
  auto* ablate = app.add_subcommand("ablate", "Train the four ablation variants");
  ablate->add_option("--config", ablate_config, "Path to the JSON config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path);
    if (render->parsed())
      return cmd_render(ckpt_path, camera_index, out_path, flag_clean, scene_dir);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_scene);
    if (gradcheck->parsed()) return cmd_gradcheck(group, epsilon, tolerance);
    if (synth->parsed())
      return cmd_synth(seed, synth_out, n_gaussians, n_views, synth_w, synth_h);
    if (ablate->parsed()) return cmd_ablate(ablate_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
