#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bokeh/bokeh.hpp"

namespace {

using namespace bokeh;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

nlohmann::json metric_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); }

RenderConfig load_render_config(const std::optional<std::string>& path) {
  if (!path) return {};
  std::ifstream in(*path);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + *path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, *path + ": " + e.what());
  }
  return RenderConfig::from_json(j);
}

struct RenderArgs {
  std::string input, depth, out;
  double f_number = 2.0;
  double focal_mm = 50.0;
  std::optional<std::string> config;
  bool tta = false;
  std::optional<int> tile, stride;
};

int run_render(const RenderArgs& a) {
  const ApertureSetting target{a.f_number, a.focal_mm, std::nullopt};
  target.validate();
  if (target.focal_length_warning())
    std::cerr << "warning: focal length " << a.focal_mm << "mm is outside 28-70mm\n";
  const RasterImage img = load_image(a.input);
  const DepthMap depth = load_depth(a.depth);
  // Median focus and the radius cap must come from the whole frame, not
  // from a tile or a rotated copy.
  const RenderConfig cfg = resolve_config(load_render_config(a.config), depth);

  auto render = [&](const RasterImage& x, const DepthMap& d) { return render_bokeh(x, d, target, cfg); };
  auto tiled = [&](const RasterImage& x, const DepthMap& d) {
    if (!a.tile) return render(x, d);
    return tile_process(render, x, TileSpec{*a.tile, a.stride.value_or(*a.tile)}, d);
  };
  const RasterImage out = a.tta ? tta_ensemble(tiled, img, depth) : tiled(img, depth);
  save_image(out, a.out);
  return kExitOk;
}

int run_score(const std::string& pred, const std::string& gt, const std::optional<std::string>& adapter,
              const std::optional<std::string>& out) {
  const harness::Manifest manifest = harness::load_manifest(gt);
  std::optional<LpipsAdapter> lpips;
  if (adapter) lpips = LpipsAdapter::from_spec(*adapter);
  const harness::ScoreResult r = harness::score_submission(pred, manifest, lpips ? &*lpips : nullptr);
  if (out) harness::write_scores_csv(r, *out);
  nlohmann::json j{{"pairs", r.pairs.size()},
                   {"psnr", metric_json(r.aggregate.psnr_db)},
                   {"psnr_infinite", r.psnr_infinite},
                   {"ssim", r.aggregate.ssim},
                   {"lpips", r.aggregate.lpips ? nlohmann::json(*r.aggregate.lpips) : nlohmann::json(nullptr)}};
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int run_rank(const std::string& metrics, const std::optional<std::string>& mos, const std::string& out) {
  const auto entries = harness::read_metrics_csv(metrics);
  const auto mos_table = mos ? harness::read_mos_csv(*mos) : std::map<std::string, double>{};
  const auto rows = harness::build_leaderboard(entries, mos_table);
  harness::emit_leaderboard(rows, out);
  for (const auto& r : rows)
    std::cout << r.fidelity_rank << '\t' << r.team << '\t' << csv::format_fixed(r.fidelity_score(), 2) << '\n';
  return kExitOk;
}

int run_validate(const std::string& pred, const std::string& manifest_root) {
  const harness::SubmissionReport report = harness::validate_submission(pred, harness::load_manifest(manifest_root));
  if (report.ok()) {
    std::cout << "ok\n";
    return kExitOk;
  }
  std::cout << report.summary();
  return kExitInvalid;
}

int run_dataset_check(const std::string& root) {
  const harness::Manifest m = harness::load_manifest(root);
  std::size_t targets = 0;
  for (const auto& s : m.scenes) targets += s.targets.size();
  std::cout << m.scenes.size() << " scenes, " << targets << " targets (train " << m.splits.train.size() << ", val "
            << m.splits.val.size() << ", test " << m.splits.test.size() << ", unassigned "
            << m.splits.unassigned.size() << ")\n";
  for (const auto& w : m.warnings) std::cout << "warning: " << w << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aperture rendering and scoring tools"};
  app.require_subcommand(1);

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render a wide-aperture image from an f/22 capture and depth");
  render->add_option("--input", ra.input, "f/22 image (PNG or JPEG)")->required();
  render->add_option("--depth", ra.depth, "depth map (PFM, meters)")->required();
  render->add_option("--f-number", ra.f_number, "target f-number")->required();
  render->add_option("--focal-length", ra.focal_mm, "focal length in mm")->required();
  render->add_option("--config", ra.config, "render config JSON");
  render->add_option("--out", ra.out, "output PNG")->required();
  render->add_flag("--tta", ra.tta, "average over the 8 flips and rotations");
  auto* tile_opt = render->add_option("--tile", ra.tile, "tile size in px");
  render->add_option("--stride", ra.stride, "tile stride in px")->needs(tile_opt);

  std::string pred, gt, manifest_root, metrics, out, root;
  std::optional<std::string> adapter, mos, score_out;
  auto* score = app.add_subcommand("score", "Score a submission bundle against a dataset root");
  score->add_option("--pred", pred, "directory of {scene}_f{f}.png predictions")->required();
  score->add_option("--gt", gt, "dataset root with scenes/")->required();
  score->add_option("--lpips-adapter", adapter, "command or scene_id,lpips CSV");
  score->add_option("--out", score_out, "per-pair score CSV");

  auto* rank = app.add_subcommand("rank", "Build the leaderboard CSV");
  rank->add_option("--metrics", metrics, "team,psnr,ssim,lpips CSV")->required();
  rank->add_option("--mos", mos, "team,mos CSV or raw rating records");
  rank->add_option("--out", out, "leaderboard CSV")->required();

  auto* validate = app.add_subcommand("validate", "Check a submission bundle for completeness");
  validate->add_option("--pred", pred, "bundle directory")->required();
  validate->add_option("--manifest", manifest_root, "dataset root")->required();

  auto* check = app.add_subcommand("dataset-check", "Load a dataset root and report warnings");
  check->add_option("--root", root, "dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*render) return run_render(ra);
    if (*score) return run_score(pred, gt, adapter, score_out);
    if (*rank) return run_rank(metrics, mos, out);
    if (*validate) return run_validate(pred, manifest_root);
    if (*check) return run_dataset_check(root);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_io_error(e.code()) ? kExitIo : kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitInvalid;
}
