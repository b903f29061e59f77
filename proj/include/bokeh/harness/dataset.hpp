#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bokeh/csv.hpp"
#include "bokeh/error.hpp"
#include "bokeh/optics.hpp"
#include "bokeh/raster.hpp"

namespace bokeh::harness {

namespace fs = std::filesystem;

inline constexpr double kInputFNumber = kReferenceFNumber;
inline constexpr double kFinalTargetFNumber = 2.0;
inline constexpr std::size_t kExpectedTrainScenes = 20500;
inline constexpr std::size_t kExpectedValScenes = 78;
inline constexpr std::size_t kExpectedTestScenes = 68;

/// f-number label with at least one decimal: 2 -> "2.0", 7.1 -> "7.1".
inline std::string format_f_number(double f) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), f);
  std::string s(buf, res.ptr);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
  return s;
}

/// `{scene_id}_f{f_number}` without extension.
inline std::string capture_stem(const std::string& scene_id, double f) {
  return scene_id + "_f" + format_f_number(f);
}

inline std::string submission_filename(const std::string& scene_id, double f) {
  return capture_stem(scene_id, f) + ".png";
}

struct ParsedCapture {
  std::string scene_id;
  double f_number = 0.0;
};

/// Splits `<scene>_f<value>.{jpg,jpeg,png}` (extension case-insensitive).
inline std::optional<ParsedCapture> parse_capture_filename(const std::string& name) {
  static const std::regex re(R"(^(.+)_f([0-9]+(?:\.[0-9]+)?)\.(jpg|jpeg|png)$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(name, m, re)) return std::nullopt;
  return ParsedCapture{m[1].str(), std::stod(m[2].str())};
}

struct Capture {
  double f_number = 0.0;
  std::optional<fs::path> path;  // nullopt: ground truth withheld
};

struct SceneRecord {
  std::string scene_id;
  fs::path input_path;
  std::vector<Capture> targets;  // strictly decreasing f-number, ending at f/2.0
  double focal_length_mm = 0.0;
  std::optional<double> focus_distance_m;
  bool focal_length_warning = false;

  void validate() const {
    require(!targets.empty(), ErrorCode::InvariantViolation, scene_id + ": no target captures");
    for (std::size_t i = 1; i < targets.size(); ++i)
      require(targets[i].f_number < targets[i - 1].f_number, ErrorCode::InvariantViolation,
              scene_id + ": target f-numbers must be strictly decreasing");
    require(targets.back().f_number == kFinalTargetFNumber, ErrorCode::InvariantViolation,
            scene_id + ": missing the f/2.0 reference capture");
    require(targets.front().f_number < kInputFNumber, ErrorCode::InvariantViolation,
            scene_id + ": targets must be wider than the f/22 input");
  }
};

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::vector<std::string> unassigned;  // scenes with no split entry
};

struct Manifest {
  std::vector<SceneRecord> scenes;  // sorted by scene_id
  SplitManifest splits;
  std::vector<std::string> warnings;

  const SceneRecord* find(const std::string& scene_id) const {
    for (const auto& s : scenes)
      if (s.scene_id == scene_id) return &s;
    return nullptr;
  }
};

namespace dataset_detail {

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingMeta, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvariantViolation, path.string() + ": " + e.what());
  }
}

inline std::vector<Capture> discover_captures(const fs::path& dir, const std::string& scene_id) {
  std::vector<Capture> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto parsed = parse_capture_filename(entry.path().filename().string());
    if (parsed && parsed->scene_id == scene_id) out.push_back({parsed->f_number, entry.path()});
  }
  return out;
}

inline SceneRecord parse_scene(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) fail(ErrorCode::MissingMeta, "no meta.json in " + dir.string());
  const nlohmann::json meta = read_json(meta_path);
  const std::string where = meta_path.string();

  SceneRecord rec;
  std::vector<Capture> captures;
  try {
    rec.scene_id = meta.at("scene_id").get<std::string>();
    rec.focal_length_mm = meta.at("focal_length_mm").get<double>();
    if (meta.contains("focus_distance_m") && !meta["focus_distance_m"].is_null())
      rec.focus_distance_m = meta["focus_distance_m"].get<double>();
    if (meta.contains("captures")) {
      for (const auto& c : meta["captures"]) {
        Capture cap;
        cap.f_number = c.at("f_number").get<double>();
        if (c.contains("filename") && !c["filename"].is_null()) cap.path = dir / c["filename"].get<std::string>();
        captures.push_back(std::move(cap));
      }
    } else {
      captures = discover_captures(dir, rec.scene_id);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvariantViolation, where + ": " + e.what());
  }
  require(!rec.scene_id.empty(), ErrorCode::InvariantViolation, where + ": empty scene_id");
  require(rec.focal_length_mm > 0.0, ErrorCode::InvariantViolation, where + ": focal length must be positive");
  rec.focal_length_warning = rec.focal_length_mm < ApertureSetting::kMinFocalMm ||
                             rec.focal_length_mm > ApertureSetting::kMaxFocalMm;

  std::sort(captures.begin(), captures.end(),
            [](const Capture& a, const Capture& b) { return a.f_number > b.f_number; });
  const auto input = std::find_if(captures.begin(), captures.end(),
                                  [](const Capture& c) { return c.f_number == kInputFNumber; });
  require(input != captures.end() && input->path.has_value(), ErrorCode::InvariantViolation,
          rec.scene_id + ": input capture must be taken at f/22");
  require(captures.front().f_number == kInputFNumber, ErrorCode::InvariantViolation,
          rec.scene_id + ": capture narrower than the f/22 input");
  rec.input_path = *input->path;
  rec.targets.assign(captures.begin() + 1, captures.end());
  rec.validate();
  return rec;
}

inline void check_count(std::vector<std::string>& warnings, const char* split, std::size_t found,
                        std::size_t expected) {
  if (found != expected)
    warnings.push_back(std::string(split) + " split has " + std::to_string(found) + " scenes, expected " +
                       std::to_string(expected));
}

}  // namespace dataset_detail

/// Loads `root/scenes/<id>/meta.json` for every scene plus the optional
/// `root/splits.json` ({"train": [...], "val": [...], "test": [...]}).
/// meta.json holds scene_id, focal_length_mm, focus_distance_m and an
/// optional captures list of {f_number, filename}; without it the scene
/// directory is scanned for `<scene_id>_f<value>.{jpg,png}` files. A capture
/// whose filename is null marks ground truth that is withheld.
inline Manifest load_manifest(const fs::path& root) {
  const fs::path scenes_dir = root / "scenes";
  if (!fs::is_directory(scenes_dir)) fail(ErrorCode::MissingMeta, "no scenes/ directory under " + root.string());

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(scenes_dir))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());

  Manifest m;
  std::set<std::string> ids;
  for (const auto& dir : dirs) {
    SceneRecord rec = dataset_detail::parse_scene(dir);
    require(ids.insert(rec.scene_id).second, ErrorCode::InvariantViolation,
            "duplicate scene_id '" + rec.scene_id + "'");
    if (rec.focal_length_warning)
      m.warnings.push_back(rec.scene_id + ": focal length " + csv::format_exact(rec.focal_length_mm) +
                           "mm outside 28-70mm");
    m.scenes.push_back(std::move(rec));
  }
  std::sort(m.scenes.begin(), m.scenes.end(),
            [](const SceneRecord& a, const SceneRecord& b) { return a.scene_id < b.scene_id; });

  const fs::path splits_path = root / "splits.json";
  std::set<std::string> assigned;
  if (fs::exists(splits_path)) {
    const nlohmann::json j = dataset_detail::read_json(splits_path);
    auto take = [&](const char* key, std::vector<std::string>& dst) {
      if (!j.contains(key)) return;
      try {
        for (const auto& v : j[key]) {
          const std::string id = v.get<std::string>();
          require(assigned.insert(id).second, ErrorCode::InvariantViolation,
                  "scene_id '" + id + "' appears in more than one split");
          require(ids.count(id) == 1, ErrorCode::MissingMeta, "split lists unknown scene '" + id + "'");
          dst.push_back(id);
        }
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvariantViolation, splits_path.string() + ": " + e.what());
      }
    };
    take("train", m.splits.train);
    take("val", m.splits.val);
    take("test", m.splits.test);
  }
  for (const auto& s : m.scenes)
    if (!assigned.count(s.scene_id)) m.splits.unassigned.push_back(s.scene_id);
  if (!m.splits.unassigned.empty())
    m.warnings.push_back(std::to_string(m.splits.unassigned.size()) + " scenes are not assigned to a split");

  dataset_detail::check_count(m.warnings, "train", m.splits.train.size(), kExpectedTrainScenes);
  dataset_detail::check_count(m.warnings, "val", m.splits.val.size(), kExpectedValScenes);
  dataset_detail::check_count(m.warnings, "test", m.splits.test.size(), kExpectedTestScenes);
  return m;
}

}  // namespace bokeh::harness
