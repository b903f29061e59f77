#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bokeh/csv.hpp"
#include "bokeh/error.hpp"
#include "bokeh/harness/dataset.hpp"
#include "bokeh/io.hpp"
#include "bokeh/metrics.hpp"
#include "bokeh/parallel.hpp"

namespace bokeh::harness {

struct DimensionIssue {
  std::string file;
  int width = 0, height = 0;
  int expected_width = 0, expected_height = 0;
};

struct SubmissionReport {
  std::vector<std::string> missing;  // expected filenames absent from the bundle
  std::vector<std::string> extra;    // files not named by the manifest
  std::vector<DimensionIssue> dimension_mismatches;
  std::vector<std::string> unreadable;

  bool ok() const {
    return missing.empty() && extra.empty() && dimension_mismatches.empty() && unreadable.empty();
  }

  std::string summary() const {
    std::string s;
    for (const auto& f : missing) s += "missing: " + f + "\n";
    for (const auto& f : extra) s += "extra: " + f + "\n";
    for (const auto& d : dimension_mismatches)
      s += "dimensions: " + d.file + " is " + std::to_string(d.width) + "x" + std::to_string(d.height) +
           ", ground truth is " + std::to_string(d.expected_width) + "x" + std::to_string(d.expected_height) + "\n";
    for (const auto& f : unreadable) s += "unreadable: " + f + "\n";
    return s;
  }
};

/// Checks a flat directory of `{scene_id}_f{f_number}.png` predictions
/// against every (scene, target) pair of the manifest. Never throws for
/// problems with the bundle contents; they are listed in the report.
inline SubmissionReport validate_submission(const fs::path& bundle_root, const Manifest& manifest) {
  SubmissionReport report;
  std::map<std::string, const Capture*> expected;
  for (const auto& scene : manifest.scenes)
    for (const auto& t : scene.targets) expected[submission_filename(scene.scene_id, t.f_number)] = &t;

  std::set<std::string> present;
  std::error_code ec;
  if (fs::is_directory(bundle_root, ec)) {
    for (const auto& entry : fs::directory_iterator(bundle_root, ec))
      if (entry.is_regular_file()) present.insert(entry.path().filename().string());
  }

  for (const auto& name : present)
    if (!expected.count(name)) report.extra.push_back(name);

  for (const auto& [name, target] : expected) {
    if (!present.count(name)) {
      report.missing.push_back(name);
      continue;
    }
    RasterImage pred;
    try {
      pred = load_image(bundle_root / name);
    } catch (const Error&) {
      report.unreadable.push_back(name);
      continue;
    }
    if (!target->path || !fs::exists(*target->path)) continue;
    RasterImage gt;
    try {
      gt = load_image(*target->path);
    } catch (const Error&) {
      continue;  // ground-truth problems are the dataset's, not the submission's
    }
    if (!pred.same_extent(gt))
      report.dimension_mismatches.push_back({name, pred.width(), pred.height(), gt.width(), gt.height()});
  }
  return report;
}

struct PairScore {
  std::string scene_id;
  double f_number = 0.0;
  MetricReport metrics;
};

struct ScoreResult {
  MetricReport aggregate;           // psnr averaged over finite entries only
  std::size_t psnr_infinite = 0;    // pairs excluded from the PSNR mean
  std::vector<PairScore> pairs;     // manifest order
};

/// Flat means over pairs; infinite PSNR entries are excluded from the PSNR
/// mean and counted in `infinite`.
inline MetricReport aggregate_scores(const std::vector<PairScore>& pairs, std::size_t& infinite) {
  MetricReport agg;
  double psnr_sum = 0.0, ssim_sum = 0.0, lpips_sum = 0.0;
  std::size_t finite = 0, lpips_count = 0;
  infinite = 0;
  for (const auto& p : pairs) {
    if (std::isinf(p.metrics.psnr_db)) {
      ++infinite;
    } else {
      psnr_sum += p.metrics.psnr_db;
      ++finite;
    }
    ssim_sum += p.metrics.ssim;
    if (p.metrics.lpips) {
      lpips_sum += *p.metrics.lpips;
      ++lpips_count;
    }
  }
  agg.psnr_db = finite ? psnr_sum / double(finite) : kPsnrInfinite;
  agg.ssim = pairs.empty() ? 0.0 : ssim_sum / double(pairs.size());
  if (lpips_count && lpips_count == pairs.size()) agg.lpips = lpips_sum / double(lpips_count);
  return agg;
}

/// Scores a validated bundle against the manifest's ground truth. Every
/// (scene, f-number) pair counts once in the flat arithmetic means.
inline ScoreResult score_submission(const fs::path& bundle_root, const Manifest& gt,
                                    const LpipsAdapter* lpips = nullptr) {
  const SubmissionReport report = validate_submission(bundle_root, gt);
  if (!report.ok()) fail(ErrorCode::ValidationFailed, "submission rejected:\n" + report.summary());

  struct Job {
    std::string scene_id;
    double f_number;
    fs::path pred, truth;
  };
  std::vector<Job> jobs;
  for (const auto& scene : gt.scenes) {
    for (const auto& t : scene.targets) {
      if (!t.path) fail(ErrorCode::MissingScene, scene.scene_id + " f/" + format_f_number(t.f_number) +
                                                     ": ground truth is not available for scoring");
      jobs.push_back({scene.scene_id, t.f_number, bundle_root / submission_filename(scene.scene_id, t.f_number),
                      *t.path});
    }
  }
  require(!jobs.empty(), ErrorCode::ValidationFailed, "nothing to score");

  ScoreResult result;
  result.pairs.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Job& job = jobs[i];
      const RasterImage pred = load_image(job.pred);
      const RasterImage truth = load_image(job.truth);
      require(pred.same_shape(truth), ErrorCode::DimensionMismatch,
              job.pred.filename().string() + " does not match its ground truth shape");
      PairScore& s = result.pairs[i];
      s.scene_id = job.scene_id;
      s.f_number = job.f_number;
      s.metrics.psnr_db = psnr(pred, truth);
      s.metrics.ssim = ssim(pred, truth);
      if (lpips) s.metrics.lpips = lpips->score(capture_stem(job.scene_id, job.f_number), job.pred, job.truth);
    }
  });
  result.aggregate = aggregate_scores(result.pairs, result.psnr_infinite);
  return result;
}

/// Per-pair CSV: `scene_id,f_number,psnr,ssim,lpips`. Values are written with
/// round-trip precision; PSNR of identical images is "inf".
inline void write_scores_csv(const ScoreResult& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "scene_id,f_number,psnr,ssim,lpips\n";
  for (const auto& p : r.pairs) {
    out << csv::escape(p.scene_id) << ',' << format_f_number(p.f_number) << ',' << csv::format_exact(p.metrics.psnr_db)
        << ',' << csv::format_exact(p.metrics.ssim) << ',';
    if (p.metrics.lpips) out << csv::format_exact(*p.metrics.lpips);
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline std::vector<PairScore> read_scores_csv(const fs::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto sc = t.column("scene_id"), fc = t.column("f_number"), pc = t.column("psnr"), ss = t.column("ssim"),
             lc = t.column("lpips");
  if (!sc || !fc || !pc || !ss) fail(ErrorCode::DecodeError, path.string() + ": unexpected score CSV header");
  std::vector<PairScore> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
    if (row.size() != t.header.size()) fail(ErrorCode::DecodeError, where + ": wrong field count");
    PairScore p;
    p.scene_id = row[*sc];
    const auto f = csv::parse_double(row[*fc]);
    const auto ps = csv::parse_double(row[*pc]);
    const auto s = csv::parse_double(row[*ss]);
    if (!f || !ps || !s) fail(ErrorCode::DecodeError, where + ": unparsable number");
    p.f_number = *f;
    p.metrics.psnr_db = *ps;
    p.metrics.ssim = *s;
    if (lc && !row[*lc].empty()) {
      const auto l = csv::parse_double(row[*lc]);
      if (!l) fail(ErrorCode::DecodeError, where + ": unparsable lpips");
      p.metrics.lpips = *l;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace bokeh::harness
