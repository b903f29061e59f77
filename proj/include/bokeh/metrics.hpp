#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bokeh/csv.hpp"
#include "bokeh/error.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

/// PSNR of identical images. Serialized as "inf".
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

struct MetricReport {
  double psnr_db = 0.0;  // kPsnrInfinite iff MSE == 0
  double ssim = 0.0;
  std::optional<double> lpips;
};

inline double mean_squared_error(const RasterImage& a, const RasterImage& b) {
  require(a.same_shape(b), ErrorCode::DimensionMismatch, "metric operands differ in shape");
  double sum = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = double(da[i]) - double(db[i]);
    sum += d * d;
  }
  return sum / double(da.size());
}

/// 10 log10(1 / MSE) for peak value 1, or kPsnrInfinite when MSE is zero.
inline double psnr(const RasterImage& a, const RasterImage& b) {
  const double mse = mean_squared_error(a, b);
  return mse == 0.0 ? kPsnrInfinite : 10.0 * std::log10(1.0 / mse);
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

inline std::array<double, kSsimWindow> ssim_gaussian_1d() {
  std::array<double, kSsimWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

/// Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) that fit inside the
/// image, computed per channel and averaged over channels. Dynamic range 1.
inline double ssim(const RasterImage& a, const RasterImage& b) {
  require(a.same_shape(b), ErrorCode::DimensionMismatch, "SSIM operands differ in shape");
  require(std::min(a.width(), a.height()) >= kSsimWindow, ErrorCode::ImageTooSmall,
          "SSIM needs images of at least 11x11 pixels");
  const auto g = ssim_gaussian_1d();
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  const int W = a.width();
  const int H = a.height();
  const int ch = a.channels();
  const int ow = W - kSsimWindow + 1;
  const int oh = H - kSsimWindow + 1;

  // Five moment planes, filtered horizontally then vertically (valid region).
  constexpr int kMoments = 5;
  std::vector<double> horiz(static_cast<std::size_t>(kMoments) * H * ow);
  auto hidx = [&](int m, int y, int x) { return (static_cast<std::size_t>(m) * H + y) * ow + x; };

  double total = 0.0;
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[kMoments] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kSsimWindow; ++k) {
          const double va = a.at(x + k, y, c);
          const double vb = b.at(x + k, y, c);
          s[0] += g[k] * va;
          s[1] += g[k] * vb;
          s[2] += g[k] * (va * va);
          s[3] += g[k] * (vb * vb);
          s[4] += g[k] * (va * vb);
        }
        for (int m = 0; m < kMoments; ++m) horiz[hidx(m, y, x)] = s[m];
      }
    }
    double channel_sum = 0.0;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[kMoments] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kSsimWindow; ++k)
          for (int m = 0; m < kMoments; ++m) s[m] += g[k] * horiz[hidx(m, y + k, x)];
        const double mu_a = s[0];
        const double mu_b = s[1];
        const double var_a = s[2] - mu_a * mu_a;
        const double var_b = s[3] - mu_b * mu_b;
        const double cov = s[4] - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        channel_sum += num / den;
      }
    }
    total += channel_sum / (double(ow) * double(oh));
  }
  return total / ch;
}

// ---------------------------------------------------------------------------
// LPIPS comes from an external tool: either an executable invoked as
// `<cmd> --pred <file> --gt <file>` printing one number, or a precomputed
// CSV with header `scene_id,lpips`.

class LpipsAdapter {
 public:
  static LpipsAdapter from_table_file(const std::filesystem::path& path) {
    const csv::Table t = csv::read_file(path);
    const auto key_col = t.column("scene_id");
    const auto val_col = t.column("lpips");
    if (!key_col || !val_col)
      fail(ErrorCode::AdapterFailure, path.string() + ": header must contain scene_id,lpips");
    LpipsAdapter a;
    a.table_.emplace();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
      if (row.size() != t.header.size()) fail(ErrorCode::AdapterFailure, where + ": wrong field count");
      const auto v = csv::parse_double(row[*val_col]);
      if (!v || !std::isfinite(*v) || *v < 0.0)
        fail(ErrorCode::AdapterFailure, where + ": invalid lpips value '" + row[*val_col] + "'");
      if (!a.table_->emplace(row[*key_col], *v).second)
        fail(ErrorCode::AdapterFailure, where + ": duplicate scene_id '" + row[*key_col] + "'");
    }
    return a;
  }

  static LpipsAdapter from_command(std::string command) {
    LpipsAdapter a;
    a.command_ = std::move(command);
    return a;
  }

  /// A path to an existing .csv file selects the table adapter; anything
  /// else is treated as a command.
  static LpipsAdapter from_spec(const std::string& spec) {
    const std::filesystem::path p(spec);
    std::error_code ec;
    if (p.extension() == ".csv" && std::filesystem::is_regular_file(p, ec)) return from_table_file(p);
    return from_command(spec);
  }

  bool is_table() const noexcept { return table_.has_value(); }

  double score(const std::string& key, const std::filesystem::path& pred, const std::filesystem::path& gt) const {
    if (table_) {
      const auto it = table_->find(key);
      if (it == table_->end()) fail(ErrorCode::MissingScene, "LPIPS table has no entry for '" + key + "'");
      return it->second;
    }
    return run_command(pred, gt);
  }

  const std::map<std::string, double>& table() const { return *table_; }

 private:
  static std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
      if (ch == '\'') out += "'\\''";
      else out.push_back(ch);
    }
    return out + "'";
  }

  double run_command(const std::filesystem::path& pred, const std::filesystem::path& gt) const {
    const std::string cmd =
        command_ + " --pred " + shell_quote(pred.string()) + " --gt " + shell_quote(gt.string());
    std::FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) fail(ErrorCode::AdapterFailure, "cannot start LPIPS adapter: " + command_);
    std::string output;
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) output += buf.data();
    const int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
      fail(ErrorCode::AdapterFailure, "LPIPS adapter exited abnormally for " + pred.string());
    while (!output.empty() && std::isspace(static_cast<unsigned char>(output.back()))) output.pop_back();
    while (!output.empty() && std::isspace(static_cast<unsigned char>(output.front()))) output.erase(0, 1);
    const auto v = csv::parse_double(output);
    if (!v || !std::isfinite(*v) || *v < 0.0)
      fail(ErrorCode::AdapterFailure, "LPIPS adapter printed '" + output + "' for " + pred.string());
    return *v;
  }

  std::optional<std::map<std::string, double>> table_;
  std::string command_;
};

/// Scores every image in pred_dir against the same-named file in gt_dir.
/// Keys are file stems.
inline std::map<std::string, double> lpips_adapter(const std::filesystem::path& pred_dir,
                                                   const std::filesystem::path& gt_dir, const LpipsAdapter& adapter) {
  std::map<std::string, double> out;
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(pred_dir, ec))
    if (entry.is_regular_file()) files.push_back(entry.path());
  if (ec) fail(ErrorCode::IoError, "cannot list " + pred_dir.string());
  std::sort(files.begin(), files.end());
  for (const auto& pred : files) {
    const auto gt = gt_dir / pred.filename();
    if (!std::filesystem::exists(gt)) fail(ErrorCode::MissingScene, "no ground truth for " + pred.filename().string());
    out[pred.stem().string()] = adapter.score(pred.stem().string(), pred, gt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean opinion scores. Ratings of 1 and 2 flag a degraded input; bokeh
// quality is rated 3..10 in half steps, with the untouched input anchored at 3.

struct MosRecord {
  std::string method;
  std::string rater_id;
  std::string scene_id;
  double score = 0.0;
};

inline bool is_valid_mos_score(double s) {
  if (!std::isfinite(s)) return false;
  if (s == 1.0 || s == 2.0) return true;
  if (s < 3.0 || s > 10.0) return false;
  const double twice = 2.0 * s;
  return twice == std::floor(twice);
}

inline void validate_mos(const MosRecord& r) {
  if (!is_valid_mos_score(r.score)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", r.score);
    fail(ErrorCode::InvalidScore, "score " + std::string(buf) + " from rater '" + r.rater_id + "' on scene '" +
                                      r.scene_id + "' is off the rating grid");
  }
}

struct MosSummary {
  double mean = 0.0;
  std::size_t count = 0;
};

/// Per-method arithmetic mean over all (rater, scene) records. Scores sit on
/// a half-step grid, so sums are accumulated exactly in half-step units and
/// the result does not depend on record order.
inline std::map<std::string, MosSummary> mos_aggregate(const std::vector<MosRecord>& records) {
  require(!records.empty(), ErrorCode::EmptyPanel, "no MOS records to aggregate");
  std::map<std::string, std::pair<std::int64_t, std::size_t>> sums;
  for (const auto& r : records) {
    validate_mos(r);
    auto& [half_steps, count] = sums[r.method];
    half_steps += static_cast<std::int64_t>(std::llround(2.0 * r.score));
    ++count;
  }
  std::map<std::string, MosSummary> out;
  for (const auto& [method, s] : sums) out[method] = {double(s.first) / (2.0 * double(s.second)), s.second};
  return out;
}

/// Reads `method,rater_id,scene_id,score` rows (team is accepted for method).
inline std::vector<MosRecord> read_mos_records(const csv::Table& t, const std::string& source) {
  auto method_col = t.column("method");
  if (!method_col) method_col = t.column("team");
  const auto rater_col = t.column("rater_id");
  const auto scene_col = t.column("scene_id");
  const auto score_col = t.column("score");
  if (!method_col || !rater_col || !scene_col || !score_col)
    fail(ErrorCode::InvalidScore, source + ": MOS records need method,rater_id,scene_id,score columns");
  std::vector<MosRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = source + ":" + std::to_string(t.line_numbers[i]);
    if (row.size() != t.header.size()) fail(ErrorCode::InvalidScore, where + ": wrong field count");
    const auto v = csv::parse_double(row[*score_col]);
    if (!v) fail(ErrorCode::InvalidScore, where + ": unparsable score '" + row[*score_col] + "'");
    MosRecord r{row[*method_col], row[*rater_col], row[*scene_col], *v};
    validate_mos(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bokeh
