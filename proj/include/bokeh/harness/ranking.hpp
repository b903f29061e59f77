#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bokeh/csv.hpp"
#include "bokeh/error.hpp"
#include "bokeh/metrics.hpp"

namespace bokeh::harness {

struct FidelityEntry {
  std::string team;
  std::optional<double> psnr_db;
  std::optional<double> ssim;
  std::optional<double> lpips;
};

struct PerceptualEntry {
  std::string team;
  std::optional<double> mos;
};

struct LeaderboardRow {
  std::string team;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> mos;
  int psnr_rank = 0;
  int ssim_rank = 0;
  int lpips_rank = 0;
  int fidelity_rank = 0;
  std::optional<int> perceptual_rank;

  /// Mean of the three per-metric ranks.
  double fidelity_score() const { return (psnr_rank + ssim_rank + lpips_rank) / 3.0; }
};

namespace ranking_detail {

inline void require_unique_teams(const std::vector<std::string>& teams) {
  std::set<std::string> seen;
  for (const auto& t : teams) require(seen.insert(t).second, ErrorCode::InvariantViolation, "duplicate team '" + t + "'");
}

// Ranks 1..N by `better(i, j)`; equal values fall back to team name order.
template <typename Better>
std::vector<int> dense_ranks(const std::vector<FidelityEntry>& rows, Better better) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (better(a, b)) return true;
    if (better(b, a)) return false;
    return rows[a].team < rows[b].team;
  });
  std::vector<int> ranks(rows.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = static_cast<int>(pos) + 1;
  return ranks;
}

}  // namespace ranking_detail

/// Fidelity track. Each metric is ranked on its own (PSNR and SSIM higher is
/// better, LPIPS lower is better); the track score is the mean of the three
/// ranks. Final order: score ascending, then higher PSNR, then team name.
/// Rows come back sorted by fidelity rank.
inline std::vector<LeaderboardRow> fidelity_rank(const std::vector<FidelityEntry>& entries) {
  require(!entries.empty(), ErrorCode::MissingMetric, "no rows to rank");
  std::vector<std::string> teams;
  for (const auto& e : entries) {
    require(e.psnr_db && e.ssim && e.lpips, ErrorCode::MissingMetric,
            "team '" + e.team + "' lacks one of PSNR, SSIM, LPIPS");
    teams.push_back(e.team);
  }
  ranking_detail::require_unique_teams(teams);

  const auto psnr_r = ranking_detail::dense_ranks(entries, [&](std::size_t a, std::size_t b) {
    return *entries[a].psnr_db > *entries[b].psnr_db;
  });
  const auto ssim_r = ranking_detail::dense_ranks(entries, [&](std::size_t a, std::size_t b) {
    return *entries[a].ssim > *entries[b].ssim;
  });
  const auto lpips_r = ranking_detail::dense_ranks(entries, [&](std::size_t a, std::size_t b) {
    return *entries[a].lpips < *entries[b].lpips;
  });

  std::vector<LeaderboardRow> rows(entries.size());
  std::vector<int> rank_sum(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    rows[i].team = entries[i].team;
    rows[i].psnr_db = *entries[i].psnr_db;
    rows[i].ssim = *entries[i].ssim;
    rows[i].lpips = entries[i].lpips;
    rows[i].psnr_rank = psnr_r[i];
    rows[i].ssim_rank = ssim_r[i];
    rows[i].lpips_rank = lpips_r[i];
    rank_sum[i] = psnr_r[i] + ssim_r[i] + lpips_r[i];  // compared as integers to avoid 1/3 rounding
  }

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rank_sum[a] != rank_sum[b]) return rank_sum[a] < rank_sum[b];
    if (rows[a].psnr_db != rows[b].psnr_db) return rows[a].psnr_db > rows[b].psnr_db;
    return rows[a].team < rows[b].team;
  });
  std::vector<LeaderboardRow> out;
  out.reserve(rows.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    rows[order[pos]].fidelity_rank = static_cast<int>(pos) + 1;
    out.push_back(rows[order[pos]]);
  }
  return out;
}

struct PerceptualPlacement {
  std::string team;
  double mos = 0.0;
  int rank = 0;
};

/// Perceptual track: MOS descending, ties by team name.
inline std::vector<PerceptualPlacement> perceptual_rank(const std::vector<PerceptualEntry>& entries) {
  require(!entries.empty(), ErrorCode::MissingMos, "no rows to rank");
  std::vector<PerceptualPlacement> out;
  std::vector<std::string> teams;
  for (const auto& e : entries) {
    require(e.mos.has_value(), ErrorCode::MissingMos, "team '" + e.team + "' has no MOS");
    out.push_back({e.team, *e.mos, 0});
    teams.push_back(e.team);
  }
  ranking_detail::require_unique_teams(teams);
  std::sort(out.begin(), out.end(), [](const PerceptualPlacement& a, const PerceptualPlacement& b) {
    if (a.mos != b.mos) return a.mos > b.mos;
    return a.team < b.team;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

/// Both tracks in one table. Teams without a MOS get no perceptual rank.
inline std::vector<LeaderboardRow> build_leaderboard(const std::vector<FidelityEntry>& metrics,
                                                     const std::map<std::string, double>& mos) {
  std::vector<LeaderboardRow> rows = fidelity_rank(metrics);
  std::vector<PerceptualEntry> rated;
  for (auto& row : rows) {
    if (const auto it = mos.find(row.team); it != mos.end()) {
      row.mos = it->second;
      rated.push_back({row.team, it->second});
    }
  }
  for (const auto& [team, value] : mos) {
    const bool known = std::any_of(rows.begin(), rows.end(), [&](const LeaderboardRow& r) { return r.team == team; });
    require(known, ErrorCode::MissingMetric, "MOS given for team '" + team + "' with no fidelity metrics");
  }
  if (!rated.empty()) {
    for (const auto& p : perceptual_rank(rated))
      for (auto& row : rows)
        if (row.team == p.team) row.perceptual_rank = p.rank;
  }
  return rows;
}

inline constexpr const char* kLeaderboardHeader =
    "team,psnr,ssim,lpips,mos,psnr_rank,ssim_rank,lpips_rank,fidelity_rank,perceptual_rank";

/// CSV with 3/4/4/2 decimals for PSNR/SSIM/LPIPS/MOS; absent values are
/// empty fields.
inline void emit_leaderboard(const std::vector<LeaderboardRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << kLeaderboardHeader << '\n';
  for (const auto& r : rows) {
    out << csv::escape(r.team) << ',' << csv::format_fixed(r.psnr_db, 3) << ',' << csv::format_fixed(r.ssim, 4)
        << ',' << (r.lpips ? csv::format_fixed(*r.lpips, 4) : "") << ','
        << (r.mos ? csv::format_fixed(*r.mos, 2) : "") << ',' << r.psnr_rank << ',' << r.ssim_rank << ','
        << r.lpips_rank << ',' << r.fidelity_rank << ',' << (r.perceptual_rank ? std::to_string(*r.perceptual_rank) : "")
        << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline std::vector<LeaderboardRow> read_leaderboard(const std::filesystem::path& path) {
  const csv::Table t = csv::read_file(path);
  require(csv::split_line(kLeaderboardHeader) == t.header, ErrorCode::DecodeError,
          path.string() + ": unexpected leaderboard header");
  std::vector<LeaderboardRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
    require(f.size() == t.header.size(), ErrorCode::DecodeError, where + ": wrong field count");
    auto number = [&](const std::string& s) {
      const auto v = csv::parse_double(s);
      if (!v) fail(ErrorCode::DecodeError, where + ": unparsable number '" + s + "'");
      return *v;
    };
    auto integer = [&](const std::string& s) { return static_cast<int>(number(s)); };
    LeaderboardRow r;
    r.team = f[0];
    r.psnr_db = number(f[1]);
    r.ssim = number(f[2]);
    if (!f[3].empty()) r.lpips = number(f[3]);
    if (!f[4].empty()) r.mos = number(f[4]);
    r.psnr_rank = integer(f[5]);
    r.ssim_rank = integer(f[6]);
    r.lpips_rank = integer(f[7]);
    r.fidelity_rank = integer(f[8]);
    if (!f[9].empty()) r.perceptual_rank = integer(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Reads `team,psnr,ssim,lpips`; empty metric fields stay absent.
inline std::vector<FidelityEntry> read_metrics_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto tc = t.column("team"), pc = t.column("psnr"), sc = t.column("ssim"), lc = t.column("lpips");
  require(tc && pc && sc && lc, ErrorCode::MissingMetric, path.string() + ": header must contain team,psnr,ssim,lpips");
  std::vector<FidelityEntry> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
    require(f.size() == t.header.size(), ErrorCode::DecodeError, where + ": wrong field count");
    auto opt = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      const auto v = csv::parse_double(s);
      if (!v) fail(ErrorCode::DecodeError, where + ": unparsable number '" + s + "'");
      return v;
    };
    out.push_back({f[*tc], opt(f[*pc]), opt(f[*sc]), opt(f[*lc])});
  }
  return out;
}

/// Per-team MOS from either an aggregated `team,mos` table or raw
/// `method,rater_id,scene_id,score` records.
inline std::map<std::string, double> read_mos_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_file(path);
  std::map<std::string, double> out;
  if (const auto mc = t.column("mos"); mc) {
    const auto tc = t.column("team");
    require(tc.has_value(), ErrorCode::MissingMos, path.string() + ": aggregated MOS needs a team column");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& f = t.rows[i];
      const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
      require(f.size() == t.header.size(), ErrorCode::DecodeError, where + ": wrong field count");
      if (f[*mc].empty()) continue;
      const auto v = csv::parse_double(f[*mc]);
      if (!v) fail(ErrorCode::DecodeError, where + ": unparsable MOS '" + f[*mc] + "'");
      require(out.emplace(f[*tc], *v).second, ErrorCode::InvariantViolation, where + ": duplicate team");
    }
    return out;
  }
  for (const auto& [method, summary] : mos_aggregate(read_mos_records(t, path.string()))) out[method] = summary.mean;
  return out;
}

}  // namespace bokeh::harness
