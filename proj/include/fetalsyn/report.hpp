/**
 * @file report.hpp
 * @brief Score tables: per-row CSV, per-tag aggregates, JSON summary and
 *        "mean ± std" rendering.
 */
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fetalsyn/metrics.hpp"

namespace fetalsyn {

struct ScoreRow {
  std::string case_id;
  std::string tag;  ///< orientation ("x", "y", "z") or fusion method
  ScoreSet scores;
};

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1); 0 for a single row
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
};

Aggregate aggregate(std::span<const double> values);

inline constexpr const char* kMetricNames[5] = {"mse", "ssim", "corr", "mi", "self_defined"};

double metric_value(const ScoreSet& s, int metric);

struct TagSummary {
  std::string tag;
  Aggregate metrics[5];  ///< indexed like kMetricNames
};

/// Tags appear in order of first occurrence in `rows`.
std::vector<TagSummary> summarize(const std::vector<ScoreRow>& rows);

struct ReportSection {
  std::string name;
  std::vector<ScoreRow> rows;
  std::vector<std::string> notes;
};

struct ScoreReport {
  std::vector<ReportSection> sections;
  std::size_t row_count() const;
};

/// "0.972 ± 0.016" for decimals = 3.
std::string format_mean_std(double mean, double std, int decimals = 3);

/// Header `case,tag,mse,ssim,corr,mi,self_defined`, values with 6 decimals.
std::string rows_csv(const std::vector<ScoreRow>& rows);

/// Sections with notes and per-tag aggregates of every metric.
std::string report_json(const ScoreReport& report);

/// Human-readable per-tag "mean ± std" table.
std::string report_text(const ScoreReport& report);

/// Writes `<section>.csv` per section plus `report.json` into `dir`.
void write_report(const ScoreReport& report, const std::filesystem::path& dir);

}  // namespace fetalsyn
