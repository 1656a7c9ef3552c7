#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mreg/geometry.hpp"

namespace mreg {

struct ErrorSample {
  std::vector<double> values;  // mm
  std::string label;
};

struct SummaryStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double rmse = 0.0;
  double hausdorff = 0.0;  // maximum error
  double cov5 = 0.0;       // percent of values <= 5 mm
  std::size_t n = 0;
};

// ‖t_est(x) - t_gt(x)‖ for each specimen-frame target.
ErrorSample target_registration_error(const RigidTransform& t_est, const RigidTransform& t_gt,
                                      std::span<const Vec3> targets_s);

ErrorSample margin_localization_error(std::span<const Vec3> est, std::span<const Vec3> gt);

// Inclusive linear interpolation (type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

SummaryStats summarize(const ErrorSample& sample);

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
  std::size_t n = 0;  // pairs used
};

// Exact two-sided test; zero differences dropped, ties mid-ranked. Statistic is W+.
TestResult wilcoxon_signed_rank_exact(std::span<const double> a, std::span<const double> b);

// Two-sided; statistic is t with n - 1 degrees of freedom.
TestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
// Two-sided tail P(|T| >= |t|) of Student's t.
double student_t_two_sided(double t, double dof);

nlohmann::json to_json(const SummaryStats& s);
nlohmann::json to_json(const TestResult& r);

// Per-point error table: label,metric,stage,index,error_mm
struct MetricRow {
  std::string label;
  std::string metric;  // tre | margin
  std::string stage;   // coarse | fine
  std::size_t index = 0;
  double error = 0.0;
};

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// Table-1 layout: label,n,median,q1,q3,med_iqr,rmse,hausdorff,cov5
std::string summary_table_csv(std::span<const std::pair<std::string, SummaryStats>> rows);

}  // namespace mreg
