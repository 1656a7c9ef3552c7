#include "mreg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mreg/io.hpp"

namespace mreg {

ErrorSample target_registration_error(const RigidTransform& t_est, const RigidTransform& t_gt,
                                      std::span<const Vec3> targets_s) {
  if (t_est.source() != FrameId::Specimen || t_gt.source() != FrameId::Specimen ||
      t_est.target() != t_gt.target()) {
    throw Error(ErrorCode::FrameMismatch, "TRE needs two transforms from the specimen frame into the same target");
  }
  ErrorSample s;
  s.values.reserve(targets_s.size());
  for (const Vec3& x : targets_s) s.values.push_back((t_est * x - t_gt * x).norm());
  return s;
}

ErrorSample margin_localization_error(std::span<const Vec3> est, std::span<const Vec3> gt) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::LengthMismatch, "margin lists differ in length (" + std::to_string(est.size()) +
                                               " vs " + std::to_string(gt.size()) + ")");
  }
  ErrorSample s;
  for (std::size_t i = 0; i < est.size(); ++i) s.values.push_back((est[i] - gt[i]).norm());
  return s;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptySample, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

SummaryStats summarize(const ErrorSample& sample) {
  if (sample.values.empty()) throw Error(ErrorCode::EmptySample, "cannot summarize an empty sample");
  std::vector<double> v = sample.values;
  std::sort(v.begin(), v.end());
  SummaryStats s;
  s.n = v.size();
  s.median = quantile_sorted(v, 0.5);
  s.q1 = quantile_sorted(v, 0.25);
  s.q3 = quantile_sorted(v, 0.75);
  double sq = 0.0;
  std::size_t within = 0;
  for (double x : v) {
    sq += x * x;
    if (x <= 5.0) ++within;
  }
  s.rmse = std::sqrt(sq / static_cast<double>(s.n));
  s.hausdorff = v.back();
  s.cov5 = 100.0 * static_cast<double>(within) / static_cast<double>(s.n);
  return s;
}

TestResult wilcoxon_signed_rank_exact(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "paired samples differ in length");
  if (a.size() < 2 || a.size() > 15) {
    throw Error(ErrorCode::InvalidParams, "exact signed-rank test needs 2..15 pairs");
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  if (d.empty()) throw Error(ErrorCode::AllZeroDifferences, "every paired difference is zero");
  const std::size_t n = d.size();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Doubled mid-ranks stay integral.
  std::vector<int> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int r2 = static_cast<int>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    i = j + 1;
  }
  int total = 0;
  int w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank2[i];
    if (d[i] > 0) w2 += rank2[i];
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  int reach = 0;
  for (std::size_t i = 0; i < n; ++i) {
    reach += rank2[i];
    for (int s = reach; s >= rank2[i]; --s) count[s] += count[s - rank2[i]];
  }
  const double all = std::ldexp(1.0, static_cast<int>(n));
  double lower = 0.0;
  double upper = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (s <= w2) lower += count[s];
    if (s >= w2) upper += count[s];
  }
  TestResult r;
  r.statistic = 0.5 * w2;
  r.p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  r.n = n;
  return r;
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw Error(ErrorCode::InvalidParams, "paired t-test needs at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = a[i] - b[i] - mean;
    ss += e * e;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error(ErrorCode::ZeroVariance, "paired differences have zero variance");
  TestResult r;
  r.n = n;
  r.statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = std::min(1.0, student_t_two_sided(r.statistic, static_cast<double>(n - 1)));
  return r;
}

nlohmann::json to_json(const SummaryStats& s) {
  return {{"n", s.n},       {"median", s.median},       {"q1", s.q1},    {"q3", s.q3},
          {"rmse", s.rmse}, {"hausdorff", s.hausdorff}, {"cov5", s.cov5}};
}

nlohmann::json to_json(const TestResult& r) { return {{"statistic", r.statistic}, {"p", r.p}, {"n", r.n}}; }

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  std::string text = "label,metric,stage,index,error_mm\n";
  for (const MetricRow& r : rows) {
    text += r.label + ',' + r.metric + ',' + r.stage + ',' + std::to_string(r.index) + ',' +
            format_double(r.error) + '\n';
  }
  write_text_file(path, text);
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "label,metric,stage,index,error_mm") {
    throw Error(ErrorCode::Parse, path.string() + ": unexpected metrics header");
  }
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
    MetricRow r;
    r.label = cells[0];
    r.metric = cells[1];
    r.stage = cells[2];
    try {
      r.index = std::stoul(cells[3]);
      r.error = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summary_table_csv(std::span<const std::pair<std::string, SummaryStats>> rows) {
  std::string text = "label,n,median,q1,q3,med_iqr,rmse,hausdorff,cov5\n";
  for (const auto& [label, s] : rows) {
    char iqr[96];
    std::snprintf(iqr, sizeof(iqr), "%.2f [%.2f; %.2f]", s.median, s.q1, s.q3);
    text += label + ',' + std::to_string(s.n) + ',' + format_double(s.median) + ',' + format_double(s.q1) + ',' +
            format_double(s.q3) + ',' + iqr + ',' + format_double(s.rmse) + ',' + format_double(s.hausdorff) + ',' +
            format_double(s.cov5) + '\n';
  }
  return text;
}

}  // namespace mreg
