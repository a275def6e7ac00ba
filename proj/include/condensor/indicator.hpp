#pragma once

// Correlation between random-selection and distilled accuracy across datasets,
// and the IPC=50 sharing decision.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "condensor/eval.hpp"

namespace condensor {

enum class Decision { distill_further, share_random_subset };
std::string_view decision_name(Decision d);

// Throws DataError("degenerate correlation input") for < 2 points or zero variance.
double pearson_r(std::span<const std::pair<double, double>> points);

// DISTILL_FURTHER iff distilled > random; ties share.
Decision sharing_decision(double acc_distilled_50, double acc_random_50);

// One-sided Welch test of mean(distilled) > mean(random); returns the p-value.
double welch_one_sided_p(std::span<const double> distilled, std::span<const double> random);

struct IndicatorRecord {
  std::string dataset;
  int ipc = 0;
  double accuracy_random = 0;
  double accuracy_distilled = 0;
  std::string method;
  std::vector<double> reps_random, reps_distilled;
};

// Pairs each (dataset, ipc, method) group with the random-selection rows of the
// same dataset and ipc; groups without a random counterpart are dropped.
std::vector<IndicatorRecord> records_from_results(const std::vector<ResultRow>& rows,
                                                  const std::string& random_method = "random");

struct MethodSeries {
  std::string method;
  std::vector<IndicatorRecord> points;
  std::optional<double> r;
  std::string error;
};

struct DatasetDecision {
  std::string dataset;
  std::string method;  // a method name, or "best" for the highest distilled mean
  double accuracy_distilled = 0;
  double accuracy_random = 0;
  Decision decision = Decision::share_random_subset;
  std::optional<double> welch_p;
};

struct ReportOptions {
  int decision_ipc = 50;
  std::vector<int> correlation_ipcs;  // empty: every ipc present
  bool welch = false;
  double welch_alpha = 0.05;
};

struct CorrelationReport {
  std::vector<MethodSeries> series;
  std::vector<DatasetDecision> decisions;
  std::string point_set;  // human-readable description of the correlated points

  const MethodSeries* find(std::string_view method) const;
  const DatasetDecision* decision_for(std::string_view dataset, std::string_view method) const;
};

CorrelationReport correlation_report(const std::vector<IndicatorRecord>& records, const ReportOptions& opts = {});

std::string report_csv(const CorrelationReport& report);
std::string report_svg(const CorrelationReport& report);

}  // namespace condensor
