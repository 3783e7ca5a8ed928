#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segreg/metrics.hpp"

namespace segreg {

// Per-metric best value and acceptance threshold for the scoring map.
// Units: percent for dice/sensitivity/ravd, millimetres for hd/msd. The
// worst value for the distance metrics is the volume diagonal delta.
struct ThresholdTable {
    double dice_best = 100.0;
    double dice_threshold = 80.0;  // strict: a value of exactly 80 scores 0
    double sens_best = 100.0;
    double sens_threshold = 80.0;
    double hd_best = 0.0;
    double hd_threshold = 30.0;
    double msd_best = 0.0;
    double msd_threshold = 4.0;
    double ravd_best = 0.0;
    double ravd_threshold = 10.0;
};

enum class RankedMetric { kDice, kSensitivity, kHd, kMsd, kRavd };

// Linear map with best -> 100 and threshold -> 0; values at or beyond the
// threshold (strict Table-style inequalities) and the undefined marker both
// score 0. Inputs use the table's units.
double metric_to_score(std::optional<double> value, RankedMetric metric,
                       const ThresholdTable& table);

// Arithmetic mean of the five mapped scores (specificity is disregarded).
double case_score(const MetricReport& report, const ThresholdTable& table);

struct ScoreCard {
    std::string method;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
    int rank = 0;
    std::vector<double> scores;  // case order of the sorted case_ids
};

// Ranks methods by descending mean score; ties share the better rank. Every
// method must be scored on the same case set.
std::vector<ScoreCard> rank_methods(
    const std::map<std::string, std::map<std::string, double>>& per_method_case_scores);

// Standard normal quantile, |error| < 1e-8 (rational approximation refined
// with one Halley step against erfc).
double normal_quantile(double p);

// Two-sample normal-approximation sample size per group:
//   n = ceil( 2 * (z_{1-alpha/2} + z_power)^2 / d^2 ),
// with effect size d = |mean1 - mean2| / sd1 (the proposed method's SD).
// Empty when the means coincide (unbounded n). sd2 is unused by the formula
// and kept for the call-site record.
std::optional<long> required_sample_size(double mean1, double sd1, double mean2, double sd2,
                                         double alpha, double power);

}  // namespace segreg
