#include "segreg/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segreg {

namespace {

// higher-is-better map on (threshold, best]
double score_up(double v, double best, double threshold) {
    if (v <= threshold) return 0.0;
    if (v >= best) return 100.0;
    return 100.0 * (v - threshold) / (best - threshold);
}

// lower-is-better map on [best, threshold)
double score_down(double v, double best, double threshold) {
    if (v >= threshold) return 0.0;
    if (v <= best) return 100.0;
    return 100.0 * (threshold - v) / (threshold - best);
}

// type-7 linear-interpolation quantile of sorted data
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

double metric_to_score(std::optional<double> value, RankedMetric metric,
                       const ThresholdTable& t) {
    if (!value || !std::isfinite(*value)) return 0.0;
    switch (metric) {
        case RankedMetric::kDice: return score_up(*value, t.dice_best, t.dice_threshold);
        case RankedMetric::kSensitivity: return score_up(*value, t.sens_best, t.sens_threshold);
        case RankedMetric::kHd: return score_down(*value, t.hd_best, t.hd_threshold);
        case RankedMetric::kMsd: return score_down(*value, t.msd_best, t.msd_threshold);
        case RankedMetric::kRavd: return score_down(*value, t.ravd_best, t.ravd_threshold);
    }
    throw std::invalid_argument("metric_to_score: unknown metric");
}

double case_score(const MetricReport& r, const ThresholdTable& t) {
    auto pct = [](const std::optional<double>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return *v * 100.0;
    };
    const double total = metric_to_score(pct(r.dice), RankedMetric::kDice, t) +
                         metric_to_score(pct(r.sensitivity), RankedMetric::kSensitivity, t) +
                         metric_to_score(r.hd_mm, RankedMetric::kHd, t) +
                         metric_to_score(r.msd_mm, RankedMetric::kMsd, t) +
                         metric_to_score(pct(r.ravd), RankedMetric::kRavd, t);
    return total / 5.0;
}

std::vector<ScoreCard> rank_methods(
    const std::map<std::string, std::map<std::string, double>>& per_method_case_scores) {
    if (per_method_case_scores.empty()) return {};
    const auto& reference = per_method_case_scores.begin()->second;
    for (const auto& [method, scores] : per_method_case_scores) {
        if (scores.size() != reference.size()) {
            throw std::invalid_argument("rank_methods: case sets differ for " + method);
        }
        for (const auto& [case_id, unused] : scores) {
            (void)unused;
            if (reference.find(case_id) == reference.end()) {
                throw std::invalid_argument("rank_methods: case sets differ for " + method);
            }
        }
    }

    std::vector<ScoreCard> cards;
    for (const auto& [method, scores] : per_method_case_scores) {
        ScoreCard card;
        card.method = method;
        for (const auto& [case_id, score] : scores) {
            (void)case_id;
            card.scores.push_back(score);  // std::map iterates case_ids in order
        }
        std::vector<double> sorted = card.scores;
        std::sort(sorted.begin(), sorted.end());
        double sum = 0.0;
        for (double s : sorted) sum += s;
        card.mean = sum / static_cast<double>(sorted.size());
        card.median = quantile_sorted(sorted, 0.5);
        card.q1 = quantile_sorted(sorted, 0.25);
        card.q3 = quantile_sorted(sorted, 0.75);
        card.min = sorted.front();
        card.max = sorted.back();
        cards.push_back(std::move(card));
    }
    // descending mean; method name breaks exact ties deterministically
    std::stable_sort(cards.begin(), cards.end(), [](const ScoreCard& a, const ScoreCard& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return a.method < b.method;
    });
    for (std::size_t i = 0; i < cards.size(); ++i) {
        if (i > 0 && cards[i].mean == cards[i - 1].mean) {
            cards[i].rank = cards[i - 1].rank;  // ties share the better rank
        } else {
            cards[i].rank = static_cast<int>(i) + 1;
        }
    }
    return cards;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
    }
    // Acklam's rational approximation...
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // ...polished with one Halley step against the exact CDF (erfc), which
    // brings the error far below the documented 1e-8
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

std::optional<long> required_sample_size(double mean1, double sd1, double mean2, double sd2,
                                         double alpha, double power) {
    (void)sd2;
    if (!(sd1 > 0.0)) throw std::invalid_argument("required_sample_size: sd1 must be positive");
    if (!(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0)) {
        throw std::invalid_argument("required_sample_size: alpha and power must lie in (0,1)");
    }
    const double d = std::fabs(mean1 - mean2) / sd1;
    if (d == 0.0) return std::nullopt;  // unbounded
    const double z_alpha = normal_quantile(1.0 - alpha / 2.0);
    const double z_power = normal_quantile(power);
    const double n = 2.0 * (z_alpha + z_power) * (z_alpha + z_power) / (d * d);
    return static_cast<long>(std::ceil(n));
}

}  // namespace segreg
