#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agpolab/error.hpp"

namespace agpolab {

/// n samples drawn, c of them correct, evaluated at k.
struct PasskQuery {
  long n = 1;
  long c = 0;
  long k = 1;
};

/// Unbiased pass@k: 1 - C(n-c, k)/C(n, k), evaluated in the overflow-free
/// product form 1 - prod_{i=0}^{k-1} (n-c-i)/(n-i). Stable up to n ~ 10^6.
/// Throws Errc::invalid_query when k > n or c > n.
double passk_unbiased(const PasskQuery& q);

struct PromptSampleCount {
  std::string prompt_id;
  long n = 0;
  long c = 0;
};

/// Mean of passk_unbiased over prompts, one value per requested k.
/// Throws Errc::empty_input on an empty log.
std::vector<double> passk_curve_from_log(std::span<const PromptSampleCount> records,
                                         std::span<const long> ks);

/// One labeled ad event row. Labels: 0 irrelevant, 1 partially relevant,
/// 2 fully relevant. Purchase fields are optional and only feed GMV.
struct AdsRecord {
  int predicted_label = 0;
  int gt_label = 0;
  long impressions = 0;
  long clicks = 0;
  double revenue = 0.0;
  std::optional<double> purchase_price;
  std::optional<long> purchase_qty;
};

void validate_record(const AdsRecord& r);

/// Proportion of irrelevant products among predicted fully-relevant ones:
/// |{predicted 2, ground truth 0}| / |{predicted 2}|. An empty prediction
/// set is an explicit Errc::undefined_metric, never a silent 0.
double pir(std::span<const AdsRecord> records);

struct AdRevenueMetrics {
  double ctrpi = 0.0;  // clicks per impression
  double cpc = 0.0;    // revenue per click
  double cpm = 0.0;    // 1000 * ctrpi * cpc
  double gmv = 0.0;    // sum of price * quantity over purchases
};

/// Event-weighted aggregates (sum-then-divide). Zero impressions or zero
/// clicks raise Errc::undefined_metric naming the metric.
AdRevenueMetrics ad_revenue_metrics(std::span<const AdsRecord> records);

}  // namespace agpolab
