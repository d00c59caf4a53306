#include "agpolab/evalkit.hpp"

namespace agpolab {

double passk_unbiased(const PasskQuery& q) {
  require(q.n >= 1, Errc::invalid_query, "n must be >= 1");
  require(q.c >= 0 && q.c <= q.n, Errc::invalid_query, "c must be in [0, n]");
  require(q.k >= 1 && q.k <= q.n, Errc::invalid_query, "k must be in [1, n]");
  if (q.n - q.c < q.k) return 1.0;  // every k-subset contains a correct sample
  double miss = 1.0;
  for (long i = 0; i < q.k; ++i) {
    miss *= static_cast<double>(q.n - q.c - i) / static_cast<double>(q.n - i);
  }
  return 1.0 - miss;
}

std::vector<double> passk_curve_from_log(std::span<const PromptSampleCount> records,
                                         std::span<const long> ks) {
  require(!records.empty(), Errc::empty_input, "pass@k log is empty");
  std::vector<double> means;
  means.reserve(ks.size());
  for (long k : ks) {
    double acc = 0.0;
    for (const PromptSampleCount& r : records) {
      acc += passk_unbiased({r.n, r.c, k});
    }
    means.push_back(acc / static_cast<double>(records.size()));
  }
  return means;
}

void validate_record(const AdsRecord& r) {
  require(r.predicted_label >= 0 && r.predicted_label <= 2, Errc::config,
          "predicted_label must be 0, 1, or 2");
  require(r.gt_label >= 0 && r.gt_label <= 2, Errc::config, "gt_label must be 0, 1, or 2");
  require(r.impressions >= 0 && r.clicks >= 0, Errc::config, "counts must be non-negative");
  require(r.clicks <= r.impressions, Errc::config, "clicks cannot exceed impressions");
  require(r.revenue >= 0.0, Errc::config, "revenue must be non-negative");
  if (r.purchase_price) {
    require(*r.purchase_price >= 0.0, Errc::config, "purchase_price must be non-negative");
  }
  if (r.purchase_qty) {
    require(*r.purchase_qty >= 0, Errc::config, "purchase_qty must be non-negative");
  }
}

namespace {

// Kahan accumulator for currency sums; counts stay in exact integers.
class CompensatedSum {
 public:
  void add(double x) {
    const double y = x - compensation_;
    const double t = total_ + y;
    compensation_ = (t - total_) - y;
    total_ = t;
  }
  double value() const { return total_; }

 private:
  double total_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace

double pir(std::span<const AdsRecord> records) {
  long predicted_full = 0;
  long irrelevant_among_full = 0;
  for (const AdsRecord& r : records) {
    validate_record(r);
    if (r.predicted_label != 2) continue;
    ++predicted_full;
    if (r.gt_label == 0) ++irrelevant_among_full;
  }
  require(predicted_full > 0, Errc::undefined_metric,
          "pir undefined: no records predicted fully relevant");
  return static_cast<double>(irrelevant_among_full) / static_cast<double>(predicted_full);
}

AdRevenueMetrics ad_revenue_metrics(std::span<const AdsRecord> records) {
  long impressions = 0;
  long clicks = 0;
  CompensatedSum revenue;
  CompensatedSum gmv;
  for (const AdsRecord& r : records) {
    validate_record(r);
    impressions += r.impressions;
    clicks += r.clicks;
    revenue.add(r.revenue);
    if (r.purchase_price && r.purchase_qty) {
      gmv.add(*r.purchase_price * static_cast<double>(*r.purchase_qty));
    }
  }
  require(impressions > 0, Errc::undefined_metric, "ctrpi undefined: zero impressions");
  require(clicks > 0, Errc::undefined_metric, "cpc undefined: zero clicks");
  AdRevenueMetrics m;
  m.ctrpi = static_cast<double>(clicks) / static_cast<double>(impressions);
  m.cpc = revenue.value() / static_cast<double>(clicks);
  m.cpm = 1000.0 * m.ctrpi * m.cpc;
  m.gmv = gmv.value();
  return m;
}

}  // namespace agpolab
