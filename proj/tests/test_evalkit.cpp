#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "agpolab/evalkit.hpp"

using namespace agpolab;

namespace oracle {

// Exhaustive subset enumeration: fraction of k-subsets of n samples (the
// first c of which are correct) that contain at least one correct sample.
double passk_bruteforce(long n, long c, long k) {
  long total = 0;
  long hit = 0;
  // Walk all combinations via the sorted-selector-permutation trick.
  std::vector<bool> mask(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) mask[static_cast<std::size_t>(i)] = i >= n - k;
  do {
    ++total;
    bool any = false;
    for (long i = 0; i < c; ++i) {
      if (mask[static_cast<std::size_t>(i)]) {
        any = true;
        break;
      }
    }
    if (any) ++hit;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return static_cast<double>(hit) / static_cast<double>(total);
}

// Exact binomial pmf by Pascal recurrence.
std::vector<double> binom_pmf_row(long n, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  pmf[0] = 1.0;
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j >= 1; --j) {
      pmf[static_cast<std::size_t>(j)] =
          pmf[static_cast<std::size_t>(j)] * (1.0 - p) + pmf[static_cast<std::size_t>(j - 1)] * p;
    }
    pmf[0] *= 1.0 - p;
  }
  return pmf;
}

}  // namespace oracle

TEST_CASE("passk_unbiased frozen examples") {
  CHECK(passk_unbiased({4, 2, 2}) == doctest::Approx(1.0 - 1.0 / 6.0).epsilon(1e-12));
  CHECK(passk_unbiased({10, 0, 3}) == 0.0);
  CHECK(passk_unbiased({256, 256, 1}) == 1.0);
  CHECK(passk_unbiased({2, 1, 1}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("passk_unbiased rejects malformed queries") {
  for (PasskQuery q : {PasskQuery{4, 2, 5}, PasskQuery{4, 5, 2}, PasskQuery{4, 2, 0}}) {
    try {
      passk_unbiased(q);
      FAIL("expected invalid-query error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::invalid_query);
    }
  }
}

TEST_CASE("passk_unbiased equals exhaustive subset enumeration for n <= 12") {
  for (long n = 1; n <= 12; ++n) {
    for (long c = 0; c <= n; ++c) {
      for (long k = 1; k <= n; ++k) {
        const double expect = oracle::passk_bruteforce(n, c, k);
        CHECK(std::abs(passk_unbiased({n, c, k}) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("passk_unbiased is unbiased under exact binomial summation") {
  for (long n = 1; n <= 10; ++n) {
    for (double p : {0.1, 0.5, 0.9}) {
      const std::vector<double> pmf = oracle::binom_pmf_row(n, p);
      for (long k = 1; k <= n; ++k) {
        double estimate = 0.0;
        for (long c = 0; c <= n; ++c) {
          estimate += pmf[static_cast<std::size_t>(c)] * passk_unbiased({n, c, k});
        }
        CHECK(std::abs(estimate - (1.0 - std::pow(1.0 - p, k))) < 1e-10);
      }
    }
  }
}

TEST_CASE("passk_unbiased monotone in k and in c") {
  for (long n : {5L, 17L, 64L}) {
    for (long c = 0; c <= n; c += 3) {
      double prev = -1.0;
      for (long k = 1; k <= n; ++k) {
        const double v = passk_unbiased({n, c, k});
        CHECK(v >= prev);
        prev = v;
      }
    }
    for (long k : {1L, n / 2 + 1, n}) {
      double prev = -1.0;
      for (long c = 0; c <= n; ++c) {
        const double v = passk_unbiased({n, c, k});
        CHECK(v >= prev);
        prev = v;
      }
    }
  }
}

TEST_CASE("passk_unbiased stays finite and in range at n = 10^6") {
  for (long c : {0L, 1L, 1000L, 999999L, 1000000L}) {
    for (long k : {1L, 256L, 1000000L}) {
      const double v = passk_unbiased({1000000, c, k});
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("passk_curve_from_log") {
  const std::vector<PromptSampleCount> log = {{"a", 4, 2}, {"b", 4, 4}};
  const std::vector<long> ks = {2};
  const std::vector<double> means = passk_curve_from_log(log, ks);
  CHECK(means[0] == doctest::Approx((5.0 / 6.0 + 1.0) / 2.0).epsilon(1e-9));

  const std::vector<PromptSampleCount> zeros = {{"a", 8, 0}, {"b", 8, 0}};
  const std::vector<long> many = {1, 2, 4, 8};
  for (double v : passk_curve_from_log(zeros, many)) CHECK(v == 0.0);

  const std::vector<PromptSampleCount> single = {{"a", 6, 3}};
  const std::vector<long> one = {2};
  CHECK(passk_curve_from_log(single, one)[0] == passk_unbiased({6, 3, 2}));

  try {
    passk_curve_from_log({}, one);
    FAIL("expected empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
}

TEST_CASE("pir counts irrelevant ground truth among predicted fully-relevant") {
  std::vector<AdsRecord> records;
  for (int i = 0; i < 20; ++i) {
    AdsRecord r;
    r.predicted_label = 2;
    r.gt_label = i == 0 ? 0 : 2;
    r.impressions = 10;
    r.clicks = 1;
    records.push_back(r);
  }
  // Records predicted below fully-relevant never enter the denominator.
  AdsRecord partial;
  partial.predicted_label = 1;
  partial.gt_label = 0;
  partial.impressions = 5;
  records.push_back(partial);

  CHECK(pir(records) == doctest::Approx(0.05).epsilon(1e-15));

  for (AdsRecord& r : records) r.gt_label = 2;
  CHECK(pir(records) == 0.0);
  for (AdsRecord& r : records) r.gt_label = 0;
  CHECK(pir(records) == 1.0);

  try {
    pir(std::vector<AdsRecord>{partial});
    FAIL("expected undefined-metric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::undefined_metric);
  }
}

TEST_CASE("ad_revenue_metrics aggregates event-weighted") {
  std::vector<AdsRecord> records;
  for (int i = 0; i < 10; ++i) {
    AdsRecord r;
    r.predicted_label = 2;
    r.gt_label = 2;
    r.impressions = 100;
    r.clicks = 2;
    r.revenue = 10.0;
    records.push_back(r);
  }
  const AdRevenueMetrics m = ad_revenue_metrics(records);
  CHECK(m.ctrpi == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(m.cpc == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(m.cpm == doctest::Approx(100.0).epsilon(1e-15));
  CHECK(m.cpm == doctest::Approx(1000.0 * m.ctrpi * m.cpc).epsilon(1e-15));
  CHECK(m.gmv == 0.0);
}

TEST_CASE("gmv sums price times quantity") {
  std::vector<AdsRecord> records;
  AdsRecord a;
  a.impressions = 10;
  a.clicks = 1;
  a.revenue = 1.0;
  a.purchase_price = 10.0;
  a.purchase_qty = 2;
  AdsRecord b = a;
  b.purchase_price = 5.0;
  b.purchase_qty = 1;
  records = {a, b};
  CHECK(ad_revenue_metrics(records).gmv == doctest::Approx(25.0).epsilon(1e-15));
}

TEST_CASE("ad_revenue_metrics names the undefined metric") {
  AdsRecord no_clicks;
  no_clicks.impressions = 50;
  no_clicks.clicks = 0;
  try {
    ad_revenue_metrics(std::vector<AdsRecord>{no_clicks});
    FAIL("expected undefined-metric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::undefined_metric);
    CHECK(std::string(e.what()).find("cpc") != std::string::npos);
  }

  AdsRecord nothing;
  try {
    ad_revenue_metrics(std::vector<AdsRecord>{nothing});
    FAIL("expected undefined-metric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::undefined_metric);
    CHECK(std::string(e.what()).find("ctrpi") != std::string::npos);
  }
}

TEST_CASE("record validation") {
  AdsRecord bad;
  bad.impressions = 1;
  bad.clicks = 2;
  try {
    validate_record(bad);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
}
