#include <doctest.h>

#include <cmath>

#include "agpolab/exactsim.hpp"

using namespace agpolab;

namespace {

TabularPolicy random_policy(int vocab, int len, std::uint64_t seed, double scale = 1.0) {
  TabularPolicy policy(vocab, len, "test");
  RngStream rng(seed);
  Eigen::MatrixXd logits(policy.context_count(), vocab);
  for (Eigen::Index c = 0; c < logits.rows(); ++c) {
    for (int v = 0; v < vocab; ++v) logits(c, v) = scale * (2.0 * rng.next_unit() - 1.0);
  }
  policy.set_logits(logits);
  return policy;
}

TaskSpec subset_task(int vocab, int len, double density, std::uint64_t seed) {
  FamilyParams params;
  params.num_tasks = 1;
  params.density = density;
  return build_task_family(TaskFamily::subset, vocab, len, seed, params).tasks[0];
}

}  // namespace

TEST_CASE("psr/nsr decomposition frozen examples") {
  const TaskSpec task = subset_task(4, 3, 0.25, 2);
  const TabularPolicy uniform(4, 3, task.prompt_id);
  const DecompositionReport r = psr_nsr_decomposition(uniform, task);
  CHECK(r.j_psr == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(r.j_nsr == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(r.j_total == doctest::Approx(-0.5).epsilon(1e-9));

  const TaskSpec none = subset_task(4, 3, 0.0, 2);
  const DecompositionReport r0 = psr_nsr_decomposition(uniform, none);
  CHECK(r0.j_psr == 0.0);
  CHECK(r0.j_nsr == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r0.j_total == doctest::Approx(-1.0).epsilon(1e-9));

  const TaskSpec all = subset_task(4, 3, 1.0, 2);
  const DecompositionReport r1 = psr_nsr_decomposition(uniform, all);
  CHECK(r1.j_psr == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r1.j_nsr == 0.0);
  CHECK(r1.j_total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("partition identity on random policies") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const TaskSpec task = subset_task(3, 4, 0.2, seed);
    const TabularPolicy policy = random_policy(3, 4, seed, 2.0);
    const DecompositionReport r = psr_nsr_decomposition(policy, task);
    CHECK(r.j_psr + r.j_nsr == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.j_psr == doctest::Approx(prior_correctness_exact(policy, task)).epsilon(1e-12));
    CHECK(r.j_total == doctest::Approx(2.0 * r.j_psr - 1.0).epsilon(1e-9));
  }
}

TEST_CASE("mass_gradient matches finite differences of the exact mass") {
  const TaskSpec task = subset_task(3, 3, 0.3, 4);
  TabularPolicy policy = random_policy(3, 3, 9);
  const Eigen::MatrixXd grad = mass_gradient(policy, task.correct_set);
  const double h = 1e-6;
  const Eigen::MatrixXd base = policy.logits();
  double max_err = 0.0;
  for (Eigen::Index c = 0; c < base.rows(); ++c) {
    for (int v = 0; v < 3; ++v) {
      Eigen::MatrixXd up = base, down = base;
      up(c, v) += h;
      down(c, v) -= h;
      policy.set_logits(up);
      const double p_up = prior_correctness_exact(policy, task);
      policy.set_logits(down);
      const double p_down = prior_correctness_exact(policy, task);
      policy.set_logits(base);
      max_err = std::max(max_err, std::abs((p_up - p_down) / (2.0 * h) - grad(c, v)));
    }
  }
  CHECK(max_err < 1e-8);
}

TEST_CASE("conservation: total-mass gradient is zero, so psr and nsr flows coincide") {
  const TaskSpec full = subset_task(3, 3, 1.0, 5);
  const TabularPolicy policy = random_policy(3, 3, 14);
  // Y+ = full space: ascending total mass moves nothing.
  FlowMode psr;
  psr.kind = FlowKind::psr_only;
  const Eigen::MatrixXd grad = exact_flow_gradient(policy, full, psr);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-15);

  // On a proper subset the two one-sided flows are the same field: pushing
  // up the correct mass and pushing down the incorrect mass are identical
  // through the shared softmax.
  const TaskSpec task = subset_task(3, 3, 0.3, 6);
  FlowMode nsr;
  nsr.kind = FlowKind::nsr_only;
  const Eigen::MatrixXd u_psr = exact_flow_gradient(policy, task, psr);
  const Eigen::MatrixXd u_nsr = exact_flow_gradient(policy, task, nsr);
  CHECK((u_psr - u_nsr).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("weighted flow is the lambda-scaled sum of the one-sided terms") {
  const TaskSpec task = subset_task(3, 3, 0.4, 7);
  const TabularPolicy start = random_policy(3, 3, 21);
  const double lr = 0.37;

  FlowMode psr;
  psr.kind = FlowKind::psr_only;
  FlowMode nsr;
  nsr.kind = FlowKind::nsr_only;
  FlowMode weighted;
  weighted.kind = FlowKind::weighted;
  weighted.lambda = 1.0;

  const Eigen::MatrixXd delta_psr =
      exact_gradient_step(start, task, psr, lr).logits() - start.logits();
  const Eigen::MatrixXd delta_nsr =
      exact_gradient_step(start, task, nsr, lr).logits() - start.logits();
  const Eigen::MatrixXd delta_w =
      exact_gradient_step(start, task, weighted, lr).logits() - start.logits();
  CHECK((delta_w - (delta_psr + delta_nsr)).cwiseAbs().maxCoeff() < 1e-12);

  FlowMode half = weighted;
  half.lambda = 0.5;
  const Eigen::MatrixXd delta_half =
      exact_gradient_step(start, task, half, lr).logits() - start.logits();
  CHECK((delta_half - (0.5 * delta_psr + delta_nsr)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a small psr step increases j_psr") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TaskSpec task = subset_task(3, 3, 0.25, seed + 30);
    const TabularPolicy start = random_policy(3, 3, seed + 60, 1.5);
    FlowMode psr;
    psr.kind = FlowKind::psr_only;
    const TabularPolicy moved = exact_gradient_step(start, task, psr, 1e-4);
    const double before = prior_correctness_exact(start, task);
    const double after = prior_correctness_exact(moved, task);
    CHECK(after - before >= -1e-10);
  }
}

TEST_CASE("expected advantages match exhaustive group-composition enumeration") {
  // Oracle: enumerate all 2^(G-1) correctness patterns of the other members
  // and average the canonical-group advantage of the conditioned member.
  const int G = 6;
  for (double p : {0.1, 0.45, 0.9}) {
    for (EstimatorVariant variant : {EstimatorVariant::agpo, EstimatorVariant::grpo}) {
      EstimatorConfig cfg = EstimatorConfig::defaults_for(variant);
      double expect_pos = 0.0, expect_neg = 0.0;
      for (int pattern = 0; pattern < (1 << (G - 1)); ++pattern) {
        int others = 0;
        for (int b = 0; b < G - 1; ++b) others += (pattern >> b) & 1;
        const double weight =
            std::pow(p, others) * std::pow(1.0 - p, G - 1 - others);
        const auto adv = [&](int k, bool positive) {
          const GroupRewards group = canonical_group(k, G);
          const AdvantageVector a = variant == EstimatorVariant::grpo
                                        ? grpo_advantage(group, cfg)
                                        : agpo_advantage(group, cfg);
          return positive ? a[0] : a[G - 1];
        };
        expect_pos += weight * adv(others + 1, true);
        expect_neg += weight * adv(others, false);
      }
      CHECK(expected_positive_advantage(G, p, cfg) == doctest::Approx(expect_pos).epsilon(1e-12));
      CHECK(expected_negative_advantage(G, p, cfg) == doctest::Approx(expect_neg).epsilon(1e-12));
    }
  }
}

TEST_CASE("expected flows point along the mass gradient with the expected gain") {
  const TaskSpec task = subset_task(3, 3, 0.3, 40);
  const TabularPolicy policy = random_policy(3, 3, 41);
  const double p = prior_correctness_exact(policy, task);

  FlowMode agpo;
  agpo.kind = FlowKind::agpo_expected;
  agpo.group_size = 8;
  const Eigen::MatrixXd flow = exact_flow_gradient(policy, task, agpo);

  const EstimatorConfig cfg = EstimatorConfig::defaults_for(EstimatorVariant::agpo);
  const double gain = expected_positive_advantage(8, p, cfg) -
                      expected_negative_advantage(8, p, cfg);
  const Eigen::MatrixXd expect = gain * mass_gradient(policy, task.correct_set);
  CHECK((flow - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exact_passk_curve") {
  const TaskSpec task = subset_task(2, 1, 0.5, 3);
  TabularPolicy uniform(2, 1, task.prompt_id);
  const std::vector<int> ks = {1, 2};
  const std::vector<double> curve = exact_passk_curve(uniform, task, ks);
  CHECK(curve[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(curve[1] == doctest::Approx(0.75).epsilon(1e-12));

  const TaskSpec none = subset_task(4, 3, 0.0, 3);
  const TabularPolicy u4(4, 3, none.prompt_id);
  for (double v : exact_passk_curve(u4, none, ks)) CHECK(v == 0.0);

  const TaskSpec all = subset_task(4, 3, 1.0, 3);
  for (double v : exact_passk_curve(u4, all, ks)) {
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("nsr dampening probe reports 1 - pi(chosen)") {
  TabularPolicy policy(2, 2, "p");
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(policy.context_count(), 2);
  logits(0, 0) = std::log(0.99) - std::log(0.01);  // root: pi(0) = 0.99
  // Depth-1 contexts stay uniform: pi = 0.5.
  policy.set_logits(logits);
  const std::vector<int> seq = {0, 1};
  const auto report = nsr_dampening_probe(policy, seq);
  REQUIRE(report.size() == 2);
  CHECK(report[0].prob_chosen == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(report[0].gradient_magnitude == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(report[1].prob_chosen == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report[1].gradient_magnitude == doctest::Approx(0.5).epsilon(1e-12));

  // High-confidence limit: magnitude vanishes.
  Eigen::MatrixXd sharp = Eigen::MatrixXd::Zero(policy.context_count(), 2);
  sharp(0, 0) = 40.0;
  policy.set_logits(sharp);
  const std::vector<int> zero_then_one = {0, 1};
  const auto limit = nsr_dampening_probe(policy, zero_then_one);
  CHECK(limit[0].gradient_magnitude < 1e-12);
}

TEST_CASE("nsr preservation: counterexample search finds none") {
  // Random tasks and random policies; a moderate-rate NSR flow must never
  // reduce the correct mass while the correct set is nonempty.
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const double density = 0.1 + 0.2 * static_cast<double>(seed % 4);
    const TaskSpec task = subset_task(3, 4, std::min(density, 0.9), seed + 200);
    if (task.correct_set.empty()) continue;
    TabularPolicy policy = random_policy(3, 4, seed + 300, 1.5);
    FlowMode nsr;
    nsr.kind = FlowKind::nsr_only;
    double mass = prior_correctness_exact(policy, task);
    for (int step = 0; step < 25; ++step) {
      policy = exact_gradient_step(policy, task, nsr, 1.0);
      const double next = prior_correctness_exact(policy, task);
      CHECK(next >= mass - 1e-12);
      mass = next;
    }
  }
}
