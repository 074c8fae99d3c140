// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gdistill/error.hpp"
#include "gdistill/schedule.hpp"

using namespace gdistill;

TEST_CASE("cosine endpoints are exact") {
  const NoiseSchedule s;
  CHECK(s.alpha_sigma(0.0).alpha == 1.0);
  CHECK(s.alpha_sigma(0.0).sigma == 0.0);
  CHECK(s.alpha_sigma(1.0).alpha == 0.0);
  CHECK(s.alpha_sigma(1.0).sigma == 1.0);
}

TEST_CASE("alpha and sigma match frozen values") {
  // numpy: cos(0.15 pi), sin(0.15 pi), log(alpha^2 / sigma^2)
  const NoiseSchedule s;
  const auto as = s.alpha_sigma(0.3);
  CHECK(as.alpha == doctest::Approx(0.8910065241883679).epsilon(1e-15));
  CHECK(as.sigma == doctest::Approx(0.45399049973954675).epsilon(1e-15));
  CHECK(s.log_snr(0.3) == doctest::Approx(1.3485509552536334).epsilon(1e-14));
}

TEST_CASE("variance is preserved and log-SNR decreases") {
  const NoiseSchedule s;
  double prev = INFINITY;
  for (int i = 1; i < 1000; ++i) {
    const double t = i / 1000.0;
    const auto [a, g] = s.alpha_sigma(t);
    CHECK(std::abs(a * a + g * g - 1.0) < 1e-15);
    const double l = s.log_snr(t);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("out of range times are rejected") {
  const NoiseSchedule s;
  CHECK_THROWS_AS(s.alpha_sigma(-1e-9), Error);
  CHECK_THROWS_AS(s.alpha_sigma(1.0 + 1e-9), Error);
  CHECK_THROWS_AS(s.log_snr(0.0), Error);
  CHECK_THROWS_AS(s.log_snr(1.0), Error);
  CHECK_THROWS_AS(NoiseSchedule::parse("linear"), Error);
  CHECK(NoiseSchedule::parse("cosine-vp").name() == "cosine-vp");
}

TEST_CASE("loss weights") {
  const NoiseSchedule s;
  CHECK(loss_weight(LossWeightKind::Snr, 0.0) == 1.0);
  CHECK(loss_weight(LossWeightKind::Snr, std::log(4.0)) == doctest::Approx(4.0));
  CHECK(loss_weight(LossWeightKind::TruncatedSnr, -3.0) == 1.0);
  CHECK(loss_weight(LossWeightKind::TruncatedSnr, 2.0) == doctest::Approx(std::exp(2.0)));
  CHECK(loss_weight_at(LossWeightKind::Snr, s, 1.0) == 0.0);
  CHECK(loss_weight_at(LossWeightKind::TruncatedSnr, s, 1.0) == 1.0);
  CHECK(loss_weight_at(LossWeightKind::Snr, s, 0.3) == doctest::Approx(std::exp(s.log_snr(0.3))));
  CHECK_THROWS_AS(loss_weight_at(LossWeightKind::Snr, s, 0.0), Error);
  CHECK(parse_loss_weight("truncated-snr") == LossWeightKind::TruncatedSnr);
  CHECK_THROWS_AS(parse_loss_weight("mse"), Error);
}

TEST_CASE("bridge variance") {
  const NoiseSchedule s;
  // numpy: (1 - e^(lambda_0.7 - lambda_0.4)) sin(0.35 pi)^2
  const double v = bridge_variance(s.log_snr(0.7), s.log_snr(0.4), s.alpha_sigma(0.7).sigma);
  CHECK(v == doctest::Approx(0.68509595407937496).epsilon(1e-13));
  CHECK(bridge_variance(s, 0.7, 0.4) == doctest::Approx(v).epsilon(1e-12));
  // from clean data the bridge is the full marginal noise
  CHECK(bridge_variance(s, 0.6, 0.0) == doctest::Approx(std::pow(s.alpha_sigma(0.6).sigma, 2)));
  CHECK(bridge_variance(s, 0.5, 0.5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(bridge_variance(1.0, 0.5, 0.3), Error);
  CHECK_THROWS_AS(bridge_variance(s, 0.3, 0.5), Error);
}
