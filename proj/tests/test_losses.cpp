#include <algorithm>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "ebmcot/losses.hpp"
#include "ebmcot/rng.hpp"

using namespace ebmcot;

TEST_CASE("hinge loss reproduces its pinned values exactly") {
  CHECK(hinge_loss(0.5, 0.2, 0.0) == 0.3);
  CHECK(hinge_loss(0.5, 0.2, 0.0) == (0.5 - 0.2) + 0.0);
  CHECK(hinge_loss(0.2, 0.9, 0.5) == 0.0);
  CHECK(hinge_loss(0.7, 0.7, 1.0) == 1.0);
}

TEST_CASE("hinge orientation flips the operands, not the margin") {
  CHECK(hinge_loss(0.2, 0.9, 0.5, HingeOrientation::swapped) == (0.9 - 0.2) + 0.5);
  CHECK(hinge_loss(0.9, 0.2, 0.5, HingeOrientation::swapped) == 0.0);
  RngStream rng(3, "test/hinge-orient");
  for (int i = 0; i < 64; ++i) {
    const double a = rng.gaussian(), b = rng.gaussian(), m = std::abs(rng.gaussian());
    CHECK(hinge_loss(a, b, m, HingeOrientation::swapped) ==
          hinge_loss(b, a, m, HingeOrientation::paper));
  }
}

TEST_CASE("hinge is nonnegative and closed at the boundary") {
  RngStream rng(4, "test/hinge-prop");
  for (int i = 0; i < 128; ++i) {
    const double e_raw = rng.gaussian(), e_cal = rng.gaussian();
    const double m = std::abs(rng.gaussian());
    const double h = hinge_loss(e_raw, e_cal, m);
    CHECK(h >= 0.0);
    // zero exactly when the margin condition e_raw + m <= e_cal holds
    CHECK((h == 0.0) == (e_raw + m <= e_cal));
    CHECK(hinge_active(e_raw, e_cal, m) == (h > 0.0));
  }
  // argument exactly zero: no loss and no subgradient
  CHECK(hinge_loss(1.0, 2.0, 1.0) == 0.0);
  CHECK_FALSE(hinge_active(1.0, 2.0, 1.0));
  CHECK_THROWS_AS(hinge_loss(std::numeric_limits<double>::infinity(), 0.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("consistency loss is the weighted squared distance") {
  ThoughtBlock a(Tensor({1, 2}, {4.0, 6.0}));
  ThoughtBlock b(Tensor({1, 2}, {1.0, 2.0}));  // difference [3, 4]
  CHECK(consistency_loss(a, b, 0.1) == 0.1 * 25.0);
  CHECK(consistency_loss(a, b, 0.1) == 2.5);
  CHECK(consistency_loss(a, b, 0.1) == consistency_loss(b, a, 0.1));
  CHECK(consistency_loss(a, a, 0.1) == 0.0);
  CHECK(consistency_loss(a, b, 0.0) == 0.0);
  ThoughtBlock wide(Tensor({1, 3}));
  CHECK_THROWS_AS(consistency_loss(a, wide, 0.1), std::invalid_argument);
}

TEST_CASE("batch objective averages hinge plus consistency") {
  ThoughtBlock z(Tensor({1, 2}));
  LossConfig cfg;  // margin 1, lambda 0.1

  SUBCASE("singleton batch is just that pair's loss") {
    ThoughtBlock moved(Tensor({1, 2}, {1.0, 1.0}));
    EbmPair p{0.6, 0.4, z, moved};
    const double want = hinge_loss(0.6, 0.4, 1.0) + consistency_loss(moved, z, 0.1);
    CHECK(ebm_loss_batch({p}, cfg) == want);
  }
  SUBCASE("two items with per-item losses 1 and 3 average to 2") {
    EbmPair one{1.0, 1.0, z, z};    // hinge 1, consistency 0
    EbmPair three{3.0, 1.0, z, z};  // hinge 3, consistency 0
    CHECK(ebm_loss_batch({one, three}, cfg) == 2.0);
    CHECK(ebm_loss_batch({three, one}, cfg) == 2.0);
  }
  SUBCASE("order never matters") {
    RngStream rng(5, "test/batch-perm");
    std::vector<EbmPair> pairs;
    for (int i = 0; i < 6; ++i)
      pairs.push_back({rng.gaussian(), rng.gaussian(), ThoughtBlock(rng.gaussian_tensor({2, 3})),
                       ThoughtBlock(rng.gaussian_tensor({2, 3}))});
    const double forward = ebm_loss_batch(pairs, cfg);
    std::reverse(pairs.begin(), pairs.end());
    CHECK(ebm_loss_batch(pairs, cfg) == doctest::Approx(forward).epsilon(1e-15));
  }
  SUBCASE("empty batch is rejected") {
    CHECK_THROWS_AS(ebm_loss_batch({}, cfg), std::invalid_argument);
  }
}

TEST_CASE("total objective is the language loss plus the weighted energy loss") {
  CHECK(total_loss(2.0, 0.5, 0.1) == 2.05);
  CHECK(total_loss(2.0, 0.5, 0.1) == 2.0 + 0.1 * 0.5);
  CHECK(total_loss(1.7, 123.0, 0.0) == 1.7);
  CHECK(total_loss(1.7, 0.0, 0.9) == 1.7);
}

TEST_CASE("loss configuration rejects negative weights") {
  LossConfig cfg;
  cfg.validate();
  cfg.margin = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.margin = 1.0;
  cfg.lambda = -1e-9;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.lambda = 0.1;
  cfg.alpha = -2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
