#pragma once

#include <vector>

#include "ebmcot/energy.hpp"

namespace ebmcot {

// Direction of the contrastive hinge. `paper` keeps the published update
// rule, max(0, e_raw - e_cal + m), which is minimized by raising the
// calibrated sample's energy above the raw one; `swapped` is the usual
// contrastive direction that pushes the calibrated energy down instead.
enum class HingeOrientation { paper, swapped };

struct LossConfig {
  double margin = 1.0;
  double lambda = 0.1;  // weight of the proximity regularizer
  double alpha = 0.1;   // weight of the energy objective inside the total
  HingeOrientation hinge_orientation = HingeOrientation::paper;

  void validate() const;  // margin, lambda, alpha must be nonnegative
};

double hinge_loss(double e_raw, double e_cal, double m,
                  HingeOrientation o = HingeOrientation::paper);

// true iff the hinge argument is strictly positive, i.e. the subgradient in
// (e_raw, e_cal) is nonzero; at the boundary the hinge is closed (inactive)
bool hinge_active(double e_raw, double e_cal, double m,
                  HingeOrientation o = HingeOrientation::paper);

// lambda * sum of squared entry differences; shapes must match
double consistency_loss(const ThoughtBlock& l_cal, const ThoughtBlock& l_raw,
                        double lambda);

struct EbmPair {
  double e_raw = 0.0;
  double e_cal = 0.0;
  ThoughtBlock l_raw;
  ThoughtBlock l_cal;
};

// mean over the batch of hinge + consistency; empty batches are rejected
double ebm_loss_batch(const std::vector<EbmPair>& pairs, const LossConfig& cfg);

double total_loss(double l_lm, double l_ebm, double alpha);

}  // namespace ebmcot
