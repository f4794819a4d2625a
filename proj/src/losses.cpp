#include "ebmcot/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ebmcot {

namespace {

double hinge_arg(double e_raw, double e_cal, double m, HingeOrientation o) {
  return o == HingeOrientation::paper ? e_raw - e_cal + m : e_cal - e_raw + m;
}

}  // namespace

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !(lambda >= 0.0) || !(alpha >= 0.0))
    throw std::invalid_argument("loss config: margin, lambda, and alpha must be >= 0");
}

double hinge_loss(double e_raw, double e_cal, double m, HingeOrientation o) {
  if (!std::isfinite(e_raw) || !std::isfinite(e_cal) || !std::isfinite(m))
    throw std::invalid_argument("hinge_loss: inputs must be finite");
  const double a = hinge_arg(e_raw, e_cal, m, o);
  return a > 0.0 ? a : 0.0;
}

bool hinge_active(double e_raw, double e_cal, double m, HingeOrientation o) {
  return hinge_arg(e_raw, e_cal, m, o) > 0.0;
}

double consistency_loss(const ThoughtBlock& l_cal, const ThoughtBlock& l_raw,
                        double lambda) {
  if (!l_cal.latents.same_shape(l_raw.latents))
    throw std::invalid_argument("consistency_loss: blocks " + l_cal.latents.shape_str() +
                                " and " + l_raw.latents.shape_str() + " differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < l_cal.latents.numel(); ++i) {
    const double d = l_cal.latents[i] - l_raw.latents[i];
    s += d * d;
  }
  return lambda * s;
}

double ebm_loss_batch(const std::vector<EbmPair>& pairs, const LossConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("ebm_loss_batch: empty batch");
  double s = 0.0;
  for (const EbmPair& p : pairs)
    s += hinge_loss(p.e_raw, p.e_cal, cfg.margin, cfg.hinge_orientation) +
         consistency_loss(p.l_cal, p.l_raw, cfg.lambda);
  return s / static_cast<double>(pairs.size());
}

double total_loss(double l_lm, double l_ebm, double alpha) {
  return l_lm + alpha * l_ebm;
}

}  // namespace ebmcot
