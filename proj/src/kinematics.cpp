#include "hepml/kinematics.hpp"

#include <cmath>
#include <numbers>

namespace hepml {

double wrap_phi(double dphi) {
  double w = std::remainder(dphi, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

Kinematics kinematics(double px, double py, double pz) {
  Kinematics k;
  k.pt = std::hypot(px, py);
  double p = std::sqrt(px * px + py * py + pz * pz);
  if (p == 0.0) return k;  // padding row
  double ratio = pz / p;
  if (std::fabs(ratio) >= 1.0 - 1e-12) {
    k.eta = ratio > 0 ? 10.0 : -10.0;
  } else {
    k.eta = std::atanh(ratio);
  }
  k.phi = std::atan2(py, px);
  if (k.phi <= -std::numbers::pi) k.phi = std::numbers::pi;
  return k;
}

double delta_r(const Kinematics& a, const Kinematics& b) {
  double deta = a.eta - b.eta;
  double dphi = wrap_phi(a.phi - b.phi);
  return std::sqrt(deta * deta + dphi * dphi);
}

}  // namespace hepml
