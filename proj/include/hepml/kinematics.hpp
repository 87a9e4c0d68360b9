#pragma once

#include "hepml/event.hpp"

namespace hepml {

/// Transverse-plane coordinates of one particle. phi lies in (-pi, pi].
struct Kinematics {
  double pt = 0;
  double eta = 0;
  double phi = 0;
};

/// Wraps an azimuth difference into (-pi, pi].
double wrap_phi(double dphi);

/// pT = sqrt(px^2+py^2), eta = atanh(pz/|p|), phi = atan2(py, px).
/// eta is clamped to +-10 at the beamline singularity (|pz| ~ |p| within
/// 1e-12); the zero vector maps to (0, 0, 0) for padding rows.
Kinematics kinematics(double px, double py, double pz);

inline Kinematics kinematics(const Particle& p) {
  return kinematics(p.px, p.py, p.pz);
}

/// Angular distance sqrt(deta^2 + dphi^2) with dphi wrapped into (-pi, pi]
/// before squaring. Symmetric, nonnegative, invariant under adding 2*pi to
/// either azimuth.
double delta_r(const Kinematics& a, const Kinematics& b);

}  // namespace hepml
