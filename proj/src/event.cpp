#include "hepml/event.hpp"

#include <cmath>

namespace hepml {

bool particle_valid(const Particle& p) {
  if (!(p.e >= 0)) return false;
  float ac = std::fabs(p.charge);
  if (ac != 0.0f && ac != 1.0f) return false;
  if ((p.category == ParticleCategory::Photon ||
       p.category == ParticleCategory::NeutralHadron) &&
      p.charge != 0.0f)
    return false;
  return true;
}

}  // namespace hepml
