#pragma once

#include <vector>

#include "rotapol/effective_model.hpp"
#include "rotapol/grid.hpp"

namespace rotapol {

struct Centroid {
  double x = 0.0;
  double y = 0.0;
};

// norm-weighted first moments
Centroid centroid(const ComplexField2D& f);

struct CyclotronFitOptions {
  double min_radius = 0.0;            // below this the orbit counts as degenerate
  double straight_line_factor = 50.0; // radius / data span ratio flagging a line
};

struct CyclotronFit {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.0;
  // signed angular velocity of the unwrapped orbit phase, counterclockwise
  // positive; a positive magnetic field gives a clockwise orbit and a
  // negative value here
  double omega = 0.0;
  double residual_rms = 0.0; // rms radial deviation from the fitted circle
  bool straight_line = false; // near-degenerate circle; omega is unreliable
};

// Algebraic circle fit of the sampled centroid track plus a least-squares
// angular-velocity fit of the unwrapped orbit phase.  Needs at least 8
// samples; the samples must resolve the orbit (several per period).
CyclotronFit fit_cyclotron(const std::vector<TrajectorySample>& samples,
                           const CyclotronFitOptions& opts = {});

struct RotationSearchOptions {
  std::size_t coarse_samples = 256; // angles scanned over (-pi, pi]
  double tol = 1e-4;                // final bracket width, radians
  double ambiguity_ratio = 0.01;    // rival maxima within this of the best
  double min_overlap = 0.5;         // below this the images are unrelated
  double leak_tol = 1e-8;           // forwarded to rotate_field
};

struct RotationEstimate {
  double angle = 0.0;   // in (-pi, pi], or (-pi/2, pi/2] when twin_folded
  double overlap = 0.0; // |<rotate(reference, angle), rotated>| on unit fields
  bool twin_folded = false; // image is two-fold symmetric; angle is mod pi
};

// Angle maximizing |<rotate(reference, theta), rotated>|: coarse cyclic scan,
// then golden-section refinement around the best bracket.  Throws
// AmbiguousRotation when a rival non-twin maximum comes within
// ambiguity_ratio of the best, when the landscape is flat, or when the best
// overlap stays below min_overlap.
RotationEstimate image_rotation_angle(const ComplexField2D& reference,
                                      const ComplexField2D& rotated,
                                      const RotationSearchOptions& opts = {});

// Amplitude decay rate gamma from a least-squares fit of ln(norm2) vs t,
// assuming norm2 = const * exp(-2 gamma t).
double norm_decay_rate(const std::vector<TrajectorySample>& samples);

} // namespace rotapol
