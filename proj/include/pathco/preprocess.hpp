#pragma once

#include "pathco/volume.hpp"

namespace pathco {

struct PreprocessSpec {
  double inplane_spacing_mm = 1.5;
  /// Fraction of the foreground bounding-box extent added on each side.
  double margin = 0.20;
  Dims output_dims{256, 256, 16};
};

/// In-plane resample (image bilinear within the slice, mask nearest), crop
/// in-plane to the union foreground box of both phases expanded by the margin,
/// resize to the output dims, then min-max normalize each phase image.
/// A constant image normalizes to all zeros. Throws EmptyMask.
Subject preprocess(const Subject& subject, const PreprocessSpec& spec);

}  // namespace pathco
