#pragma once

#include <string>

#include "archshape/tensor.hpp"

namespace archshape {

/// ASCII PGM ("P2", maxval 255). Values in [0, 1] map to floor(v * 255 + 0.5),
/// clamped; rows of the matrix become image rows.
std::string format_pgm(const Tensor& matrix);

/// Comma-separated rows with round-trippable (17 significant digit) reals.
std::string format_matrix_csv(const Tensor& matrix);

/// Pixel value used by format_pgm.
int pgm_level(double v);

}  // namespace archshape
