#pragma once

#include <complex>
#include <span>

#include "corrpost/imagefft/image.hpp"

namespace corrpost {

enum class FftDirection { kForward, kInverse };

/// In-place radix-2 decimation-in-time transform of a power-of-two length
/// sequence. Unnormalized in both directions.
void fft1d(std::span<std::complex<double>> data, FftDirection dir);

/// Unnormalized forward 2D DFT.
Spectrum2D fft2(const Image2D& img);
Spectrum2D fft2(const Spectrum2D& spec);

/// Inverse 2D DFT carrying the 1/(W*H) factor, so ifft2(fft2(x)) == x.
Spectrum2D ifft2(const Spectrum2D& spec);

/// |ifft2(conj(fft2(scene)) * filter)|, circular. For a scene equal to the
/// filter's template shifted by (dy, dx), the peak lands at (-dy, -dx) mod size.
ResponseMap cross_correlate(const Image2D& scene, const Spectrum2D& filter);

/// Direct O(N^4) circular correlation out(ty, tx) = |sum scene(y,x) * templ(y+ty, x+tx)|.
ResponseMap spatial_correlate_oracle(const Image2D& scene, const Image2D& templ);

/// Rotates the map so zero lag moves from (0,0) to (H/2, W/2).
ResponseMap center_zero_lag(const ResponseMap& map);

}  // namespace corrpost
