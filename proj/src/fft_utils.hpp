#pragma once

#include <complex>
#include <span>
#include <vector>

namespace spdreg::detail {

/// Smallest power of two >= n.
int next_fast_size(int n);

/// Forward real-to-complex DFT: x zero-padded to length n, returns the n/2+1
/// nonredundant bins. Unnormalized (matches the textbook DFT sum).
std::vector<std::complex<double>> rfft(std::span<const double> x, int n);

/// Inverse of rfft for a length-n real signal; includes the 1/n factor.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, int n);

}  // namespace spdreg::detail
