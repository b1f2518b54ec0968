#pragma once

// Orthogonal periodic discrete wavelet transform (Haar, Daubechies-2).

#include <vector>

#include "kmor/numerics.hpp"

namespace kmor {

enum class WaveletFamily { haar, daubechies2 };

const char* wavelet_name(WaveletFamily f);
WaveletFamily parse_wavelet(const std::string& name);

/// Coefficients of a `max_level`-deep decomposition. details[j-1] holds the
/// level-j coefficients (level 1 is the finest split, length n/2); `scaling`
/// holds the n/2^max_level coarse coefficients.
struct WaveletCoeffs {
    WaveletFamily family = WaveletFamily::haar;
    int max_level = 0;
    Index length = 0;
    Vector scaling;
    std::vector<Vector> details;
};

bool is_power_of_two(Index n);
Index next_power_of_two(Index n);

WaveletCoeffs wavelet_decompose(const Vector& signal, WaveletFamily family, int max_level);
Vector wavelet_reconstruct(const WaveletCoeffs& coeffs);

/// A column of the compressed coefficient matrix. level == 0 marks a scaling
/// slot; otherwise (level, shift) addresses details[level-1](shift).
struct WaveletSlot {
    int level = 0;
    Index shift = 0;
    bool operator==(const WaveletSlot&) const = default;
};

struct TruncatedCoeffs {
    Matrix c;                        // n_sources x p_w
    std::vector<WaveletSlot> slots;  // one per column of c
};

/// Keeps every scaling slot, plus each detail slot whose largest magnitude
/// across sources reaches eps_w times the largest detail magnitude in the
/// family. Columns are ordered scaling first, then by (level, shift).
TruncatedCoeffs truncate_coeffs(const std::vector<WaveletCoeffs>& family_coeffs, double eps_w);

}  // namespace kmor
