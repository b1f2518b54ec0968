#include "kmor/wavelet.hpp"

#include <array>
#include <cmath>
#include <span>

namespace kmor {

namespace {

struct Filter {
    std::vector<double> lo;
    std::vector<double> hi;
};

Filter make_filter(WaveletFamily family) {
    Filter f;
    if (family == WaveletFamily::haar) {
        const double s = 1.0 / std::sqrt(2.0);
        f.lo = {s, s};
    } else {
        const double r3 = std::sqrt(3.0);
        const double d = 4.0 * std::sqrt(2.0);
        f.lo = {(1.0 + r3) / d, (3.0 + r3) / d, (3.0 - r3) / d, (1.0 - r3) / d};
    }
    // Quadrature mirror: g_k = (-1)^k h_{L-1-k}
    const std::size_t len = f.lo.size();
    f.hi.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        f.hi[k] = sign * f.lo[len - 1 - k];
    }
    return f;
}

void analysis_step(const Filter& f, const Vector& x, Vector& approx, Vector& detail) {
    const Index n = x.size();
    const Index half = n / 2;
    approx.setZero(half);
    detail.setZero(half);
    for (Index i = 0; i < half; ++i) {
        double a = 0.0;
        double d = 0.0;
        for (std::size_t k = 0; k < f.lo.size(); ++k) {
            const double v = x((2 * i + static_cast<Index>(k)) % n);
            a += f.lo[k] * v;
            d += f.hi[k] * v;
        }
        approx(i) = a;
        detail(i) = d;
    }
}

Vector synthesis_step(const Filter& f, const Vector& approx, const Vector& detail) {
    const Index half = approx.size();
    const Index n = 2 * half;
    Vector x = Vector::Zero(n);
    for (Index i = 0; i < half; ++i) {
        for (std::size_t k = 0; k < f.lo.size(); ++k) {
            const Index j = (2 * i + static_cast<Index>(k)) % n;
            x(j) += f.lo[k] * approx(i) + f.hi[k] * detail(i);
        }
    }
    return x;
}

}  // namespace

const char* wavelet_name(WaveletFamily f) {
    return f == WaveletFamily::haar ? "haar" : "daubechies2";
}

WaveletFamily parse_wavelet(const std::string& name) {
    if (name == "haar") return WaveletFamily::haar;
    if (name == "daubechies2" || name == "db2") return WaveletFamily::daubechies2;
    throw ConfigError("unknown wavelet family '" + name + "'");
}

bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

Index next_power_of_two(Index n) {
    Index p = 1;
    while (p < n) p <<= 1;
    return p;
}

WaveletCoeffs wavelet_decompose(const Vector& signal, WaveletFamily family, int max_level) {
    const Index n = signal.size();
    if (max_level < 0) {
        throw ShapeError("wavelet_decompose: negative level");
    }
    if (!is_power_of_two(n) || n < (Index{1} << max_level)) {
        throw ShapeError("wavelet_decompose: length " + std::to_string(n) +
                         " is not a power of two >= 2^" + std::to_string(max_level));
    }
    const Filter f = make_filter(family);
    WaveletCoeffs out;
    out.family = family;
    out.max_level = max_level;
    out.length = n;
    Vector current = signal;
    for (int level = 1; level <= max_level; ++level) {
        Vector approx;
        Vector detail;
        analysis_step(f, current, approx, detail);
        out.details.push_back(std::move(detail));
        current = std::move(approx);
    }
    out.scaling = std::move(current);
    return out;
}

Vector wavelet_reconstruct(const WaveletCoeffs& coeffs) {
    if (static_cast<int>(coeffs.details.size()) != coeffs.max_level) {
        throw ShapeError("wavelet_reconstruct: detail level count mismatch");
    }
    const Filter f = make_filter(coeffs.family);
    Vector current = coeffs.scaling;
    for (int level = coeffs.max_level; level >= 1; --level) {
        const Vector& detail = coeffs.details[static_cast<std::size_t>(level - 1)];
        if (detail.size() != current.size()) {
            throw ShapeError("wavelet_reconstruct: inconsistent coefficient lengths");
        }
        current = synthesis_step(f, current, detail);
    }
    return current;
}

TruncatedCoeffs truncate_coeffs(const std::vector<WaveletCoeffs>& family_coeffs, double eps_w) {
    if (!(eps_w >= 0.0 && eps_w <= 1.0)) {
        throw DomainError("truncate_coeffs: eps_w must lie in [0, 1]");
    }
    TruncatedCoeffs out;
    const auto n_src = static_cast<Index>(family_coeffs.size());
    if (n_src == 0) {
        out.c = Matrix(0, 0);
        return out;
    }
    const WaveletCoeffs& ref = family_coeffs.front();
    for (const auto& wc : family_coeffs) {
        if (wc.max_level != ref.max_level || wc.length != ref.length || wc.family != ref.family) {
            throw ShapeError("truncate_coeffs: sources use different decompositions");
        }
    }

    std::vector<WaveletSlot> slots;
    for (Index m = 0; m < ref.scaling.size(); ++m) {
        slots.push_back({0, m});
    }
    double global_max = 0.0;
    for (const auto& wc : family_coeffs) {
        for (const auto& d : wc.details) {
            if (d.size() > 0) global_max = std::max(global_max, d.cwiseAbs().maxCoeff());
        }
    }
    const double threshold = eps_w * global_max;
    for (int level = 1; level <= ref.max_level; ++level) {
        const Index len = ref.details[static_cast<std::size_t>(level - 1)].size();
        for (Index k = 0; k < len; ++k) {
            double slot_max = 0.0;
            for (const auto& wc : family_coeffs) {
                slot_max = std::max(slot_max, std::abs(wc.details[static_cast<std::size_t>(level - 1)](k)));
            }
            if (slot_max >= threshold) {
                slots.push_back({level, k});
            }
        }
    }

    out.c.resize(n_src, static_cast<Index>(slots.size()));
    for (Index i = 0; i < n_src; ++i) {
        const WaveletCoeffs& wc = family_coeffs[static_cast<std::size_t>(i)];
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto& sl = slots[s];
            out.c(i, static_cast<Index>(s)) =
                sl.level == 0 ? wc.scaling(sl.shift) : wc.details[static_cast<std::size_t>(sl.level - 1)](sl.shift);
        }
    }
    out.slots = std::move(slots);
    return out;
}

}  // namespace kmor
