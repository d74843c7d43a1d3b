#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace esrf {

// Float transcendentals in the cephes style: branch-light, ~1e-7 relative
// error, good enough for 32-bit training where exp/log dominate the profile.
// Double precision always goes through the standard library, so the 64-bit
// gradient verification path is untouched.

inline float fast_exp(float x) {
    if (x > 88.0f) x = 88.0f;
    if (x < -87.0f) return 0.0f;
    const float z = std::floor(x * 1.44269504088896341f + 0.5f);
    x -= z * 0.693359375f;
    x -= z * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * x + 1.3981999507e-3f;
    p = p * x + 8.3334519073e-3f;
    p = p * x + 4.1665795894e-2f;
    p = p * x + 1.6666665459e-1f;
    p = p * x + 5.0000001201e-1f;
    p = p * x * x + x + 1.0f;
    const std::int32_t n = static_cast<std::int32_t>(z);
    std::int32_t bits;
    std::memcpy(&bits, &p, 4);
    bits += n << 23;
    float out;
    std::memcpy(&out, &bits, 4);
    return out;
}

inline float fast_log(float x) {
    std::int32_t bits;
    std::memcpy(&bits, &x, 4);
    std::int32_t e = ((bits >> 23) & 255) - 126;
    bits = (bits & 0x807fffff) | (126 << 23);
    float m;
    std::memcpy(&m, &bits, 4);
    if (m < 0.707106781186547524f) {
        m += m;
        e -= 1;
    }
    m -= 1.0f;
    const float z = m * m;
    float p = 7.0376836292e-2f;
    p = p * m - 1.1514610310e-1f;
    p = p * m + 1.1676998740e-1f;
    p = p * m - 1.2420140846e-1f;
    p = p * m + 1.4249322787e-1f;
    p = p * m - 1.6668057665e-1f;
    p = p * m + 2.0000714765e-1f;
    p = p * m - 2.4999993993e-1f;
    p = p * m + 3.3333331174e-1f;
    p = p * m * z;
    p += -0.5f * z;
    float r = m + p;
    r += 0.693147180559945f * static_cast<float>(e);
    return r;
}

template <typename T>
inline T t_exp(T x) {
    return static_cast<T>(std::exp(static_cast<double>(x)));
}
template <>
inline float t_exp<float>(float x) {
    return fast_exp(x);
}

template <typename T>
inline T t_log(T x) {
    return static_cast<T>(std::log(static_cast<double>(x)));
}
template <>
inline float t_log<float>(float x) {
    return fast_log(x);
}

template <typename T>
inline T t_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + t_exp(-x));
    const T e = t_exp(x);
    return e / (T(1) + e);
}

}  // namespace esrf
