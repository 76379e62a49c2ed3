#pragma once

#include "chaotic_drivers.hpp"
#include "coefficient_field.hpp"
#include "errors.hpp"
#include "random.hpp"
#include "types.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

namespace fastslow::testing {

inline FastDriver make_driver(DriverKind kind, std::uint64_t seed = 1, DriverParams params = {}) {
    FastDriver d(kind, params, RandomStream(seed, stream_tag::driver, 0));
    d.randomize_state();
    return d;
}

/// Identity observable on one coordinate (no calibration needed).
inline ObservableMap identity_observable(int coordinate = 0, double center = 0.0) {
    ObservableChannel ch;
    ch.coordinate = coordinate;
    ch.center = center;
    ch.scale = 1.0;
    return ObservableMap({ch}, {}, false);
}

inline Vec vec(std::initializer_list<double> values) {
    Vec v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

inline Vec vec1(double x) { return Vec::Constant(1, x); }

/// Runs f and returns the category of the library error it throws.
template <class F>
ErrorCategory category_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    ADD_FAILURE() << "expected a library error";
    return ErrorCategory::Internal;
}

/// Scalar SDE field with drift b(x) and single noise s(x).
inline SdeField scalar_field(std::function<double(double)> b, std::function<double(double)> s) {
    SdeField f;
    f.dim = 1;
    f.drift = [b](const Vec& x) { return vec1(b(x[0])); };
    f.sigma = [s](const Vec& x) { return Mat::Constant(1, 1, s(x[0])); };
    return f;
}

}  // namespace fastslow::testing
