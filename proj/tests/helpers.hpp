#pragma once

#include <cmath>
#include <functional>

#include <doctest.h>

#include "aan/core.hpp"

namespace aan::test {

inline bool throws_kind(const std::function<void()>& fn, ErrorKind kind) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind() == kind;
    }
    return false;
}

inline Vec v2(double x, double y) {
    return (Vec(2) << x, y).finished();
}

inline double max_abs(const Mat& m) {
    return m.cwiseAbs().maxCoeff();
}

}  // namespace aan::test

#define CHECK_THROWS_KIND(expr, kind) CHECK(::aan::test::throws_kind([&] { (void)(expr); }, kind))
