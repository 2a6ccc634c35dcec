// Copyright 2026 The stylemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "stylemix/error.hpp"

namespace stylemix {

struct Shape4 {
    int b = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape4&) const = default;
    std::int64_t count() const {
        return static_cast<std::int64_t>(b) * c * h * w;
    }
    std::string str() const {
        return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense rank-4 array (batch, channel, height, width), row-major doubles.
/// Arrays of lower rank ((B,C) statistics, (B,K) logits, scalars) are stored
/// with trailing unit dimensions; Tensor4 is the single value type everywhere.
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(int b, int c, int h, int w, double fill = 0.0)
        : shape_{b, c, h, w} {
        if (b < 0 || c < 0 || h < 0 || w < 0)
            throw ShapeError("Tensor4: negative dimension in " + shape_.str());
        data_.assign(static_cast<std::size_t>(shape_.count()), fill);
    }

    explicit Tensor4(Shape4 s, double fill = 0.0) : Tensor4(s.b, s.c, s.h, s.w, fill) {}

    static Tensor4 scalar(double v) {
        Tensor4 t(1, 1, 1, 1);
        t.data_[0] = v;
        return t;
    }

    static Tensor4 from_values(Shape4 s, std::initializer_list<double> vals) {
        Tensor4 t(s);
        if (static_cast<std::int64_t>(vals.size()) != s.count())
            throw ShapeError("Tensor4: value count does not match shape " + s.str());
        std::size_t i = 0;
        for (double v : vals) t.data_[i++] = v;
        return t;
    }

    const Shape4& shape() const { return shape_; }
    int b() const { return shape_.b; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double& at(int b, int c, int h, int w) { return data_[offset(b, c, h, w)]; }
    double at(int b, int c, int h, int w) const { return data_[offset(b, c, h, w)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor4& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    bool operator==(const Tensor4& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    std::size_t offset(int b, int c, int h, int w) const {
        return static_cast<std::size_t>(((static_cast<std::int64_t>(b) * shape_.c + c) *
                                         shape_.h + h) * shape_.w + w);
    }

    Shape4 shape_;
    std::vector<double> data_;
};

enum class EwKind { add, sub, mul, div };

inline const char* ew_name(EwKind k) {
    switch (k) {
        case EwKind::add: return "add";
        case EwKind::sub: return "sub";
        case EwKind::mul: return "mul";
        case EwKind::div: return "div";
    }
    return "?";
}

namespace detail {

inline double ew_apply(EwKind k, double a, double b) {
    switch (k) {
        case EwKind::add: return a + b;
        case EwKind::sub: return a - b;
        case EwKind::mul: return a * b;
        case EwKind::div: return a / b;
    }
    return 0.0;
}

inline void check_div_operand(EwKind k, double denom) {
    if (k == EwKind::div && denom == 0.0)
        throw ValueError("div: division by zero entry");
}

} // namespace detail

/// How the second operand of an elementwise op lines up with the first.
enum class Broadcast {
    same,           // identical shapes
    per_instance,   // b is (B,C,1,1) against a (B,C,H,W)
};

inline Broadcast broadcast_kind(const Shape4& a, const Shape4& b) {
    if (a == b) return Broadcast::same;
    if (b.b == a.b && b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::per_instance;
    throw ShapeError(std::string("elementwise: incompatible shapes ") + a.str() +
                     " vs " + b.str());
}

/// Entrywise op with optional (B,C,1,1)-over-spatial broadcasting of `b`.
inline Tensor4 elementwise(EwKind k, const Tensor4& a, const Tensor4& b) {
    const Broadcast bc = broadcast_kind(a.shape(), b.shape());
    Tensor4 out(a.shape());
    const std::int64_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    if (bc == Broadcast::same) {
        if (k == EwKind::div)
            for (std::int64_t i = 0; i < n; ++i) detail::check_div_operand(k, pb[i]);
        for (std::int64_t i = 0; i < n; ++i) po[i] = detail::ew_apply(k, pa[i], pb[i]);
    } else {
        const std::int64_t spatial = static_cast<std::int64_t>(a.h()) * a.w();
        const std::int64_t planes = static_cast<std::int64_t>(a.b()) * a.c();
        for (std::int64_t p = 0; p < planes; ++p) {
            const double bv = pb[p];
            detail::check_div_operand(k, bv);
            const double* ra = pa + p * spatial;
            double* ro = po + p * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) ro[i] = detail::ew_apply(k, ra[i], bv);
        }
    }
    return out;
}

inline Tensor4 elementwise(EwKind k, const Tensor4& a, double s) {
    detail::check_div_operand(k, s);
    Tensor4 out(a.shape());
    const std::int64_t n = a.size();
    const double* pa = a.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = detail::ew_apply(k, pa[i], s);
    return out;
}

/// Per-(instance, channel) mean and population variance (divisor H*W) over
/// the spatial dimensions. Returned as (B,C,1,1) tensors.
inline std::pair<Tensor4, Tensor4> reduce_spatial_moments(const Tensor4& x) {
    const std::int64_t spatial = static_cast<std::int64_t>(x.h()) * x.w();
    if (spatial == 0)
        throw ShapeError("reduce_spatial_moments: empty spatial extent in " + x.shape().str());
    Tensor4 mean(x.b(), x.c(), 1, 1);
    Tensor4 var(x.b(), x.c(), 1, 1);
    const std::int64_t planes = static_cast<std::int64_t>(x.b()) * x.c();
    const double* px = x.data();
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* row = px + p * spatial;
        double s = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) s += row[i];
        const double m = s / static_cast<double>(spatial);
        double sq = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) {
            const double d = row[i] - m;
            sq += d * d;
        }
        mean[p] = m;
        var[p] = sq / static_cast<double>(spatial);
    }
    return {std::move(mean), std::move(var)};
}

} // namespace stylemix
