#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "signtune/error.hpp"

namespace signtune {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

/// Dense row-major array. An empty shape denotes a scalar.
template <class Scalar>
struct Tensor {
    Shape shape;
    std::vector<Scalar> values;

    Tensor() = default;
    Tensor(Shape s, std::vector<Scalar> v) : shape(std::move(s)), values(std::move(v)) {}

    static Tensor zeros(Shape s) {
        const auto n = element_count(s);
        return Tensor(std::move(s), std::vector<Scalar>(n, Scalar(0)));
    }
    static Tensor scalar(Scalar v) { return Tensor({}, {v}); }

    std::size_t size() const noexcept { return values.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 1 : shape.front(); }
    std::size_t cols() const noexcept { return shape.empty() ? 1 : values.size() / std::max<std::size_t>(1, shape.front()); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered, immutable collection of named arrays: the model weights that
/// fine-tuning updates and ensembling interpolates.
///
/// Names are unique and nonempty, every value is finite, and each array's
/// value count matches its shape. A set is never edited in place; algebra
/// below builds new sets.
template <class Scalar>
class BasicParameterSet {
public:
    using scalar_type = Scalar;
    using tensor_type = Tensor<Scalar>;
    using map_type = std::map<std::string, tensor_type, std::less<>>;

    BasicParameterSet() = default;

    explicit BasicParameterSet(map_type entries) : entries_(std::move(entries)) {
        for (const auto& [name, t] : entries_) {
            if (name.empty()) throw ConfigError("parameter set: empty parameter name");
            if (t.values.size() != signtune::element_count(t.shape)) {
                throw ConfigError("parameter set: '" + name + "' has " + std::to_string(t.values.size()) +
                                  " values for shape " + shape_string(t.shape));
            }
            for (const auto v : t.values) {
                if (!std::isfinite(static_cast<double>(v))) {
                    throw ValidityError("parameter set: non-finite value in '" + name + "'");
                }
            }
        }
    }

    const tensor_type& at(std::string_view name) const {
        const auto it = entries_.find(name);
        if (it == entries_.end()) throw AlignmentError("parameter set: no parameter named '" + std::string(name) + "'");
        return it->second;
    }

    bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    const map_type& entries() const noexcept { return entries_; }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.size();
        return n;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : entries_) out.push_back(name);
        return out;
    }

    /// Copy with a subset of arrays replaced; replacements must keep shapes.
    BasicParameterSet with(const map_type& replacements) const {
        auto copy = entries_;
        for (const auto& [name, t] : replacements) {
            const auto it = copy.find(name);
            if (it == copy.end()) throw AlignmentError("parameter set: no parameter named '" + name + "'");
            if (it->second.shape != t.shape) {
                throw AlignmentError("parameter set: shape mismatch replacing '" + name + "'");
            }
            it->second = t;
        }
        return BasicParameterSet(std::move(copy));
    }

    friend bool operator==(const BasicParameterSet&, const BasicParameterSet&) = default;

private:
    map_type entries_;
};

using ParameterSet = BasicParameterSet<float>;

/// Throws AlignmentError naming the first parameter whose name or shape differs.
template <class A, class B>
void require_aligned(const BasicParameterSet<A>& a, const BasicParameterSet<B>& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
        if (ia->first != ib->first) {
            throw AlignmentError("misaligned parameter sets: '" + std::min(ia->first, ib->first) +
                                 "' is present in only one set");
        }
        if (ia->second.shape != ib->second.shape) {
            throw AlignmentError("misaligned parameter sets: '" + ia->first + "' has shape " +
                                 shape_string(ia->second.shape) + " vs " + shape_string(ib->second.shape));
        }
    }
    if (ia != a.end()) throw AlignmentError("misaligned parameter sets: '" + ia->first + "' is present in only one set");
    if (ib != b.end()) throw AlignmentError("misaligned parameter sets: '" + ib->first + "' is present in only one set");
}

template <class A, class B>
bool aligned(const BasicParameterSet<A>& a, const BasicParameterSet<B>& b) {
    try {
        require_aligned(a, b);
        return true;
    } catch (const AlignmentError&) {
        return false;
    }
}

/// Elementwise w·anchor + (1−w)·moving over every named array.
///
/// w = 1 and w = 0 return exact copies of anchor and moving. Otherwise the
/// blend is evaluated in double and rounded once, so interpolate(x, x, w) == x.
template <class Scalar>
BasicParameterSet<Scalar> interpolate(const BasicParameterSet<Scalar>& anchor, const BasicParameterSet<Scalar>& moving,
                                      double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw RangeError("interpolate: weight " + std::to_string(w) + " outside [0, 1]");
    require_aligned(anchor, moving);
    if (w == 1.0) return anchor;
    if (w == 0.0) return moving;
    typename BasicParameterSet<Scalar>::map_type out;
    auto im = moving.begin();
    for (auto ia = anchor.begin(); ia != anchor.end(); ++ia, ++im) {
        const auto& a = ia->second.values;
        const auto& b = im->second.values;
        std::vector<Scalar> v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            v[i] = static_cast<Scalar>(w * static_cast<double>(a[i]) + (1.0 - w) * static_cast<double>(b[i]));
        }
        out.emplace(ia->first, Tensor<Scalar>(ia->second.shape, std::move(v)));
    }
    return BasicParameterSet<Scalar>(std::move(out));
}

/// Σ (a − b)² over every element, accumulated in double.
template <class Scalar>
double squared_distance(const BasicParameterSet<Scalar>& a, const BasicParameterSet<Scalar>& b) {
    require_aligned(a, b);
    double sum = 0.0;
    auto ib = b.begin();
    for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
        const auto& x = ia->second.values;
        const auto& y = ib->second.values;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
            sum += d * d;
        }
    }
    return sum;
}

/// a + s·b, for aligned sets.
template <class Scalar>
BasicParameterSet<Scalar> add_scaled(const BasicParameterSet<Scalar>& a, double s, const BasicParameterSet<Scalar>& b) {
    require_aligned(a, b);
    typename BasicParameterSet<Scalar>::map_type out;
    auto ib = b.begin();
    for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
        std::vector<Scalar> v(ia->second.values);
        const auto& y = ib->second.values;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(v[i] + s * y[i]);
        out.emplace(ia->first, Tensor<Scalar>(ia->second.shape, std::move(v)));
    }
    return BasicParameterSet<Scalar>(std::move(out));
}

/// s·a.
template <class Scalar>
BasicParameterSet<Scalar> scaled(const BasicParameterSet<Scalar>& a, double s) {
    typename BasicParameterSet<Scalar>::map_type out;
    for (const auto& [name, t] : a) {
        std::vector<Scalar> v(t.values);
        for (auto& x : v) x = static_cast<Scalar>(s * x);
        out.emplace(name, Tensor<Scalar>(t.shape, std::move(v)));
    }
    return BasicParameterSet<Scalar>(std::move(out));
}

template <class To, class From>
BasicParameterSet<To> cast_parameters(const BasicParameterSet<From>& in) {
    typename BasicParameterSet<To>::map_type out;
    for (const auto& [name, t] : in) {
        out.emplace(name, Tensor<To>(t.shape, std::vector<To>(t.values.begin(), t.values.end())));
    }
    return BasicParameterSet<To>(std::move(out));
}

/// Subset of a set restricted to names accepted by the predicate.
template <class Scalar, class Pred>
BasicParameterSet<Scalar> filter_parameters(const BasicParameterSet<Scalar>& in, Pred keep) {
    typename BasicParameterSet<Scalar>::map_type out;
    for (const auto& [name, t] : in) {
        if (keep(name)) out.emplace(name, t);
    }
    return BasicParameterSet<Scalar>(std::move(out));
}

}  // namespace signtune
