#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "lewis/errors.hpp"

namespace lewis {

// Dense row-major array of 64-bit floats. product(shape) == values.size() always.
struct NArray {
    std::vector<int> shape;
    std::vector<double> v;

    NArray() = default;
    explicit NArray(std::vector<int> s) : shape(std::move(s)), v(checked_numel(shape), 0.0) {}
    NArray(std::vector<int> s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
        if (checked_numel(shape) != v.size()) {
            throw ConfigError("NArray: shape/value size mismatch");
        }
    }

    static std::size_t checked_numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ConfigError("NArray: non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return v.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    // Length of the last axis; 1 for rank-0 style scalars stored as shape [1].
    int last_dim() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t rows() const { return shape.empty() ? 1 : size() / static_cast<std::size_t>(shape.back()); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    static NArray scalar(double x) { return NArray({1}, {x}); }
    static NArray zeros_like(const NArray& a) { return NArray(a.shape); }
};

inline bool same_shape(const NArray& a, const NArray& b) { return a.shape == b.shape; }

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace lewis
