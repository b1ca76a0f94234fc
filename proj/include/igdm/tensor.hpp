#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace igdm {

// Dense row-major f64 tensor.  Rank 0 (empty shape, one element) is the
// scalar; rank 1 a vector; rank 2 a matrix.  Internal arithmetic constructs
// tensors unchecked; data arriving from outside (files, configs) goes through
// checked() which rejects non-finite values.
class tensor {
  public:
    tensor() : shape_(), data_(1, 0.0) {}

    tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("tensor: data size " + std::to_string(data_.size()) +
                                        " does not match shape product " +
                                        std::to_string(count(shape_)));
        }
    }

    static tensor checked(std::vector<std::size_t> shape, std::vector<double> data) {
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("tensor: zero dimension in shape");
        }
        for (double v : data) {
            if (!std::isfinite(v)) throw std::invalid_argument("tensor: non-finite value rejected");
        }
        return tensor(std::move(shape), std::move(data));
    }

    static tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = count(shape);
        return tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static tensor scalar(double v) { return tensor({}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool is_scalar() const { return shape_.empty(); }

    double item() const {
        if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
        return data_[0];
    }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // Matrix element access for rank-2 tensors.
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const tensor& other) const { return shape_ == other.shape_; }

  private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void check_same_shape(const tensor& a, const tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

// All reductions in this library run in flat index order, left to right, so
// results are bit-reproducible.
inline double l2_norm(const tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

inline double l1_norm(const tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) s += std::fabs(t[i]);
    return s;
}

inline double linf_norm(const tensor& t) {
    double m = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::fabs(t[i]));
    return m;
}

inline double dot(const tensor& a, const tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

inline tensor sub(const tensor& a, const tensor& b) {
    check_same_shape(a, b, "sub");
    tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

inline tensor add(const tensor& a, const tensor& b) {
    check_same_shape(a, b, "add");
    tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

inline tensor scaled(const tensor& a, double c) {
    tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return out;
}

inline void axpy(double c, const tensor& x, tensor& acc) {
    check_same_shape(x, acc, "axpy");
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += c * x[i];
}

inline double sigmoid(double v) {
    if (v >= 0.0) {
        double e = std::exp(-v);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(v);
    return e / (1.0 + e);
}

// max(v, 0) + log1p(exp(-|v|)) avoids overflow on both tails.
inline double softplus_stable(double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
}

// Max-shifted log(sum(exp(x))) over all elements, flat order.
inline double logsumexp_flat(const tensor& x) {
    double m = x[0];
    for (std::size_t i = 1; i < x.numel(); ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

inline tensor softmax_flat(const tensor& x) {
    double m = x[0];
    for (std::size_t i = 1; i < x.numel(); ++i) m = std::max(m, x[i]);
    tensor out = x;
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = std::exp(out[i] - m);
        s += out[i];
    }
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= s;
    return out;
}

inline bool bit_equal(const tensor& a, const tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        // Bit-level comparison: distinguishes -0.0 from 0.0 and treats equal
        // NaN payloads as equal, which memcmp-style reproducibility wants.
        if (!(a[i] == b[i]) && !(std::isnan(a[i]) && std::isnan(b[i]))) return false;
        if (a[i] == 0.0 && b[i] == 0.0 && std::signbit(a[i]) != std::signbit(b[i])) return false;
    }
    return true;
}

}  // namespace igdm
