#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace relcot::nn {

/// Dense row-major tensor of doubles. Training math stays in double
/// precision so the finite-difference gradient checks can run at 1e-6
/// relative tolerance.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);

    std::size_t size() const { return data.size(); }

    /// 2-D accessors; throw on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool operator==(const Tensor&) const = default;
};

// 2-D products. The _nt/_tn variants take the second/first operand
// transposed (C = A·Bᵀ, C = Aᵀ·B) so every inner loop runs over contiguous
// rows; that keeps desk-scale training in seconds without a BLAS dependency.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Accumulating forms: c += scale·(product). c must be pre-shaped.
void add_matmul(Tensor& c, const Tensor& a, const Tensor& b, double scale = 1.0);
void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b, double scale = 1.0);
void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b, double scale = 1.0);

/// Throws std::runtime_error naming `context` when any element is NaN or
/// infinite.
void check_finite(const Tensor& t, const std::string& context);

/// Deterministic random source. mt19937_64 is bit-exact across platforms and
/// the uniform transform below avoids std::uniform_real_distribution, whose
/// output is implementation-defined; together they make seeded runs
/// reproducible byte-for-byte.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [lo, hi) with 53 random mantissa bits.
    double uniform(double lo, double hi) {
        const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + unit * (hi - lo);
    }

    /// Uniform index in [0, n). n must be positive.
    std::size_t bounded(std::size_t n);

    void fill_uniform(Tensor& t, double lo, double hi) {
        for (double& v : t.data) v = uniform(lo, hi);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace relcot::nn
