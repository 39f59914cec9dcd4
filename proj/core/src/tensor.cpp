#include "relcot/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace relcot::nn {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape is empty");
    std::size_t n = 1;
    for (std::size_t dim : shape) {
        if (dim == 0) throw std::invalid_argument("tensor shape has a zero dimension");
        n *= dim;
    }
    return n;
}

void require_2d(const Tensor& t, const char* what) {
    if (t.shape.size() != 2) {
        throw std::invalid_argument(std::string(what) + ": expected a 2-D tensor, got rank " +
                                    std::to_string(t.shape.size()));
    }
}

void require_shape(const Tensor& c, std::size_t rows, std::size_t cols, const char* what) {
    if (c.shape.size() != 2 || c.shape[0] != rows || c.shape[1] != cols) {
        throw std::invalid_argument(std::string(what) + ": output tensor has the wrong shape");
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    const std::size_t n = shape_product(shape);
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : t.data) v = value;
    return t;
}

std::size_t Tensor::rows() const {
    require_2d(*this, "rows");
    return shape[0];
}

std::size_t Tensor::cols() const {
    require_2d(*this, "cols");
    return shape[1];
}

void add_matmul(Tensor& c, const Tensor& a, const Tensor& b, double scale) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.shape[1]) +
                                    " and " + std::to_string(b.shape[0]) + " differ");
    }
    const std::size_t n = a.shape[0], m = a.shape[1], p = b.shape[1];
    require_shape(c, n, p, "matmul");
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = &c.data[i * p];
        const double* arow = &a.data[i * m];
        for (std::size_t t = 0; t < m; ++t) {
            const double av = scale * arow[t];
            if (av == 0.0) continue;
            const double* brow = &b.data[t * p];
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b, double scale) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a.shape[1] != b.shape[1]) {
        throw std::invalid_argument("matmul_nt: inner dimensions " + std::to_string(a.shape[1]) +
                                    " and " + std::to_string(b.shape[1]) + " differ");
    }
    const std::size_t n = a.shape[0], m = a.shape[1], p = b.shape[0];
    require_shape(c, n, p, "matmul_nt");
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = &a.data[i * m];
        double* crow = &c.data[i * p];
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = &b.data[j * m];
            double sum = 0.0;
            for (std::size_t t = 0; t < m; ++t) sum += arow[t] * brow[t];
            crow[j] += scale * sum;
        }
    }
}

void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b, double scale) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    if (a.shape[0] != b.shape[0]) {
        throw std::invalid_argument("matmul_tn: inner dimensions " + std::to_string(a.shape[0]) +
                                    " and " + std::to_string(b.shape[0]) + " differ");
    }
    const std::size_t m = a.shape[0], n = a.shape[1], p = b.shape[1];
    require_shape(c, n, p, "matmul_tn");
    for (std::size_t t = 0; t < m; ++t) {
        const double* arow = &a.data[t * n];
        const double* brow = &b.data[t * p];
        for (std::size_t i = 0; i < n; ++i) {
            const double av = scale * arow[i];
            if (av == 0.0) continue;
            double* crow = &c.data[i * p];
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    Tensor c = Tensor::zeros({a.shape[0], b.shape[1]});
    add_matmul(c, a, b);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    Tensor c = Tensor::zeros({a.shape[0], b.shape[0]});
    add_matmul_nt(c, a, b);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    Tensor c = Tensor::zeros({a.shape[1], b.shape[1]});
    add_matmul_tn(c, a, b);
    return c;
}

void check_finite(const Tensor& t, const std::string& context) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw std::runtime_error(context + ": non-finite value at flat index " +
                                     std::to_string(i));
        }
    }
}

std::size_t Rng::bounded(std::size_t n) {
    if (n == 0) throw std::invalid_argument("bounded: n must be positive");
    return static_cast<std::size_t>(engine_() % n);
}

}  // namespace relcot::nn
