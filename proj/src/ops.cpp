// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/ops.hpp"

#include <algorithm>
#include <cmath>

namespace vtclip {

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
    if (x.cols() != w.rows() || b.size() != w.cols()) {
        throw DimensionError("affine: x " + x.shape_string() + ", W " + w.shape_string() +
                             ", b [" + std::to_string(b.size()) + "]");
    }
    Matrix out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += b[j];
        }
    }
    return out;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy) {
    if (dy.rows() != x.rows() || dy.cols() != w.cols() || x.cols() != w.rows()) {
        throw DimensionError("affine_backward: x " + x.shape_string() + ", W " +
                             w.shape_string() + ", dy " + dy.shape_string());
    }
    AffineGrads g;
    g.dx = matmul_nt(dy, w);
    g.dw = matmul_tn(x, dy);
    g.db.assign(dy.cols(), 0.0);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        auto r = dy.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            g.db[j] += r[j];
        }
    }
    return g;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        auto out = y.row(i);
        if (in.empty()) {
            continue;
        }
        const double m = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = std::exp(in[j] - m);
            sum += out[j];
        }
        for (auto& v : out) {
            v /= sum;
        }
    }
    return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    if (y.rows() != dy.rows() || y.cols() != dy.cols()) {
        throw DimensionError("softmax_rows_backward: " + y.shape_string() + " vs " +
                             dy.shape_string());
    }
    Matrix dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto yr = y.row(i);
        auto gr = dy.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < yr.size(); ++j) {
            dot += yr[j] * gr[j];
        }
        auto out = dx.row(i);
        for (std::size_t j = 0; j < yr.size(); ++j) {
            out[j] = yr[j] * (gr[j] - dot);
        }
    }
    return dx;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps, LayerNormCache* cache) {
    const std::size_t d = x.cols();
    if (gamma.size() != d || beta.size() != d || d == 0) {
        throw DimensionError("layer_norm: x " + x.shape_string() + ", gamma [" +
                             std::to_string(gamma.size()) + "], beta [" +
                             std::to_string(beta.size()) + "]");
    }
    Matrix y(x.rows(), d);
    Matrix normalized(x.rows(), d);
    Vector inv_std(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        double mean = 0.0;
        for (double v : r) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(d);
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[i] = s;
        for (std::size_t j = 0; j < d; ++j) {
            const double n = (r[j] - mean) * s;
            normalized(i, j) = n;
            y(i, j) = n * gamma[j] + beta[j];
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, std::span<const double> gamma,
                                   const Matrix& dy) {
    const Matrix& xh = cache.normalized;
    if (dy.rows() != xh.rows() || dy.cols() != xh.cols() || gamma.size() != xh.cols()) {
        throw DimensionError("layer_norm_backward: dy " + dy.shape_string() + " vs cache " +
                             xh.shape_string());
    }
    const std::size_t d = xh.cols();
    const double inv_d = 1.0 / static_cast<double>(d);
    LayerNormGrads g{Matrix(xh.rows(), d), Vector(d, 0.0), Vector(d, 0.0)};
    Vector dxh(d);
    for (std::size_t i = 0; i < xh.rows(); ++i) {
        double sum_dxh = 0.0;
        double sum_dxh_xh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            g.dgamma[j] += dy(i, j) * xh(i, j);
            g.dbeta[j] += dy(i, j);
            dxh[j] = dy(i, j) * gamma[j];
            sum_dxh += dxh[j];
            sum_dxh_xh += dxh[j] * xh(i, j);
        }
        for (std::size_t j = 0; j < d; ++j) {
            g.dx(i, j) =
                cache.inv_std[i] * (dxh[j] - inv_d * sum_dxh - xh(i, j) * inv_d * sum_dxh_xh);
        }
    }
    return g;
}

Matrix relu(const Matrix& x) {
    Matrix y = x;
    for (auto& v : y.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
    if (x.rows() != dy.rows() || x.cols() != dy.cols()) {
        throw DimensionError("relu_backward: " + x.shape_string() + " vs " + dy.shape_string());
    }
    Matrix dx = dy;
    auto xs = x.values();
    auto ds = dx.values();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!(xs[i] > 0.0)) {
            ds[i] = 0.0;
        }
    }
    return dx;
}

}  // namespace vtclip
