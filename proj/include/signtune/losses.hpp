#pragma once

// Training objectives and their analytic gradients. Every loss is templated
// on the scalar type: training runs in float, gradient checks in double.

#include <cmath>
#include <span>
#include <vector>

#include "signtune/error.hpp"
#include "signtune/model.hpp"
#include "signtune/parameter_set.hpp"

namespace signtune {

template <class S>
struct ContrastiveLoss {
    S value;
    Matrix<S> d_image;  // dL/d(image embeddings)
    Matrix<S> d_text;   // dL/d(text embeddings)
    S d_scale;          // dL/d(scale)
};

template <class S>
struct ClassifierLoss {
    S value;
    Matrix<S> d_features;
    Matrix<S> d_weight;
};

template <class S>
struct AnchoredLoss {
    S value;
    S penalty;
    Matrix<S> d_features;
    Matrix<S> d_weight;
    BasicParameterSet<S> d_theta;
};

namespace detail {

template <class S>
S normalization_tolerance() {
    return std::is_same_v<S, float> ? S(1e-3) : S(1e-6);
}

template <class S>
void require_unit_rows(const Matrix<S>& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).norm() - S(1)) > normalization_tolerance<S>()) {
            throw NormalizationError(std::string(what) + ": row " + std::to_string(i) + " is not unit-normalised");
        }
    }
}

// Row-wise log-softmax.
template <class S>
Matrix<S> log_softmax_rows(const Matrix<S>& logits) {
    Matrix<S> out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const S m = logits.row(i).maxCoeff();
        const S lse = m + std::log((logits.row(i).array() - m).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

}  // namespace detail

/// Symmetric cross-entropy over the N x N matrix scale * Z T^T, with pair i
/// matching caption i: mean of the image-to-text and text-to-image terms.
template <class S>
ContrastiveLoss<S> contrastive_loss(const Matrix<S>& image_embs, const Matrix<S>& text_embs, S scale) {
    const auto n = image_embs.rows();
    if (n < 2) throw BatchSizeError("contrastive_loss: need at least 2 pairs, got " + std::to_string(n));
    if (text_embs.rows() != n || text_embs.cols() != image_embs.cols()) {
        throw AlignmentError("contrastive_loss: image and text batches differ in shape");
    }
    detail::require_unit_rows(image_embs, "contrastive_loss image");
    detail::require_unit_rows(text_embs, "contrastive_loss text");

    const Matrix<S> sims = image_embs * text_embs.transpose();
    const Matrix<S> logits = scale * sims;
    const Matrix<S> lp_i2t = detail::log_softmax_rows<S>(logits);
    const Matrix<S> lp_t2i = detail::log_softmax_rows<S>(logits.transpose());

    S loss_i2t = 0, loss_t2i = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        loss_i2t -= lp_i2t(i, i);
        loss_t2i -= lp_t2i(i, i);
    }
    const S inv_n = S(1) / static_cast<S>(n);
    const S value = S(0.5) * (loss_i2t + loss_t2i) * inv_n;

    // dL/dlogits = ((P_row - I) + (P_col - I)^T) / 2N
    Matrix<S> g = lp_i2t.array().exp().matrix() + Matrix<S>(lp_t2i.array().exp().matrix().transpose());
    g.diagonal().array() -= S(2);
    g *= S(0.5) * inv_n;

    return {value, scale * g * text_embs, scale * g.transpose() * image_embs, (g.array() * sims.array()).sum()};
}

/// Mean cross-entropy of softmax(W z_i) against y_i.
template <class S>
ClassifierLoss<S> lp_loss(const Matrix<S>& features, std::span<const int> labels, const Matrix<S>& weight) {
    const auto n = features.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw AlignmentError("lp_loss: label count differs from batch size");
    if (n == 0) throw BatchSizeError("lp_loss: empty batch");
    if (features.cols() != weight.cols()) throw AlignmentError("lp_loss: feature and classifier widths differ");
    const auto classes = weight.rows();
    for (const int y : labels) {
        if (y < 0 || y >= classes) throw LabelError("lp_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const Matrix<S> logp = detail::log_softmax_rows<S>(Matrix<S>(features * weight.transpose()));
    S value = 0;
    Matrix<S> g = logp.array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto y = labels[static_cast<std::size_t>(i)];
        value -= logp(i, y);
        g(i, y) -= S(1);
    }
    const S inv_n = S(1) / static_cast<S>(n);
    g *= inv_n;
    return {value * inv_n, g * weight, g.transpose() * features};
}

/// Classifier cross-entropy plus lambda * ||theta - theta0||^2.
template <class S>
AnchoredLoss<S> fft_loss(const Matrix<S>& features, std::span<const int> labels, const Matrix<S>& weight,
                         const BasicParameterSet<S>& theta, const BasicParameterSet<S>& theta0, double lambda) {
    if (!(lambda >= 0.0)) throw RangeError("fft_loss: lambda must be >= 0");
    auto ce = lp_loss(features, labels, weight);
    const double dist = squared_distance(theta, theta0);
    const S penalty = static_cast<S>(lambda * dist);
    auto d_theta = scaled(add_scaled(theta, -1.0, theta0), 2.0 * lambda);
    return {ce.value + penalty, penalty, std::move(ce.d_features), std::move(ce.d_weight), std::move(d_theta)};
}

}  // namespace signtune
