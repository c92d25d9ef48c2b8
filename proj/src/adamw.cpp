// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/adamw.hpp"

#include <cmath>

#include "visii/errors.hpp"

namespace visii {

AdamW::AdamW(AdamWConfig config, Eigen::Index rows, Eigen::Index cols)
    : m_config(config), m_first(Matrix::Zero(rows, cols)), m_second(Matrix::Zero(rows, cols)) {
    VISII_CHECK(config.learning_rate >= 0 && config.weight_decay >= 0 && config.epsilon > 0 && config.beta1 >= 0 &&
                    config.beta1 < 1 && config.beta2 >= 0 && config.beta2 < 1,
                ErrorCode::invalid_argument, "invalid AdamW hyperparameters");
}

void AdamW::step(Eigen::Ref<Matrix> params, const Eigen::Ref<const Matrix>& grad) {
    VISII_CHECK(params.rows() == m_first.rows() && params.cols() == m_first.cols() && grad.rows() == params.rows() &&
                    grad.cols() == params.cols(),
                ErrorCode::shape_mismatch, "optimizer state is ", m_first.rows(), "x", m_first.cols(), ", got ",
                params.rows(), "x", params.cols());
    ++m_steps;
    const auto lr = static_cast<float>(m_config.learning_rate);
    const auto b1 = static_cast<float>(m_config.beta1);
    const auto b2 = static_cast<float>(m_config.beta2);
    const auto eps = static_cast<float>(m_config.epsilon);
    const auto correction1 = static_cast<float>(1.0 - std::pow(m_config.beta1, m_steps));
    const auto root_correction2 = static_cast<float>(std::sqrt(1.0 - std::pow(m_config.beta2, m_steps)));
    const float step_size = lr / correction1;

    params *= 1.0f - lr * static_cast<float>(m_config.weight_decay);
    m_first = b1 * m_first + (1.0f - b1) * grad;
    m_second = b2 * m_second + (1.0f - b2) * grad.cwiseProduct(grad);
    const Matrix denom = (m_second.array().sqrt() / root_correction2 + eps).matrix();
    params.array() -= step_size * m_first.array() / denom.array();
}

}  // namespace visii
