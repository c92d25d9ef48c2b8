// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace visii {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay (Loshchilov & Hutter), same update order
/// as torch.optim.AdamW: decay, moments, bias-corrected step.
class AdamW {
public:
    using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    AdamW(AdamWConfig config, Eigen::Index rows, Eigen::Index cols);

    void step(Eigen::Ref<Matrix> params, const Eigen::Ref<const Matrix>& grad);

    int steps() const { return m_steps; }

private:
    AdamWConfig m_config;
    Matrix m_first;
    Matrix m_second;
    int m_steps = 0;
};

}  // namespace visii
