#pragma once

#include <span>
#include <string>

#include "nowcast/autodiff.hpp"

namespace nowcast::loss {

enum class BaseLoss { WMAE, WMSE };

struct LossSpec {
    BaseLoss base = BaseLoss::WMAE;
    double threshold = 0.5;  // mm/hr
    bool use_bal = false;
    double w_bal = 0.01;
    bool use_adv = false;
    double w_adv = 0.05;

    friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// DomainError for weights outside [0,1); ConflictingSpec when both mixing
/// terms are active with nonzero weight.
void validate(const LossSpec& spec);

inline constexpr double kLogEps = 1e-7;
/// Targets below this (mm/hr) are the dry pixels the balanced term looks at.
inline constexpr double kBalancedThreshold = 0.5;

double weight(double x, double th);

// Value forms over flattened T x H x W arrays (mm/hr). The normalizer is the
// element count.
double wmae(std::span<const double> y, std::span<const double> yhat, double th);
double wmse(std::span<const double> y, std::span<const double> yhat, double th);
double balanced_loss(std::span<const double> y, std::span<const double> yhat);
/// Scores are one per hour.
double d_loss(std::span<const double> real_scores, std::span<const double> fake_scores);
double g_adv_loss(std::span<const double> fake_scores);
/// Mixes precomputed terms according to the spec.
double combine(const LossSpec& spec, double l_pred, double l_bal, double l_gd);
double composite_loss(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat,
                      std::span<const double> fake_scores);

// Differentiable forms. Each hour is a {N,1,H,W} prediction; the result is
// the per-sample loss averaged over the batch. Targets never get gradient.
using ad::Tensor;
using ad::Var;

Var wmae(std::span<const Var> preds, std::span<const Tensor> targets, double th);
Var wmse(std::span<const Var> preds, std::span<const Tensor> targets, double th);
Var balanced_loss(std::span<const Var> preds, std::span<const Tensor> targets);
/// Prediction term selected by spec.base.
Var prediction_loss(const LossSpec& spec, std::span<const Var> preds, std::span<const Tensor> targets);
/// Scores are {N,1,1,1} per hour.
Var d_loss(std::span<const Var> real_scores, std::span<const Var> fake_scores);
Var g_adv_loss(std::span<const Var> fake_scores);
/// l_bal / l_gd may be invalid Vars when the spec does not use them.
Var combine(const LossSpec& spec, Var l_pred, Var l_bal, Var l_gd);
/// Pixelwise cross-entropy of probabilities against rain/no-rain labels
/// (target > 0.5 mm/hr is rain).
Var binary_cross_entropy(std::span<const Var> probs, std::span<const Tensor> targets);

/// log(clamp(x, eps, 1-eps)); gradient is zero where the clamp is active.
Var log_clamped(Var a);

}  // namespace nowcast::loss
