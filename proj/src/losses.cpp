#include "nowcast/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nowcast/errors.hpp"

namespace nowcast::loss {

namespace {

void require_same_size(const char* what, std::size_t a, std::size_t b) {
    if (a != b)
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(what) + ": " + std::to_string(a) + " targets vs " + std::to_string(b) + " predictions");
}

double checked_score(double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::DomainError, "score " + std::to_string(s) + " outside (0,1)");
    return std::clamp(s, kLogEps, 1.0 - kLogEps);
}

// Sum over pixels of w * |e| or w * e^2, with w fixed per pixel.
Var weighted_error_sum(Var pred, Tensor w, const Tensor& target, bool squared) {
    const Tensor& p = pred.value();
    if (!(p.shape == target.shape))
        throw Error(ErrorKind::ShapeMismatch, "loss: prediction " + p.shape.str() + " vs target " + target.shape.str());
    Tensor y(ad::Shape{1, 1, 1, 1});
    Tensor d(p.shape);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - target[i];
        if (squared) {
            y[0] += w[i] * e * e;
            d[i] = 2.0 * w[i] * e;
        } else {
            y[0] += w[i] * std::abs(e);
            d[i] = e > 0 ? w[i] : (e < 0 ? -w[i] : 0.0);
        }
    }
    const Var parents[] = {pred};
    return pred.graph->make(std::move(y), parents, [pred, d = std::move(d)](ad::Graph& g, int self) {
        if (!g.requires_grad(pred.id)) return;
        const double gy = g.grad(self)[0];
        Tensor& gp = g.grad(pred.id);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gy * d[i];
    });
}

template <typename WeightFn>
Var masked_loss(const char* what, std::span<const Var> preds, std::span<const Tensor> targets, bool squared,
                WeightFn wfn) {
    require_same_size(what, targets.size(), preds.size());
    if (preds.empty()) throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": no hours");
    Var total;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        Tensor w(targets[t].shape);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = wfn(targets[t][i]);
        const Var part = weighted_error_sum(preds[t], std::move(w), targets[t], squared);
        total = total.valid() ? ad::add(total, part) : part;
    }
    // per-sample 1/(T*H*W), then the batch mean
    return ad::scale(total, 1.0 / (static_cast<double>(preds.size()) * static_cast<double>(targets[0].size())));
}

}  // namespace

void validate(const LossSpec& spec) {
    if (!(spec.w_adv >= 0.0 && spec.w_adv < 1.0))
        throw Error(ErrorKind::DomainError, "w_adv must be in [0,1), got " + std::to_string(spec.w_adv));
    if (!(spec.w_bal >= 0.0 && spec.w_bal < 1.0))
        throw Error(ErrorKind::DomainError, "w_bal must be in [0,1), got " + std::to_string(spec.w_bal));
    if (!std::isfinite(spec.threshold)) throw Error(ErrorKind::DomainError, "threshold must be finite");
    if (spec.use_adv && spec.use_bal && spec.w_adv > 0.0 && spec.w_bal > 0.0)
        throw Error(ErrorKind::ConflictingSpec, "adversarial and balanced terms cannot be combined");
}

double weight(double x, double th) {
    if (x < th) return 0.0;
    if (x < 2.0) return 1.0;
    if (x < 5.0) return 2.0;
    if (x < 10.0) return 5.0;
    if (x < 30.0) return 10.0;
    return 30.0;
}

double wmae(std::span<const double> y, std::span<const double> yhat, double th) {
    require_same_size("wmae", y.size(), yhat.size());
    if (y.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weight(y[i], th) * std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

double wmse(std::span<const double> y, std::span<const double> yhat, double th) {
    require_same_size("wmse", y.size(), yhat.size());
    if (y.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weight(y[i], th) * (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

double balanced_loss(std::span<const double> y, std::span<const double> yhat) {
    require_same_size("balanced_loss", y.size(), yhat.size());
    if (y.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < kBalancedThreshold) s += std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

double d_loss(std::span<const double> real_scores, std::span<const double> fake_scores) {
    require_same_size("d_loss", real_scores.size(), fake_scores.size());
    double s = 0.0;
    for (std::size_t t = 0; t < real_scores.size(); ++t)
        s += std::log(checked_score(real_scores[t])) + std::log(1.0 - checked_score(fake_scores[t]));
    return -s;
}

double g_adv_loss(std::span<const double> fake_scores) {
    double s = 0.0;
    for (double f : fake_scores) s += std::log(checked_score(f));
    return -s;
}

double combine(const LossSpec& spec, double l_pred, double l_bal, double l_gd) {
    validate(spec);
    if (spec.use_adv) return (1.0 - spec.w_adv) * l_pred + spec.w_adv * l_gd;
    if (spec.use_bal) return (1.0 - spec.w_bal) * l_pred + spec.w_bal * l_bal;
    return l_pred;
}

double composite_loss(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat,
                      std::span<const double> fake_scores) {
    validate(spec);
    const double l_pred = spec.base == BaseLoss::WMAE ? wmae(y, yhat, spec.threshold) : wmse(y, yhat, spec.threshold);
    const double l_bal = spec.use_bal ? balanced_loss(y, yhat) : 0.0;
    const double l_gd = spec.use_adv ? g_adv_loss(fake_scores) : 0.0;
    return combine(spec, l_pred, l_bal, l_gd);
}

Var wmae(std::span<const Var> preds, std::span<const Tensor> targets, double th) {
    return masked_loss("wmae", preds, targets, false, [th](double y) { return weight(y, th); });
}

Var wmse(std::span<const Var> preds, std::span<const Tensor> targets, double th) {
    return masked_loss("wmse", preds, targets, true, [th](double y) { return weight(y, th); });
}

Var balanced_loss(std::span<const Var> preds, std::span<const Tensor> targets) {
    return masked_loss("balanced_loss", preds, targets, false,
                       [](double y) { return y < kBalancedThreshold ? 1.0 : 0.0; });
}

Var prediction_loss(const LossSpec& spec, std::span<const Var> preds, std::span<const Tensor> targets) {
    return spec.base == BaseLoss::WMAE ? wmae(preds, targets, spec.threshold) : wmse(preds, targets, spec.threshold);
}

Var log_clamped(Var a) {
    const Tensor& x = a.value();
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(checked_score(x[i]));
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a](ad::Graph& g, int self) {
        if (!g.requires_grad(a.id)) return;
        const Tensor& gy = g.grad(self);
        const Tensor& x = g.value(a.id);
        Tensor& gx = g.grad(a.id);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (x[i] > kLogEps && x[i] < 1.0 - kLogEps) gx[i] += gy[i] / x[i];
    });
}

Var d_loss(std::span<const Var> real_scores, std::span<const Var> fake_scores) {
    require_same_size("d_loss", real_scores.size(), fake_scores.size());
    if (real_scores.empty()) throw Error(ErrorKind::ShapeMismatch, "d_loss: no hours");
    Var total;
    for (std::size_t t = 0; t < real_scores.size(); ++t) {
        const Var part = ad::add(log_clamped(real_scores[t]), log_clamped(ad::one_minus(fake_scores[t])));
        total = total.valid() ? ad::add(total, part) : part;
    }
    return ad::scale(ad::mean(total), -1.0);
}

Var g_adv_loss(std::span<const Var> fake_scores) {
    if (fake_scores.empty()) throw Error(ErrorKind::ShapeMismatch, "g_adv_loss: no hours");
    Var total;
    for (const Var& f : fake_scores) {
        const Var part = log_clamped(f);
        total = total.valid() ? ad::add(total, part) : part;
    }
    return ad::scale(ad::mean(total), -1.0);
}

Var combine(const LossSpec& spec, Var l_pred, Var l_bal, Var l_gd) {
    validate(spec);
    if (spec.use_adv) {
        if (!l_gd.valid()) throw Error(ErrorKind::ConflictingSpec, "adversarial spec without a generator term");
        return ad::add(ad::scale(l_pred, 1.0 - spec.w_adv), ad::scale(l_gd, spec.w_adv));
    }
    if (spec.use_bal) {
        if (!l_bal.valid()) throw Error(ErrorKind::ConflictingSpec, "balanced spec without a balanced term");
        return ad::add(ad::scale(l_pred, 1.0 - spec.w_bal), ad::scale(l_bal, spec.w_bal));
    }
    return l_pred;
}

Var binary_cross_entropy(std::span<const Var> probs, std::span<const Tensor> targets) {
    require_same_size("binary_cross_entropy", targets.size(), probs.size());
    if (probs.empty()) throw Error(ErrorKind::ShapeMismatch, "binary_cross_entropy: no hours");
    Var total;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        const Tensor& y = targets[t];
        if (!(y.shape == probs[t].shape()))
            throw Error(ErrorKind::ShapeMismatch, "binary_cross_entropy: shape " + y.shape.str());
        Tensor label(y.shape), inv(y.shape);
        for (std::size_t i = 0; i < y.size(); ++i) {
            label[i] = y[i] > kBalancedThreshold ? 1.0 : 0.0;
            inv[i] = 1.0 - label[i];
        }
        ad::Graph& g = *probs[t].graph;
        const Var part = ad::add(ad::mul(g.constant(std::move(label)), log_clamped(probs[t])),
                                 ad::mul(g.constant(std::move(inv)), log_clamped(ad::one_minus(probs[t]))));
        const Var s = ad::sum(part);
        total = total.valid() ? ad::add(total, s) : s;
    }
    return ad::scale(total, -1.0 / (static_cast<double>(probs.size()) * static_cast<double>(targets[0].size())));
}

}  // namespace nowcast::loss
