#include "vdt/diffusion.hpp"

#include <cmath>

namespace vdt::diffusion {

DiffusionSchedule make_schedule(int64_t T, const std::string& kind) {
    if (T < 1) throw DimError("make_schedule: T >= 1 required");
    if (kind != "linear") throw ConfigError("make_schedule: unknown schedule kind '" + kind + "'");
    DiffusionSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    const double b0 = 1e-4, b1 = 0.02;
    double prod = 1.0;
    for (int64_t i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        s.beta[i] = b0 + (b1 - b0) * frac;
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i] = std::sqrt(s.beta[i]);
    }
    return s;
}

Tensor q_step(const Tensor& z_prev, int64_t t, const Tensor& noise,
              const DiffusionSchedule& sched) {
    if (!z_prev.same_shape(noise)) throw DimError("q_step: noise shape mismatch");
    const double a = std::sqrt(1.0 - sched.beta_t(t));
    const double b = std::sqrt(sched.beta_t(t));
    Tensor out(z_prev.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z_prev[i] + b * noise[i];
    return out;
}

Tensor q_sample(const Tensor& z0, int64_t t, const Tensor& noise, const DiffusionSchedule& sched) {
    if (!z0.same_shape(noise)) throw DimError("q_sample: noise shape mismatch");
    const double ab = sched.alpha_bar_t(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(z0.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * noise[i];
    return out;
}

Tensor p_step(const Tensor& z_t, int64_t t, const Tensor& eps_pred, const DiffusionSchedule& sched,
              Rng* rng) {
    if (!z_t.same_shape(eps_pred)) throw DimError("p_step: eps shape mismatch");
    const double beta = sched.beta_t(t);
    const double ab = sched.alpha_bar_t(t);
    const double coeff = beta / std::sqrt(1.0 - ab);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    Tensor out(z_t.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = inv_sqrt_alpha * (z_t[i] - coeff * eps_pred[i]);
    if (t > 1 && rng != nullptr) {
        const double sig = sched.sigma_t(t);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += sig * rng->normal();
    }
    return out;
}

Tensor sample_loop(const EpsFn& model, const std::vector<int64_t>& shape,
                   const DiffusionSchedule& sched, Rng& rng, SampleMode mode) {
    Tensor z(shape);
    rng.fill_normal(z.data(), z.numel());
    for (int64_t t = sched.T; t >= 1; --t) {
        Tensor eps = model(z, t);
        z = p_step(z, t, eps, sched, mode == SampleMode::Ancestral ? &rng : nullptr);
    }
    return z;
}

ag::Var training_loss(ag::Tape* tape, const EpsVarFn& model, const Tensor& z0,
                      const DiffusionSchedule& sched, Rng& rng) {
    const int64_t t = rng.uniform_int(1, sched.T);
    Tensor eps(z0.shape());
    rng.fill_normal(eps.data(), eps.numel());
    return training_loss_at(tape, model, z0, t, eps, sched);
}

ag::Var training_loss_at(ag::Tape* tape, const EpsVarFn& model, const Tensor& z0, int64_t t,
                         const Tensor& eps, const DiffusionSchedule& sched) {
    Tensor z_t = q_sample(z0, t, eps, sched);
    ag::Var pred = model(tape, z_t, t);
    return ag::mse(tape, pred, ag::constant(eps));
}

}  // namespace vdt::diffusion
