#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vdt/autograd.hpp"
#include "vdt/rng.hpp"
#include "vdt/tensor.hpp"

namespace vdt::diffusion {

/// Variance schedule and everything derived from it. Arrays are indexed by
/// t-1 for t in [1,T]; alpha_bar is the running product of (1-beta).
struct DiffusionSchedule {
    int64_t T = 0;
    std::vector<double> beta, alpha, alpha_bar, sigma;

    double beta_t(int64_t t) const { return beta[check(t)]; }
    double alpha_t(int64_t t) const { return alpha[check(t)]; }
    double alpha_bar_t(int64_t t) const { return alpha_bar[check(t)]; }
    double sigma_t(int64_t t) const { return sigma[check(t)]; }

private:
    size_t check(int64_t t) const {
        if (t < 1 || t > T) throw DimError("DiffusionSchedule: t out of [1,T]");
        return static_cast<size_t>(t - 1);
    }
};

/// Linear schedule: beta interpolates 1e-4 -> 0.02 across T steps.
DiffusionSchedule make_schedule(int64_t T, const std::string& kind = "linear");

/// z_t = sqrt(1-beta_t) z_{t-1} + sqrt(beta_t) * noise
Tensor q_step(const Tensor& z_prev, int64_t t, const Tensor& noise,
              const DiffusionSchedule& sched);
/// Closed-form marginal: z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) * noise
Tensor q_sample(const Tensor& z0, int64_t t, const Tensor& noise, const DiffusionSchedule& sched);
/// One reverse step; rng==nullptr (or t==1) means deterministic (sigma=0).
Tensor p_step(const Tensor& z_t, int64_t t, const Tensor& eps_pred,
              const DiffusionSchedule& sched, Rng* rng);

/// Noise-prediction model hook for sampling: (z_t, t) -> eps_hat.
using EpsFn = std::function<Tensor(const Tensor& z_t, int64_t t)>;

enum class SampleMode { Ancestral, Deterministic };

/// Full T-step reverse loop from seeded Gaussian noise of the given shape.
Tensor sample_loop(const EpsFn& model, const std::vector<int64_t>& shape,
                   const DiffusionSchedule& sched, Rng& rng, SampleMode mode);

/// Training-model hook: given z_t and t, return the eps prediction on the
/// tape so gradients flow to the caller's parameters.
using EpsVarFn = std::function<ag::Var(ag::Tape* tape, const Tensor& z_t, int64_t t)>;

/// Draws t ~ U[1,T] and eps ~ N(0,I), forms z_t = q_sample(z0,t,eps) and
/// returns mse(model(z_t,t), eps) on the tape.
ag::Var training_loss(ag::Tape* tape, const EpsVarFn& model, const Tensor& z0,
                      const DiffusionSchedule& sched, Rng& rng);

/// Same with a fixed (t, eps) pair; used by gradient checks.
ag::Var training_loss_at(ag::Tape* tape, const EpsVarFn& model, const Tensor& z0, int64_t t,
                         const Tensor& eps, const DiffusionSchedule& sched);

}  // namespace vdt::diffusion
