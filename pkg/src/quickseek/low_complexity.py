"""Low-complexity mixed search: CUSUM on sums of pairs, then an SPRT on one
member of the selected pair.

Scanning runs the walk on ``log g1/g0`` (the worst-case ratio between one and
no active member) with thresholds 0 and ``log B_s``.  Refinement observes s1
and runs an SPRT on ``log f1/f0`` between ``log A_r`` and ``log B_r``; the upper
exit claims s1 and the lower exit claims s2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .models import ModelPair, ObservationStream, kl_divergence
from .records import DEFAULT_MAX_SAMPLES, TrialRecord
from .single_search import RenewalStats, cusum_dwell, renewal_from_dwells, sample_dwells


@dataclass(frozen=True)
class LowComplexityConfig:
    """Thresholds of the two-stage test.

    The refinement LR thresholds follow from the posterior thresholds by the
    odds mapping ``A_r = (1-q1_0)/q1_0 * q_l/(1-q_l)`` and likewise for B_r.
    """

    pi0: float
    b_s: float
    q_l: float
    q_u: float
    q1_0: float = 0.5
    zeta: float | None = None

    def __post_init__(self):
        if not 0.0 < self.pi0 <= 1.0:
            raise ValueError(f"pi0 must lie in (0, 1], got {self.pi0}")
        if not self.b_s > 1.0:
            raise ValueError(f"b_s must exceed a_s = 1, got {self.b_s}")
        if not 0.0 < self.q_l < self.q1_0 < self.q_u < 1.0:
            raise ValueError("need 0 < q_l < q1_0 < q_u < 1")

    @property
    def a_s(self) -> float:
        return 1.0

    @property
    def a_r(self) -> float:
        return (1.0 - self.q1_0) / self.q1_0 * self.q_l / (1.0 - self.q_l)

    @property
    def b_r(self) -> float:
        return (1.0 - self.q1_0) / self.q1_0 * self.q_u / (1.0 - self.q_u)


def refinement_posteriors(eps: float):
    """(q_l, q_u) giving a refinement misidentification bound of ``eps``."""
    return eps / (1.0 + eps), 1.0 / (1.0 + eps)


def design_thresholds_lc(pi0: float, zeta: float, q1_0: float = 0.5) -> LowComplexityConfig:
    """Thresholds that spend ``zeta/2`` on scanning and ``zeta/2`` on refinement."""
    if not 0.0 < pi0 < 1.0:
        raise ValueError(f"pi0 must lie in (0, 1), got {pi0}")
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    q_l, q_u = refinement_posteriors(zeta / 2.0)
    b_s = 1.0 / ((pi0 / (1.0 - pi0)) * (zeta / (1.0 - zeta / 2.0)))
    return LowComplexityConfig(pi0=pi0, b_s=b_s, q_l=q_l, q_u=q_u, q1_0=q1_0, zeta=zeta)


def sprt(stream: ObservationStream, n_mixed: int, n_active: int, step, log_a: float,
         log_b: float, budget: int):
    """Run one SPRT; returns ``(samples, upper_exit)`` with None on budget exhaustion."""
    lam = 0.0
    j = 0
    draw = stream.draw
    while lam <= log_b and lam >= log_a:
        if j >= budget:
            return j, None
        lam += step(draw(n_mixed, n_active))
        j += 1
    return j, lam > log_b


def run_lc_trial(model: ModelPair, cfg: LowComplexityConfig, rng,
                 max_samples: int = DEFAULT_MAX_SAMPLES) -> TrialRecord:
    stream = ObservationStream(model, rng)
    scan_step = model.log_ratio_fn(2)
    refine_step = model.log_ratio_fn(1)
    log_bs = math.log(cfg.b_s)
    log_ar, log_br = math.log(cfg.a_r), math.log(cfg.b_r)
    used = 0
    switches = 0
    while True:
        h1 = stream.bernoulli(cfg.pi0)
        h2 = stream.bernoulli(cfg.pi0)
        eta, _, up = cusum_dwell(stream, 2, int(h1) + int(h2), scan_step, log_bs,
                                 max_samples - used)
        used += eta
        if up is None:
            return TrialRecord("low_complexity", used, 0, switches, False, truncated=True)
        if up:
            break
        switches += 1
    tau1, first = sprt(stream, 1, int(h1), refine_step, log_ar, log_br, max_samples - used)
    if first is None:
        return TrialRecord("low_complexity", used, tau1, switches, False, truncated=True)
    return TrialRecord("low_complexity", used, tau1, switches, bool(h1 if first else h2))


def sprt_error_bounds(cfg: LowComplexityConfig):
    """Wald bounds (1/B_r, A_r) on the SPRT's two error probabilities."""
    return 1.0 / cfg.b_r, cfg.a_r


def misidentification_bound(cfg: LowComplexityConfig) -> float:
    """Bound on P(wrong member | exactly one member active) after refinement."""
    return ((1.0 - cfg.q1_0) * cfg.q_l / (1.0 - cfg.q_l)
            + cfg.q1_0 * (1.0 - cfg.q_u) / cfg.q_u)


def sprt_wald_errors(a: float, b: float):
    """Wald approximations of (alpha_sprt, gamma_sprt) ignoring overshoot."""
    return (1.0 - a) / (b - a), (b - 1.0) * a / (b - a)


def sprt_expected_lengths(cfg: LowComplexityConfig, model: ModelPair):
    """Wald approximations of (E0[tau1], E1[tau1]) for the refinement SPRT."""
    alpha, gamma = sprt_wald_errors(cfg.a_r, cfg.b_r)
    d01 = kl_divergence(model, "01")
    d10 = kl_divergence(model, "10")
    up = math.log((1.0 - gamma) / alpha)
    down = math.log(gamma / (1.0 - alpha))
    e0 = -(alpha * up + (1.0 - alpha) * down) / d01
    e1 = ((1.0 - gamma) * up + gamma * down) / d10
    return e0, e1


def refine_delay_asymptotic(zeta: float, model: ModelPair) -> float:
    """Collapsed refinement delay ``|log zeta| * max(1/D01, 1/D10)``.

    This term grows like |log zeta| only and is negligible next to the
    scanning delay, which grows like 1/pi0.
    """
    d01 = kl_divergence(model, "01")
    d10 = kl_divergence(model, "10")
    return abs(math.log(zeta)) * max(1.0 / d01, 1.0 / d10)


def estimate_scan_renewal(model: ModelPair, b_s: float, n_trials: int, rng,
                          max_samples: int = DEFAULT_MAX_SAMPLES) -> RenewalStats:
    """Renewal quantities of the scanning walk under g0, g1 and g2.

    ``alpha`` is alpha_m under g0, ``beta`` is beta_m under g1 and ``gamma``
    is gamma_m under g2 (all with the matching mean dwell times).
    """
    log_b = math.log(b_s)
    dwells = {a: sample_dwells(model, 2, a, log_b, n_trials, rng, max_samples) for a in (0, 1, 2)}
    return renewal_from_dwells(2, log_b, dwells)


def scan_delay_from_renewal(stats: RenewalStats, pi0: float) -> float:
    """Exact renewal form of E[tau0] for the scanning stage."""
    p11, pmix, p00 = pi0 * pi0, 2.0 * pi0 * (1.0 - pi0), (1.0 - pi0) ** 2
    num = p00 * stats.e0_eta + pmix * stats.e1_eta + p11 * stats.e2_eta
    den = p00 * stats.alpha + pmix * (1.0 - stats.beta) + p11 * (1.0 - stats.gamma)
    return num / den


def asymptotic_scan_delay(pi0: float, regime: str, beta_m: float, rho_m: float,
                          e00_eta_m: float) -> float:
    """Leading-order scanning delay as pi0 -> 0 (rho_m = 0 for RIE)."""
    if regime == "RIE":
        rho_m = 0.0
    elif regime != "FIE":
        raise ValueError("regime must be 'FIE' or 'RIE'")
    return (1.0 - pi0) / (rho_m * (1.0 - pi0) + 2.0 * (1.0 - beta_m)) * e00_eta_m / pi0


def delay_ratio_prediction(stats_single: RenewalStats, stats_mixed: RenewalStats,
                           pi0: float | None = None) -> float:
    """Predicted ASD_m / ASD.

    With ``pi0`` the pre-limit bound is used (rho = alpha/pi0, rho_m =
    alpha_m/pi0); without it the rho, rho_m -> 0 limit.
    """
    if pi0 is None:
        num = 1.0 - stats_single.beta
        den = 2.0 * (1.0 - stats_mixed.beta)
    else:
        num = stats_single.alpha / pi0 * (1.0 - pi0) + (1.0 - stats_single.beta)
        den = stats_mixed.alpha / pi0 * (1.0 - pi0) + 2.0 * (1.0 - stats_mixed.beta)
    return num / den * stats_mixed.e0_eta / stats_single.e0_eta
