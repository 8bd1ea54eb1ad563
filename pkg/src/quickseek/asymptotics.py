"""Asymptotic predictors as pi0 -> 0 and prediction-versus-simulation reports."""

from __future__ import annotations

import math
from typing import List, Sequence

from .harness import evaluate, trial_rng
from .low_complexity import (asymptotic_scan_delay, delay_ratio_prediction, design_thresholds_lc,
                             estimate_scan_renewal, refine_delay_asymptotic, scan_delay_from_renewal,
                             sprt_expected_lengths)
from .models import ModelPair
from .single_search import (RenewalStats, asd_fip_from_renewal, asymptotic_asd_single,
                            design_threshold_single, estimate_renewal)

__all__ = [
    "alpha_asymptotic", "asymptotic_asd_single", "asymptotic_scan_delay", "delay_ratio_prediction",
    "refine_delay_asymptotic", "sprt_expected_lengths", "predict_from_stats", "predict_report",
]


def alpha_asymptotic(b: float, beta: float, overshoot_factor: float = 1.0) -> float:
    """``alpha ~ (1 - beta) / B * overshoot_factor`` with the factor in (0, 1]."""
    if not 0.0 < overshoot_factor <= 1.0:
        raise ValueError("overshoot factor must lie in (0, 1]")
    if b <= 1.0:
        raise ValueError("B must exceed 1")
    return (1.0 - beta) / b * overshoot_factor


def predict_from_stats(pi0: float, regime: str, single: RenewalStats, scan: RenewalStats,
                       refine_delay: float) -> dict:
    """Predicted delays from frozen renewal estimates (a pure function)."""
    asd_single = asymptotic_asd_single(pi0, regime, single)
    rho_m = scan.alpha / pi0
    scan_delay = asymptotic_scan_delay(pi0, regime, scan.beta, rho_m, scan.e0_eta)
    return {
        "pred_asd_single": asd_single,
        "pred_scan_delay": scan_delay,
        "pred_refine_delay": refine_delay,
        "pred_asd_mixed": scan_delay + refine_delay,
        "pred_ratio": delay_ratio_prediction(single, scan, pi0 if regime == "FIE" else None),
        "pred_ratio_limit": delay_ratio_prediction(single, scan),
    }


def predict_report(model: ModelPair, pi0_list: Sequence[float], zeta: float, regime: str = "FIE",
                   n_renewal: int = 20_000, n_trials: int = 10_000, master_seed: int = 0,
                   simulate: bool = True) -> List[dict]:
    """Per-pi0 rows of renewal estimates, predictions and (optionally) simulated values.

    Thresholds come from the analytic designs with budget ``zeta``.  The
    refinement term uses the Wald SPRT lengths averaged over which member is
    active.
    """
    rows = []
    for k, pi0 in enumerate(pi0_list):
        single_cfg = design_threshold_single(pi0, zeta)
        lc_cfg = design_thresholds_lc(pi0, zeta)
        single = estimate_renewal(model, single_cfg, n_renewal, trial_rng(master_seed, 2 * k))
        scan = estimate_scan_renewal(model, lc_cfg.b_s, n_renewal, trial_rng(master_seed, 2 * k + 1))
        e0, e1 = sprt_expected_lengths(lc_cfg, model)
        row = {"pi0": pi0, "zeta": zeta, "regime": regime, "B": single_cfg.B, "B_s": lc_cfg.b_s,
               "alpha": single.alpha, "beta": single.beta, "e0_eta": single.e0_eta,
               "alpha_m": scan.alpha, "beta_m": scan.beta, "e00_eta_m": scan.e0_eta,
               "renewal_asd_single": asd_fip_from_renewal(single, pi0)[0],
               "renewal_scan_delay": scan_delay_from_renewal(scan, pi0),
               "refine_delay_collapsed": refine_delay_asymptotic(zeta, model)}
        row.update(predict_from_stats(pi0, regime, single, scan, 0.5 * (e0 + e1)))
        if simulate:
            s = evaluate("single", model, single_cfg, n_trials, master_seed)
            m = evaluate("low_complexity", model, lc_cfg, n_trials, master_seed)
            row.update({"sim_asd_single": s.asd, "sim_asd_single_se": s.asd_se,
                        "sim_asd_mixed": m.asd, "sim_asd_mixed_se": m.asd_se,
                        "sim_tau0_mixed": m.mean_tau0, "sim_tau1_mixed": m.mean_tau1,
                        "sim_ratio": m.asd / s.asd,
                        "gap_single": row["pred_asd_single"] / s.asd - 1.0,
                        "gap_ratio": row["pred_ratio"] - m.asd / s.asd})
        rows.append(row)
    return rows


def overshoot_factor(stats: RenewalStats) -> float:
    """Empirical ``E[exp(-(W - log B)) | upper exit]`` under the alternative."""
    if stats.overshoot_factor is None:
        return 1.0
    return float(min(1.0, max(stats.overshoot_factor, math.ulp(0.0))))
