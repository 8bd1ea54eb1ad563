"""Quick property and oracle suites behind ``quickseek check``."""

from __future__ import annotations

import math
from typing import Callable, List, Tuple

import numpy as np

from .belief import RefineBelief, ScanBelief, refine_lr, update_q1, update_refine
from .harness import evaluate, trial_rng, wald_identity_check
from .low_complexity import design_thresholds_lc
from .models import Bernoulli, GaussianVariance
from .multistage import design_thresholds_multi, multistage_dp_decomposition_check
from .optimal_mixed import finite_horizon_oracle, refine_value_iteration, solve_optimal
from .simplex import SimplexGrid

Result = Tuple[str, bool, str]


def check_belief_invariants(n_chains: int = 10_000, steps: int = 20, seed: int = 0) -> Result:
    model = GaussianVariance.from_snr(12.0)
    rng = trial_rng(seed, 0)
    worst_sum = 0.0
    negative = False
    for _ in range(n_chains):
        r = RefineBelief.from_scan(ScanBelief(*rng.dirichlet(np.ones(3))))
        for x in model.draw(1, int(rng.random() < 0.5), rng, steps):
            r = update_refine(r, float(x), model)
            vals = r.as_tuple()
            negative |= min(vals) < 0.0
            worst_sum = max(worst_sum, abs(math.fsum(vals) - 1.0))
    ok = not negative and worst_sum <= 1e-12
    return "belief invariants", ok, f"max |sum-1| {worst_sum:.1e}"


def lr_product_gap(model, n_chains: int, rng, q_l: float = 1e-3, q_u: float = 1 - 1e-3,
                   steps: int = 200) -> float:
    """Worst relative gap between ``refine_lr`` and the running LR product.

    Each chain follows q1 from a random start until it leaves ``(q_l, q_u)``,
    the range an SPRT on q1 actually visits.
    """
    worst = 0.0
    for _ in range(n_chains):
        q1_0 = float(rng.uniform(0.2, 0.8))
        q1 = q1_0
        log_lr = 0.0
        for x in model.draw(1, int(rng.random() < 0.5), rng, steps):
            q1 = update_q1(q1, float(x), model)
            log_lr += float(model.log_ratio(1, x))
            if not q_l < q1 < q_u:
                break
            worst = max(worst, abs(refine_lr(q1_0, q1) / math.exp(log_lr) - 1.0))
    return worst


def check_lr_product(n_chains: int = 2_000, seed: int = 1) -> Result:
    worst = lr_product_gap(GaussianVariance.from_snr(8.0), n_chains, trial_rng(seed, 0))
    return "likelihood-ratio product", worst <= 1e-9, f"max relative gap {worst:.1e}"


def check_finite_horizon(T: int = 2, resolution: int = 201) -> Result:
    model = Bernoulli(0.2, 0.7)
    c = 0.02
    grid = SimplexGrid(3, resolution)
    V = refine_value_iteration(model, c, grid, tol=0.0, max_iter=T, require_convergence=False)
    starts = [(0.25, 0.25, 0.25, 0.25), (0.4, 0.1, 0.3, 0.2), (0.1, 0.2, 0.3, 0.4), (0.5, 0.2, 0.2, 0.1)]
    worst = max(abs(V.at(s[:3]) - float(finite_horizon_oracle(model, c, T, s))) for s in starts)
    return f"finite-horizon oracle (T={T})", worst <= 1e-3, f"max error {worst:.1e}"


def check_decomposition(T: int = 2) -> Result:
    ok, joint, concat = multistage_dp_decomposition_check(Bernoulli(0.2, 0.7), K=2, T=T)
    return f"multistage decomposition (T={T})", ok, f"joint {float(joint):.12f}, concatenated {float(concat):.12f}"


def check_terminal_values() -> Result:
    policy = solve_optimal(GaussianVariance.from_snr(12.0), 0.05, 0.01, res2=41, res3=21)
    v10 = policy.v.at((1.0, 0.0))
    v00 = policy.v.at((0.0, 0.0))
    ok = v10 == 0.0 and v00 == 1.0
    return "terminal values", ok, f"v(1,0)={v10!r}, v(0,0)={v00!r}"


def check_single_stage_multistage(n: int = 200) -> Result:
    model = GaussianVariance.from_snr(12.0)
    a = evaluate("multistage", model, design_thresholds_multi(0.05, 0.1, 1), n, 0)
    b = evaluate("low_complexity", model, design_thresholds_lc(0.05, 0.1), n, 0)
    ok = a.asd == b.asd and a.fip == b.fip
    return "one-stage multistage equals low-complexity", ok, f"ASD {a.asd} vs {b.asd}"


def check_wald(n: int = 2_000) -> Result:
    model = GaussianVariance.from_snr(12.0)
    rep = wald_identity_check(model, design_thresholds_lc(0.05, 0.1), n)
    return "Wald identity", rep.z < 3.0, f"discrepancy {rep.discrepancy:.4f} ({rep.z:.2f} se)"


SUITES: List[Callable[[], Result]] = [
    check_belief_invariants, check_lr_product, check_finite_horizon, check_decomposition,
    check_terminal_values, check_single_stage_multistage, check_wald,
]


def run_checks() -> List[Result]:
    return [suite() for suite in SUITES]
