"""Monte Carlo engine: seeded trial evaluation, FIP calibration, sweeps and the
Wald-identity check.

Trial ``i`` of a run with master seed ``s`` draws from
``np.random.default_rng(np.random.SeedSequence(s, spawn_key=(i,)))``, so a
summary depends only on ``(strategy, model, config, n_trials, s)`` and not on
how trials are scheduled across worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .low_complexity import LowComplexityConfig, design_thresholds_lc, run_lc_trial
from .models import Gamma, Gaussian, GaussianVariance, ModelPair, ObservationStream
from .multistage import MultiStageConfig, design_thresholds_multi, run_multistage_trial
from .optimal_mixed import OptimalPolicy, run_optimal_trial, solve_optimal
from .records import DEFAULT_MAX_SAMPLES, TrialRecord
from .single_search import SingleConfig, cusum_dwell, design_threshold_single, run_single_trial

TRUNCATION_LIMIT = 1e-3

STRATEGIES: Dict[str, Callable] = {
    "single": run_single_trial,
    "low_complexity": run_lc_trial,
    "optimal": run_optimal_trial,
    "multistage": run_multistage_trial,
}

_CONFIG_TYPES = {
    "single": SingleConfig,
    "low_complexity": LowComplexityConfig,
    "optimal": OptimalPolicy,
    "multistage": MultiStageConfig,
}


@dataclass(frozen=True)
class SimSummary:
    strategy: str
    n_trials: int
    asd: float
    asd_se: float
    fip: float
    fip_se: float
    mean_tau0: float
    mean_tau1: float
    mean_switches: float
    n_truncated: int
    records: Tuple[TrialRecord, ...] = field(default=(), repr=False, compare=False)

    @property
    def truncation_failed(self) -> bool:
        return self.n_truncated > TRUNCATION_LIMIT * self.n_trials

    def as_dict(self) -> dict:
        return {"strategy": self.strategy, "n_trials": self.n_trials, "asd": self.asd,
                "asd_se": self.asd_se, "fip": self.fip, "fip_se": self.fip_se,
                "mean_tau0": self.mean_tau0, "mean_tau1": self.mean_tau1,
                "mean_switches": self.mean_switches, "n_truncated": self.n_truncated}


def trial_rng(master_seed: int, index: int):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def default_threads() -> int:
    env = os.environ.get("QUICKSEEK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_block(strategy, model, config, master_seed, start, stop, max_samples):
    run = STRATEGIES[strategy]
    out = []
    for i in range(start, stop):
        rec = run(model, config, trial_rng(master_seed, i), max_samples=max_samples)
        out.append(TrialRecord(rec.strategy, rec.tau0, rec.tau1, rec.n_switches,
                               rec.claim_correct, rec.truncated, seed=i))
    return out


def run_trials(strategy: str, model: ModelPair, config, n_trials: int, master_seed: int,
               threads: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES) -> List[TrialRecord]:
    """Records of trials ``0 .. n_trials-1`` in index order."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; valid options: {', '.join(STRATEGIES)}")
    if not isinstance(config, _CONFIG_TYPES[strategy]):
        raise TypeError(f"strategy {strategy!r} needs a {_CONFIG_TYPES[strategy].__name__}")
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    threads = max(1, int(threads))
    if threads == 1 or n_trials < 2 * threads:
        return _run_block(strategy, model, config, master_seed, 0, n_trials, max_samples)
    bounds = np.linspace(0, n_trials, 4 * threads + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_block, strategy, model, config, master_seed, a, b, max_samples)
                   for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        records = []
        for fut in futures:
            records.extend(fut.result())
    return records


def summarise(strategy: str, records: Sequence[TrialRecord], keep_records: bool = False) -> SimSummary:
    """Point estimates over untruncated trials; standard error = std / sqrt(n)."""
    done = [r for r in records if not r.truncated]
    n_trunc = len(records) - len(done)
    if not done:
        nan = float("nan")
        return SimSummary(strategy, len(records), nan, nan, nan, nan, nan, nan, nan, n_trunc,
                          tuple(records) if keep_records else ())
    tau = np.array([r.tau for r in done], dtype=float)
    err = np.array([not r.claim_correct for r in done], dtype=float)
    n = len(done)

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    return SimSummary(strategy, len(records), float(tau.mean()), se(tau), float(err.mean()), se(err),
                      float(np.mean([r.tau0 for r in done])), float(np.mean([r.tau1 for r in done])),
                      float(np.mean([r.n_switches for r in done])), n_trunc,
                      tuple(records) if keep_records else ())


def evaluate(strategy: str, model: ModelPair, config, n_trials: int, master_seed: int,
             threads: int = 1, max_samples: int = DEFAULT_MAX_SAMPLES,
             keep_records: bool = False) -> SimSummary:
    """Monte Carlo ASD and FIP of one strategy."""
    records = run_trials(strategy, model, config, n_trials, master_seed, threads, max_samples)
    return summarise(strategy, records, keep_records)


# -- calibration ---------------------------------------------------------------

class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CalibrationResult:
    strategy: str
    config: object
    knob: float
    fip: float
    fip_se: float
    asd: float
    converged: bool
    monotone: bool
    history: Tuple[Tuple[float, float], ...]


@dataclass
class _Knob:
    name: str
    lo: float
    hi: float
    increasing: bool  # FIP increases with the knob
    build: Callable[[float], object]


def _max_design_zeta(pi0: float, factor: float = 1.0) -> float:
    """Largest budget keeping the scanning threshold above 1."""
    r = (1.0 - pi0) / (pi0 * factor)
    return min(0.999, r / (1.0 + r / 2.0) * (1.0 - 1e-9))


def strategy_knob(strategy: str, model: ModelPair, pi0: float, solver: Optional[dict] = None,
                  K: int = 2) -> _Knob:
    """The scalar each strategy is calibrated on.

    single: upper threshold B.  low_complexity and multistage: the design
    budget passed to the threshold design, which moves the scanning and
    refinement thresholds together.  optimal: the sampling cost c.
    """
    if strategy == "single":
        return _Knob("B", 1.0 + 1e-9, 1e12, False, lambda b: SingleConfig(pi0=pi0, B=b))
    if strategy == "low_complexity":
        return _Knob("zeta_design", 1e-8, _max_design_zeta(pi0), True,
                     lambda z: design_thresholds_lc(pi0, z))
    if strategy == "multistage":
        return _Knob("zeta_design", 1e-8, _max_design_zeta(pi0, 2 ** (K - 1)), True,
                     lambda z: design_thresholds_multi(pi0, z, K))
    if strategy == "optimal":
        solver = dict(solver or {})
        cache: Dict[float, OptimalPolicy] = {}

        def build(c):
            warm = min((p for k, p in cache.items() if k >= c), key=lambda p: p.c, default=None)
            pol = solve_optimal(model, pi0, c, warm=warm, **solver)
            cache[c] = pol
            return pol

        return _Knob("c", 1e-3, 0.5, True, build)
    raise ValueError(f"unknown strategy {strategy!r}")


def calibrate_fip(strategy: str, model: ModelPair, pi0: float, target: float = 0.1,
                  tolerance: float = 0.01, n_trials_per_probe: int = 4000, master_seed: int = 0,
                  threads: int = 1, max_probes: int = 40, knob_range: Optional[Tuple[float, float]] = None,
                  solver: Optional[dict] = None, K: int = 2,
                  max_samples: int = DEFAULT_MAX_SAMPLES) -> CalibrationResult:
    """Geometric bisection on the strategy's knob until the Monte Carlo FIP is
    within ``tolerance`` of ``target``.

    Every probe reuses ``master_seed`` so probes share random numbers and the
    estimated FIP moves monotonically with the knob up to rare ties.
    """
    knob = strategy_knob(strategy, model, pi0, solver, K)
    lo, hi = knob_range or (knob.lo, knob.hi)
    history: List[Tuple[float, float]] = []
    best = None

    def probe(x):
        nonlocal best
        cfg = knob.build(x)
        s = evaluate(strategy, model, cfg, n_trials_per_probe, master_seed, threads, max_samples)
        history.append((x, s.fip))
        if best is None or abs(s.fip - target) < abs(best[2].fip - target):
            best = (x, cfg, s)
        return s.fip

    # the upper end first: for the optimal policy its solution warm-starts the rest
    f_hi = probe(hi)
    f_lo = probe(lo)
    low_side, high_side = (f_lo, f_hi) if knob.increasing else (f_hi, f_lo)
    if not low_side - tolerance <= target <= high_side + tolerance:
        raise CalibrationError(
            f"{knob.name} in [{lo:.6g}, {hi:.6g}] gives FIP in [{low_side:.4f}, {high_side:.4f}], "
            f"which does not bracket the target {target}")
    converged = abs(best[2].fip - target) <= tolerance
    probes = 2
    while not converged and probes < max_probes:
        mid = math.sqrt(lo * hi)
        f = probe(mid)
        probes += 1
        if (f > target) == knob.increasing:
            hi = mid
        else:
            lo = mid
        converged = abs(f - target) <= tolerance
        if hi / lo < 1.0 + 1e-9:
            break
    ordered = sorted(history)
    fips = [f for _, f in ordered]
    slack = 3.0 * math.sqrt(max(target * (1 - target), 1e-4) / n_trials_per_probe)
    if knob.increasing:
        monotone = all(b >= a - slack for a, b in zip(fips, fips[1:]))
    else:
        monotone = all(b <= a + slack for a, b in zip(fips, fips[1:]))
    x, cfg, s = best
    return CalibrationResult(strategy, cfg, x, s.fip, s.fip_se, s.asd, converged, monotone,
                             tuple(history))


# -- sweeps --------------------------------------------------------------------

SWEEP_AXES = ("snr", "pi0", "mu_sigma_grid", "kappa")
MIXED_STRATEGIES = ("low_complexity", "optimal", "multistage")


def _sweep_model(axis, value, common):
    if axis == "snr":
        return GaussianVariance.from_snr(float(value)), common["pi0"]
    if axis == "pi0":
        return common["model"], float(value)
    if axis == "mu_sigma_grid":
        mu, sigma = value
        return Gaussian(0.0, 1.0, float(mu), float(sigma) ** 2), common["pi0"]
    if axis == "kappa":
        return Gamma(common.get("kappa0", 1.0), float(value), common.get("theta", 2.0)), common["pi0"]
    raise ValueError(f"unknown axis {axis!r}; valid options: {', '.join(SWEEP_AXES)}")


def _design_config(strategy, model, pi0, zeta, common):
    if strategy == "single":
        return design_threshold_single(pi0, zeta)
    if strategy == "low_complexity":
        return design_thresholds_lc(pi0, zeta)
    if strategy == "multistage":
        return design_thresholds_multi(pi0, zeta, common.get("K", 2))
    if strategy == "optimal":
        if "c" not in common:
            raise ValueError("the optimal strategy needs a cost c or calibration")
        return solve_optimal(model, pi0, common["c"], **common.get("solver", {}))
    raise ValueError(f"unknown strategy {strategy!r}")


def sweep(axis: str, values: Sequence, strategies: Sequence[str], common: dict,
          progress: Optional[Callable[[str], None]] = None) -> List[dict]:
    """One row per axis value with every strategy's ASD and FIP.

    ``common`` holds ``pi0``, ``zeta``, ``n_trials``, ``master_seed`` and,
    when ``calibrate`` is true, ``target``/``tolerance``/``n_trials_per_probe``.
    Without calibration the analytic threshold designs for budget ``zeta``
    are used.  ``ratio`` is the first mixed strategy's ASD over the single ASD.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown axis {axis!r}; valid options: {', '.join(SWEEP_AXES)}")
    if len(values) == 0:
        raise ValueError("sweep axis has no values")
    if len(strategies) == 0:
        raise ValueError("sweep needs at least one strategy")
    rows = []
    n = common.get("n_trials", 10_000)
    seed = common.get("master_seed", 0)
    threads = common.get("threads", 1)
    for value in values:
        model, pi0 = _sweep_model(axis, value, common)
        row = {"axis": axis, "value": value}
        for strategy in strategies:
            if common.get("calibrate", False):
                cal = calibrate_fip(strategy, model, pi0, common.get("target", 0.1),
                                    common.get("tolerance", 0.01),
                                    common.get("n_trials_per_probe", 4000), seed, threads,
                                    solver=common.get("solver"), K=common.get("K", 2))
                cfg, knob = cal.config, cal.knob
            else:
                cfg = _design_config(strategy, model, pi0, common["zeta"], common)
                knob = float("nan")
            s = evaluate(strategy, model, cfg, n, seed, threads)
            row[strategy] = {"asd": s.asd, "asd_se": s.asd_se, "fip": s.fip, "fip_se": s.fip_se,
                             "knob": knob, "n_truncated": s.n_truncated}
            if progress:
                progress(f"{axis}={value} {strategy}: ASD {s.asd:.3f} FIP {s.fip:.4f}")
        if "single" in row:
            mixed = next((m for m in MIXED_STRATEGIES if m in row), None)
            if mixed:
                row["ratio"] = row[mixed]["asd"] / row["single"]["asd"]
        rows.append(row)
    return rows


# -- Wald identity ---------------------------------------------------------------

@dataclass(frozen=True)
class WaldReport:
    """``mean(W_eta) - mean(eta) * E[l]`` over renewals, in absolute and se units.

    ``pooled_gap`` uses the pooled empirical increment mean instead of E[l].
    """

    n: int
    mean_w: float
    mean_eta: float
    expected_increment: float
    discrepancy: float
    se: float
    pooled_gap: float

    @property
    def z(self) -> float:
        return abs(self.discrepancy) / self.se if self.se > 0 else (0.0 if self.discrepancy == 0 else math.inf)


def wald_identity_check(model: ModelPair, cfg, n: int, master_seed: int = 0,
                        n_active: Optional[int] = None) -> WaldReport:
    """Wald's identity on the CUSUM dwell walk.

    A SingleConfig checks the single-sample walk (default data from f1); a
    LowComplexityConfig checks the scanning walk (default data from g0).
    """
    if isinstance(cfg, SingleConfig):
        n_mixed, log_b, default = 1, math.log(cfg.B), 1
    elif isinstance(cfg, LowComplexityConfig):
        n_mixed, log_b, default = 2, math.log(cfg.b_s), 0
    else:
        raise TypeError("cfg must be a SingleConfig or LowComplexityConfig")
    a = default if n_active is None else n_active
    el = model.component_kl(n_mixed, a, 0) - model.component_kl(n_mixed, a, 1)
    stream = ObservationStream(model, trial_rng(master_seed, 0))
    step = model.log_ratio_fn(n_mixed)
    eta = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        e, wi, up = cusum_dwell(stream, n_mixed, a, step, log_b, DEFAULT_MAX_SAMPLES)
        if up is None:
            raise RuntimeError("renewal exceeded the sample cap")
        eta[i], w[i] = e, wi
    d = w - eta * el
    mean_w, mean_eta = float(w.mean()), float(eta.mean())
    pooled = float(w.sum() / eta.sum())
    return WaldReport(n, mean_w, mean_eta, el, float(d.mean()),
                      float(d.std(ddof=1) / math.sqrt(n)), mean_w - mean_eta * pooled)
