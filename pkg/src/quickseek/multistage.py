"""K-stage group search: scan sums of 2^K sequences, then halve the group K times.

Stage i observes the sum of the first half of the surviving candidates and runs
an SPRT on the worst-case ratio between one and no active member of that half;
the upper exit keeps the first half and the lower exit keeps the second.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

from .low_complexity import refinement_posteriors, sprt
from .models import ModelPair, ObservationStream
from .records import DEFAULT_MAX_SAMPLES, TrialRecord
from .single_search import cusum_dwell

# below this D(g1||g0) the scanning walk barely separates groups
WEAK_SCAN_KL = 1e-4


@dataclass(frozen=True)
class MultiStageConfig:
    K: int
    pi0: float
    b_scan: float
    stage_a: Tuple[float, ...]
    stage_b: Tuple[float, ...]
    zeta: float | None = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if len(self.stage_a) != self.K or len(self.stage_b) != self.K:
            raise ValueError("need one (A_i, B_i) pair per refinement stage")
        if not self.b_scan > 1.0:
            raise ValueError("b_scan must exceed 1")
        if not all(a < 1.0 < b for a, b in zip(self.stage_a, self.stage_b)):
            raise ValueError("stage thresholds need A_i < 1 < B_i")
        if not 0.0 < self.pi0 <= 1.0:
            raise ValueError("pi0 must lie in (0, 1]")

    @property
    def group_size(self) -> int:
        return 2 ** self.K


def design_thresholds_multi(pi0: float, zeta: float, K: int, q1_0: float = 0.5) -> MultiStageConfig:
    """Budget zeta/2 for scanning and zeta/(2K) for each refinement SPRT.

    The scanning bound uses the leading-order odds ``2^(K-1) pi0/(1-pi0)`` of a
    group holding an active member, which reduces to the two-sequence design
    at K = 1.
    """
    if not 0.0 < pi0 < 1.0 or not 0.0 < zeta < 1.0:
        raise ValueError("pi0 and zeta must lie in (0, 1)")
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    b_scan = 1.0 / (2 ** (K - 1) * (pi0 / (1.0 - pi0)) * (zeta / (1.0 - zeta / 2.0)))
    q_l, q_u = refinement_posteriors(zeta / (2.0 * K))
    odds0 = (1.0 - q1_0) / q1_0
    a = odds0 * q_l / (1.0 - q_l)
    b = odds0 * q_u / (1.0 - q_u)
    return MultiStageConfig(K=K, pi0=pi0, b_scan=b_scan, stage_a=(a,) * K, stage_b=(b,) * K,
                            zeta=zeta)


def scan_is_weak(model: ModelPair, K: int) -> bool:
    """True when the 2^K-fold scanning walk is nearly uninformative."""
    return model.component_kl(2 ** K, 1, 0) < WEAK_SCAN_KL


def run_multistage_trial(model: ModelPair, cfg: MultiStageConfig, rng,
                         max_samples: int = DEFAULT_MAX_SAMPLES) -> TrialRecord:
    n = cfg.group_size
    if scan_is_weak(model, cfg.K):
        warnings.warn(f"scanning sums of {n} sequences carry little information", RuntimeWarning)
    stream = ObservationStream(model, rng)
    scan_step = model.log_ratio_fn(n)
    log_b = math.log(cfg.b_scan)
    used = 0
    switches = 0
    while True:
        states = [stream.bernoulli(cfg.pi0) for _ in range(n)]
        eta, _, up = cusum_dwell(stream, n, sum(states), scan_step, log_b, max_samples - used)
        used += eta
        if up is None:
            return TrialRecord("multistage", used, 0, switches, False, truncated=True)
        if up:
            break
        switches += 1
    tau1 = 0
    cand = states
    for i in range(cfg.K):
        half = len(cand) // 2
        first = cand[:half]
        j, upper = sprt(stream, half, sum(first), model.log_ratio_fn(half),
                        math.log(cfg.stage_a[i]), math.log(cfg.stage_b[i]),
                        max_samples - used - tau1)
        tau1 += j
        if upper is None:
            return TrialRecord("multistage", used, tau1, switches, False, truncated=True)
        cand = first if upper else cand[half:]
    return TrialRecord("multistage", used, tau1, switches, bool(cand[0]))


# -- exact decomposition check on a two-point toy -----------------------------

def _toy_pmf(p0: Fraction, p1: Fraction, n: int, a: int):
    """Exact pmf of a sum of n Bernoulli samples with a of them from f1."""
    out = [Fraction(1)]
    for k in range(n):
        p = p1 if k < a else p0
        nxt = [Fraction(0)] * (len(out) + 1)
        for s, w in enumerate(out):
            nxt[s] += w * (1 - p)
            nxt[s + 1] += w * p
        out = nxt
    return out


class _Toy:
    """Exact K-stage search problem on one fixed group of 2^K sequences.

    The state of knowledge is the posterior over the 2^(2^K) joint
    configurations.  Stage 0 scans the whole group (no switching), stage i
    observes the first half of the surviving candidates, and each stage may
    take at most ``T`` samples.  The final claim errs when the survivor is H0.
    """

    def __init__(self, p0, p1, pi0, c, K, T):
        self.p0, self.p1 = Fraction(p0), Fraction(p1)
        self.pi0, self.c = Fraction(pi0), Fraction(c)
        self.K, self.T = K, T
        self.n = 2 ** K
        self.configs = list(itertools.product((0, 1), repeat=self.n))

    def prior(self):
        return tuple(self.pi0 ** sum(s) * (1 - self.pi0) ** (self.n - sum(s)) for s in self.configs)

    def observed(self, stage, cand):
        """Indices summed at ``stage`` given candidate index tuple ``cand``."""
        return cand if stage == 0 else cand[:len(cand) // 2]

    def outcomes(self, belief, idx):
        """[(probability, next belief)] over observations of sum over ``idx``."""
        m = len(idx)
        out = []
        for z in range(m + 1):
            post = []
            for w, s in zip(belief, self.configs):
                a = sum(s[i] for i in idx)
                post.append(w * _toy_pmf(self.p0, self.p1, m, a)[z])
            total = sum(post)
            if total > 0:
                out.append((total, tuple(x / total for x in post)))
        return out

    def claim_error(self, belief, survivor):
        return sum(w for w, s in zip(belief, self.configs) if s[survivor] == 0)

    def successors(self, stage, cand):
        """Candidate sets entered when ``stage`` ends."""
        if stage == 0:
            return [cand]
        half = len(cand) // 2
        return [cand[:half], cand[half:]]

    # joint problem: one recursion over (stage, candidates, belief, time in stage)
    def joint(self, stage, cand, belief, t):
        if stage == self.K + 1:
            return self.claim_error(belief, cand[0])
        stop = min(self.joint(stage + 1, nxt, belief, 0) for nxt in self.successors(stage, cand))
        if t >= self.T:
            return stop
        cont = self.c + sum(pr * self.joint(stage, cand, b, t + 1)
                            for pr, b in self.outcomes(belief, self.observed(stage, cand)))
        return min(stop, cont)

    # concatenated problem: later stages solved first as functions of the entry belief
    def concatenated(self):
        stage_value = {}

        def w(stage, cand, belief):
            key = (stage, cand, belief)
            if key not in stage_value:
                stage_value[key] = _stage_problem(stage, cand, belief)
            return stage_value[key]

        def _stage_problem(stage, cand, belief):
            if stage == self.K + 1:
                return self.claim_error(belief, cand[0])
            terminal = lambda b: min(w(stage + 1, nxt, b) for nxt in self.successors(stage, cand))
            values = {}

            def v(b, t):
                if (b, t) not in values:
                    stop = terminal(b)
                    if t < self.T:
                        cont = self.c + sum(pr * v(nb, t + 1) for pr, nb in
                                            self.outcomes(b, self.observed(stage, cand)))
                        stop = min(stop, cont)
                    values[(b, t)] = stop
                return values[(b, t)]

            return v(belief, 0)

        return w(0, tuple(range(self.n)), self.prior())


def multistage_dp_decomposition_check(toy_model, K: int = 2, T: int = 2, pi0=Fraction(1, 5),
                                      c=Fraction(1, 50), tol: float = 1e-12):
    """Compare the jointly optimised cost with the stage-by-stage cost.

    ``toy_model`` is a two-point model given as ``(p0, p1)`` or as an object
    with ``p0``/``p1`` attributes.  Returns ``(passed, joint, concatenated)``
    with both values exact fractions.
    """
    if T < 0 or T > 3:
        raise ValueError("the enumeration is limited to 0 <= T <= 3")
    p0, p1 = (toy_model.p0, toy_model.p1) if hasattr(toy_model, "p0") else toy_model
    toy = _Toy(Fraction(p0).limit_denominator(10 ** 6), Fraction(p1).limit_denominator(10 ** 6),
               pi0, c, K, T)
    joint = toy.joint(0, tuple(range(toy.n)), toy.prior(), 0)
    concat = toy.concatenated()
    return abs(float(joint - concat)) <= tol, joint, concat
