"""Hypothesis pairs (f0, f1) and the n-fold mixture densities of their sums.

Every family is closed under convolution, so the sum of ``n_mixed`` independent
samples of which ``n_active`` come from f1 stays in the family.  A component is
therefore described by the pair ``(n_mixed, n_active)`` and all densities,
log-likelihood ratios, samplers and quadrature rules are expressed per component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import special, stats

H0 = 0
H1 = 1

# probability mass left outside an effective support, split over both tails
SUPPORT_TAIL = 1e-10
DEFAULT_QUAD_NODES = 129


@dataclass(frozen=True)
class MixtureDensity:
    """Density of a sum of ``n_mixed`` samples, ``n_active`` of them from f1."""

    n_mixed: int
    n_active: int

    def __post_init__(self):
        if int(self.n_mixed) != self.n_mixed or self.n_mixed < 1:
            raise ValueError(f"n_mixed must be a positive integer, got {self.n_mixed}")
        if int(self.n_active) != self.n_active or not 0 <= self.n_active <= self.n_mixed:
            raise ValueError(
                f"n_active must be an integer in [0, {self.n_mixed}], got {self.n_active}")


G0 = MixtureDensity(2, 0)
G1 = MixtureDensity(2, 1)
G2 = MixtureDensity(2, 2)


class ModelPair:
    """Base class for a pair of hypothesis densities closed under convolution.

    Subclasses implement the per-component primitives ``_logpdf``, ``_draw``,
    ``_support`` and ``_kl``.  A component is ``(n_mixed, n_active)``; the
    single-sample densities are the components ``(1, 0)`` and ``(1, 1)``.
    """

    family: str = ""
    discrete: bool = False

    # -- primitives -------------------------------------------------------
    def _logpdf(self, n: int, a: int, z):
        raise NotImplementedError

    def _draw(self, n: int, a: int, rng, size=None):
        raise NotImplementedError

    def _support(self, n: int, a: int) -> Tuple[float, float]:
        raise NotImplementedError

    def _kl(self, n: int, a: int, b: int) -> float:
        """D(component (n, a) || component (n, b))."""
        raise NotImplementedError

    def _validate_point(self, z):
        return z

    # -- public per-component interface ----------------------------------
    def logpdf(self, n_mixed: int, n_active: int, z):
        """Log density (or log pmf) of component ``(n_mixed, n_active)``."""
        return self._logpdf(n_mixed, n_active, self._validate_point(z))

    def pdf(self, n_mixed: int, n_active: int, z):
        return np.exp(self.logpdf(n_mixed, n_active, z))

    def log_ratio(self, n_mixed: int, z, num: int = 1, den: int = 0):
        """log of component ``(n, num)`` over component ``(n, den)`` at ``z``."""
        z = self._validate_point(z)
        return self._logpdf(n_mixed, num, z) - self._logpdf(n_mixed, den, z)

    def log_ratio_fn(self, n_mixed: int, num: int = 1, den: int = 0) -> Callable[[float], float]:
        """Scalar version of ``log_ratio`` for trial loops."""
        return lambda z: float(self.log_ratio(n_mixed, z, num, den))

    def draw(self, n_mixed: int, n_active: int, rng, size=None):
        """Draw sums directly from the mixture distribution."""
        return self._draw(n_mixed, n_active, rng, size)

    def support(self, n_mixed: int = 1, n_active: int | None = None) -> Tuple[float, float]:
        """Effective support of a component, or the union over all components
        with ``n_mixed`` summands when ``n_active`` is omitted."""
        if n_active is not None:
            return self._support(n_mixed, n_active)
        ends = [self._support(n_mixed, a) for a in range(n_mixed + 1)]
        return min(e[0] for e in ends), max(e[1] for e in ends)

    def component_kl(self, n_mixed: int, a: int, b: int) -> float:
        return float(self._kl(n_mixed, a, b))

    def quadrature(self, n_mixed: int, n_active: int,
                   n_nodes: int = DEFAULT_QUAD_NODES) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``sum(w * h(x)) ~= E[h(Z)]`` for that component.

        Continuous families use Gauss-Legendre nodes on the component's own
        effective support with the density folded into the weights; discrete
        families enumerate the support.  Weights are renormalised to sum to 1.
        """
        return _quadrature(self, n_mixed, n_active, n_nodes)


def _check_distinct(*pairs):
    if all(a == b for a, b in pairs):
        raise ValueError("f0 and f1 must differ")


class _GaussianBase(ModelPair):
    family = "gaussian"

    def _moments(self, n, a):
        mean = a * self.mean1 + (n - a) * self.mean0
        var = a * self.var1 + (n - a) * self.var0
        return mean, var

    def _logpdf(self, n, a, z):
        m, v = self._moments(n, a)
        z = np.asarray(z, dtype=float)
        return -0.5 * np.log(2.0 * np.pi * v) - (z - m) ** 2 / (2.0 * v)

    def log_ratio(self, n_mixed, z, num=1, den=0):
        m1, v1 = self._moments(n_mixed, num)
        m0, v0 = self._moments(n_mixed, den)
        z = np.asarray(z, dtype=float)
        return 0.5 * math.log(v0 / v1) + (z - m0) ** 2 / (2.0 * v0) - (z - m1) ** 2 / (2.0 * v1)

    def log_ratio_fn(self, n_mixed, num=1, den=0):
        m1, v1 = self._moments(n_mixed, num)
        m0, v0 = self._moments(n_mixed, den)
        const = 0.5 * math.log(v0 / v1)
        a0, a1 = 1.0 / (2.0 * v0), 1.0 / (2.0 * v1)
        return lambda z: const + (z - m0) ** 2 * a0 - (z - m1) ** 2 * a1

    def _draw(self, n, a, rng, size=None):
        m, v = self._moments(n, a)
        return rng.normal(m, math.sqrt(v), size)

    def _support(self, n, a):
        m, v = self._moments(n, a)
        half = stats.norm.isf(SUPPORT_TAIL / 2) * math.sqrt(v)
        return m - half, m + half

    def _kl(self, n, a, b):
        ma, va = self._moments(n, a)
        mb, vb = self._moments(n, b)
        return 0.5 * (va / vb + (ma - mb) ** 2 / vb - 1.0 - math.log(va / vb))


@dataclass(frozen=True)
class Gaussian(_GaussianBase):
    """f_h = N(mu_h, var_h); the general two-Gaussian pair."""

    mu0: float
    var0: float
    mu1: float
    var1: float

    def __post_init__(self):
        if not (self.var0 > 0 and self.var1 > 0):
            raise ValueError("variances must be positive")
        _check_distinct((self.mu0, self.mu1), (self.var0, self.var1))

    mean0 = property(lambda self: self.mu0)
    mean1 = property(lambda self: self.mu1)


@dataclass(frozen=True)
class GaussianMeanShift(_GaussianBase):
    """f_h = N(mu_h, sigma^2)."""

    mu0: float
    mu1: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        _check_distinct((self.mu0, self.mu1))

    mean0 = property(lambda self: self.mu0)
    mean1 = property(lambda self: self.mu1)
    var0 = property(lambda self: self.sigma ** 2)
    var1 = property(lambda self: self.sigma ** 2)


@dataclass(frozen=True)
class GaussianVariance(_GaussianBase):
    """f_h = N(0, var_h)."""

    var0: float
    var1: float

    def __post_init__(self):
        if not (self.var0 > 0 and self.var1 > 0):
            raise ValueError("variances must be positive")
        _check_distinct((self.var0, self.var1))

    mean0 = property(lambda self: 0.0)
    mean1 = property(lambda self: 0.0)

    @classmethod
    def from_snr(cls, snr_db: float) -> "GaussianVariance":
        """f0 = N(0, 1) against f1 = N(0, 1 + P) with P = 10^(snr/10)."""
        return cls(1.0, 1.0 + 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class Gamma(ModelPair):
    """f_h = Gamma(shape kappa_h, scale theta) with a shared scale."""

    kappa0: float
    kappa1: float
    theta: float
    theta1: float | None = None

    family = "gamma"

    def __post_init__(self):
        if self.theta1 is not None and self.theta1 != self.theta:
            raise ValueError("gamma mixtures need a shared scale theta")
        if not (self.kappa0 > 0 and self.kappa1 > 0 and self.theta > 0):
            raise ValueError("gamma shapes and scale must be positive")
        _check_distinct((self.kappa0, self.kappa1))

    def _shape(self, n, a):
        return a * self.kappa1 + (n - a) * self.kappa0

    def _validate_point(self, z):
        if np.any(np.asarray(z) < 0):
            raise ValueError("gamma observations must be nonnegative")
        return z

    def _logpdf(self, n, a, z):
        k = self._shape(n, a)
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            return (special.xlogy(k - 1.0, z) - z / self.theta
                    - special.gammaln(k) - k * math.log(self.theta))

    def log_ratio(self, n_mixed, z, num=1, den=0):
        z = np.asarray(self._validate_point(z), dtype=float)
        k1, k0 = self._shape(n_mixed, num), self._shape(n_mixed, den)
        with np.errstate(divide="ignore"):
            return (special.xlogy(k1 - k0, z) - (special.gammaln(k1) - special.gammaln(k0))
                    - (k1 - k0) * math.log(self.theta))

    def log_ratio_fn(self, n_mixed, num=1, den=0):
        k1, k0 = self._shape(n_mixed, num), self._shape(n_mixed, den)
        dk = k1 - k0
        const = -(math.lgamma(k1) - math.lgamma(k0)) - dk * math.log(self.theta)
        log = math.log

        def step(z):
            if z > 0.0:
                return dk * log(z) + const
            return -math.inf if dk > 0 else math.inf

        return step

    def _draw(self, n, a, rng, size=None):
        return rng.gamma(self._shape(n, a), self.theta, size)

    def _support(self, n, a):
        k = self._shape(n, a)
        return (float(stats.gamma.ppf(SUPPORT_TAIL / 2, k, scale=self.theta)),
                float(stats.gamma.isf(SUPPORT_TAIL / 2, k, scale=self.theta)))

    def _kl(self, n, a, b):
        ka, kb = self._shape(n, a), self._shape(n, b)
        return (ka - kb) * special.digamma(ka) - special.gammaln(ka) + special.gammaln(kb)


@dataclass(frozen=True)
class Poisson(ModelPair):
    """f_h = Poisson(lam_h)."""

    lam0: float
    lam1: float

    family = "poisson"
    discrete = True

    def __post_init__(self):
        if not (self.lam0 > 0 and self.lam1 > 0):
            raise ValueError("poisson rates must be positive")
        _check_distinct((self.lam0, self.lam1))

    def _rate(self, n, a):
        return a * self.lam1 + (n - a) * self.lam0

    def _validate_point(self, z):
        z_arr = np.asarray(z)
        if np.any(z_arr < 0) or np.any(z_arr != np.floor(z_arr)):
            raise ValueError("poisson observations must be nonnegative integers")
        return z

    def _logpdf(self, n, a, z):
        lam = self._rate(n, a)
        z = np.asarray(z, dtype=float)
        return special.xlogy(z, lam) - lam - special.gammaln(z + 1.0)

    def log_ratio(self, n_mixed, z, num=1, den=0):
        z = np.asarray(self._validate_point(z), dtype=float)
        l1, l0 = self._rate(n_mixed, num), self._rate(n_mixed, den)
        return z * math.log(l1 / l0) - (l1 - l0)

    def log_ratio_fn(self, n_mixed, num=1, den=0):
        l1, l0 = self._rate(n_mixed, num), self._rate(n_mixed, den)
        slope, const = math.log(l1 / l0), -(l1 - l0)
        return lambda z: z * slope + const

    def _draw(self, n, a, rng, size=None):
        out = rng.poisson(self._rate(n, a), size)
        return float(out) if size is None else out.astype(float)

    def _support(self, n, a):
        lam = self._rate(n, a)
        return (float(stats.poisson.ppf(SUPPORT_TAIL / 2, lam)),
                float(stats.poisson.isf(SUPPORT_TAIL / 2, lam)))

    def _kl(self, n, a, b):
        la, lb = self._rate(n, a), self._rate(n, b)
        return la * math.log(la / lb) - (la - lb)


@dataclass(frozen=True)
class Bernoulli(ModelPair):
    """Two-point alphabet {0, 1} with P(Y=1) = p_h; a toy for exact oracles."""

    p0: float
    p1: float

    family = "bernoulli"
    discrete = True

    def __post_init__(self):
        if not (0 < self.p0 < 1 and 0 < self.p1 < 1):
            raise ValueError("bernoulli parameters must lie in (0, 1)")
        _check_distinct((self.p0, self.p1))

    def pmf_table(self, n, a) -> np.ndarray:
        """pmf of the sum on {0, ..., n}: Binomial(a, p1) * Binomial(n - a, p0)."""
        return _bernoulli_table(self.p0, self.p1, n, a)

    def _validate_point(self, z):
        z_arr = np.asarray(z)
        if np.any(z_arr < 0) or np.any(z_arr != np.floor(z_arr)):
            raise ValueError("bernoulli sums must be nonnegative integers")
        return z

    def _logpdf(self, n, a, z):
        table = self.pmf_table(n, a)
        z = np.asarray(z)
        idx = np.clip(z.astype(int), 0, n)
        with np.errstate(divide="ignore"):
            return np.where(z <= n, np.log(table[idx]), -np.inf)

    def _draw(self, n, a, rng, size=None):
        out = rng.binomial(a, self.p1, size) + rng.binomial(n - a, self.p0, size)
        return float(out) if size is None else np.asarray(out, dtype=float)

    def _support(self, n, a):
        return 0.0, float(n)

    def _kl(self, n, a, b):
        pa, pb = self.pmf_table(n, a), self.pmf_table(n, b)
        return float(np.sum(special.rel_entr(pa, pb)))


@lru_cache(maxsize=None)
def _bernoulli_table(p0, p1, n, a):
    table = np.convolve(stats.binom.pmf(np.arange(a + 1), a, p1),
                        stats.binom.pmf(np.arange(n - a + 1), n - a, p0))
    table.setflags(write=False)
    return table


@lru_cache(maxsize=256)
def _quadrature(model: ModelPair, n_mixed: int, n_active: int, n_nodes: int):
    lo, hi = model.support(n_mixed, n_active)
    if model.discrete:
        nodes = np.arange(lo, hi + 1.0)
        weights = np.exp(model.logpdf(n_mixed, n_active, nodes))
    else:
        t, w = np.polynomial.legendre.leggauss(n_nodes)
        nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * w * np.exp(model.logpdf(n_mixed, n_active, nodes))
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


# -- module-level operations ----------------------------------------------

def _check_h(hypothesis):
    if hypothesis not in (H0, H1):
        raise ValueError(f"hypothesis must be 0 or 1, got {hypothesis!r}")
    return int(hypothesis)


def density(model: ModelPair, hypothesis: int, y):
    """f_h(y)."""
    return model.pdf(1, _check_h(hypothesis), y)


def llr(model: ModelPair, y):
    """log f1(y) / f0(y)."""
    return model.log_ratio(1, y)


def mixture_density(model: ModelPair, mix: MixtureDensity, z):
    """Density of the sum described by ``mix`` at ``z``."""
    return model.pdf(mix.n_mixed, mix.n_active, z)


def sample(model: ModelPair, hypothesis: int, rng, size=None):
    """Draw from f_h using the caller's generator."""
    return model.draw(1, _check_h(hypothesis), rng, size)


def sample_mixture(model: ModelPair, mix: MixtureDensity, rng, size=None):
    return model.draw(mix.n_mixed, mix.n_active, rng, size)


def kl_divergence(model: ModelPair, direction: str = "10") -> float:
    """D(f1||f0) for ``direction='10'`` and D(f0||f1) for ``'01'``."""
    if direction == "10":
        return model.component_kl(1, 1, 0)
    if direction == "01":
        return model.component_kl(1, 0, 1)
    raise ValueError("direction must be '10' or '01'")


def effective_support(model: ModelPair, mix: MixtureDensity | None = None) -> Tuple[float, float]:
    """Interval holding at least 1 - 1e-10 of the mass of ``mix``, or of every
    single-sample and two-sample component when ``mix`` is omitted."""
    if mix is not None:
        return model.support(mix.n_mixed, mix.n_active)
    lo1, hi1 = model.support(1)
    lo2, hi2 = model.support(2)
    return min(lo1, lo2), max(hi1, hi2)


class ObservationStream:
    """Buffered per-component draws from one generator.

    Each component keeps its own block of i.i.d. draws, refilled on demand, so
    consumption is deterministic given the sequence of requests.
    """

    def __init__(self, model: ModelPair, rng, block: int = 256):
        self.model = model
        self.rng = rng
        self.block = block
        self._buffers = {}
        self._uniform = np.empty(0)
        self._upos = 0

    def draw(self, n_mixed: int, n_active: int) -> float:
        key = (n_mixed, n_active)
        buf = self._buffers.get(key)
        if buf is None or buf[1] >= len(buf[0]):
            values = self.model.draw(n_mixed, n_active, self.rng, self.block).tolist()
            buf = [values, 0]
            self._buffers[key] = buf
        value = buf[0][buf[1]]
        buf[1] += 1
        return value

    def bernoulli(self, p: float) -> bool:
        """True with probability ``p``; used for ground-truth sequence states."""
        if self._upos >= len(self._uniform):
            self._uniform = self.rng.random(self.block).tolist()
            self._upos = 0
        u = self._uniform[self._upos]
        self._upos += 1
        return u < p


def model_from_dict(spec: dict) -> ModelPair:
    """Build a model from ``{"family": name, **params}``."""
    families = {
        "gaussian_mean_shift": (GaussianMeanShift, ("mu0", "mu1", "sigma")),
        "gaussian_variance": (GaussianVariance, ("var0", "var1")),
        "gaussian": (Gaussian, ("mu0", "var0", "mu1", "var1")),
        "gamma": (Gamma, ("kappa0", "kappa1", "theta")),
        "poisson": (Poisson, ("lam0", "lam1")),
        "bernoulli": (Bernoulli, ("p0", "p1")),
    }
    spec = dict(spec)
    name = spec.pop("family", None)
    if name not in families:
        raise ValueError(f"unknown family {name!r}; valid options: {', '.join(sorted(families))}")
    cls, params = families[name]
    if name == "gaussian_variance" and "snr_db" in spec:
        if len(spec) != 1:
            raise ValueError("gaussian_variance takes either snr_db or var0/var1")
        return GaussianVariance.from_snr(float(spec["snr_db"]))
    missing = [p for p in params if p not in spec]
    extra = [k for k in spec if k not in params]
    if missing or extra:
        raise ValueError(f"family {name!r} expects parameters {params}; "
                         f"missing {missing}, unexpected {extra}")
    return cls(*(float(spec[p]) for p in params))


def model_to_dict(model: ModelPair) -> dict:
    names = {GaussianMeanShift: "gaussian_mean_shift", GaussianVariance: "gaussian_variance",
             Gaussian: "gaussian", Gamma: "gamma", Poisson: "poisson", Bernoulli: "bernoulli"}
    out = {"family": names[type(model)]}
    for key, value in model.__dict__.items():
        if value is not None:
            out[key] = value
    return out
