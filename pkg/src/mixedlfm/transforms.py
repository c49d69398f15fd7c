"""Per-attribute maps between pseudo-observation space and observation space.

Each attribute kind gets a monotone (or argmax) map f from the real line
into its observation space, fitted once per column:

* real     x = w * y + mu            (affine standardization)
* posreal  x = softplus(w * y)
* count    x = floor(softplus(w * y))
* ord      x = r  such that  theta_{r-1} < y <= theta_r
* cat      x = argmax over R pseudo-observation channels

The module also provides the inverse images used by the sampler (exact
points for invertible maps, intervals for threshold maps) and plug-in
log densities / probabilities of an observed value given a Gaussian
pseudo-observation N(m, s^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from .dataset import (
    CATEGORICAL,
    COUNT,
    ORDINAL,
    POSREAL,
    REAL,
    AttributeType,
)

#: ceiling of the equally spaced initial interior thresholds
THETA_INIT_MAX = 1.0

_LOG_2PI = math.log(2.0 * math.pi)

# Gauss-Hermite rule used for categorical probabilities, fixed at 61 nodes.
_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(61)
_GH_T = _GH_NODES * math.sqrt(2.0)
_GH_W = _GH_WEIGHTS / math.sqrt(math.pi)


def softplus(t):
    """log(1 + exp(t)), stable for large |t|."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > 0, t + np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(np.minimum(t, 0.0))))


def softplus_inv(x):
    """Inverse of softplus: log(exp(x) - 1) for x > 0, stable at both ends."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        small = np.log(np.expm1(np.minimum(x, 30.0)))
    return np.where(x > 30.0, x, small)


@dataclass(frozen=True)
class TransformSpec:
    """Fitted parameters of one attribute's observation map.

    Fields are kind-specific: ``mu``/``w`` for real, ``w`` for posreal and
    count, the full threshold vector ``thresholds`` (length R+1, endpoints
    -inf and +inf, thresholds[1] pinned at 0) for ordinal, and
    ``n_categories`` for categorical and ordinal.
    """

    kind: str
    mu: float = 0.0
    w: float = 1.0
    thresholds: Optional[tuple[float, ...]] = None
    n_categories: Optional[int] = None

    def __post_init__(self):
        if self.kind in (REAL, POSREAL, COUNT) and not self.w > 0:
            raise ValueError("scale w must be > 0")
        if self.kind == ORDINAL:
            th = self.thresholds
            if th is None or len(th) != self.n_categories + 1:
                raise ValueError("ordinal spec needs R+1 thresholds")
            if not (math.isinf(th[0]) and th[0] < 0 and math.isinf(th[-1]) and th[-1] > 0):
                raise ValueError("ordinal thresholds must start at -inf and end at +inf")
            if th[1] != 0.0:
                raise ValueError("theta_1 is pinned at 0")
            if any(a >= b for a, b in zip(th[:-1], th[1:])):
                raise ValueError("ordinal thresholds must be strictly increasing")

    @property
    def pseudo_channels(self) -> int:
        """Number of pseudo-observation channels (R for categorical, else 1)."""
        return self.n_categories if self.kind == CATEGORICAL else 1

    def with_thresholds(self, thresholds: tuple[float, ...]) -> "TransformSpec":
        """Whole-value replacement of ordinal thresholds."""
        return TransformSpec(self.kind, self.mu, self.w, tuple(thresholds), self.n_categories)


@dataclass(frozen=True)
class PseudoInterval:
    """Inverse image {y : f(y) = x} of one observed value.

    A genuine interval for threshold kinds; a zero-width marker
    (lower == upper) for the invertible continuous maps.
    """

    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("interval bounds out of order")

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper


def initial_thresholds(r: int) -> tuple[float, ...]:
    """(-inf, 0, interior..., +inf) with interior equally spaced in (0, 1]."""
    interior = [THETA_INIT_MAX * (i + 1) / (r - 2) for i in range(r - 2)] if r > 2 else []
    return tuple([-math.inf, 0.0] + interior + [math.inf])


def fit_transform(values: np.ndarray, atype: AttributeType) -> TransformSpec:
    """Fit an observation map to one column's non-missing values.

    real: mu = mean, w = sample std (1 if degenerate); posreal/count:
    w = 2 / max (1 if max is 0); ordinal: equally spaced initial
    thresholds; categorical: channel count only.
    """
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("cannot fit a transform to an empty column")
    if atype.kind == REAL:
        mu = float(np.mean(values))
        w = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        return TransformSpec(REAL, mu=mu, w=w if w > 0 else 1.0)
    if atype.kind in (POSREAL, COUNT):
        vmax = float(np.max(values))
        return TransformSpec(atype.kind, w=2.0 / vmax if vmax > 0 else 1.0)
    if atype.kind == ORDINAL:
        r = atype.n_categories
        return TransformSpec(ORDINAL, thresholds=initial_thresholds(r), n_categories=r)
    return TransformSpec(CATEGORICAL, n_categories=atype.n_categories)


def forward(y: Union[float, np.ndarray], spec: TransformSpec):
    """Map pseudo-observation(s) to observation space (non-categorical).

    Total on the real line; categorical needs the full channel vector,
    see :func:`forward_categorical`.
    """
    if spec.kind == CATEGORICAL:
        raise ValueError("categorical forward needs the full channel vector")
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == REAL:
        out = spec.w * y + spec.mu
    elif spec.kind == POSREAL:
        out = softplus(spec.w * y)
    elif spec.kind == COUNT:
        out = np.floor(softplus(spec.w * y))
    else:
        th = np.asarray(spec.thresholds)
        # searchsorted over the open/closed convention theta_{r-1} < y <= theta_r
        out = np.searchsorted(th, y, side="left").astype(np.int64)
        out = np.clip(out, 1, spec.n_categories)
    return out if out.ndim else out.item()


def forward_categorical(y_channels: np.ndarray, spec: TransformSpec) -> int:
    """Category index = argmax channel, ties broken toward the lowest index."""
    if spec.kind != CATEGORICAL:
        raise ValueError("spec is not categorical")
    y = np.asarray(y_channels, dtype=np.float64)
    if y.shape[-1] != spec.n_categories:
        raise ValueError("channel vector length must equal R")
    return int(np.argmax(y)) + 1


def inverse_point(x: float, spec: TransformSpec) -> float:
    """Exact inverse f^-1(x) for the invertible continuous maps."""
    if spec.kind == REAL:
        return (float(x) - spec.mu) / spec.w
    if spec.kind == POSREAL:
        if x <= 0:
            raise ValueError("positive-real observation must be > 0")
        return float(softplus_inv(x)) / spec.w
    raise ValueError(f"{spec.kind} has no pointwise inverse")


def inverse_interval(x, spec: TransformSpec) -> PseudoInterval:
    """Inverse image of an observed value under the attribute map.

    Count v maps to [f^-1(v), f^-1(v+1)) with f^-1(0) = -inf; ordinal r to
    (theta_{r-1}, theta_r]; the continuous kinds yield zero-width markers.
    """
    if spec.kind == CATEGORICAL:
        raise ValueError("categorical cells have no scalar inverse interval")
    if spec.kind in (REAL, POSREAL):
        p = inverse_point(x, spec)
        return PseudoInterval(p, p)
    if spec.kind == COUNT:
        v = int(x)
        if v < 0:
            raise ValueError("count observation must be >= 0")
        lo = -math.inf if v == 0 else float(softplus_inv(v)) / spec.w
        hi = float(softplus_inv(v + 1)) / spec.w
        return PseudoInterval(lo, hi)
    r = int(x)
    if not 1 <= r <= spec.n_categories:
        raise ValueError(f"ordinal level {r} outside 1..{spec.n_categories}")
    return PseudoInterval(spec.thresholds[r - 1], spec.thresholds[r])


def _norm_logpdf(x: float, m: float, s: float) -> float:
    z = (x - m) / s
    return -0.5 * z * z - math.log(s) - 0.5 * _LOG_2PI


def gaussian_interval_prob(lo: float, hi: float, m: float, s: float) -> float:
    """P(lo < Y <= hi) for Y ~ N(m, s^2), evaluated tail-stably."""
    a = (lo - m) / s
    b = (hi - m) / s
    if a > 0:  # both bounds in the upper tail: use complements
        return float(ndtr(-a) - ndtr(-b))
    return float(ndtr(b) - ndtr(a))


def categorical_probs(means: np.ndarray, s: float) -> np.ndarray:
    """P(argmax channel = r) with channels ~ N(means[r], s^2) independent.

    Evaluated by 61-node Gauss-Hermite quadrature of
    integral phi(t) * prod_{j != r} Phi(t + (m_r - m_j)/s) dt.
    """
    m = np.asarray(means, dtype=np.float64)
    rr = m.shape[0]
    probs = np.empty(rr)
    for r in range(rr):
        shift = (m[r] - np.delete(m, r)) / s
        vals = ndtr(_GH_T[:, None] + shift[None, :]).prod(axis=1)
        probs[r] = float(_GH_W @ vals)
    return probs


def categorical_logprob_rows(means: np.ndarray, robs: np.ndarray, s: float) -> np.ndarray:
    """Row-wise log P(argmax channel = robs[n]) for an (N, R) mean matrix.

    Same quadrature as :func:`categorical_probs`, vectorized over rows in
    cache-sized chunks; zero probabilities clamp to log(1e-300).
    """
    n = means.shape[0]
    out = np.empty(n)
    for lo in range(0, n, 256):
        hi = min(lo + 256, n)
        block = means[lo:hi]
        ar = np.arange(hi - lo)
        mr = block[ar, robs[lo:hi]]
        diffs = (mr[:, None] - block) / s
        diffs[ar, robs[lo:hi]] = np.inf  # drop the j = r factor
        g = ndtr(_GH_T[None, :, None] + diffs[:, None, :]).prod(axis=2)
        out[lo:hi] = g @ _GH_W
    return np.log(np.maximum(out, 1e-300))


def ordinal_probs(spec: TransformSpec, m: float, s: float) -> np.ndarray:
    """Level probabilities Phi((theta_r - m)/s) - Phi((theta_{r-1} - m)/s)."""
    th = np.asarray(spec.thresholds)
    return np.array([gaussian_interval_prob(th[r], th[r + 1], m, s) for r in range(spec.n_categories)])


def count_probs(spec: TransformSpec, m: float, s: float, v_max: int) -> np.ndarray:
    """P(count = v) for v = 0..v_max, plus the upper tail P(count > v_max) last."""
    bounds = np.concatenate(([-math.inf], softplus_inv(np.arange(1, v_max + 2)) / spec.w, [math.inf]))
    out = np.array(
        [gaussian_interval_prob(bounds[v], bounds[v + 1], m, s) for v in range(v_max + 2)]
    )
    return out


def observation_logdensity(x, m, s: float, spec: TransformSpec) -> float:
    """Log density (continuous) or log probability (discrete) of x.

    The pseudo-observation is N(m, s^2); for categorical, ``m`` is the
    length-R vector of channel means.  Degenerate zero probabilities give
    -inf, never NaN.
    """
    if s <= 0:
        raise ValueError("total sd must be > 0")
    if spec.kind == REAL:
        return _norm_logpdf((x - spec.mu) / spec.w, m, s) - math.log(spec.w)
    if spec.kind == POSREAL:
        if x <= 0:
            return -math.inf
        y = inverse_point(x, spec)
        # log (f^-1)'(x) = -log w + x - log(e^x - 1), stable via expm1
        if x > 30.0:
            log_jac = -math.log(spec.w)
        else:
            log_jac = -math.log(spec.w) + x - math.log(math.expm1(x))
        return _norm_logpdf(y, m, s) + log_jac
    if spec.kind == COUNT:
        iv = inverse_interval(int(x), spec)
        p = gaussian_interval_prob(iv.lower, iv.upper, m, s)
        return math.log(p) if p > 0 else -math.inf
    if spec.kind == ORDINAL:
        iv = inverse_interval(int(x), spec)
        p = gaussian_interval_prob(iv.lower, iv.upper, m, s)
        return math.log(p) if p > 0 else -math.inf
    probs = categorical_probs(np.asarray(m, dtype=np.float64), s)
    p = probs[int(x) - 1]
    return math.log(p) if p > 0 else -math.inf
