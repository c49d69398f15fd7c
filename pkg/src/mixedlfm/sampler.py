"""Semi-collapsed Gibbs sampler for the mixed-type latent feature model.

One sweep alternates: pseudo-observation resampling given (Z, B), collapsed
feature-bit updates with B marginalized (plus singleton birth/death), weight
resampling, ordinal threshold resampling, and an optional conjugate update of
the feature-process mass alpha.  The pseudo-observation noise is fixed at 1
for every channel, so a single posterior matrix M = (Z^T Z + lam I)^-1 with
lam = 1 / sigma_b_sq serves all attributes; that shared matrix is what makes
a sweep linear in both N and D.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, ndtr

from . import _kernel
from .dataset import (
    CATEGORICAL,
    COUNT,
    ORDINAL,
    POSREAL,
    REAL,
    AttributeType,
    HeterogeneousDataset,
    Hyperparameters,
    LatentMatrix,
    make_dataset,
    validate,
)
from .ibp import harmonic
from .transforms import (
    TransformSpec,
    categorical_logprob_rows,
    categorical_probs,
    count_probs,
    fit_transform,
    inverse_interval,
    inverse_point,
    ordinal_probs,
    softplus,
    softplus_inv,
)
from .truncnorm import sample_truncated_normal

_LOG_2PI = math.log(2.0 * math.pi)
_PROB_FLOOR = 1e-300

#: proper upper bound of the uniform prior on interior ordinal thresholds
THETA_CEIL = 100.0

#: spare latent-feature capacity kept around the active columns
_HEADROOM = 64


# --------------------------------------------------------------------------
# channel bookkeeping
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelLayout:
    """Mapping between attributes and pseudo-observation channels.

    A categorical attribute with R categories owns R channels, of which the
    first is pinned (weights identically zero, for identifiability); every
    other attribute owns a single channel.
    """

    starts: np.ndarray
    counts: np.ndarray
    attr_of: np.ndarray
    pinned: np.ndarray
    active_idx: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.attr_of.shape[0]

    @property
    def n_active(self) -> int:
        return self.active_idx.shape[0]

    def channels(self, d: int) -> slice:
        return slice(int(self.starts[d]), int(self.starts[d] + self.counts[d]))


def channel_layout(types: tuple[AttributeType, ...]) -> ChannelLayout:
    starts, counts, attr_of, pinned = [], [], [], []
    pos = 0
    for d, t in enumerate(types):
        c = t.n_categories if t.kind == CATEGORICAL else 1
        starts.append(pos)
        counts.append(c)
        attr_of.extend([d] * c)
        pinned.extend([t.kind == CATEGORICAL and j == 0 for j in range(c)])
        pos += c
    pinned = np.asarray(pinned, dtype=bool)
    return ChannelLayout(
        starts=np.asarray(starts, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        attr_of=np.asarray(attr_of, dtype=np.int64),
        pinned=pinned,
        active_idx=np.nonzero(~pinned)[0],
    )


# --------------------------------------------------------------------------
# sampler state
# --------------------------------------------------------------------------

@dataclass
class SamplerState:
    """Mutable state of one chain; owned by exactly one execution context."""

    dataset: HeterogeneousDataset
    hyper: Hyperparameters
    specs: list[TransformSpec]
    layout: ChannelLayout
    y: np.ndarray
    b: np.ndarray
    alpha: float
    rng: np.random.Generator
    iteration: int = 0
    _zc: np.ndarray = field(default=None, repr=False)
    _minv: np.ndarray = field(default=None, repr=False)
    _proj: np.ndarray = field(default=None, repr=False)
    _mcounts: np.ndarray = field(default=None, repr=False)
    _yact: np.ndarray = field(default=None, repr=False)
    _k1: int = 1
    _xfloat: list = field(default=None, repr=False)

    # -- views ------------------------------------------------------------
    @property
    def n_objects(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        """Active non-bias feature count K."""
        return self._k1 - 1

    @property
    def z_float(self) -> np.ndarray:
        return self._zc[:, : self._k1]

    @property
    def z_binary(self) -> np.ndarray:
        return self._zc[:, : self._k1].astype(np.uint8)

    @property
    def latent(self) -> LatentMatrix:
        return LatentMatrix(self.z_binary)

    @property
    def m_matrix(self) -> np.ndarray:
        return self._minv[: self._k1, : self._k1]

    @property
    def proj(self) -> np.ndarray:
        return self._proj[:, : self._k1]

    def means(self) -> np.ndarray:
        """Per-cell channel means Z B, shape (N, total channels)."""
        return self.z_float @ self.b

    # -- maintenance --------------------------------------------------------
    def refresh_yact(self):
        self._yact = np.ascontiguousarray(self.y[:, self.layout.active_idx])

    def refresh_proj(self):
        self._proj[:] = 0.0
        self._proj[:, : self._k1] = self._yact.T @ self.z_float

    def refresh_m(self):
        g = self.z_float.T @ self.z_float + np.eye(self._k1) / self.hyper.sigma_b_sq
        self._minv[:] = 0.0
        self._minv[: self._k1, : self._k1] = np.linalg.inv(g)

    def grow(self, cap: int):
        n, c = self.n_objects, self.layout.n_active
        zc = np.zeros((n, cap))
        zc[:, : self._k1] = self.z_float
        minv = np.zeros((cap, cap))
        minv[: self._k1, : self._k1] = self.m_matrix
        proj = np.zeros((c, cap))
        proj[:, : self._k1] = self.proj
        mcounts = np.zeros(cap, dtype=np.int64)
        mcounts[: self._k1] = self._mcounts[: self._k1]
        self._zc, self._minv, self._proj, self._mcounts = zc, minv, proj, mcounts

    def refresh_data_caches(self):
        """Rebuild per-kind caches of quantities that depend only on X.

        Continuous columns cache the evidence points f^-1(x) and the total
        jacobian constant; count columns cache their truncation bounds
        (missing cells get an unbounded interval).  Must be called again
        if the observed data is replaced in place (simulation harnesses).
        """
        ds, specs, layout = self.dataset, self.specs, self.layout
        n = self.n_objects
        cont = [d for d, s in enumerate(specs) if s.kind in (REAL, POSREAL)]
        self._cont_d = np.asarray(cont, dtype=np.int64)
        self._cont_ch = np.asarray([layout.starts[d] for d in cont], dtype=np.int64)
        self._cont_miss = (
            ds.missing[:, cont] if cont else np.zeros((n, 0), dtype=bool)
        )
        e = np.zeros((n, len(cont)))
        jac_total = 0.0
        for j, d in enumerate(cont):
            spec = specs[d]
            x = self._xfloat[d]
            obs = ~ds.missing[:, d]
            if spec.kind == REAL:
                e[obs, j] = (x[obs] - spec.mu) / spec.w
                jac_total += -obs.sum() * math.log(spec.w)
            else:
                xv = x[obs]
                e[obs, j] = softplus_inv(xv) / spec.w
                jac = np.where(xv > 30.0, 0.0, xv - np.log(np.expm1(np.minimum(xv, 30.0))))
                jac_total += float(jac.sum()) - obs.sum() * math.log(spec.w)
        self._cont_e = e
        self._cont_jac = jac_total
        self._cont_n_obs = int((~self._cont_miss).sum())

        cnt = [d for d, s in enumerate(specs) if s.kind == COUNT]
        self._cnt_d = np.asarray(cnt, dtype=np.int64)
        self._cnt_ch = np.asarray([layout.starts[d] for d in cnt], dtype=np.int64)
        self._cnt_miss = ds.missing[:, cnt] if cnt else np.zeros((n, 0), dtype=bool)
        lo = np.full((n, len(cnt)), -np.inf)
        hi = np.full((n, len(cnt)), np.inf)
        for j, d in enumerate(cnt):
            spec = specs[d]
            obs = ~ds.missing[:, d]
            v = self._xfloat[d][obs]
            with np.errstate(divide="ignore"):
                lo[obs, j] = np.where(v == 0, -np.inf, softplus_inv(np.maximum(v, 1.0)) / spec.w)
            hi[obs, j] = softplus_inv(v + 1.0) / spec.w
        self._cnt_lo = lo
        self._cnt_hi = hi


def _init_pseudo(dataset: HeterogeneousDataset, specs, layout: ChannelLayout) -> np.ndarray:
    """Start Y at inverse-interval midpoints (finite bound -/+ 1 when open)."""
    n = dataset.n_objects
    y = np.zeros((n, layout.n_channels))
    for d, spec in enumerate(specs):
        obs = ~dataset.missing[:, d]
        rows = np.nonzero(obs)[0]
        if spec.kind == CATEGORICAL:
            ch = layout.channels(d)
            r = dataset.columns[d][rows].astype(np.int64) - 1
            block = np.zeros((rows.size, spec.n_categories))
            block[np.arange(rows.size), r] = 1.0
            y[rows, ch.start : ch.stop] = block
            continue
        c0 = int(layout.starts[d])
        for i in rows:
            x = dataset.columns[d][i]
            if spec.kind in (REAL, POSREAL):
                y[i, c0] = inverse_point(float(x), spec)
            else:
                iv = inverse_interval(int(x), spec)
                if math.isinf(iv.lower):
                    y[i, c0] = iv.upper - 1.0
                elif math.isinf(iv.upper):
                    y[i, c0] = iv.lower + 1.0
                else:
                    y[i, c0] = 0.5 * (iv.lower + iv.upper)
    return y


def init(
    dataset: HeterogeneousDataset,
    hyper: Hyperparameters,
    rng: Optional[np.random.Generator] = None,
) -> SamplerState:
    """Build a consistent sampler state: fitted transforms, K_init random
    features plus the bias column, midpoint pseudo-observations, and weights
    drawn from their Gaussian posterior."""
    violations = validate(dataset)
    if violations:
        head = "; ".join(f"({v.row},{v.column}): {v.reason}" for v in violations[:5])
        raise ValueError(f"dataset fails validation ({len(violations)} violations): {head}")
    for d in range(dataset.n_attributes):
        if dataset.observed(d).size == 0:
            raise ValueError(f"column {dataset.names[d]!r} has no observed values")
    rng = np.random.default_rng(hyper.seed) if rng is None else rng
    specs = [fit_transform(dataset.observed(d), t) for d, t in enumerate(dataset.types)]
    layout = channel_layout(dataset.types)
    n = dataset.n_objects

    z0 = (rng.random((n, hyper.k_init)) < 0.5).astype(np.float64) if hyper.k_init else np.zeros((n, 0))
    z0 = z0[:, z0.sum(axis=0) > 0]
    k1 = 1 + z0.shape[1]
    cap = k1 + _HEADROOM
    zc = np.zeros((n, cap))
    zc[:, 0] = 1.0
    zc[:, 1:k1] = z0

    state = SamplerState(
        dataset=dataset,
        hyper=hyper,
        specs=specs,
        layout=layout,
        y=_init_pseudo(dataset, specs, layout),
        b=np.zeros((k1, layout.n_channels)),
        alpha=hyper.alpha,
        rng=rng,
        _zc=zc,
        _minv=np.zeros((cap, cap)),
        _proj=np.zeros((layout.n_active, cap)),
        _mcounts=np.zeros(cap, dtype=np.int64),
        _k1=k1,
    )
    state._mcounts[:k1] = state.z_float.sum(axis=0).astype(np.int64)
    state._xfloat = [dataset.columns[d].astype(np.float64) for d in range(dataset.n_attributes)]
    state.refresh_data_caches()
    state.refresh_yact()
    state.refresh_m()
    state.refresh_proj()
    resample_weights(state)
    return state


# --------------------------------------------------------------------------
# collapsed evidence
# --------------------------------------------------------------------------

def collapsed_log_evidence(z: np.ndarray, y_channels: np.ndarray, sigma_b_sq: float) -> float:
    """log p(Y | Z) with the weights marginalized under N(0, sigma_b_sq).

    ``z`` is (N, 1+K) including the bias column, ``y_channels`` the (N, C)
    matrix of modeled (non-pinned) pseudo-observations with unit noise.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y_channels, dtype=np.float64)
    n, k1 = z.shape
    c = y.shape[1]
    g = z.T @ z + np.eye(k1) / sigma_b_sq
    _, logdet = np.linalg.slogdet(g)
    p = z.T @ y
    quad = float(np.sum(y * y) - np.sum(p * np.linalg.solve(g, p)))
    return -0.5 * n * c * _LOG_2PI - 0.5 * c * (k1 * math.log(sigma_b_sq) + logdet) - 0.5 * quad


def _toggle_terms(state: SamplerState, n: int, k: int, sgn: float):
    """Shared rank-one quantities for flipping z[n, k] by ``sgn`` (+1/-1)."""
    m = state.m_matrix
    zrow = state.z_float[n]
    a = m @ zrow
    al = max(1.0 - float(zrow @ a), _kernel._EPS)
    b = a + sgn * m[:, k] + a * (((1.0 - al) + sgn * a[k]) / al)
    beta = max(1.0 + float(zrow @ b) + sgn * b[k], _kernel._EPS)
    return a, al, b, beta


def collapsed_loglik_delta(state: SamplerState, n: int, k: int, proposed: int) -> float:
    """log p(Y | Z with z_nk = proposed) - log p(Y | Z current).

    Evaluated through rank-one updates of the shared posterior matrix;
    cost O(K^2 + K C), independent of N.  The bias column (k = 0) is
    never toggled.
    """
    if not 1 <= k < state._k1:
        raise ValueError("k must index a non-bias feature")
    zc = float(state.z_float[n, k])
    if int(proposed) == int(zc):
        return 0.0
    sgn = 1.0 - 2.0 * zc
    a, al, b, beta = _toggle_terms(state, n, k, sgn)
    proj = state.proj
    pa = proj @ a
    pb = proj @ b
    mkp = proj @ state.m_matrix[k]
    delta = sgn * state._yact[n]
    mkk_new = state.m_matrix[k, k] + a[k] ** 2 / al - b[k] ** 2 / beta
    mkp_new = mkp + a[k] * pa / al - b[k] * pb / beta
    dq = float(np.sum(pa * pa / al - pb * pb / beta + 2.0 * delta * mkp_new + delta * delta * mkk_new))
    dlogdet = math.log(al) + math.log(beta)
    return -0.5 * state.layout.n_active * dlogdet + 0.5 * dq


def apply_toggle(state: SamplerState, n: int, k: int, new_bit: int):
    """Set z[n, k] and propagate the rank-one updates to M and P."""
    zc = float(state.z_float[n, k])
    if int(new_bit) == int(zc):
        return
    sgn = 1.0 - 2.0 * zc
    a, al, b, beta = _toggle_terms(state, n, k, sgn)
    m = state.m_matrix
    m += np.outer(a, a) / al - np.outer(b, b) / beta
    state._zc[n, k] = float(new_bit)
    state._mcounts[k] += 1 if new_bit else -1
    state._proj[:, k] += sgn * state._yact[n]


# --------------------------------------------------------------------------
# pseudo-observation resampling
# --------------------------------------------------------------------------

def resample_pseudo(state: SamplerState, dataset: Optional[HeterogeneousDataset] = None) -> SamplerState:
    """Redraw Y given (Z, B) and the observed cells.

    Threshold kinds draw truncated normals on their inverse intervals;
    the invertible continuous kinds condition the unit-variance prior on
    the noisy evidence f^-1(x); categorical channels get one single-site
    pass that preserves argmax = observed category.  Missing cells draw
    from the untruncated prior.
    """
    dataset = state.dataset if dataset is None else dataset
    rng = state.rng
    su2 = state.hyper.sigma_u_sq
    means = state.means()
    y = state.y
    # continuous columns, all at once: Gaussian conditioning on f^-1(x)
    if state._cont_ch.size:
        prior = means[:, state._cont_ch]
        g = rng.standard_normal(prior.shape)
        post_mean = (su2 * prior + state._cont_e) / (1.0 + su2)
        post = post_mean + math.sqrt(su2 / (1.0 + su2)) * g
        y[:, state._cont_ch] = np.where(state._cont_miss, prior + g, post)
    # count columns, all at once: missing cells carry an unbounded interval
    if state._cnt_ch.size:
        prior = means[:, state._cnt_ch]
        y[:, state._cnt_ch] = sample_truncated_normal(
            rng, prior, 1.0, state._cnt_lo, state._cnt_hi
        )
    for d, spec in enumerate(state.specs):
        if spec.kind == ORDINAL:
            obs = ~dataset.missing[:, d]
            c0 = int(state.layout.starts[d])
            prior = means[:, c0]
            miss = ~obs
            if np.any(miss):
                y[miss, c0] = prior[miss] + rng.standard_normal(int(miss.sum()))
            rows = np.nonzero(obs)[0]
            if rows.size:
                th = np.asarray(spec.thresholds)
                r = state._xfloat[d][rows].astype(np.int64)
                y[rows, c0] = sample_truncated_normal(rng, prior[rows], 1.0, th[r - 1], th[r])
        elif spec.kind == CATEGORICAL:
            _resample_categorical(state, d, spec, means, ~dataset.missing[:, d], rng)
    state.refresh_yact()
    state.refresh_proj()
    return state


def _resample_categorical(state, d, spec, means, obs, rng):
    ch = state.layout.channels(d)
    r_ch = spec.n_categories
    yc = state.y[:, ch]
    mc = means[:, ch]
    miss = ~obs
    if np.any(miss):
        yc[miss] = mc[miss] + rng.standard_normal((int(miss.sum()), r_ch))
    rows = np.nonzero(obs)[0]
    if rows.size == 0:
        return
    robs = state._xfloat[d][rows].astype(np.int64) - 1
    yo = yc[rows]
    mo = mc[rows]
    ar = np.arange(rows.size)
    # observed channel first, lower-truncated at the max of the others
    tmp = yo.copy()
    tmp[ar, robs] = -np.inf
    max_others = tmp.max(axis=1)
    yo[ar, robs] = sample_truncated_normal(rng, mo[ar, robs], 1.0, max_others, np.inf)
    # remaining channels, upper-truncated at the observed channel's new value
    ycap = yo[ar, robs]
    for j in range(r_ch):
        sel = robs != j
        if not np.any(sel):
            continue
        yo[sel, j] = sample_truncated_normal(rng, mo[sel, j], 1.0, -np.inf, ycap[sel])
    yc[rows] = yo


# --------------------------------------------------------------------------
# latent feature sweep
# --------------------------------------------------------------------------

def sweep_z(state: SamplerState) -> SamplerState:
    """One full pass of collapsed bit updates and singleton birth/death.

    Empty non-bias columns cannot survive: shared features only lose mass
    down to one owner, and that owner's singleton move removes or replaces
    them.  Weights are refreshed from their posterior when K changed.
    """
    # the kernel maintains M exactly (see A2); a periodic direct inverse
    # guards against float drift without paying O(K^3 + N K^2) every sweep
    if state.iteration % 8 == 0:
        state.refresh_m()
    state.refresh_proj()
    k_before = state._k1
    row_start = 0
    while True:
        noise = state.rng.logistic(size=state.n_objects * (state._k1 - 1) + 512)
        seed = int(state.rng.integers(0, 2**31 - 1))
        _kernel.seed_rng(seed)
        k1, status, row = _kernel.sweep_rows(
            state._zc,
            state._minv,
            state._proj,
            state._yact,
            state._mcounts,
            state._k1,
            1.0 / state.hyper.sigma_b_sq,
            state.hyper.sigma_b_sq,
            state.alpha,
            state.hyper.k_new_max,
            noise,
            row_start,
        )
        state._k1 = int(k1)
        if status == _kernel.STATUS_OK:
            break
        if status == _kernel.STATUS_CAPACITY:
            state.grow(2 * state._zc.shape[1])
        row_start = int(row)
    if state._k1 != k_before or state.b.shape[0] != state._k1:
        resample_weights(state)
    return state


def new_feature_scores(state: SamplerState, n: int) -> np.ndarray:
    """Normalized probabilities of proposing j = 0..k_new_max new features
    active only at row ``n``, with the new weights marginalized."""
    m = state.m_matrix
    zrow = state.z_float[n]
    a = m @ zrow
    al = max(1.0 - float(zrow @ a), _kernel._EPS)
    q = state.proj @ a
    ssq = float(np.sum((q - state._yact[n]) ** 2))
    lam = 1.0 / state.hyper.sigma_b_sq
    c = state.layout.n_active
    rate = state.alpha / state.n_objects
    js = np.arange(state.hyper.k_new_max + 1, dtype=np.float64)
    scores = js * math.log(rate) - gammaln(js + 1.0)
    pos = js > 0
    scores[pos] += -0.5 * c * np.log(1.0 + js[pos] * al * state.hyper.sigma_b_sq)
    scores[pos] += 0.5 * (js[pos] / (lam + js[pos] * al)) * ssq
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


def _remove_columns(state: SamplerState, cols: list[int]):
    keep = [j for j in range(state._k1) if j not in set(cols)]
    k1 = len(keep)
    n = state.n_objects
    znew = np.zeros_like(state._zc)
    znew[:, :k1] = state._zc[:, keep]
    pnew = np.zeros_like(state._proj)
    pnew[:, :k1] = state._proj[:, keep]
    mc = np.zeros_like(state._mcounts)
    mc[:k1] = state._mcounts[keep]
    state._zc, state._proj, state._mcounts, state._k1 = znew, pnew, mc, k1
    state.refresh_m()


def propose_new_features(state: SamplerState, n: int) -> SamplerState:
    """Resample row ``n``'s singleton-feature count.

    Current features active only at row ``n`` are removed, then j new
    columns are proposed with probability proportional to
    Poisson(j; alpha/N) * p(Y | Z + j columns), j <= k_new_max.  This
    birth/death pairing is what keeps the feature-count prior invariant;
    the m/N conditional never touches singletons.
    """
    singles = [
        k
        for k in range(1, state._k1)
        if state._zc[n, k] > 0.5 and state._mcounts[k] == 1
    ]
    if singles:
        _remove_columns(state, singles)
    probs = new_feature_scores(state, n)
    j = int(np.searchsorted(np.cumsum(probs), state.rng.random()))
    j = min(j, state.hyper.k_new_max)
    if j > 0:
        if state._k1 + j > state._zc.shape[1]:
            state.grow(2 * (state._k1 + j))
        k1 = state._k1
        state._zc[n, k1 : k1 + j] = 1.0
        state._mcounts[k1 : k1 + j] = 1
        state._proj[:, k1 : k1 + j] = state._yact[n][:, None]
        state._k1 = k1 + j
        state.refresh_m()
    if singles or j > 0:
        resample_weights(state)
    return state


# --------------------------------------------------------------------------
# conditional updates of B, thresholds, alpha
# --------------------------------------------------------------------------

def resample_weights(state: SamplerState) -> SamplerState:
    """Draw every non-pinned channel's weights from N(M P, M)."""
    k1 = state._k1
    m = state.m_matrix
    m = 0.5 * (m + m.T)
    chol = np.linalg.cholesky(m)
    mean = m @ state.proj.T
    draws = mean + chol @ state.rng.standard_normal((k1, state.layout.n_active))
    b = np.zeros((k1, state.layout.n_channels))
    b[:, state.layout.active_idx] = draws
    state.b = b
    return state


def resample_thresholds(state: SamplerState, d: int) -> SamplerState:
    """Albert-Chib uniform conditionals for the interior ordinal thresholds.

    theta_r ~ U(max y at level r, min y at level r+1); an empty side falls
    back to the adjacent threshold (capped at THETA_CEIL above, which makes
    the implicit ordered-uniform prior proper).
    """
    spec = state.specs[d]
    if spec.kind != ORDINAL:
        raise ValueError(f"attribute {d} is not ordinal")
    r_levels = spec.n_categories
    if r_levels < 3:
        return state
    obs = ~state.dataset.missing[:, d]
    x = state._xfloat[d]
    yd = state.y[:, int(state.layout.starts[d])]
    th = list(spec.thresholds)
    for r in range(2, r_levels):
        at_r = obs & (x == r)
        above = obs & (x == r + 1)
        lb = float(yd[at_r].max()) if np.any(at_r) else th[r - 1]
        ub = float(yd[above].min()) if np.any(above) else min(th[r + 1], THETA_CEIL)
        th[r] = float(state.rng.uniform(lb, ub))
    state.specs[d] = spec.with_thresholds(tuple(th))
    return state


def resample_alpha(state: SamplerState) -> SamplerState:
    """Conjugate Gamma(a + K, b + H_N) update of the process mass."""
    if not state.hyper.sample_alpha:
        return state
    a, b = state.hyper.alpha_prior
    shape = a + state.k
    rate = b + harmonic(state.n_objects)
    state.alpha = float(state.rng.gamma(shape, 1.0 / rate))
    return state


# --------------------------------------------------------------------------
# joint log likelihood (trace diagnostic)
# --------------------------------------------------------------------------

def _interval_log_probs(lo, hi, m, s):
    a = (lo - m) / s
    b = (hi - m) / s
    # complement form when the whole interval sits in the upper tail
    p = np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return np.log(np.maximum(p, _PROB_FLOOR))


def data_loglik(state: SamplerState) -> float:
    """Sum over observed cells of log p(x | Z B, total sd sqrt(1+sigma_u^2))."""
    s = math.sqrt(1.0 + state.hyper.sigma_u_sq)
    means = state.means()
    total = 0.0
    if state._cont_ch.size:
        m = means[:, state._cont_ch]
        dev = np.where(state._cont_miss, 0.0, ((state._cont_e - m) / s) ** 2)
        total += float(-0.5 * dev.sum()) + state._cont_jac
        total -= state._cont_n_obs * (math.log(s) + 0.5 * _LOG_2PI)
    if state._cnt_ch.size:
        m = means[:, state._cnt_ch]
        lp = _interval_log_probs(state._cnt_lo, state._cnt_hi, m, s)
        total += float(np.where(state._cnt_miss, 0.0, lp).sum())
    for d, spec in enumerate(state.specs):
        if spec.kind not in (ORDINAL, CATEGORICAL):
            continue
        obs = ~state.dataset.missing[:, d]
        rows = np.nonzero(obs)[0]
        if rows.size == 0:
            continue
        x = state._xfloat[d][rows]
        if spec.kind == CATEGORICAL:
            mc = means[:, state.layout.channels(d)][rows]
            total += float(np.sum(categorical_logprob_rows(mc, x.astype(np.int64) - 1, s)))
        else:
            m = means[rows, int(state.layout.starts[d])]
            th = np.asarray(spec.thresholds)
            r = x.astype(np.int64)
            total += float(np.sum(_interval_log_probs(th[r - 1], th[r], m, s)))
    return total


def sample_data_loglik(fit: "FitResult", sample: "RetainedSample", dataset: HeterogeneousDataset) -> float:
    """log p(X | Z, B, thresholds) of one retained sample over observed cells."""
    s = math.sqrt(1.0 + fit.hyper.sigma_u_sq)
    means = sample.z.astype(np.float64) @ sample.b
    total = 0.0
    for d, t in enumerate(fit.types):
        spec = fit.spec_for_sample(sample, d)
        obs = ~dataset.missing[:, d]
        rows = np.nonzero(obs)[0]
        if rows.size == 0:
            continue
        x = dataset.columns[d][rows].astype(np.float64)
        if spec.kind == CATEGORICAL:
            mc = means[:, fit.layout.channels(d)][rows]
            total += float(np.sum(categorical_logprob_rows(mc, x.astype(np.int64) - 1, s)))
            continue
        mm = means[rows, int(fit.layout.starts[d])]
        if spec.kind == REAL:
            e = (x - spec.mu) / spec.w
            total += float(np.sum(-0.5 * ((e - mm) / s) ** 2))
            total -= rows.size * (math.log(s * spec.w) + 0.5 * _LOG_2PI)
        elif spec.kind == POSREAL:
            e = softplus_inv(x) / spec.w
            jac = np.where(x > 30.0, 0.0, x - np.log(np.expm1(np.minimum(x, 30.0)))) - math.log(spec.w)
            total += float(np.sum(-0.5 * ((e - mm) / s) ** 2 + jac)) - rows.size * (math.log(s) + 0.5 * _LOG_2PI)
        elif spec.kind == COUNT:
            with np.errstate(divide="ignore"):
                lo = np.where(x == 0, -np.inf, softplus_inv(np.maximum(x, 1.0)) / spec.w)
            hi = softplus_inv(x + 1.0) / spec.w
            total += float(np.sum(_interval_log_probs(lo, hi, mm, s)))
        else:
            th = np.asarray(spec.thresholds)
            r = x.astype(np.int64)
            total += float(np.sum(_interval_log_probs(th[r - 1], th[r], mm, s)))
    return total


def retained_data_loglik(fit: "FitResult", dataset: HeterogeneousDataset) -> float:
    """Mean data log likelihood over the retained samples (chain ranking)."""
    return float(np.mean([sample_data_loglik(fit, s, dataset) for s in fit.samples]))


def _ibp_log_pmf(z_nonbias: np.ndarray, alpha: float) -> float:
    n, k = z_nonbias.shape
    if k == 0:
        return -alpha * harmonic(n)
    cols = np.asarray(z_nonbias, dtype=np.uint8)
    hist: dict[bytes, int] = {}
    for j in range(k):
        key = cols[:, j].tobytes()
        hist[key] = hist.get(key, 0) + 1
    mk = cols.sum(axis=0).astype(np.float64)
    lp = k * math.log(alpha) - alpha * harmonic(n)
    lp -= sum(float(gammaln(c + 1.0)) for c in hist.values())
    lp += float(np.sum(gammaln(mk) + gammaln(n - mk + 1.0) - gammaln(n + 1.0)))
    return lp


def joint_loglik(state: SamplerState) -> float:
    """Data likelihood plus feature, weight and alpha prior terms."""
    total = data_loglik(state)
    total += _ibp_log_pmf(state.z_binary[:, 1:], state.alpha)
    sb2 = state.hyper.sigma_b_sq
    bact = state.b[:, state.layout.active_idx]
    total += float(-0.5 * np.sum(bact * bact) / sb2 - bact.size * 0.5 * (math.log(sb2) + _LOG_2PI))
    if state.hyper.sample_alpha:
        a, b = state.hyper.alpha_prior
        total += (a - 1.0) * math.log(state.alpha) - b * state.alpha + a * math.log(b) - float(gammaln(a))
    return total


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RetainedSample:
    """One thinned post-burn-in posterior sample."""

    z: np.ndarray
    b: np.ndarray
    thresholds: dict[int, tuple[float, ...]]
    alpha: float

    @property
    def k(self) -> int:
        return self.z.shape[1] - 1


@dataclass(frozen=True)
class FitResult:
    """Retained samples plus everything needed to explore or impute later."""

    samples: tuple[RetainedSample, ...]
    trace: np.ndarray
    sweep_seconds: np.ndarray
    specs: tuple[TransformSpec, ...]
    types: tuple[AttributeType, ...]
    names: tuple[str, ...]
    hyper: Hyperparameters
    layout: ChannelLayout
    data_ranges: tuple[tuple[float, float], ...]

    @property
    def n_retained(self) -> int:
        return len(self.samples)

    @property
    def last(self) -> RetainedSample:
        return self.samples[-1]

    def spec_for_sample(self, sample: RetainedSample, d: int) -> TransformSpec:
        spec = self.specs[d]
        if d in sample.thresholds:
            spec = spec.with_thresholds(sample.thresholds[d])
        return spec

    def mean_retained_loglik(self) -> float:
        h = self.hyper
        idx = [h.burn_in + (i + 1) * h.thinning - 1 for i in range(self.n_retained)]
        return float(np.mean(self.trace[idx])) if idx else float(np.mean(self.trace))


def _snapshot_thresholds(state: SamplerState) -> dict[int, tuple[float, ...]]:
    return {
        d: tuple(spec.thresholds)
        for d, spec in enumerate(state.specs)
        if spec.kind == ORDINAL
    }


def run(dataset: HeterogeneousDataset, hyper: Hyperparameters) -> FitResult:
    """Execute the full Gibbs schedule and collect thinned samples.

    Sweep order: pseudo-observations, collapsed Z updates with birth/death,
    weights, ordinal thresholds, optional alpha.  Per-sweep cost is linear
    in N and in the number of channels for fixed K.
    """
    state = init(dataset, hyper)
    n_it = hyper.n_iterations
    trace = np.empty(n_it)
    times = np.empty(n_it)
    samples: list[RetainedSample] = []
    ordinal_ds = [d for d, t in enumerate(dataset.types) if t.kind == ORDINAL]
    for it in range(1, n_it + 1):
        t0 = time.perf_counter()
        resample_pseudo(state, dataset)
        sweep_z(state)
        resample_weights(state)
        for d in ordinal_ds:
            resample_thresholds(state, d)
        resample_alpha(state)
        state.iteration = it
        trace[it - 1] = joint_loglik(state)
        times[it - 1] = time.perf_counter() - t0
        if it > hyper.burn_in and (it - hyper.burn_in) % hyper.thinning == 0:
            samples.append(
                RetainedSample(
                    z=state.z_binary.copy(),
                    b=state.b.copy(),
                    thresholds=_snapshot_thresholds(state),
                    alpha=state.alpha,
                )
            )
    ranges = tuple(
        (float(dataset.observed(d).min()), float(dataset.observed(d).max()))
        for d in range(dataset.n_attributes)
    )
    return FitResult(
        samples=tuple(samples),
        trace=trace,
        sweep_seconds=times,
        specs=tuple(state.specs),
        types=dataset.types,
        names=dataset.names,
        hyper=hyper,
        layout=state.layout,
        data_ranges=ranges,
    )


# --------------------------------------------------------------------------
# posterior-predictive imputation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CellImputation:
    """Predictive summary of one imputed cell."""

    row: int
    column: int
    value: float
    entropy: Optional[float]
    interval: Optional[tuple[float, float]]


@dataclass(frozen=True)
class ImputationResult:
    completed: HeterogeneousDataset
    cells: tuple[CellImputation, ...]


def _mixture_quantile(cdf, lo: float, hi: float, q: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def impute(fit: FitResult, dataset: HeterogeneousDataset) -> ImputationResult:
    """Fill every missing cell from the averaged posterior predictive.

    Discrete cells take the predictive mode (ties toward the lowest value)
    and report predictive entropy; continuous cells take the predictive
    median and report the central 90% interval.
    """
    if not np.any(dataset.missing):
        return ImputationResult(dataset, ())
    s = math.sqrt(1.0 + fit.hyper.sigma_u_sq)
    cells: list[CellImputation] = []
    filled = {d: dataset.columns[d].copy() for d in range(dataset.n_attributes)}
    for d in range(dataset.n_attributes):
        rows = np.nonzero(dataset.missing[:, d])[0]
        if rows.size == 0:
            continue
        base_spec = fit.specs[d]
        ch = fit.layout.channels(d)
        for n in rows:
            means = [smp.z[n].astype(np.float64) @ smp.b[:, ch] for smp in fit.samples]
            if base_spec.kind == CATEGORICAL:
                pmf = np.mean([categorical_probs(m, s) for m in means], axis=0)
                val = int(np.argmax(pmf)) + 1
                ent = float(-np.sum(pmf * np.log(np.maximum(pmf, _PROB_FLOOR))))
                cells.append(CellImputation(int(n), d, val, ent, None))
            elif base_spec.kind == ORDINAL:
                pmfs = [
                    ordinal_probs(fit.spec_for_sample(smp, d), float(m[0]), s)
                    for smp, m in zip(fit.samples, means)
                ]
                pmf = np.mean(pmfs, axis=0)
                val = int(np.argmax(pmf)) + 1
                ent = float(-np.sum(pmf * np.log(np.maximum(pmf, _PROB_FLOOR))))
                cells.append(CellImputation(int(n), d, val, ent, None))
            elif base_spec.kind == COUNT:
                m_arr = np.array([float(m[0]) for m in means])
                v_hi = float(softplus((m_arr.max() + 8.0 * s) * base_spec.w))
                v_max = int(max(v_hi, 1.0))
                pmf = np.mean([count_probs(base_spec, mm, s, v_max) for mm in m_arr], axis=0)
                val = int(np.argmax(pmf))
                val = min(val, v_max)  # tail bucket cannot win at 8 sd
                ent = float(-np.sum(pmf * np.log(np.maximum(pmf, _PROB_FLOOR))))
                cells.append(CellImputation(int(n), d, val, ent, None))
            else:
                m_arr = np.array([float(m[0]) for m in means])
                if base_spec.kind == REAL:
                    def cdf(t):
                        return float(np.mean(ndtr(((t - base_spec.mu) / base_spec.w - m_arr) / s)))

                    lo = base_spec.mu + base_spec.w * float(m_arr.min() - 10.0 * s)
                    hi = base_spec.mu + base_spec.w * float(m_arr.max() + 10.0 * s)
                else:
                    def cdf(t):
                        return float(np.mean(ndtr((softplus_inv(t) / base_spec.w - m_arr) / s)))

                    lo = float(softplus((m_arr.min() - 10.0 * s) * base_spec.w))
                    hi = float(softplus((m_arr.max() + 10.0 * s) * base_spec.w))
                med = _mixture_quantile(cdf, lo, hi, 0.5)
                q05 = _mixture_quantile(cdf, lo, hi, 0.05)
                q95 = _mixture_quantile(cdf, lo, hi, 0.95)
                cells.append(CellImputation(int(n), d, float(med), None, (float(q05), float(q95))))
            filled[d][n] = cells[-1].value
    completed = make_dataset(
        [filled[d] for d in range(dataset.n_attributes)],
        dataset.types,
        dataset.names,
        missing=np.zeros_like(dataset.missing),
    )
    return ImputationResult(completed, tuple(cells))
