"""Shared fixtures: planted ground truth, recovery metrics, Geweke machinery."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

import mixedlfm as m
from mixedlfm.dataset import CATEGORICAL
from mixedlfm.sampler import SamplerState, channel_layout, init
from mixedlfm.simulate import simulation_specs
from mixedlfm.transforms import TransformSpec, forward

MIXED_TYPES = (
    m.real(),
    m.positive_real(),
    m.categorical(["a", "b", "c"]),
    m.ordinal(["low", "mid", "high"]),
    m.count(),
)
MIXED_NAMES = ("xr", "xp", "xc", "xo", "xn")


def simulate_given(z, b, types, names, sigma_u_sq=0.01, rng=None, specs=None, pseudo_sd=1.0):
    """Push given (Z, B) through the generative observation maps.

    ``pseudo_sd`` scales the pseudo-observation noise; recovery harnesses
    use a small value so that, after the data-driven transform scales are
    fitted, the model-space residuals stay within its unit noise.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    specs = simulation_specs(types) if specs is None else specs
    layout = channel_layout(types)
    n = z.shape[0]
    y = z @ b + pseudo_sd * rng.standard_normal((n, layout.n_channels))
    yu = y + math.sqrt(sigma_u_sq) * rng.standard_normal((n, layout.n_channels))
    cols = []
    for d, spec in enumerate(specs):
        if spec.kind == CATEGORICAL:
            cols.append(np.argmax(yu[:, layout.channels(d)], axis=1) + 1)
        else:
            cols.append(forward(yu[:, int(layout.starts[d])], spec))
    return m.make_dataset(cols, types, names)


#: per-channel bias and feature-effect magnitudes for the planted truth;
#: channels: real, posreal, cat(pinned, 2, 3), ord, count.  Sign patterns are
#: fixed and well separated so no two features' weight vectors align (random
#: signs occasionally produce near-collinear features, which single-site
#: Gibbs then merges and cannot split).
_PLANT_BIAS = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 1.2])
_PLANT_SCALE = np.array([3.0, 1.2, 0.0, 3.5, 3.5, 2.2, 1.2])
_PLANT_SIGNS = np.array(
    [
        [+1, +1, 0, +1, -1, +1, +1],
        [-1, +1, 0, -1, +1, +1, -1],
        [+1, -1, 0, -1, -1, -1, +1],
        [-1, -1, 0, +1, +1, -1, -1],
    ],
    dtype=np.float64,
)

#: pseudo-noise used when generating planted data; small enough that the
#: residuals stay sub-unit after the data-driven transform scales shrink
#: the pseudo-space (w = 2/max for posreal/count)
PLANT_PSEUDO_SD = 0.3

#: sampler settings the recovery harnesses pair with the planted data
RECOVERY_HYPER = dict(k_init=0, sample_alpha=True, alpha=1.0)


def planted_truth(n: int, k: int, rng, p_active: float = 0.25):
    """Well-separated K-feature ground truth over the mixed schema.

    Bias weights stay small so complement relabelings are prior-suppressed;
    feature weights are strong, pairwise-distinct in sign pattern, and
    scaled so the generated observations re-fit cleanly under the
    unit-noise model.
    """
    if k > _PLANT_SIGNS.shape[0]:
        raise ValueError("planted truth supports at most 4 features")
    layout = channel_layout(MIXED_TYPES)
    while True:
        z = (rng.random((n, k)) < p_active).astype(np.float64)
        sums = z.sum(axis=0)
        if np.all(sums >= 5) and np.all(sums <= n - 5) and len({tuple(c) for c in z.T}) == k:
            break
    z = np.concatenate([np.ones((n, 1)), z], axis=1)
    b = np.zeros((k + 1, layout.n_channels))
    b[0] = _PLANT_BIAS
    b[1:] = _PLANT_SIGNS[:k] * _PLANT_SCALE[None, :] * (1.0 + 0.2 * rng.random((k, layout.n_channels)))
    b[:, layout.pinned] = 0.0
    return z, b


def matched_accuracy(z_true: np.ndarray, z_inf: np.ndarray) -> float:
    """Hamming agreement of binary feature matrices under the best column
    permutation; the smaller matrix is padded with zero columns."""
    zt = np.asarray(z_true, dtype=np.int64)
    zi = np.asarray(z_inf, dtype=np.int64)
    n = zt.shape[0]
    kk = max(zt.shape[1], zi.shape[1])
    zt = np.pad(zt, ((0, 0), (0, kk - zt.shape[1])))
    zi = np.pad(zi, ((0, 0), (0, kk - zi.shape[1])))
    agree = np.zeros((kk, kk))
    for i in range(kk):
        agree[i] = (zt[:, [i]] == zi).sum(axis=0)
    rows, cols = linear_sum_assignment(-agree)
    return float(agree[rows, cols].sum()) / (n * kk)


def make_fit(z, b, dataset, hyper=None, thresholds=None, n_copies=1):
    """Hand-built FitResult holding given (Z, B) as its retained samples."""
    from mixedlfm.sampler import FitResult, RetainedSample

    hyper = m.Hyperparameters() if hyper is None else hyper
    specs = simulation_specs(dataset.types)
    th = thresholds if thresholds is not None else {
        d: tuple(s.thresholds) for d, s in enumerate(specs) if s.thresholds is not None
    }
    smp = RetainedSample(
        z=np.asarray(z, dtype=np.uint8), b=np.asarray(b, dtype=np.float64),
        thresholds=dict(th), alpha=hyper.alpha,
    )
    ranges = tuple(
        (float(dataset.observed(d).min()), float(dataset.observed(d).max()))
        for d in range(dataset.n_attributes)
    )
    return FitResult(
        samples=(smp,) * n_copies,
        trace=np.zeros(hyper.n_iterations),
        sweep_seconds=np.zeros(hyper.n_iterations),
        specs=specs,
        types=dataset.types,
        names=dataset.names,
        hyper=hyper,
        layout=channel_layout(dataset.types),
        data_ranges=ranges,
    )


# --------------------------------------------------------------------------
# Geweke replica machinery (forward draw -> T kernel sweeps -> statistics)
# --------------------------------------------------------------------------

GEWEKE_TYPES = (m.real(), m.categorical(["a", "b", "c"]))
GEWEKE_NAMES = ("xr", "xc")
GEWEKE_SPECS = (
    TransformSpec("real", mu=0.0, w=1.0),
    TransformSpec("cat", n_categories=3),
)


def geweke_forward(n: int, rng, alpha_prior=(1.0, 1.0), sigma_b_sq=1.0):
    alpha = rng.gamma(alpha_prior[0], 1.0 / alpha_prior[1])
    z = m.sample_ibp(n, alpha, rng).z.astype(np.float64)
    z = np.concatenate([np.ones((n, 1)), z], axis=1)
    layout = channel_layout(GEWEKE_TYPES)
    b = math.sqrt(sigma_b_sq) * rng.standard_normal((z.shape[1], layout.n_channels))
    b[:, layout.pinned] = 0.0
    y = z @ b + rng.standard_normal((n, layout.n_channels))
    return alpha, z, b, y


def geweke_stats(alpha, z, b, y, layout) -> tuple[float, float, float]:
    return float(z.shape[1] - 1), float(y.mean()), float((b[:, layout.active_idx] ** 2).mean())


def geweke_template_state(n: int, hyper) -> SamplerState:
    ds = m.make_dataset(
        [np.zeros(n), np.ones(n, dtype=int)], GEWEKE_TYPES, GEWEKE_NAMES
    )
    st = init(ds, hyper)
    st.specs = list(GEWEKE_SPECS)
    return st


def geweke_install(st: SamplerState, alpha, z, b, y, rng, sigma_u_sq):
    n = z.shape[0]
    k1 = z.shape[1]
    cap = k1 + 64
    st.specs = list(GEWEKE_SPECS)
    st._zc = np.zeros((n, cap))
    st._zc[:, :k1] = z
    st._minv = np.zeros((cap, cap))
    st._proj = np.zeros((st.layout.n_active, cap))
    st._mcounts = np.zeros(cap, dtype=np.int64)
    st._mcounts[:k1] = z.sum(axis=0).astype(np.int64)
    st._k1 = k1
    st.y = y.copy()
    st.b = b.copy()
    st.alpha = float(alpha)
    geweke_regen_data(st, rng, sigma_u_sq)
    st.refresh_yact()
    st.refresh_m()
    st.refresh_proj()


def geweke_regen_data(st: SamplerState, rng, sigma_u_sq):
    """X | Y: real through the affine map with auxiliary noise, cat by argmax."""
    n = st.n_objects
    st._xfloat[0][:] = st.y[:, 0] + math.sqrt(sigma_u_sq) * rng.standard_normal(n)
    st._xfloat[1][:] = st.y[:, 1:].argmax(axis=1) + 1
    st.refresh_data_caches()
