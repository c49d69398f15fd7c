"""Data-exploration reports from a fitted model.

The report answers "what does each latent feature do to each attribute":
for every feature pattern of interest it tabulates the model-implied
distribution of each attribute, next to the empirical distribution of the
attribute over the whole dataset (the baseline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import gaussian_kde

from .dataset import CATEGORICAL, COUNT, ORDINAL, HeterogeneousDataset
from .sampler import FitResult, RetainedSample
from .transforms import (
    categorical_probs,
    count_probs,
    observation_logdensity,
    ordinal_probs,
    softplus,
)

GRID_POINTS = 200
BASELINE_TAG = "baseline"


@dataclass(frozen=True)
class Pattern:
    """A full feature-activation vector; bit 0 is the always-on bias."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if not self.bits or self.bits[0] != 1:
            raise ValueError("pattern bit 0 (bias) must be 1")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("pattern bits must be binary")

    @property
    def display(self) -> str:
        """Parenthesized bit string without the bias bit, e.g. ``(0100)``."""
        return "(" + "".join(str(b) for b in self.bits[1:]) + ")"

    @staticmethod
    def bias_only(k: int) -> "Pattern":
        return Pattern((1,) + (0,) * k)

    @staticmethod
    def one_hot(k: int, idx: int) -> "Pattern":
        bits = [1] + [0] * k
        bits[idx] = 1
        return Pattern(tuple(bits))


@dataclass(frozen=True)
class DistributionTable:
    """One attribute's distribution under one pattern (or the baseline).

    Discrete attributes carry ``labels`` and ``probabilities`` (summing to
    1); continuous attributes carry a 200-point ``grid`` spanning the
    observed range extended by 10% each side, with ``density`` values.
    """

    attribute: int
    name: str
    tag: str
    labels: Optional[tuple[str, ...]] = None
    probabilities: Optional[tuple[float, ...]] = None
    grid: Optional[tuple[float, ...]] = None
    density: Optional[tuple[float, ...]] = None

    @property
    def is_discrete(self) -> bool:
        return self.probabilities is not None


@dataclass(frozen=True)
class EffectsReport:
    """Patterns with usage counts, per-(pattern, attribute) tables, baselines."""

    patterns: tuple[tuple[Pattern, int], ...]
    tables: tuple[DistributionTable, ...]
    baselines: tuple[DistributionTable, ...]
    metadata: dict = field(default_factory=dict)

    def table(self, pattern_display: str, name: str) -> DistributionTable:
        for t in self.tables:
            if t.tag == pattern_display and t.name == name:
                return t
        raise KeyError(f"no table for pattern {pattern_display} attribute {name!r}")

    def baseline(self, name: str) -> DistributionTable:
        for t in self.baselines:
            if t.name == name:
                return t
        raise KeyError(f"no baseline for attribute {name!r}")


# --------------------------------------------------------------------------
# posterior-mean weights with feature alignment
# --------------------------------------------------------------------------

#: minimum per-feature agreement for a retained sample to enter the plug-in mean
ALIGN_AGREEMENT = 0.9


def _align_to_anchor(anchor: RetainedSample, sample: RetainedSample) -> Optional[np.ndarray]:
    """Weights permuted onto the anchor's feature order, or None.

    Features are matched by maximum column agreement (Hungarian assignment);
    the sample is discarded when K differs or any matched pair agrees on
    fewer than ALIGN_AGREEMENT of the objects (label switching).
    """
    if sample.k != anchor.k:
        return None
    aligned = np.empty_like(sample.b)
    aligned[0] = sample.b[0]
    k = anchor.k
    if k:
        n = anchor.z.shape[0]
        za = anchor.z[:, 1:].astype(np.int64)
        zs = sample.z[:, 1:].astype(np.int64)
        agree = np.empty((k, k))
        for i in range(k):
            agree[i] = (za[:, [i]] == zs).sum(axis=0)
        rows, cols = linear_sum_assignment(-agree)
        if agree[rows, cols].min() < ALIGN_AGREEMENT * n:
            return None
        for i, j in zip(rows, cols):
            aligned[1 + i] = sample.b[1 + j]
    return aligned


def aligned_mean_weights(fit: FitResult) -> tuple[np.ndarray, int]:
    """Plug-in posterior-mean weights anchored on the last retained sample.

    Retained samples whose features match the anchor's up to a permutation
    (column agreement at least ALIGN_AGREEMENT each) are aligned and
    averaged; the rest are skipped.  Returns (mean weights, number averaged).
    """
    anchor = fit.last
    stack = []
    for smp in fit.samples:
        aligned = _align_to_anchor(anchor, smp)
        if aligned is not None:
            stack.append(aligned)
    return np.mean(stack, axis=0), len(stack)


def _aligned_samples(fit: FitResult) -> list[tuple[RetainedSample, np.ndarray]]:
    anchor = fit.last
    out = []
    for smp in fit.samples:
        aligned = _align_to_anchor(anchor, smp)
        if aligned is not None:
            out.append((smp, aligned))
    return out


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def list_patterns(fit: FitResult, min_count: int = 0) -> list[tuple[Pattern, int]]:
    """Patterns in the last retained Z with usage counts, most used first.

    Patterns below ``min_count`` are dropped, but the canonical patterns
    (bias only, and bias plus each single feature) are always included so
    single-feature effects stay readable.
    """
    z = fit.last.z
    k = z.shape[1] - 1
    counts: dict[tuple[int, ...], int] = {}
    for row in z:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    canonical = [Pattern.bias_only(k).bits] + [Pattern.one_hot(k, j).bits for j in range(1, k + 1)]
    keep: dict[tuple[int, ...], int] = {}
    for bits, c in counts.items():
        if c >= min_count:
            keep[bits] = c
    for bits in canonical:
        keep.setdefault(bits, counts.get(bits, 0))
    items = [(Pattern(bits), c) for bits, c in keep.items()]
    items.sort(key=lambda pc: (-pc[1], pc[0].display))
    return items


def _continuous_grid(fit: FitResult, d: int, extra_lo: float = math.inf, extra_hi: float = -math.inf) -> np.ndarray:
    """200-point grid covering the padded observed range.

    ``extra_lo``/``extra_hi`` widen it so a pattern whose mass sits outside
    the observed range still normalizes on its grid.
    """
    lo, hi = fit.data_ranges[d]
    span = hi - lo
    pad = 0.1 * span if span > 0 else max(0.1 * abs(hi), 1.0)
    return np.linspace(min(lo - pad, extra_lo), max(hi + pad, extra_hi), GRID_POINTS)


def _count_support(fit: FitResult, d: int) -> int:
    return int(fit.data_ranges[d][1])


def _count_labels(v_max: int) -> tuple[str, ...]:
    return tuple(str(v) for v in range(v_max + 1)) + (f">={v_max + 1}",)


def pattern_distribution(
    fit: FitResult,
    pattern: Pattern,
    d: int,
    average_samples: bool = False,
) -> DistributionTable:
    """Model-implied distribution of attribute ``d`` under ``pattern``.

    By default plugs in the aligned posterior-mean weights; with
    ``average_samples`` the per-sample distributions are averaged instead.
    """
    atype = fit.types[d]
    s = math.sqrt(1.0 + fit.hyper.sigma_u_sq)
    ch = fit.layout.channels(d)
    bits = np.asarray(pattern.bits, dtype=np.float64)

    if average_samples:
        pairs = _aligned_samples(fit)
        sources = [(fit.spec_for_sample(smp, d), bits @ ab[:, ch]) for smp, ab in pairs]
    else:
        b_hat, _ = aligned_mean_weights(fit)
        sources = [(fit.specs[d], bits @ b_hat[:, ch])]

    if atype.kind == CATEGORICAL:
        pmf = np.mean([categorical_probs(m, s) for _, m in sources], axis=0)
        return DistributionTable(
            d, fit.names[d], pattern.display,
            labels=atype.labels, probabilities=tuple(float(p) for p in pmf),
        )
    if atype.kind == ORDINAL:
        pmf = np.mean([ordinal_probs(spec, float(m[0]), s) for spec, m in sources], axis=0)
        return DistributionTable(
            d, fit.names[d], pattern.display,
            labels=atype.labels, probabilities=tuple(float(p) for p in pmf),
        )
    if atype.kind == COUNT:
        v_max = _count_support(fit, d)
        pmf = np.mean([count_probs(spec, float(m[0]), s, v_max) for spec, m in sources], axis=0)
        return DistributionTable(
            d, fit.names[d], pattern.display,
            labels=_count_labels(v_max), probabilities=tuple(float(p) for p in pmf),
        )
    # widen the grid to hold each source's own mass (+- 5.5 total sd)
    lo_p, hi_p = math.inf, -math.inf
    for spec, mm in sources:
        y_lo, y_hi = float(mm[0]) - 5.5 * s, float(mm[0]) + 5.5 * s
        if atype.kind == "real":
            lo_p = min(lo_p, spec.mu + spec.w * y_lo)
            hi_p = max(hi_p, spec.mu + spec.w * y_hi)
        else:
            lo_p = min(lo_p, float(softplus(spec.w * y_lo)))
            hi_p = max(hi_p, float(softplus(spec.w * y_hi)))
    grid = _continuous_grid(fit, d, extra_lo=lo_p, extra_hi=hi_p)
    dens = np.zeros(GRID_POINTS)
    for spec, m in sources:
        dens += np.array(
            [math.exp(observation_logdensity(float(x), float(m[0]), s, spec)) for x in grid]
        )
    dens /= len(sources)
    return DistributionTable(
        d, fit.names[d], pattern.display,
        grid=tuple(float(x) for x in grid), density=tuple(float(v) for v in dens),
    )


def empirical_baseline(dataset: HeterogeneousDataset, d: int, fit: Optional[FitResult] = None) -> DistributionTable:
    """Empirical distribution of attribute ``d`` over the whole dataset.

    Discrete kinds report relative frequencies; continuous kinds a Gaussian
    kernel density (Silverman bandwidth) on the shared 200-point grid.
    """
    obs = dataset.observed(d).astype(np.float64)
    if obs.size == 0:
        raise ValueError(f"no data in column {dataset.names[d]!r}")
    atype = dataset.types[d]
    if atype.kind in (CATEGORICAL, ORDINAL):
        r = atype.n_categories
        freq = np.bincount(obs.astype(np.int64), minlength=r + 1)[1 : r + 1] / obs.size
        return DistributionTable(
            d, dataset.names[d], BASELINE_TAG,
            labels=atype.labels, probabilities=tuple(float(p) for p in freq),
        )
    if atype.kind == COUNT:
        v_max = int(fit.data_ranges[d][1]) if fit is not None else int(obs.max())
        freq = np.bincount(obs.astype(np.int64), minlength=v_max + 1)[: v_max + 1] / obs.size
        tail = 1.0 - freq.sum()
        probs = tuple(float(p) for p in freq) + (float(max(tail, 0.0)),)
        return DistributionTable(
            d, dataset.names[d], BASELINE_TAG,
            labels=_count_labels(v_max), probabilities=probs,
        )
    if fit is not None:
        grid = _continuous_grid(fit, d)
    else:
        lo, hi = float(obs.min()), float(obs.max())
        span = hi - lo
        pad = 0.1 * span if span > 0 else max(0.1 * abs(hi), 1.0)
        grid = np.linspace(lo - pad, hi + pad, GRID_POINTS)
    if obs.std() == 0:  # kde needs spread; fall back to a narrow gaussian
        sd = max(1e-3, 1e-3 * max(abs(obs[0]), 1.0))
        dens = np.exp(-0.5 * ((grid - obs[0]) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    else:
        dens = gaussian_kde(obs, bw_method="silverman")(grid)
    return DistributionTable(
        d, dataset.names[d], BASELINE_TAG,
        grid=tuple(float(x) for x in grid), density=tuple(float(v) for v in dens),
    )


def build_report(
    fit: FitResult,
    dataset: HeterogeneousDataset,
    min_count: int = 0,
    average_samples: bool = False,
) -> EffectsReport:
    """Assemble the full exploration report; deterministic given inputs."""
    patterns = list_patterns(fit, min_count)
    tables = [
        pattern_distribution(fit, p, d, average_samples=average_samples)
        for p, _ in patterns
        for d in range(dataset.n_attributes)
    ]
    baselines = [empirical_baseline(dataset, d, fit) for d in range(dataset.n_attributes)]
    _, n_aligned = aligned_mean_weights(fit)
    meta = {
        "seed": fit.hyper.seed,
        "n_iterations": fit.hyper.n_iterations,
        "k": fit.last.k,
        "n_objects": dataset.n_objects,
        "min_count": min_count,
        "n_samples_aligned": n_aligned,
        "average_samples": average_samples,
    }
    return EffectsReport(tuple(patterns), tuple(tables), tuple(baselines), meta)


# --------------------------------------------------------------------------
# plain-dict serialization (file handling lives in the io module)
# --------------------------------------------------------------------------

def table_to_dict(t: DistributionTable) -> dict:
    out = {"attribute": t.attribute, "name": t.name, "tag": t.tag}
    if t.is_discrete:
        out["labels"] = list(t.labels)
        out["probabilities"] = list(t.probabilities)
    else:
        out["grid"] = list(t.grid)
        out["density"] = list(t.density)
    return out


def table_from_dict(d: dict) -> DistributionTable:
    return DistributionTable(
        attribute=d["attribute"],
        name=d["name"],
        tag=d["tag"],
        labels=tuple(d["labels"]) if "labels" in d else None,
        probabilities=tuple(d["probabilities"]) if "probabilities" in d else None,
        grid=tuple(d["grid"]) if "grid" in d else None,
        density=tuple(d["density"]) if "density" in d else None,
    )


def report_to_dict(report: EffectsReport) -> dict:
    return {
        "patterns": [{"bits": list(p.bits), "display": p.display, "count": c} for p, c in report.patterns],
        "tables": [table_to_dict(t) for t in report.tables],
        "baselines": [table_to_dict(t) for t in report.baselines],
        "metadata": dict(report.metadata),
    }


def report_from_dict(d: dict) -> EffectsReport:
    patterns = tuple((Pattern(tuple(p["bits"])), int(p["count"])) for p in d["patterns"])
    tables = tuple(table_from_dict(t) for t in d["tables"])
    baselines = tuple(table_from_dict(t) for t in d["baselines"])
    return EffectsReport(patterns, tables, baselines, dict(d.get("metadata", {})))
