"""Indian Buffet Process prior utilities.

Forward sampling of the feature allocation matrix, the exchangeable
conditional inclusion probability used by the collapsed sampler, and the
expected feature count alpha * H_N.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True)
class IbpDraw:
    """One forward draw: binary Z (no bias column), columns in arrival order."""

    z: np.ndarray
    alpha: float
    seed: Optional[int]

    @property
    def n_features(self) -> int:
        return self.z.shape[1]


def _as_rng(rng: Union[int, np.random.Generator, None]):
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = rng
    return np.random.default_rng(seed), seed


def sample_ibp(n: int, alpha: float, rng: Union[int, np.random.Generator, None] = None) -> IbpDraw:
    """Sample Z ~ IBP(alpha) for ``n`` objects.

    Row i takes an existing dish k with probability m_k / i and orders
    Poisson(alpha / i) new dishes; no all-zero columns can result.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    gen, seed = _as_rng(rng)
    counts: list[int] = []
    rows: list[np.ndarray] = []
    for i in range(1, n + 1):
        k = len(counts)
        row = np.zeros(k, dtype=np.uint8)
        if k:
            take = gen.random(k) < (np.asarray(counts, dtype=np.float64) / i)
            row[take] = 1
            for j in np.nonzero(take)[0]:
                counts[j] += 1
        new = gen.poisson(alpha / i)
        if new:
            row = np.concatenate([row, np.ones(new, dtype=np.uint8)])
            counts.extend([1] * new)
        rows.append(row)
    k_total = len(counts)
    z = np.zeros((n, k_total), dtype=np.uint8)
    for i, row in enumerate(rows):
        z[i, : row.shape[0]] = row
    return IbpDraw(z, float(alpha), seed)


def inclusion_prob(m_minus: int, n: int) -> float:
    """P(z_nk = 1 | rest) = m_{-n,k} / N under the exchangeable conditional.

    Singletons (m_minus = 0) are handled by the new-feature move, not here.
    """
    if not 0 <= m_minus <= n - 1:
        raise ValueError("m_minus must lie in 0..N-1")
    return m_minus / n


def expected_features(n: int, alpha: float) -> float:
    """E[K] = alpha * sum_{i=1..N} 1/i."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return alpha * harmonic(n)


def harmonic(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1)))
