"""Forward simulation from the generative model.

Draws Z from the feature-allocation prior (plus the bias column), weights
from their Gaussian prior (categorical first channels pinned to zero),
pseudo-observations with unit noise, and pushes them through the
per-attribute observation maps with the small auxiliary noise added first.
Simulation uses unit transform scales (real: mu 0, w 1; posreal/count: w 1;
ordinal: the equally spaced initial thresholds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .dataset import (
    CATEGORICAL,
    COUNT,
    ORDINAL,
    POSREAL,
    REAL,
    AttributeType,
    HeterogeneousDataset,
    Hyperparameters,
    make_dataset,
)
from .ibp import sample_ibp
from .sampler import channel_layout
from .transforms import TransformSpec, forward, initial_thresholds


@dataclass(frozen=True)
class SimulationResult:
    dataset: HeterogeneousDataset
    z: np.ndarray
    b: np.ndarray
    specs: tuple[TransformSpec, ...]


def simulation_specs(types: tuple[AttributeType, ...]) -> tuple[TransformSpec, ...]:
    """Unit-scale transform specs used by the simulator."""
    out = []
    for t in types:
        if t.kind == REAL:
            out.append(TransformSpec(REAL, mu=0.0, w=1.0))
        elif t.kind in (POSREAL, COUNT):
            out.append(TransformSpec(t.kind, w=1.0))
        elif t.kind == ORDINAL:
            r = t.n_categories
            out.append(TransformSpec(ORDINAL, thresholds=initial_thresholds(r), n_categories=r))
        else:
            out.append(TransformSpec(CATEGORICAL, n_categories=t.n_categories))
    return tuple(out)


def simulate(
    n: int,
    types: tuple[AttributeType, ...],
    names: tuple[str, ...],
    hyper: Hyperparameters,
    rng: Union[int, np.random.Generator, None] = None,
) -> SimulationResult:
    """Generate a dataset of ``n`` objects from the model's own prior."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(hyper.seed if rng is None else rng)
    specs = simulation_specs(types)
    layout = channel_layout(types)
    draw = sample_ibp(n, hyper.alpha, rng)
    z = np.concatenate([np.ones((n, 1)), draw.z.astype(np.float64)], axis=1)
    k1 = z.shape[1]
    b = math.sqrt(hyper.sigma_b_sq) * rng.standard_normal((k1, layout.n_channels))
    b[:, layout.pinned] = 0.0
    y = z @ b + rng.standard_normal((n, layout.n_channels))
    u = math.sqrt(hyper.sigma_u_sq) * rng.standard_normal((n, layout.n_channels))
    yu = y + u
    columns = []
    for d, spec in enumerate(specs):
        if spec.kind == CATEGORICAL:
            block = yu[:, layout.channels(d)]
            columns.append(np.argmax(block, axis=1) + 1)
        else:
            columns.append(forward(yu[:, int(layout.starts[d])], spec))
    ds = make_dataset(columns, types, names)
    return SimulationResult(ds, z, b, specs)
