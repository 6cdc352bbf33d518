"""Seeded test signals: a few heavy coordinates on top of a light tail."""

from __future__ import annotations

import numpy as np

from .core import Update

TAILS = ("zipf", "uniform", "gauss")


def tail_vector(n: int, rng: np.random.Generator, mass: float = 1.0, shape: str = "zipf", nonneg: bool = False) -> np.ndarray:
    """Length-``n`` vector of l1 norm ``mass`` with randomly placed entries."""
    if shape == "zipf":
        mags = 1.0 / np.arange(1, n + 1)
        rng.shuffle(mags)
    elif shape == "uniform":
        mags = rng.uniform(0.0, 1.0, n)
    elif shape == "gauss":
        mags = np.abs(rng.standard_normal(n))
    else:
        raise ValueError(f"unknown tail shape {shape!r}")
    mags *= mass / mags.sum()
    return mags if nonneg else mags * rng.choice([-1.0, 1.0], n)


def planted_signal(
    n: int,
    k: int,
    seed: int,
    heads: int | None = None,
    head_range: tuple[float, float] = (1.0, 5.0),
    tail_mass: float = 1.0,
    tail: str = "zipf",
    nonneg: bool = False,
) -> np.ndarray:
    """``heads`` (default ``k``) coordinates of magnitude
    ``tail_mass / k * U(head_range)`` over a tail of mass ``tail_mass``."""
    rng = np.random.default_rng(seed)
    x = tail_vector(n, rng, tail_mass, tail, nonneg)
    h = k if heads is None else heads
    idx = rng.choice(n, size=h, replace=False)
    mags = tail_mass / k * rng.uniform(*head_range, size=h)
    x[idx] = mags if nonneg else mags * rng.choice([-1.0, 1.0], h)
    return x


def signal_to_stream(x, seed: int, pieces: int = 3, strict: bool = False) -> list[Update]:
    """Shuffled updates summing to ``x``.

    General streams split each coordinate into signed pieces that may
    overshoot and cancel; strict streams only add nonnegative pieces, so
    every prefix stays nonnegative when ``x >= 0``.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    ups = []
    for i in np.flatnonzero(x).tolist():
        if strict:
            w = rng.dirichlet(np.ones(pieces)) * x[i]
        else:
            w = rng.standard_normal(pieces)
            w[-1] = x[i] - w[:-1].sum()
        ups.extend(Update(i, float(d)) for d in w)
    order = rng.permutation(len(ups))
    return [ups[t] for t in order]
