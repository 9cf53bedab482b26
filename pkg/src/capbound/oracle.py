"""Monte-Carlo and exact small-n volumes of constraint bodies.

Used to check numerically that ``(1/n) log Vol(S_n)`` approaches the volume
exponent. Sampling is split into fixed-size chunks, each with its own
counter-based Philox stream spawned from the seed, so the estimate does not
depend on how many worker threads run the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .constraints import ConstraintSet, Kind, Mode
from .errors import NoBoundingBox, ZeroHits

CHUNK = 250_000


@dataclass(frozen=True)
class McConfig:
    n: int
    samples: int = 1_000_000
    seed: int = 0
    bounding: str = "auto"  # "well", "ball" or "auto"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if self.samples < 10_000:
            raise ValueError("at least 10^4 samples are required")
        if self.bounding not in ("auto", "well", "ball"):
            raise ValueError(f"unknown bounding box {self.bounding!r}")


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_err: float
    hits: int
    samples: int
    box: tuple[float, float]

    def __iter__(self):
        return iter((self.estimate, self.std_err))


def _threads() -> int:
    env = os.environ.get("CAPBOUND_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def bounding_box(cs: ConstraintSet, cfg: McConfig) -> tuple[float, float]:
    """Per-coordinate box ``[lo, hi]`` containing the body."""
    amp = cs.well_amplitude()
    power = None
    for t in cs.terms:
        if t.kind is Kind.POWER and t.mode in (Mode.INEQUALITY, Mode.EQUALITY):
            power = t.limit if power is None else min(power, t.limit)
    kind = cfg.bounding
    if kind == "auto":
        kind = "well" if amp is not None else "ball"
    if kind == "well":
        if amp is None:
            raise NoBoundingBox("a well box needs a peak constraint")
        return -amp, amp
    if power is None or power <= 0:
        raise NoBoundingBox("a ball box needs a positive power limit")
    if cfg.n > 8:
        raise NoBoundingBox("ball boxes are limited to n <= 8; add a peak constraint")
    r = math.sqrt(cfg.n * power)
    if amp is not None:
        r = min(r, amp)
    return -r, r


def _count(cs: ConstraintSet, n, lo, hi, seq, size):
    rng = np.random.Generator(np.random.Philox(seq))
    x = rng.uniform(lo, hi, size=(size, n))
    return int(np.count_nonzero(cs.feasible_batch(x)))


def mc_log_volume(cs: ConstraintSet, cfg: McConfig) -> McEstimate:
    """Rejection estimate of ``(1/n) log Vol(S_n)`` with its standard error."""
    lo, hi = bounding_box(cs, cfg)
    n = cfg.n
    sizes = [CHUNK] * (cfg.samples // CHUNK)
    if cfg.samples % CHUNK:
        sizes.append(cfg.samples % CHUNK)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=min(_threads(), len(sizes))) as pool:
        hits = sum(pool.map(lambda a: _count(cs, n, lo, hi, *a), zip(seqs, sizes)))
    if hits == 0:
        raise ZeroHits(f"no sample out of {cfg.samples} fell inside the body")
    p = hits / cfg.samples
    est = (n * math.log(hi - lo) + math.log(p)) / n
    se = math.sqrt((1.0 - p) / (p * cfg.samples)) / n
    return McEstimate(est, se, hits, cfg.samples, (lo, hi))


def exact_ball_log_volume(n: int, P: float) -> float:
    """``(1/n) log Vol`` of the ball of radius ``sqrt(n P)`` in ``n`` dimensions."""
    if n < 1 or not P > 0:
        raise ValueError("need n >= 1 and P > 0")
    return (0.5 * n * math.log(n * math.pi * P) - special.gammaln(0.5 * n + 1.0)) / n
