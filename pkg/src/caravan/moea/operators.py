"""Real-coded genetic operators: simulated binary crossover and polynomial
mutation, both bounded. Operators never leave a gene outside its bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CaravanError


class GenomeError(CaravanError):
    pass


@dataclass(frozen=True)
class Genome:
    """Gene vector with per-gene [low, high] bounds."""

    values: tuple[float, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (len(self.values) == len(self.lows) == len(self.highs)):
            raise GenomeError("values and bounds must have equal length")
        for v, lo, hi in zip(self.values, self.lows, self.highs):
            if lo > hi:
                raise GenomeError(f"bound [{lo}, {hi}] is inverted")
            if not lo <= v <= hi:
                raise GenomeError(f"gene {v} outside [{lo}, {hi}]")

    @classmethod
    def from_bounds(cls, values, bounds) -> "Genome":
        lows, highs = zip(*bounds)
        return cls(tuple(float(v) for v in values), tuple(map(float, lows)), tuple(map(float, highs)))

    def replace_values(self, values: np.ndarray) -> "Genome":
        clipped = np.clip(values, self.lows, self.highs)
        return Genome(tuple(float(v) for v in clipped), self.lows, self.highs)


def random_genome(bounds, rng: np.random.Generator) -> Genome:
    lows = np.array([b[0] for b in bounds], dtype=float)
    highs = np.array([b[1] for b in bounds], dtype=float)
    values = rng.uniform(lows, highs)
    return Genome(tuple(values), tuple(lows), tuple(highs))


def sbx_values(
    p1: np.ndarray, p2: np.ndarray, eta_b: float, rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Unclipped SBX children.

    With probability ``rate`` per pair, each gene is crossed independently
    with probability 0.5 using the spread factor
    beta(u) = (2u)^(1/(eta+1)) for u <= 0.5, else (1/(2(1-u)))^(1/(eta+1)).
    Uncrossed genes are copied. The children's sum always equals the
    parents' sum before clipping.
    """
    c1 = np.array(p1, dtype=float)
    c2 = np.array(p2, dtype=float)
    if rng.random() > rate:
        return c1, c2
    exponent = 1.0 / (eta_b + 1.0)
    for i in range(len(c1)):
        if c1[i] == c2[i]:
            # crossing equal genes is the identity; skipping keeps it exact
            continue
        if rng.random() >= 0.5:
            continue
        u = rng.random()
        if u <= 0.5:
            beta = (2.0 * u) ** exponent
        else:
            beta = (1.0 / (2.0 * (1.0 - u))) ** exponent
        a, b = c1[i], c2[i]
        c1[i] = 0.5 * ((1.0 + beta) * a + (1.0 - beta) * b)
        c2[i] = 0.5 * ((1.0 - beta) * a + (1.0 + beta) * b)
    return c1, c2


def sbx_crossover(
    p1: Genome, p2: Genome, eta_b: float, rate: float, rng: np.random.Generator
) -> tuple[Genome, Genome]:
    """SBX on two genomes with identical bounds; children are clipped."""
    if p1.lows != p2.lows or p1.highs != p2.highs or len(p1.values) != len(p2.values):
        raise GenomeError("parents must share length and bounds")
    c1, c2 = sbx_values(np.array(p1.values), np.array(p2.values), eta_b, rate, rng)
    return p1.replace_values(c1), p2.replace_values(c2)


def mutate_values(
    values: np.ndarray,
    lows: np.ndarray,
    highs: np.ndarray,
    eta_p: float,
    rate: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bounded polynomial mutation, gene-wise with probability ``rate``."""
    out = np.array(values, dtype=float)
    exponent = 1.0 / (eta_p + 1.0)
    for i in range(len(out)):
        if rng.random() >= rate:
            continue
        lo, hi = lows[i], highs[i]
        span = hi - lo
        if span == 0:
            continue
        x = out[i]
        d1 = (x - lo) / span
        d2 = (hi - x) / span
        u = rng.random()
        if u < 0.5:
            val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_p + 1.0)
            dq = val**exponent - 1.0
        else:
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_p + 1.0)
            dq = 1.0 - val**exponent
        out[i] = min(max(x + dq * span, lo), hi)
    return out


def polynomial_mutation(
    genome: Genome, eta_p: float, rate: float, rng: np.random.Generator
) -> Genome:
    mutated = mutate_values(
        np.array(genome.values),
        np.array(genome.lows),
        np.array(genome.highs),
        eta_p,
        rate,
        rng,
    )
    return genome.replace_values(mutated)
