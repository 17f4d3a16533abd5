"""Weekly mobility indicators and their range tokenization.

Three scalars summarize a week of movement:

* radius of gyration -- root-mean-square haversine distance of the week's
  GPS records from their centroid (meters);
* temporality diversity -- natural-log entropy of the distribution of stay
  durations across the week's stay events (nats);
* activity diversity -- natural-log entropy of the distribution of
  unordered consecutive stay-cell pairs, i.e. trips with direction ignored
  (nats).

Each indicator is discretized into an integer token by a fixed-step range
tokenizer so it can feed an embedding table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geo import CellId, GeoPoint, haversine_m
from .preprocess import StayPoint


class EmptyInput(ValueError):
    """Indicator requested over an empty collection."""


class TooFewStays(ValueError):
    """Activity diversity needs at least two stays (one trip)."""


@dataclass(frozen=True)
class IndicatorSet:
    rg: float  # meters
    td: float  # nats
    ad: float  # nats


@dataclass(frozen=True)
class RangeTokenizer:
    """Fixed-granularity discretizer over [min_value, max_value].

    ``vocab`` defaults to ceil((max - min) / granularity) but may be pinned
    explicitly when a published token count disagrees with that arithmetic;
    out-of-range values clamp into [0, vocab).
    """

    min_value: float
    max_value: float
    granularity: float
    vocab: int = 0

    def __post_init__(self) -> None:
        if self.granularity <= 0.0:
            raise ValueError("granularity must be positive")
        if self.max_value <= self.min_value:
            raise ValueError("max_value must exceed min_value")
        if self.vocab == 0:
            derived = max(1, math.ceil((self.max_value - self.min_value) / self.granularity))
            object.__setattr__(self, "vocab", derived)
        elif self.vocab < 1:
            raise ValueError("vocab must be at least 1")

    def token(self, x: float) -> int:
        raw = math.floor((x - self.min_value) / self.granularity)
        return min(max(raw, 0), self.vocab - 1)

    def bin_interval(self, token: int) -> tuple[float, float]:
        """[lo, hi) interval of a token; contains every in-range value that
        maps to it (clamped values land outside their nominal bin)."""
        lo = self.min_value + token * self.granularity
        return lo, lo + self.granularity


def tokenize(x: float, tokenizer: RangeTokenizer) -> int:
    return tokenizer.token(x)


def _entropy_nats(weights: Sequence[float]) -> float:
    total = math.fsum(weights)
    if total <= 0.0:
        raise ValueError("weights must have positive sum")
    return -math.fsum(w / total * math.log(w / total) for w in weights if w > 0.0)


def radius_of_gyration(points: Sequence[GeoPoint]) -> float:
    """RMS haversine distance from the coordinate centroid, in meters."""
    if not points:
        raise EmptyInput("radius of gyration over zero points")
    n = len(points)
    center = GeoPoint(
        math.fsum(p.lat for p in points) / n,
        math.fsum(p.lon for p in points) / n,
    )
    return math.sqrt(math.fsum(haversine_m(p, center) ** 2 for p in points) / n)


def temporality_diversity(stays: Sequence[StayPoint], by_cell: bool = False) -> float:
    """Entropy of the stay-duration distribution, in nats.

    By default each stay event is its own outcome; ``by_cell`` aggregates
    durations per stay cell first. A single stay (or single cell) gives 0.
    """
    if not stays:
        raise EmptyInput("temporality diversity over zero stays")
    if by_cell:
        per_cell: dict[CellId | None, float] = {}
        for s in stays:
            per_cell[s.cell] = per_cell.get(s.cell, 0.0) + s.duration_s
        weights = list(per_cell.values())
    else:
        weights = [float(s.duration_s) for s in stays]
    if any(w <= 0.0 for w in weights):
        raise ValueError("stay durations must be positive")
    return _entropy_nats(weights)


def trip_pairs(stays: Sequence[StayPoint]) -> dict[tuple, int]:
    """Unordered consecutive stay-cell pairs with their trip counts.

    Consecutive stays in one cell form a self-pair, counted like any other;
    the counts sum to len(stays) - 1.
    """
    if len(stays) < 2:
        raise TooFewStays("trips need at least two stays")
    pairs: dict[tuple, int] = {}
    cells = [(s.cell.row, s.cell.col) if s.cell is not None else None for s in stays]
    for a, b in zip(cells, cells[1:]):
        key = (a, b) if (b is None or (a is not None and a <= b)) else (b, a)
        pairs[key] = pairs.get(key, 0) + 1
    return pairs


def activity_diversity(stays: Sequence[StayPoint]) -> float:
    """Entropy of the unordered consecutive stay-cell pair distribution."""
    return _entropy_nats([float(c) for c in trip_pairs(stays).values()])


def week_indicators(
    records: Sequence,
    stays: Sequence[StayPoint],
    rg_tokenizer: RangeTokenizer,
    td_tokenizer: RangeTokenizer,
    ad_tokenizer: RangeTokenizer,
    td_by_cell: bool = False,
) -> tuple[IndicatorSet, tuple[int, int, int]]:
    """Indicator triple for one week plus its token triple.

    ``records`` are the week's noise-filtered trajectory records (the
    radius of gyration is a property of the sampled track, not of the
    stays); the entropies are computed over the week's stay points.
    """
    if not records:
        raise EmptyInput("week has no filtered records")
    ind = IndicatorSet(
        rg=radius_of_gyration([r.point for r in records]),
        td=temporality_diversity(stays, by_cell=td_by_cell),
        ad=activity_diversity(stays),
    )
    tokens = (rg_tokenizer.token(ind.rg), td_tokenizer.token(ind.td), ad_tokenizer.token(ind.ad))
    return ind, tokens
