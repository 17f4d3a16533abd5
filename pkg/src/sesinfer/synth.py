"""Seeded synthetic world: class-conditioned agents, GPS traces, POIs, prices.

The generator stands in for non-shippable real corpora. Each agent belongs
to a socioeconomic class whose profile controls *directional* tendencies
only: richer classes travel shorter (smaller radius of gyration), keep more
regular schedules (lower temporality/activity diversity) and visit
different venue categories. Every anchor location sits on a lattice with
3-cell spacing so its 3x3 grid neighborhood is dominated by POIs of the
intended category, and every agent's home cell carries exactly one price
record drawn from the agent's class price interval -- so the preprocessing
pipeline can recover ground-truth classes from the files alone.

All randomness flows from per-purpose generators derived from
``(seed, stream, agent, week)`` keys, so generation is deterministic and
agents could be produced in parallel without changing the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .activity import POI_CATEGORIES, SECONDS_PER_DAY, SECONDS_PER_WEEK
from .geo import CellId, EARTH_RADIUS_M, GeoPoint, GridSpec, cell_center
from .ingest import PoiRecord, PriceRecord, TrajectoryRecord, week_start_of

_RAD = math.pi / 180.0

# categories eligible for leisure/errand anchor sites
_LEISURE = (
    "shopping", "food_and_drink", "recreation", "education",
    "community", "attractions", "traffic", "hospitals", "lodging",
)

_WALK_MPS = 1.5
_DRIVE_MPS = 11.0
_MIN_VISIT_S = 6300          # comfortably above the 90-minute stay threshold
_MAX_VISIT_S = 11100
_EVENING_CAP_S = int(21.75 * 3600)   # all excursions end before the night window
_POIS_PER_SITE = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClassProfile:
    """Directional knobs for one socioeconomic class."""

    rg_scale_m: float
    schedule_noise: float
    n_anchor_locations: int          # home + work + extras
    activity_mix: dict[str, float]   # over the 11 POI categories, sums to 1
    price_band: tuple[float, float]  # fraction of the class price interval
    evening_visit_prob: float
    weekend_visits: int
    time_jitter_s: float


@dataclass(frozen=True)
class WorldConfig:
    grid: GridSpec
    n_agents: int
    weeks_per_agent: int
    num_classes: int
    seed: int
    price_min: float
    price_max: float
    tz_offset_s: int = 28800
    sampling_period_s: int = 60
    schedule_noise: float = 0.1
    gps_noise_m: float = 10.0
    class_profiles: tuple[ClassProfile, ...] = ()

    def __post_init__(self) -> None:
        if self.n_agents < 1 or self.weeks_per_agent < 1:
            raise ConfigError("need at least one agent and one week")
        if not 2 <= self.num_classes <= 5:
            raise ConfigError("num_classes must be in [2, 5]")
        if not self.price_min < self.price_max:
            raise ConfigError("price_min must be below price_max")
        if not self.class_profiles:
            object.__setattr__(
                self, "class_profiles",
                tuple(default_profiles(self.num_classes, self.schedule_noise)),
            )
        if len(self.class_profiles) != self.num_classes:
            raise ConfigError("one class profile per class required")
        for p in self.class_profiles:
            if abs(sum(p.activity_mix.values()) - 1.0) > 1e-9:
                raise ConfigError("activity_mix rows must sum to 1")


def default_profiles(num_classes: int, schedule_noise: float) -> list[ClassProfile]:
    """Interpolate class profiles from poorest (class 0) to richest.

    Class index follows the price interval order, so higher classes are
    wealthier: shorter travel, fewer anchors, steadier schedules.
    """
    rich_mix = {"recreation": 0.35, "education": 0.25, "food_and_drink": 0.2, "attractions": 0.1, "lodging": 0.1}
    poor_mix = {"shopping": 0.3, "traffic": 0.25, "food_and_drink": 0.2, "community": 0.15, "hospitals": 0.1}
    profiles = []
    for c in range(num_classes):
        t = c / (num_classes - 1)
        mix = {cat: (1.0 - t) * poor_mix.get(cat, 0.0) + t * rich_mix.get(cat, 0.0) for cat in POI_CATEGORIES}
        total = sum(mix.values())
        mix = {cat: w / total for cat, w in mix.items()}
        profiles.append(
            ClassProfile(
                rg_scale_m=6000.0 - t * 5000.0,
                schedule_noise=schedule_noise,
                n_anchor_locations=3 + round((1.0 - t) * 3.0),
                activity_mix=mix,
                price_band=(0.15, 0.85),
                evening_visit_prob=0.15 + 0.55 * (1.0 - t),
                weekend_visits=1 + round((1.0 - t) * 2.0),
                time_jitter_s=(8.0 + 30.0 * (1.0 - t)) * 60.0,
            )
        )
    return profiles


@dataclass(frozen=True)
class Site:
    cell: CellId
    category: str
    point: GeoPoint


@dataclass(frozen=True)
class Agent:
    agent_id: str
    label: int
    home: Site
    work: Site
    extras: tuple[Site, ...]
    price: float
    spread_m: float      # realized anchor spread around home
    morning_out_s: int   # weekday leave-home time, local seconds into the day
    work_end_s: int


@dataclass
class World:
    grid: GridSpec
    agents: list[Agent]
    pois: list[PoiRecord]
    prices: list[PriceRecord]
    leisure_sites: list[Site] = field(default_factory=list)


def _lattice_cells(grid: GridSpec) -> list[CellId]:
    """Anchor-eligible cells spaced three apart, so 3x3 neighborhoods of
    distinct sites never share a cell."""
    return [
        CellId(r, c)
        for r in range(1, grid.rows - 1, 3)
        for c in range(1, grid.cols - 1, 3)
    ]


def _cell_dist_m(a: CellId, b: CellId, cell_size: float) -> float:
    return math.hypot(a.row - b.row, a.col - b.col) * cell_size


def _jitter_deg(rng: np.random.Generator, sigma_m: float, lat0: float, n: int):
    dn = rng.normal(0.0, sigma_m, n)
    de = rng.normal(0.0, sigma_m, n)
    dlat = dn / (EARTH_RADIUS_M * _RAD)
    dlon = de / (EARTH_RADIUS_M * _RAD * math.cos(lat0 * _RAD))
    return dlat, dlon


def generate_world(cfg: WorldConfig) -> World:
    """Lay out sites, agents, POIs and prices; deterministic under seed."""
    grid = cfg.grid
    lattice = _lattice_cells(grid)
    # dense site pools keep the nearest eligible anchor close to every home,
    # so an agent's realized travel radius tracks its class profile
    n_work = max(8, cfg.n_agents)
    n_leisure = max(2 * len(_LEISURE), 2 * cfg.n_agents)
    needed = cfg.n_agents + n_work + n_leisure
    if len(lattice) < needed:
        raise ConfigError(f"grid supports {len(lattice)} anchor sites, need {needed}; enlarge the grid")

    rng = np.random.default_rng([cfg.seed, 0])
    order = rng.permutation(len(lattice))
    home_cells = [lattice[i] for i in order[: cfg.n_agents]]
    work_cells = [lattice[i] for i in order[cfg.n_agents : cfg.n_agents + n_work]]
    leisure_cells = [lattice[i] for i in order[cfg.n_agents + n_work : needed]]

    work_sites = [Site(c, "working", cell_center(c, grid)) for c in work_cells]
    leisure_sites = [
        Site(c, _LEISURE[i % len(_LEISURE)], cell_center(c, grid)) for i, c in enumerate(leisure_cells)
    ]

    width = (cfg.price_max - cfg.price_min) / cfg.num_classes
    agents: list[Agent] = []
    for idx in range(cfg.n_agents):
        label = idx % cfg.num_classes
        profile = cfg.class_profiles[label]
        arng = np.random.default_rng([cfg.seed, 2, idx])
        home_cell = home_cells[idx]
        home = Site(home_cell, "residence", cell_center(home_cell, grid))

        spread = profile.rg_scale_m * float(arng.uniform(0.8, 1.25))

        def _pick(sites: list[Site], count: int, weights: dict[str, float] | None):
            radius = spread
            eligible: list[Site] = []
            while len(eligible) < count:
                eligible = [s for s in sites if _cell_dist_m(s.cell, home_cell, grid.cell_size_m) <= radius]
                radius *= 1.5
            if weights is None:
                w = np.ones(len(eligible))
            else:
                w = np.array([weights.get(s.category, 0.0) + 1e-3 for s in eligible])
            w = w / w.sum()
            chosen = arng.choice(len(eligible), size=count, replace=False, p=w)
            return [eligible[int(i)] for i in chosen]

        work = _pick(work_sites, 1, None)[0]
        n_extras = max(1, profile.n_anchor_locations - 2)
        extras = tuple(_pick(leisure_sites, n_extras, profile.activity_mix))

        lo, hi = profile.price_band
        base = cfg.price_min + label * width
        price = round(float(base + width * arng.uniform(lo, hi)), 2)
        agents.append(
            Agent(
                agent_id=f"agent{idx:04d}",
                label=label,
                home=home,
                work=work,
                extras=extras,
                price=price,
                spread_m=spread,
                morning_out_s=int(arng.uniform(7.4, 9.0) * 3600),
                work_end_s=int(arng.uniform(16.6, 18.2) * 3600),
            )
        )

    poi_rng = np.random.default_rng([cfg.seed, 1])
    pois: list[PoiRecord] = []
    site_list = [a.home for a in agents] + work_sites + leisure_sites
    for s_idx, site in enumerate(site_list):
        dlat, dlon = _jitter_deg(poi_rng, 45.0, grid.origin.lat, _POIS_PER_SITE)
        for k in range(_POIS_PER_SITE):
            pois.append(
                PoiRecord(
                    name=f"poi_{s_idx}_{k}",
                    category=site.category,
                    point=GeoPoint(round(site.point.lat + dlat[k], 6), round(site.point.lon + dlon[k], 6)),
                )
            )

    prices = [
        PriceRecord(name=f"home_{a.agent_id}", price=a.price, point=a.home.point) for a in agents
    ]
    return World(grid=grid, agents=agents, pois=pois, prices=prices, leisure_sites=leisure_sites)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _transit_s(a: GeoPoint, b: GeoPoint) -> int:
    from .geo import haversine_m

    dist = haversine_m(a, b)
    speed = _WALK_MPS if dist < 1200.0 else _DRIVE_MPS
    return max(60, int(dist / speed))


def _plan_week(agent: Agent, world: World, profile: ClassProfile, rng: np.random.Generator):
    """Visit blocks (point, start_local, end_local) covering one week.

    Home blocks span evenings through the following morning, so the
    22:00-07:00 night window always lands at home. Noise swaps a visit's
    target to a random leisure site within three spreads of home -- enough
    to blur class boundaries without exploding the travel radius.
    """
    jitter = lambda: float(rng.normal(0.0, profile.time_jitter_s))
    cell_size = world.grid.cell_size_m
    swap_pool = [
        s for s in world.leisure_sites
        if _cell_dist_m(s.cell, agent.home.cell, cell_size) <= 3.0 * agent.spread_m
    ] or [s for s in world.leisure_sites]
    blocks: list[tuple[GeoPoint, int, int]] = []
    home_since = 0
    here = agent.home.point
    for day in range(7):
        base = day * SECONDS_PER_DAY
        weekend = day >= 5
        targets: list[tuple[GeoPoint, int]] = []  # (point, dwell_s or 0 for "until work end")
        if weekend:
            out = base + int(9.5 * 3600 + jitter())
            out = min(max(out, base + 8 * 3600), base + 11 * 3600)
            n_visits = profile.weekend_visits
            if rng.random() < profile.schedule_noise:
                n_visits = max(0, n_visits + int(rng.integers(-1, 2)))
            for _ in range(n_visits):
                site = agent.extras[int(rng.integers(len(agent.extras)))]
                point = site.point
                if rng.random() < profile.schedule_noise:
                    point = swap_pool[int(rng.integers(len(swap_pool)))].point
                targets.append((point, int(rng.uniform(_MIN_VISIT_S, _MAX_VISIT_S))))
        else:
            out = base + agent.morning_out_s + int(jitter())
            out = min(max(out, base + 7 * 3600 + 600), base + int(9.6 * 3600))
            skip_work = rng.random() < profile.schedule_noise
            if not skip_work:
                targets.append((agent.work.point, 0))
            if rng.random() < profile.evening_visit_prob:
                site = agent.extras[int(rng.integers(len(agent.extras)))]
                point = site.point
                if rng.random() < profile.schedule_noise:
                    point = swap_pool[int(rng.integers(len(swap_pool)))].point
                targets.append((point, int(rng.uniform(_MIN_VISIT_S, _MAX_VISIT_S))))
        if not targets:
            continue
        t = max(home_since + 120, out)
        blocks.append((agent.home.point, home_since, t))
        here = agent.home.point
        cap = base + _EVENING_CAP_S
        for point, dwell in targets:
            arrive = t + _transit_s(here, point)
            if dwell == 0:
                depart = base + agent.work_end_s + int(jitter())
                depart = max(depart, arrive + 2 * 3600)
            else:
                depart = arrive + dwell
            if depart > cap:
                depart = cap
            if depart - arrive < _MIN_VISIT_S and dwell != 0:
                continue
            if depart <= arrive:
                continue
            blocks.append((point, arrive, depart))
            here = point
            t = depart
        home_since = t + _transit_s(here, agent.home.point)
        here = agent.home.point
    blocks.append((agent.home.point, home_since, SECONDS_PER_WEEK))
    return blocks


def _sample_week(
    agent: Agent,
    blocks,
    week_start_utc: int,
    cfg: WorldConfig,
    rng: np.random.Generator,
) -> Iterator[TrajectoryRecord]:
    lat0 = cfg.grid.origin.lat
    period = cfg.sampling_period_s
    prev_point: GeoPoint | None = None
    prev_end = 0
    for point, start, end in blocks:
        if prev_point is not None and start > prev_end:
            # transit leg, linearly interpolated
            times = np.arange(prev_end, start, period)
            if len(times):
                frac = (times - prev_end) / max(1, start - prev_end)
                lats = prev_point.lat + frac * (point.lat - prev_point.lat)
                lons = prev_point.lon + frac * (point.lon - prev_point.lon)
                dlat, dlon = _jitter_deg(rng, cfg.gps_noise_m, lat0, len(times))
                for k, t in enumerate(times):
                    yield TrajectoryRecord(
                        agent.agent_id,
                        GeoPoint(round(lats[k] + dlat[k], 6), round(lons[k] + dlon[k], 6)),
                        week_start_utc + int(t),
                    )
        times = np.arange(start, end, period)
        if len(times):
            dlat, dlon = _jitter_deg(rng, cfg.gps_noise_m, lat0, len(times))
            for k, t in enumerate(times):
                yield TrajectoryRecord(
                    agent.agent_id,
                    GeoPoint(round(point.lat + dlat[k], 6), round(point.lon + dlon[k], 6)),
                    week_start_utc + int(t),
                )
        prev_point = point
        prev_end = end


def first_week_start(cfg: WorldConfig) -> int:
    """Fixed, deterministic Monday-aligned start for generated data."""
    return week_start_of(1_600_000_000, cfg.tz_offset_s)


def generate_trajectories(world: World, cfg: WorldConfig) -> Iterator[TrajectoryRecord]:
    """Yield the full record stream, grouped by agent and ordered in time."""
    start = first_week_start(cfg)
    for idx, agent in enumerate(world.agents):
        profile = cfg.class_profiles[agent.label]
        for week in range(cfg.weeks_per_agent):
            rng = np.random.default_rng([cfg.seed, 3, idx, week])
            blocks = _plan_week(agent, world, profile, rng)
            yield from _sample_week(agent, blocks, start + week * SECONDS_PER_WEEK, cfg, rng)


def write_world(out_dir: str, world: World, cfg: WorldConfig) -> dict[str, str]:
    """Emit trajectories/POIs/prices in the ingest formats plus ground truth."""
    import os

    from .ingest import write_pois, write_prices, write_trajectories

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "trajectories": os.path.join(out_dir, "trajectories.csv"),
        "pois": os.path.join(out_dir, "pois.csv"),
        "prices": os.path.join(out_dir, "prices.csv"),
        "ground_truth": os.path.join(out_dir, "ground_truth.csv"),
    }
    write_trajectories(paths["trajectories"], generate_trajectories(world, cfg))
    write_pois(paths["pois"], world.pois)
    write_prices(paths["prices"], world.prices)
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        fh.write("user_id,class\n")
        for agent in world.agents:
            fh.write(f"{agent.agent_id},{agent.label}\n")
    return paths
