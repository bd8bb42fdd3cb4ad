"""Batch experiments: unit disposition scenarios, Monte Carlo surface,
section runs and the field-data comparison.

Every experiment is a pure function of its config and seed. Independent
runs may be spread over worker processes (STACKDRIVE_THREADS); results
are always reduced in submission order.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .config import ScenarioConfig, VehicleSpec, replace_vehicles
from .sim_engine import SectionStats, SimTrace, run_scenario, traffic_section_sim

logger = logging.getLogger(__name__)

THREADS_ENV = "STACKDRIVE_THREADS"

LABEL_Q = {"Normal": 0.5, "Aggressive": 1.0, "Cautious": 0.0}

# Vehicle ids in a unit scenario.
VEHICLE_1, VEHICLE_2 = 0, 1


@dataclass(frozen=True)
class DispositionCombo:
    """Dispositions of Vehicle 1 and Vehicle 2, by label."""

    first: str
    second: str

    def __post_init__(self):
        for label in (self.first, self.second):
            if label not in LABEL_Q:
                raise ValueError(f"unknown disposition label {label!r}")

    @property
    def name(self) -> str:
        return f"{self.first}/{self.second}"

    @property
    def slug(self) -> str:
        return f"{self.first.lower()}_{self.second.lower()}"

    @property
    def q_values(self) -> Tuple[float, float]:
        return LABEL_Q[self.first], LABEL_Q[self.second]


NORMAL_NORMAL = DispositionCombo("Normal", "Normal")
AGGRESSIVE_CAUTIOUS = DispositionCombo("Aggressive", "Cautious")
AGGRESSIVE_AGGRESSIVE = DispositionCombo("Aggressive", "Aggressive")
CAUTIOUS_CAUTIOUS = DispositionCombo("Cautious", "Cautious")

UNIT_COMBOS = (
    NORMAL_NORMAL,
    AGGRESSIVE_CAUTIOUS,
    AGGRESSIVE_AGGRESSIVE,
    CAUTIOUS_CAUTIOUS,
)
SURFACE_COMBOS = (NORMAL_NORMAL, AGGRESSIVE_CAUTIOUS, AGGRESSIVE_AGGRESSIVE)

# Share of aggressive drivers in each section mix.
AGGRESSIVE_SHARE = {"timid_timid": 0.0, "aggr_timid": 0.5, "aggr_aggr": 1.0}

# Separations (m) beyond which the aggressive pair must score highest.
FAR_SEPARATION = 50.0


@dataclass(frozen=True)
class Verdict:
    """A machine-checked qualitative expectation."""

    name: str
    passed: bool
    detail: str = ""


def worker_count() -> int:
    """Worker processes for batch runs, from STACKDRIVE_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1


def _ordered_map(fn: Callable, jobs: Sequence) -> List:
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def unit_config(
    base: ScenarioConfig,
    combo: DispositionCombo,
    y1: float = 0.0,
    y2: float = -50.0,
) -> ScenarioConfig:
    """Two-vehicle scenario: Vehicle 1 in lane 2 at 100, Vehicle 2 in lane 3 at 130."""
    q1, q2 = combo.q_values
    width = base.lane_width
    vehicles = [
        VehicleSpec(x0=width, y0=y1, v0=100.0, q=q1),
        VehicleSpec(x0=2 * width, y0=y2, v0=130.0, q=q2),
    ]
    return replace_vehicles(base, vehicles)


@dataclass
class UnitResult:
    combo: DispositionCombo
    trace: SimTrace

    @property
    def peak(self) -> float:
        """Peak collision index between the two decision vehicles."""
        return self.trace.peak_between((VEHICLE_1, VEHICLE_2))

    @property
    def lane_change_count(self) -> int:
        return sum(
            1 for c in self.trace.lane_changes if c.vehicle_id in (VEHICLE_1, VEHICLE_2)
        )

    def first_change_time(self) -> Optional[float]:
        times = [
            c.time
            for c in self.trace.lane_changes
            if c.vehicle_id in (VEHICLE_1, VEHICLE_2)
        ]
        return min(times) if times else None

    def overtaken(self) -> bool:
        """True if Vehicle 2 ever got ahead of Vehicle 1."""
        first = self.trace.positions(VEHICLE_1)
        second = self.trace.positions(VEHICLE_2)
        return any(y2 > y1 for y1, y2 in zip(first, second))


@dataclass
class UnitSuite:
    results: Dict[str, UnitResult]
    verdicts: List[Verdict]

    @property
    def failed(self) -> List[str]:
        return [v.name for v in self.verdicts if not v.passed]


def _unit_job(args: Tuple[ScenarioConfig, DispositionCombo]) -> UnitResult:
    base, combo = args
    logger.info("unit scenario %s", combo.name)
    return UnitResult(combo, run_scenario(unit_config(base, combo)))


def _verdicts(results: Dict[str, UnitResult], near_threshold: float) -> List[Verdict]:
    nn = results[NORMAL_NORMAL.name]
    ac = results[AGGRESSIVE_CAUTIOUS.name]
    aa = results[AGGRESSIVE_AGGRESSIVE.name]
    cc = results[CAUTIOUS_CAUTIOUS.name]
    verdicts = []

    v1 = nn.trace.first_lane_change(VEHICLE_1)
    v2 = nn.trace.first_lane_change(VEHICLE_2)
    order_ok = (
        v1 is not None
        and v2 is not None
        and (v1.from_lane, v1.to_lane) == (2, 3)
        and (v2.from_lane, v2.to_lane) == (3, 2)
        and v1.time < v2.time
    )
    verdicts.append(
        Verdict(
            "normal_lane_change_order",
            order_ok,
            f"vehicle 1: {v1}, vehicle 2: {v2}",
        )
    )

    verdicts.append(
        Verdict(
            "cautious_no_lane_change",
            cc.lane_change_count == 0,
            f"{cc.lane_change_count} lane changes",
        )
    )

    t_aa, t_nn = aa.first_change_time(), nn.first_change_time()
    verdicts.append(
        Verdict(
            "aggressive_changes_sooner",
            t_aa is not None and t_nn is not None and t_aa < t_nn,
            f"aggressive {t_aa}, normal {t_nn}",
        )
    )

    peaks = {name: r.peak for name, r in results.items()}
    verdicts.append(
        Verdict(
            "aggressive_peak_above_threshold",
            aa.peak > near_threshold,
            f"peak {aa.peak:.3f}",
        )
    )
    verdicts.append(
        Verdict(
            "aggressive_peak_highest",
            all(aa.peak >= p for p in peaks.values()),
            ", ".join(f"{k} {v:.3f}" for k, v in peaks.items()),
        )
    )
    verdicts.append(
        Verdict("cautious_follower_never_overtakes", not ac.overtaken(), "")
    )
    verdicts.append(
        Verdict(
            "mixed_peak_below_aggressive",
            ac.peak < aa.peak,
            f"mixed {ac.peak:.3f}, aggressive {aa.peak:.3f}",
        )
    )
    return verdicts


def run_unit_suite(config: ScenarioConfig) -> UnitSuite:
    """Run the four two-vehicle disposition scenarios and judge their verdicts."""
    outcomes = _ordered_map(_unit_job, [(config, combo) for combo in UNIT_COMBOS])
    results = {r.combo.name: r for r in outcomes}
    verdicts = _verdicts(results, config.events.near_threshold)
    for verdict in verdicts:
        log = logger.info if verdict.passed else logger.warning
        result = "pass" if verdict.passed else "FAIL"
        log("verdict %s: %s %s", verdict.name, result, verdict.detail)
    return UnitSuite(results, verdicts)


@dataclass(frozen=True)
class SurfacePoint:
    """Peak collision index statistics of one combo in one separation bin."""

    bin_low: float
    bin_high: float
    combo: str
    count: int
    mean: float
    max: float


@dataclass(frozen=True)
class SurfaceSample:
    combo: str
    separation: float
    peak: float


@dataclass
class SurfaceResult:
    points: List[SurfacePoint]
    samples: List[SurfaceSample]

    @property
    def combos(self) -> List[str]:
        return list(dict.fromkeys(p.combo for p in self.points))

    def _filled(self, combo: str) -> List[SurfacePoint]:
        return [p for p in self.points if p.combo == combo and p.count]

    def trend(self, combo: str) -> float:
        """Spearman rank correlation between bin separation and mean peak index."""
        points = self._filled(combo)
        if len(points) < 3:
            return float("nan")
        centres = [0.5 * (p.bin_low + p.bin_high) for p in points]
        rho, _ = spearmanr(centres, [p.mean for p in points])
        return float(rho)

    def mean_above(self, combo: str, separation: float) -> float:
        """Run-weighted mean of the bin means from the given separation upward."""
        points = [p for p in self._filled(combo) if p.bin_low >= separation]
        runs = sum(p.count for p in points)
        if not runs:
            return float("nan")
        return math.fsum(p.mean * p.count for p in points) / runs

    @property
    def checks(self) -> List[Verdict]:
        """Orderings expected of the surface; missing data fails a check."""
        names = self.combos
        checks = []
        if AGGRESSIVE_AGGRESSIVE.name in names:
            high = self.mean_above(AGGRESSIVE_AGGRESSIVE.name, FAR_SEPARATION)
            for other in (NORMAL_NORMAL, AGGRESSIVE_CAUTIOUS):
                if other.name not in names:
                    continue
                low = self.mean_above(other.name, FAR_SEPARATION)
                checks.append(
                    Verdict(
                        f"aggressive_pair_exceeds_{other.slug}_when_far",
                        high > low,
                        f"above {FAR_SEPARATION:g} m: {high:.3f} vs {low:.3f}",
                    )
                )
        for name in names:
            rho = self.trend(name)
            slug = name.lower().replace("/", "_")
            checks.append(
                Verdict(f"peak_falls_with_separation_{slug}", rho < 0, f"rho {rho:.3f}")
            )
        return checks


def draw_positions(n: int, seed: int) -> List[Tuple[float, float]]:
    """Initial y of Vehicle 1 in [0, 50] and Vehicle 2 in [-50, 0], one pair per run.

    Uses numpy's default PCG64 generator seeded through SeedSequence(seed).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    first = rng.uniform(0.0, 50.0, size=n)
    second = rng.uniform(-50.0, 0.0, size=n)
    return [(float(a), float(b)) for a, b in zip(first, second)]


def _surface_job(
    args: Tuple[ScenarioConfig, DispositionCombo, float, float, int]
) -> SurfaceSample:
    base, combo, y1, y2, seed = args
    trace = run_scenario(unit_config(base, combo, y1, y2), seed=seed)
    peak = trace.peak_between((VEHICLE_1, VEHICLE_2))
    return SurfaceSample(combo.name, y1 - y2, peak)


def monte_carlo_surface(
    config: ScenarioConfig,
    n: int = 100,
    seed: int = 0,
    combos: Sequence[DispositionCombo] = SURFACE_COMBOS,
    bin_width: float = 10.0,
    max_separation: float = 100.0,
) -> SurfaceResult:
    """Peak collision index against initial separation for random placements.

    Args:
        config: Base scenario (vehicle table ignored)
        n: Number of random placements, shared by every combo
        seed: Seed of the placement draw; run i uses seed + i for perception noise
        combos: Disposition combinations to run
        bin_width: Separation bin width (m)
        max_separation: Upper edge of the last bin (m)
    """
    if n < 1:
        raise ValueError(f"need at least one run, got {n}")
    positions = draw_positions(n, seed)
    jobs = [
        (config, combo, y1, y2, seed + i)
        for combo in combos
        for i, (y1, y2) in enumerate(positions)
    ]
    samples = _ordered_map(_surface_job, jobs)

    bins = int(round(max_separation / bin_width))
    points = []
    for combo in combos:
        grouped: Dict[int, List[float]] = {b: [] for b in range(bins)}
        for s in samples:
            if s.combo == combo.name:
                grouped[min(int(s.separation // bin_width), bins - 1)].append(s.peak)
        for b in range(bins):
            values = grouped[b]
            if not values:
                logger.warning(
                    "no runs of %s fell in the %d m bin", combo.name, b * bin_width
                )
            points.append(
                SurfacePoint(
                    bin_low=b * bin_width,
                    bin_high=(b + 1) * bin_width,
                    combo=combo.name,
                    count=len(values),
                    mean=math.fsum(values) / len(values) if values else 0.0,
                    max=max(values, default=0.0),
                )
            )
    return SurfaceResult(points, samples)


def crash_rate_per_mvmt(event_count: float, vehicle_miles: float) -> float:
    """Events per million vehicle miles travelled."""
    if vehicle_miles <= 0:
        raise ValueError(f"vehicle miles must be positive, got {vehicle_miles}")
    return event_count / (vehicle_miles / 1e6)


@dataclass(frozen=True)
class NhtsaFixture:
    """Model event counts reported for the 100-car comparison, and the field totals."""

    crash_attentive: int = 1
    near_crash_attentive: int = 12
    crash_inattentive: int = 2
    near_crash_inattentive: int = 26
    field_crashes: int = 82
    field_near_crashes: int = 761
    field_miles: float = 2.0e6
    field_hours: float = 42300.0

    @property
    def field_crash_rate(self) -> float:
        return crash_rate_per_mvmt(self.field_crashes, self.field_miles)

    @property
    def field_near_crash_rate(self) -> float:
        return crash_rate_per_mvmt(self.field_near_crashes, self.field_miles)


@dataclass(frozen=True)
class PopulationCounts:
    """Events and exposure summed over section runs of one population."""

    crashes: int
    near_crashes: int
    vehicle_miles: float

    @classmethod
    def from_stats(cls, stats: Iterable[SectionStats]) -> "PopulationCounts":
        stats = list(stats)
        return cls(
            crashes=sum(s.crashes for s in stats),
            near_crashes=sum(s.near_crashes for s in stats),
            vehicle_miles=math.fsum(s.vehicle_miles for s in stats),
        )


@dataclass
class NhtsaComparison:
    rows: List[Dict[str, object]]
    checks: List[Verdict]
    note: str = (
        "qualitative comparison only: aggressiveness levels and the near-crash "
        "threshold are model parametrizations, not field measurements"
    )


def _rate(count: float, miles: float) -> Optional[float]:
    return crash_rate_per_mvmt(count, miles) if miles > 0 else None


def nhtsa_compare(
    attentive: PopulationCounts,
    inattentive: PopulationCounts,
    fixture: NhtsaFixture = NhtsaFixture(),
) -> NhtsaComparison:
    """Side-by-side counts and rates plus the inattentive-versus-attentive orderings."""
    rows = []
    for kind, model_a, model_i, ref_a, ref_i in (
        (
            "crash",
            attentive.crashes,
            inattentive.crashes,
            fixture.crash_attentive,
            fixture.crash_inattentive,
        ),
        (
            "near_crash",
            attentive.near_crashes,
            inattentive.near_crashes,
            fixture.near_crash_attentive,
            fixture.near_crash_inattentive,
        ),
    ):
        for population, count, miles, reference in (
            ("attentive", model_a, attentive.vehicle_miles, ref_a),
            ("inattentive", model_i, inattentive.vehicle_miles, ref_i),
        ):
            rate = _rate(count, miles)
            rows.append(
                {
                    "kind": kind,
                    "population": population,
                    "model_count": count,
                    "model_rate_per_mvmt": "" if rate is None else f"{rate:.6f}",
                    "reference_count": reference,
                    "reference_rate_per_mvmt": "",
                }
            )
    rows.append(
        {
            "kind": "crash",
            "population": "field",
            "model_count": "",
            "model_rate_per_mvmt": "",
            "reference_count": fixture.field_crashes,
            "reference_rate_per_mvmt": f"{fixture.field_crash_rate:.6f}",
        }
    )
    rows.append(
        {
            "kind": "near_crash",
            "population": "field",
            "model_count": "",
            "model_rate_per_mvmt": "",
            "reference_count": fixture.field_near_crashes,
            "reference_rate_per_mvmt": f"{fixture.field_near_crash_rate:.6f}",
        }
    )

    checks = [
        Verdict(
            "crash_inattentive_exceeds_attentive",
            inattentive.crashes > attentive.crashes,
            f"{inattentive.crashes} vs {attentive.crashes} "
            f"(reference {fixture.crash_inattentive} vs {fixture.crash_attentive})",
        ),
        Verdict(
            "near_crash_inattentive_exceeds_attentive",
            inattentive.near_crashes > attentive.near_crashes,
            f"{inattentive.near_crashes} vs {attentive.near_crashes} "
            f"(reference {fixture.near_crash_inattentive} vs "
            f"{fixture.near_crash_attentive})",
        ),
    ]
    return NhtsaComparison(rows, checks)


def _section_job(args: Tuple[ScenarioConfig, int, float, str, int]) -> SectionStats:
    config, density, duration, mix, seed = args
    return traffic_section_sim(config, density, duration, mix, seed)


def section_runs(
    config: ScenarioConfig,
    runs: int,
    seed: int,
    density: Optional[int] = None,
    duration: Optional[float] = None,
    mix: Optional[str] = None,
) -> List[SectionStats]:
    """Independent section runs with seeds seed, seed + 1, ..."""
    density = config.section.density if density is None else density
    duration = config.section.duration if duration is None else duration
    mix = config.section.mix if mix is None else mix
    jobs = [(config, density, duration, mix, seed + k) for k in range(runs)]
    return _ordered_map(_section_job, jobs)


@dataclass(frozen=True)
class SweepCell:
    """Cumulative collision possibility and event count of every run in one cell."""

    density: int
    runs: int
    mix: str
    values: Tuple[float, ...]
    events: Tuple[int, ...] = ()

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)

    @property
    def mean_events(self) -> float:
        return sum(self.events) / len(self.events) if self.events else 0.0


@dataclass
class SweepResult:
    cells: List[SweepCell]
    checks: List[Verdict] = field(default_factory=list)

    def cell(self, density: int, runs: int, mix: str) -> SweepCell:
        return next(
            c for c in self.cells if (c.density, c.runs, c.mix) == (density, runs, mix)
        )


def sweep_checks(result: SweepResult) -> List[Verdict]:
    """Dominance checks on the largest run count of a sweep.

    Denser sections must score higher for every mix, and at every density
    a mix with a larger aggressive share must score at least as high, in
    both collision possibility and events per run.
    """
    largest = max(c.runs for c in result.cells)
    densities = sorted({c.density for c in result.cells})
    mixes = list(dict.fromkeys(c.mix for c in result.cells))
    checks = []
    low, high = densities[0], densities[-1]
    if low != high:
        for mix in mixes:
            sparse = result.cell(low, largest, mix).mean
            dense = result.cell(high, largest, mix).mean
            checks.append(
                Verdict(
                    f"density_raises_possibility_{mix}",
                    dense > sparse,
                    f"{dense:.4f} vs {sparse:.4f}",
                )
            )
    ranked = sorted(
        (m for m in mixes if m in AGGRESSIVE_SHARE), key=AGGRESSIVE_SHARE.get
    )
    for density in densities:
        for lower, higher in zip(ranked, ranked[1:]):
            a = result.cell(density, largest, lower)
            b = result.cell(density, largest, higher)
            checks.append(
                Verdict(
                    f"aggressive_share_raises_possibility_{lower}_{higher}_d{density}",
                    b.mean >= a.mean,
                    f"{b.mean:.4f} vs {a.mean:.4f}",
                )
            )
            checks.append(
                Verdict(
                    f"aggressive_share_raises_events_{lower}_{higher}_d{density}",
                    b.mean_events >= a.mean_events,
                    f"{b.mean_events:.2f} vs {a.mean_events:.2f}",
                )
            )
    return checks


def density_sweep(
    config: ScenarioConfig,
    densities: Sequence[int] = (6, 8),
    runs: Sequence[int] = (5, 50, 500),
    mixes: Sequence[str] = ("aggr_timid", "aggr_aggr"),
    seed: int = 0,
    duration: Optional[float] = None,
) -> SweepResult:
    """Cumulative collision possibility over a density x run-count x mix grid.

    Smaller run counts reuse the first seeds of the largest one, so each
    cell is a prefix of the next.
    """
    if not densities or not runs or not mixes:
        raise ValueError("sweep needs at least one density, run count and mix")
    if min(runs) < 1:
        raise ValueError("run counts must be positive")
    largest = max(runs)
    cells = []
    for density in densities:
        for mix in mixes:
            stats = section_runs(config, largest, seed, density, duration, mix)
            values = [s.cumulative_possibility for s in stats]
            events = [s.crashes + s.near_crashes for s in stats]
            for count in sorted(runs):
                cells.append(
                    SweepCell(
                        density,
                        count,
                        mix,
                        tuple(values[:count]),
                        tuple(events[:count]),
                    )
                )

    result = SweepResult(cells)
    result.checks.extend(sweep_checks(result))
    return result


# Name of the sweep on the command line.
fig14_sweep = density_sweep


def flow_rate(groups_per_minute: float, density: float) -> float:
    """Vehicles per minute through a section holding `density` vehicles."""
    return groups_per_minute * density
