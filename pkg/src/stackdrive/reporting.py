"""Delimited output files.

Every data file is CSV with a fixed column order and fixed float
formatting, so identical runs produce byte-identical files. With
``compact`` the file is gzip-compressed with a zero timestamp.
"""

import csv
import gzip
import io
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, TextIO, Tuple

from .experiments import NhtsaComparison, SurfaceResult, SweepResult, Verdict
from .sim_engine import SafetyEvent, SectionStats, SimTrace

TRACE_COLUMNS = (
    "t",
    "id",
    "x",
    "y",
    "theta",
    "v_long",
    "v_lat",
    "r",
    "lane",
    "strategy",
    "max_icol",
)
EVENT_COLUMNS = ("scenario", "kind", "time", "vehicle_a", "vehicle_b", "peak")
SECTION_COLUMNS = (
    "mix",
    "density",
    "duration",
    "seed",
    "crashes",
    "near_crashes",
    "vehicle_miles",
    "cumulative_possibility",
    "injected",
    "exited",
    "deferred",
)


def _f(value: float) -> str:
    return f"{value:.6f}"


def output_path(path: Path, compact: bool = False) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".gz") if compact else path


@contextmanager
def open_csv(path: Path, compact: bool = False) -> Iterator[TextIO]:
    """Text handle for a CSV file, gzip-compressed when compact."""
    path = output_path(path, compact)
    path.parent.mkdir(parents=True, exist_ok=True)
    if compact:
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                with io.TextIOWrapper(gz, encoding="utf-8", newline="") as handle:
                    yield handle
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle


def _read_rows(path: Path) -> List[Dict[str, str]]:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rt", encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _write(
    path: Path, columns: Sequence[str], rows: Iterable[Sequence], compact: bool = False
) -> Path:
    with open_csv(path, compact) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    return output_path(path, compact)


def write_trace(trace: SimTrace, path: Path, compact: bool = False) -> Path:
    """One row per (step, vehicle)."""

    def rows():
        for t, frame in zip(trace.times, trace.frames):
            for r in frame:
                s = r.state
                yield (
                    _f(t),
                    r.vehicle_id,
                    _f(s.x),
                    _f(s.y),
                    _f(s.heading),
                    _f(s.v_long),
                    _f(s.v_lat),
                    _f(s.yaw_rate),
                    r.lane,
                    "" if r.strategy is None else r.strategy.value,
                    _f(r.max_index),
                )

    return _write(path, TRACE_COLUMNS, rows(), compact)


def write_events(
    events: Iterable[Tuple[str, SafetyEvent]], path: Path, compact: bool = False
) -> Path:
    rows = (
        (name, e.kind.value, _f(e.time), e.pair[0], e.pair[1], _f(e.peak))
        for name, e in events
    )
    return _write(path, EVENT_COLUMNS, rows, compact)


def write_verdicts(verdicts: Iterable[Verdict], path: Path) -> Path:
    rows = ((v.name, "pass" if v.passed else "fail", v.detail) for v in verdicts)
    return _write(path, ("verdict", "result", "detail"), rows)


def write_surface(
    result: SurfaceResult, path: Path, samples_path: Path, checks_path: Path
) -> List[Path]:
    """Binned surface grid, the raw per-run samples and the ordering checks."""
    grid = _write(
        path,
        ("bin_low", "bin_high", "combo", "count", "mean_peak_icol", "max_peak_icol"),
        (
            (_f(p.bin_low), _f(p.bin_high), p.combo, p.count, _f(p.mean), _f(p.max))
            for p in result.points
        ),
    )
    samples = _write(
        samples_path,
        ("combo", "separation", "peak_icol"),
        ((s.combo, _f(s.separation), _f(s.peak)) for s in result.samples),
    )
    return [grid, samples, write_verdicts(result.checks, checks_path)]


def write_section_stats(stats: Iterable[SectionStats], path: Path) -> Path:
    rows = ([row[c] for c in SECTION_COLUMNS] for row in (s.to_row() for s in stats))
    return _write(path, SECTION_COLUMNS, rows)


def read_section_stats(path: Path) -> List[SectionStats]:
    """Section stats written by write_section_stats."""
    return [
        SectionStats(
            mix=row["mix"],
            density=int(row["density"]),
            duration=float(row["duration"]),
            seed=int(row["seed"]),
            crashes=int(row["crashes"]),
            near_crashes=int(row["near_crashes"]),
            vehicle_miles=float(row["vehicle_miles"]),
            cumulative_possibility=float(row["cumulative_possibility"]),
            injected=int(row["injected"]),
            exited=int(row["exited"]),
            deferred=int(row["deferred"]),
        )
        for row in _read_rows(path)
    ]


def write_sweep(result: SweepResult, path: Path, checks_path: Path) -> List[Path]:
    rows = (
        (c.density, c.runs, c.mix, i, _f(value), events)
        for c in result.cells
        for i, (value, events) in enumerate(zip(c.values, c.events))
    )
    columns = ("density", "runs", "mix", "run", "cumulative_possibility", "events")
    grid = _write(path, columns, rows)
    return [grid, write_verdicts(result.checks, checks_path)]


def write_comparison(comparison: NhtsaComparison, path: Path) -> Path:
    columns = (
        "kind",
        "population",
        "model_count",
        "model_rate_per_mvmt",
        "reference_count",
        "reference_rate_per_mvmt",
    )
    rows = [[row[c] for c in columns] for row in comparison.rows]
    rows += [
        ["check", v.name, "pass" if v.passed else "fail", v.detail, "", ""]
        for v in comparison.checks
    ]
    rows.append(["note", comparison.note, "", "", "", ""])
    return _write(path, columns, rows)


Pose = Tuple[int, float, float, float]


def read_trace_poses(path: Path) -> List[Tuple[float, List[Pose]]]:
    """Per-step (id, x, y, theta) from a trace file, in file order."""
    frames: List[Tuple[float, List[Pose]]] = []
    for row in _read_rows(path):
        t = float(row["t"])
        pose = (int(row["id"]), float(row["x"]), float(row["y"]), float(row["theta"]))
        if frames and frames[-1][0] == t:
            frames[-1][1].append(pose)
        else:
            frames.append((t, [pose]))
    return frames


def write_pair_scores(trace: SimTrace, path: Path, compact: bool = False) -> Path:
    rows = (
        (_f(t), a, b, _f(value))
        for t, scores in zip(trace.times, trace.pair_indices)
        for (a, b), value in sorted(scores.items())
    )
    return _write(path, ("t", "vehicle_a", "vehicle_b", "icol"), rows, compact)
