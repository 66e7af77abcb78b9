"""Turbofan run-to-failure data handling.

Reads C-MAPSS-style text files (unit, cycle, 3 operational settings, sensor
columns), prunes constant sensors, min-max normalizes from the training
split only, and slices sliding windows labeled with remaining useful life.
A synthetic degradation generator provides self-contained test data with
the same file formats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ParseError

log = logging.getLogger(__name__)

N_SETTINGS = 3
N_SENSORS = 21  # standard C-MAPSS column layout


@dataclass
class EngineSeries:
    """One engine's full multivariate history, cycles 1..T."""

    engine_id: int
    cycles: np.ndarray      # (T,) int
    op_settings: np.ndarray  # (T, 3); recorded but not used as model features
    sensors: np.ndarray     # (T, n_sensors)

    def __len__(self) -> int:
        return len(self.cycles)


@dataclass
class NormStats:
    """Per-feature min/max from the training split, constant features dropped."""

    mins: np.ndarray
    maxs: np.ndarray
    retained: list[int]  # indices into the raw sensor columns

    def apply(self, sensors: np.ndarray) -> tuple[np.ndarray, int]:
        """Normalize retained columns to [0,1]; returns (values, clamped count)."""
        raw = sensors[:, self.retained]
        scaled = (raw - self.mins) / (self.maxs - self.mins)
        clamped = int(np.count_nonzero((scaled < 0.0) | (scaled > 1.0)))
        return np.clip(scaled, 0.0, 1.0), clamped


@dataclass
class Window:
    """A normalized (M, N) slice ending at end_cycle with its RUL label."""

    x: np.ndarray
    y: float
    engine_id: int
    end_cycle: int


@dataclass
class WindowingResult:
    windows: list[Window] = field(default_factory=list)
    skipped_engines: int = 0
    clamped_values: int = 0


# ---------------------------------------------------------------------------
# loading and writing
# ---------------------------------------------------------------------------

def parse_series_file(path, n_sensors: int = N_SENSORS) -> list[EngineSeries]:
    """Parse a whitespace-separated run-to-failure file into per-engine series."""
    expected = 2 + N_SETTINGS + n_sensors
    per_engine: dict[int, list[list[float]]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != expected:
                raise ParseError(f"{path}: line {lineno}: expected {expected} columns, got {len(tokens)}")
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-numeric token ({exc})") from None
            per_engine.setdefault(int(values[0]), []).append(values[1:])
    if not per_engine:
        raise ParseError(f"{path}: no data rows")

    series = []
    for engine_id, rows in per_engine.items():
        arr = np.array(rows, dtype=np.float64)
        cycles = arr[:, 0].astype(int)
        if not np.array_equal(cycles, np.arange(1, len(cycles) + 1)):
            raise ParseError(f"{path}: engine {engine_id}: cycles must run 1..T in steps of 1")
        series.append(
            EngineSeries(
                engine_id=engine_id,
                cycles=cycles,
                op_settings=arr[:, 1 : 1 + N_SETTINGS],
                sensors=arr[:, 1 + N_SETTINGS :],
            )
        )
    return series


def parse_rul_file(path) -> np.ndarray:
    """One integer per line: final RUL of the i-th test engine."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            try:
                values.append(int(token))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: expected an integer RUL, got {token!r}") from None
    if not values:
        raise ParseError(f"{path}: no RUL entries")
    return np.array(values, dtype=np.float64)


def load_cmapss(train_path, test_path, rul_path, n_sensors: int = N_SENSORS):
    """Load a train/test/RUL file triple.

    Returns (train series, test series, final RULs). The i-th RUL entry
    belongs to the i-th test engine in file order.
    """
    train = parse_series_file(train_path, n_sensors)
    test = parse_series_file(test_path, n_sensors)
    ruls = parse_rul_file(rul_path)
    if len(ruls) != len(test):
        raise ParseError(
            f"{rul_path}: {len(ruls)} RUL entries for {len(test)} test engines"
        )
    return train, test, ruls


def write_series_file(series: Sequence[EngineSeries], path) -> None:
    """Inverse of parse_series_file; floats use shortest round-trip formatting."""
    with open(path, "w") as fh:
        for eng in series:
            for t in range(len(eng)):
                fields = [str(eng.engine_id), str(int(eng.cycles[t]))]
                fields += [str(float(v)) for v in eng.op_settings[t]]
                fields += [str(float(v)) for v in eng.sensors[t]]
                fh.write(" ".join(fields) + "\n")


def write_rul_file(ruls: Sequence[float], path) -> None:
    with open(path, "w") as fh:
        for r in ruls:
            fh.write(f"{int(r)}\n")


# ---------------------------------------------------------------------------
# normalization and windowing
# ---------------------------------------------------------------------------

def fit_norm(train: Sequence[EngineSeries]) -> NormStats:
    """Fit min-max stats on the training split only; drop zero-variance sensors."""
    if not train:
        raise DomainError("fit_norm needs a non-empty training split")
    stacked = np.concatenate([e.sensors for e in train], axis=0)
    mins = stacked.min(axis=0)
    maxs = stacked.max(axis=0)
    retained = [j for j in range(stacked.shape[1]) if maxs[j] > mins[j]]
    if not retained:
        raise DomainError("every sensor is constant over the training split")
    return NormStats(mins=mins[retained], maxs=maxs[retained], retained=retained)


def make_windows(
    series: Sequence[EngineSeries],
    stats: NormStats,
    m: int,
    rul_cap: float | None = None,
    final_ruls: Sequence[float] | None = None,
) -> WindowingResult:
    """Slide length-m windows with stride 1 over each engine.

    Training labels (final_ruls None) count down to 0 at the last cycle.
    Test labels offset the per-engine final RUL by distance from the last
    recorded cycle. rul_cap, when set, caps labels in both modes. Engines
    shorter than m are skipped and counted.
    """
    if m < 1:
        raise ConfigError(f"window length must be >= 1, got {m}")
    if final_ruls is not None and len(final_ruls) != len(series):
        raise DomainError(f"{len(final_ruls)} final RULs for {len(series)} engines")

    result = WindowingResult()
    for pos, eng in enumerate(series):
        t_total = len(eng)
        if t_total < m:
            result.skipped_engines += 1
            continue
        norm, clamped = stats.apply(eng.sensors)
        result.clamped_values += clamped
        last_cycle = int(eng.cycles[-1])
        tail = 0.0 if final_ruls is None else float(final_ruls[pos])
        for end in range(m, t_total + 1):
            end_cycle = int(eng.cycles[end - 1])
            y = tail + (last_cycle - end_cycle)
            if rul_cap is not None:
                y = min(y, float(rul_cap))
            result.windows.append(
                Window(x=norm[end - m : end], y=float(y), engine_id=eng.engine_id, end_cycle=end_cycle)
            )
    if result.skipped_engines:
        log.warning("skipped %d engine(s) shorter than the %d-cycle window", result.skipped_engines, m)
    return result


def stack_windows(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (B, M, N) inputs and a (B,) label vector."""
    if not windows:
        raise DomainError("no windows to stack")
    x = np.stack([w.x for w in windows]).astype(np.float64)
    y = np.array([w.y for w in windows], dtype=np.float64)
    return x, y


# ---------------------------------------------------------------------------
# synthetic degradation data
# ---------------------------------------------------------------------------

def synth_generate(
    n_engines: int,
    n_features: int,
    seed: int,
    n_constant: int = 2,
    noise: float = 0.03,
) -> list[EngineSeries]:
    """Generate run-to-failure engines with power-law degradation trends.

    Each engine lives a random 120..220 cycles. Every informative feature
    follows a + b*(cycle/T)^c plus Gaussian noise with per-engine random
    a, b, c; the sign of b is fixed per feature (as for physical sensors,
    which drift one way as damage grows) so the data stays learnable. The
    last n_constant feature columns are exactly constant and shared across
    engines, so normalization provably drops them.
    """
    if n_engines < 1 or n_features < 1:
        raise DomainError("synth_generate needs n_engines >= 1 and n_features >= 1")
    if n_constant < 0 or n_constant > n_features:
        raise DomainError(f"n_constant must be in [0, {n_features}], got {n_constant}")

    rng = np.random.default_rng(seed)
    const_values = rng.uniform(0.2, 0.8, size=n_constant)
    n_varying = n_features - n_constant
    directions = np.where(rng.random(n_varying) < 0.5, -1.0, 1.0)

    engines = []
    for engine_id in range(1, n_engines + 1):
        t_total = int(rng.integers(120, 221))
        frac = np.arange(1, t_total + 1, dtype=np.float64) / t_total
        sensors = np.empty((t_total, n_features), dtype=np.float64)
        for j in range(n_varying):
            a = rng.uniform(0.25, 0.75)
            b = directions[j] * rng.uniform(0.35, 0.7)
            c = rng.uniform(1.0, 2.0)
            sensors[:, j] = a + b * frac**c + rng.normal(0.0, noise, size=t_total)
        sensors[:, n_varying:] = const_values
        settings = rng.normal(0.5, 0.02, size=(t_total, N_SETTINGS))
        engines.append(
            EngineSeries(
                engine_id=engine_id,
                cycles=np.arange(1, t_total + 1),
                op_settings=settings,
                sensors=sensors,
            )
        )
    return engines


def make_synth_split(
    n_train: int,
    n_test: int,
    n_features: int,
    seed: int,
    n_constant: int = 2,
    noise: float = 0.03,
    keep_lo: float = 0.6,
    keep_hi: float = 0.95,
):
    """Synthetic train/test/RUL triple shaped like a C-MAPSS dataset.

    Test engines are truncated at a random keep_lo..keep_hi fraction of
    their lifetime; the withheld tail is the engine's final RUL, exactly
    as in the real files.
    """
    if not 0 < keep_lo <= keep_hi <= 1:
        raise DomainError(f"need 0 < keep_lo <= keep_hi <= 1, got ({keep_lo}, {keep_hi})")
    engines = synth_generate(n_train + n_test, n_features, seed, n_constant, noise)
    train = engines[:n_train]
    rng = np.random.default_rng([seed, 0x7E57])
    test = []
    ruls = []
    for new_id, eng in enumerate(engines[n_train:], start=1):
        t_total = len(eng)
        keep = max(1, int(round(t_total * rng.uniform(keep_lo, keep_hi))))
        test.append(
            EngineSeries(
                engine_id=new_id,
                cycles=eng.cycles[:keep],
                op_settings=eng.op_settings[:keep],
                sensors=eng.sensors[:keep],
            )
        )
        ruls.append(float(t_total - keep))
    return train, test, np.array(ruls, dtype=np.float64)
