"""Attack metrics, experiment drivers, and delimited report output.

Fooling percentage counts samples whose prediction strictly exceeds
(1+alpha) times the true RUL; MAPE is the mean absolute percentage error.
Zero-RUL windows have no meaningful threshold or denominator, so callers
exclude them and the count is carried in every report. CSV files are
written with fixed headers and deterministic formatting so identical runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .attacks import AttackConfig, Perturbation, _maybe_clamp, _predict_stack, uap_compute
from .data import EngineSeries, NormStats, Window, make_windows, stack_windows
from .errors import DimensionError, DomainError

log = logging.getLogger(__name__)

REPORT_HEADER = ["model", "attack", "fooling_pct", "mape", "n_samples", "n_excluded"]
TRAJECTORY_HEADER = ["engine_id", "cycle", "true_rul", "pred_clean", "pred_attacked"]
SWEEP_HEADER = ["epsilon", "fooling_pct", "mape"]
FLEET_HEADER = ["engine_id", "true_rul", "pred_clean", "pred_attacked"]
TRACE_HEADER = ["engine_id", "cycle", "feature", "value_clean", "value_attacked"]


@dataclass
class PredRow:
    engine_id: int
    end_cycle: int
    y: float
    pred_clean: float
    pred_attacked: float


@dataclass
class AttackReport:
    model_id: str
    attack_id: str
    fooling_pct: float
    mape: float
    n_samples: int
    n_excluded: int
    rows: list[PredRow]


@dataclass
class SweepPoint:
    epsilon: float
    fooling_pct: float
    mape: float


@dataclass
class SweepResult:
    points: list[SweepPoint]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _check_metric_inputs(preds, labels, name: str) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise DimensionError(f"{name} needs equal-length 1-D inputs, got {p.shape} and {y.shape}")
    if p.size == 0:
        raise DomainError(f"{name} of empty inputs")
    if (y <= 0).any():
        raise DomainError(f"{name} needs strictly positive labels; exclude zero-RUL rows first")
    return p, y


def fooling_percentage(preds, labels, alpha: float) -> float:
    """100 x fraction of samples with prediction strictly above (1+alpha)*label."""
    p, y = _check_metric_inputs(preds, labels, "fooling_percentage")
    fooled = int(np.count_nonzero(p > (1.0 + alpha) * y))
    return 100.0 * fooled / p.size


def mape(preds, labels) -> float:
    """Mean absolute percentage error; exact summation, so order-independent."""
    p, y = _check_metric_inputs(preds, labels, "mape")
    return 100.0 * math.fsum(abs(pi - yi) / yi for pi, yi in zip(p, y)) / p.size


# ---------------------------------------------------------------------------
# evaluation drivers
# ---------------------------------------------------------------------------

def evaluate(
    model,
    dataset: Sequence[Window],
    perturbation: Perturbation | None = None,
    alpha: float = 0.1,
    model_id: str | None = None,
    clamp_inputs: bool = False,
) -> AttackReport:
    """Clean and attacked predictions per window plus the two attack metrics.

    With no perturbation the attacked columns alias the clean ones exactly.
    Metrics cover positive-RUL windows; n_excluded counts the rest.
    """
    x, y = stack_windows(dataset)
    preds_clean = _predict_stack(model, x)
    if perturbation is not None:
        if perturbation.u.shape != x.shape[1:]:
            raise DimensionError(
                f"perturbation shape {perturbation.u.shape} does not match windows {x.shape[1:]}"
            )
        preds_att = _predict_stack(model, _maybe_clamp(x + perturbation.u, clamp_inputs))
    else:
        preds_att = preds_clean

    mask = y > 0
    if not mask.any():
        raise DomainError("evaluate needs at least one window with positive RUL")
    rows = [
        PredRow(
            engine_id=w.engine_id,
            end_cycle=w.end_cycle,
            y=w.y,
            pred_clean=float(preds_clean[i]),
            pred_attacked=float(preds_att[i]),
        )
        for i, w in enumerate(dataset)
        if mask[i]
    ]
    return AttackReport(
        model_id=model_id if model_id is not None else getattr(model, "model_id", "model"),
        attack_id=perturbation.source_model if perturbation is not None else "none",
        fooling_pct=fooling_percentage(preds_att[mask], y[mask], alpha),
        mape=mape(preds_att[mask], y[mask]),
        n_samples=int(mask.sum()),
        n_excluded=int((~mask).sum()),
        rows=rows,
    )


def transfer_matrix(
    models: Mapping[str, object],
    perturbations: Mapping[str, Perturbation],
    dataset: Sequence[Window],
    alpha: float = 0.1,
) -> list[AttackReport]:
    """Cross-model attack table: per victim, rows for none / own / other attack."""
    ids = list(models)
    if set(perturbations) != set(ids):
        raise DomainError(f"perturbation keys {sorted(perturbations)} do not match models {sorted(ids)}")
    reports = []
    for victim in ids:
        sources = [victim] + [m for m in ids if m != victim]
        reports.append(evaluate(models[victim], dataset, None, alpha, model_id=victim))
        for src in sources:
            reports.append(evaluate(models[victim], dataset, perturbations[src], alpha, model_id=victim))
    return reports


def _uap_for_epsilon(args):
    model, windows, cfg = args
    return uap_compute(model, windows, cfg)


def epsilon_sweep(
    model,
    dataset: Sequence[Window],
    epsilons: Sequence[float],
    cfg: AttackConfig,
    attack_dataset: Sequence[Window] | None = None,
    jobs: int = 1,
) -> SweepResult:
    """One fresh perturbation per strength value, evaluated at fixed alpha.

    The perturbation is fitted on attack_dataset (default: the evaluation
    dataset) with the same seed at every epsilon. Points come back in the
    given, strictly increasing, order; jobs > 1 fits perturbations in
    parallel worker processes with identical results.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise DomainError("epsilon_sweep needs at least one epsilon")
    if any(e < 0 for e in eps):
        raise DomainError(f"epsilons must be >= 0, got {eps}")
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise DomainError(f"epsilons must be strictly increasing, got {eps}")

    fit_on = attack_dataset if attack_dataset is not None else dataset
    tasks = [(model, fit_on, dataclasses.replace(cfg, epsilon=e)) for e in eps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            perts = list(pool.map(_uap_for_epsilon, tasks))
    else:
        perts = [_uap_for_epsilon(t) for t in tasks]

    points = []
    for e, pert in zip(eps, perts):
        rep = evaluate(model, dataset, pert, cfg.alpha, clamp_inputs=cfg.clamp_inputs)
        points.append(SweepPoint(epsilon=e, fooling_pct=rep.fooling_pct, mape=rep.mape))
        log.info("sweep eps=%g fooling=%.2f%% mape=%.2f", e, rep.fooling_pct, rep.mape)
    return SweepResult(points=points)


# ---------------------------------------------------------------------------
# per-engine trajectories and input traces
# ---------------------------------------------------------------------------

def trajectory_report(
    model,
    series: EngineSeries,
    stats: NormStats,
    m: int,
    perturbation: Perturbation | None = None,
    rul_cap: float | None = None,
    final_rul: float | None = None,
    clamp_inputs: bool = False,
) -> list[PredRow]:
    """Per-cycle clean and attacked predictions along one engine's life.

    One row per window end cycle (T - m + 1 rows); an engine shorter than
    the window is skipped with a notice and yields no rows.
    """
    final = None if final_rul is None else [final_rul]
    result = make_windows([series], stats, m, rul_cap=rul_cap, final_ruls=final)
    if not result.windows:
        log.info("engine %d has fewer than %d cycles; no trajectory", series.engine_id, m)
        return []
    x, _ = stack_windows(result.windows)
    preds_clean = _predict_stack(model, x)
    if perturbation is not None:
        if perturbation.u.shape != x.shape[1:]:
            raise DimensionError(
                f"perturbation shape {perturbation.u.shape} does not match windows {x.shape[1:]}"
            )
        preds_att = _predict_stack(model, _maybe_clamp(x + perturbation.u, clamp_inputs))
    else:
        preds_att = preds_clean
    return [
        PredRow(
            engine_id=w.engine_id,
            end_cycle=w.end_cycle,
            y=w.y,
            pred_clean=float(preds_clean[i]),
            pred_attacked=float(preds_att[i]),
        )
        for i, w in enumerate(result.windows)
    ]


def fleet_last_window(
    model,
    series: Sequence[EngineSeries],
    stats: NormStats,
    m: int,
    perturbation: Perturbation | None = None,
    rul_cap: float | None = None,
    final_ruls: Sequence[float] | None = None,
    clamp_inputs: bool = False,
) -> list[PredRow]:
    """Clean vs attacked prediction at each engine's last window."""
    result = make_windows(series, stats, m, rul_cap=rul_cap, final_ruls=final_ruls)
    last: dict[int, Window] = {}
    for w in result.windows:
        last[w.engine_id] = w  # windows arrive in end-cycle order per engine
    ordered = [last[e.engine_id] for e in series if e.engine_id in last]
    if not ordered:
        raise DomainError(f"no engine has at least {m} cycles")
    x, _ = stack_windows(ordered)
    preds_clean = _predict_stack(model, x)
    if perturbation is not None:
        preds_att = _predict_stack(model, _maybe_clamp(x + perturbation.u, clamp_inputs))
    else:
        preds_att = preds_clean
    return [
        PredRow(
            engine_id=w.engine_id,
            end_cycle=w.end_cycle,
            y=w.y,
            pred_clean=float(preds_clean[i]),
            pred_attacked=float(preds_att[i]),
        )
        for i, w in enumerate(ordered)
    ]


def input_trace(
    series: EngineSeries,
    stats: NormStats,
    m: int,
    perturbation: Perturbation | None = None,
    clamp_inputs: bool = False,
) -> list[tuple[int, int, str, float, float]]:
    """Clean vs perturbed model-input values over one engine's last window.

    Rows are (engine_id, cycle, feature, clean, attacked) in normalized
    units, one per cycle and retained sensor; for eyeballing how visible
    the perturbation is.
    """
    if len(series) < m:
        raise DomainError(f"engine {series.engine_id} has fewer than {m} cycles")
    norm, _ = stats.apply(series.sensors)
    clean = norm[-m:]
    attacked = clean if perturbation is None else _maybe_clamp(clean + perturbation.u, clamp_inputs)
    cycles = series.cycles[-m:]
    rows = []
    for t in range(m):
        for j, sensor_idx in enumerate(stats.retained):
            rows.append(
                (series.engine_id, int(cycles[t]), f"s{sensor_idx + 1}",
                 float(clean[t, j]), float(attacked[t, j]))
            )
    return rows


# ---------------------------------------------------------------------------
# delimited output
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return str(float(v))


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_report_csv(reports: Sequence[AttackReport], path) -> None:
    """Table-style summary, percent columns at 2 decimal places."""
    _write_csv(
        path,
        REPORT_HEADER,
        [
            [r.model_id, r.attack_id, f"{r.fooling_pct:.2f}", f"{r.mape:.2f}",
             r.n_samples, r.n_excluded]
            for r in reports
        ],
    )


def write_report_json(reports: Sequence[AttackReport], path) -> None:
    """Full-precision sidecar for the summary CSV."""
    doc = [
        {
            "model": r.model_id,
            "attack": r.attack_id,
            "fooling_pct": r.fooling_pct,
            "mape": r.mape,
            "n_samples": r.n_samples,
            "n_excluded": r.n_excluded,
        }
        for r in reports
    ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_trajectory_csv(rows: Sequence[PredRow], path) -> None:
    _write_csv(
        path,
        TRAJECTORY_HEADER,
        [[r.engine_id, r.end_cycle, _fmt(r.y), _fmt(r.pred_clean), _fmt(r.pred_attacked)] for r in rows],
    )


def write_fleet_csv(rows: Sequence[PredRow], path) -> None:
    _write_csv(
        path,
        FLEET_HEADER,
        [[r.engine_id, _fmt(r.y), _fmt(r.pred_clean), _fmt(r.pred_attacked)] for r in rows],
    )


def write_sweep_csv(result: SweepResult, path) -> None:
    _write_csv(
        path,
        SWEEP_HEADER,
        [[_fmt(p.epsilon), f"{p.fooling_pct:.2f}", f"{p.mape:.2f}"] for p in result.points],
    )


def write_trace_csv(rows, path) -> None:
    _write_csv(
        path,
        TRACE_HEADER,
        [[eid, cyc, feat, _fmt(cl), _fmt(at)] for eid, cyc, feat, cl, at in rows],
    )
