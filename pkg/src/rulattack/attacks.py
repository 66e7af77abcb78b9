"""Gradient attacks against RUL regressors.

`fgsm` is the classic one-shot sign attack. `uap_compute` builds a single
universal perturbation, bounded in L-infinity norm, that pushes the model
toward overpredicting remaining life on most samples: every sample not yet
overpredicted by the factor alpha gets a greedy sign-ascent correction,
and the running perturbation is re-projected onto the epsilon ball after
each update. A model here is anything with `forward(Tensor) -> Tensor`
(tape-capable); a `predict(stack) -> array` method is used when present.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Window, stack_windows
from .errors import ConfigError, DimensionError, DomainError, FormatError
from .ndgrad import Tensor, backward, mse_loss

log = logging.getLogger(__name__)

PERTURBATION_VERSION = 1


@dataclass
class AttackConfig:
    """Knobs of the universal-perturbation search.

    epsilon bounds the perturbation's L-infinity norm (normalized input
    units); alpha is the overprediction factor defining a fooled sample;
    r_fool is the target fooled fraction and e_fool the epoch budget.
    inner_step defaults to epsilon / 10.
    """

    epsilon: float = 0.01
    alpha: float = 0.1
    r_fool: float = 0.99
    e_fool: int = 3
    inner_step: float | None = None
    inner_max_iters: int = 20
    clamp_inputs: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.r_fool <= 1:
            raise ConfigError(f"r_fool must be in (0, 1], got {self.r_fool}")
        if self.e_fool < 1:
            raise ConfigError(f"e_fool must be >= 1, got {self.e_fool}")
        if self.inner_step is not None and self.inner_step <= 0:
            raise ConfigError(f"inner_step must be > 0, got {self.inner_step}")
        if self.inner_max_iters < 1:
            raise ConfigError(f"inner_max_iters must be >= 1, got {self.inner_max_iters}")

    @property
    def effective_inner_step(self) -> float:
        return self.inner_step if self.inner_step is not None else self.epsilon / 10.0


@dataclass
class Perturbation:
    """A universal perturbation with its bound and provenance."""

    u: np.ndarray
    epsilon: float
    alpha: float
    source_model: str
    achieved_fooling: float
    epochs_run: int


def _model_value(model, x: np.ndarray) -> float:
    return model.forward(Tensor(x)).item()


def _predict_stack(model, stack: np.ndarray) -> np.ndarray:
    """Batched predictions, falling back to per-sample forwards."""
    predict = getattr(model, "predict", None)
    if predict is not None:
        return np.asarray(predict(stack), dtype=np.float64)
    return np.array([_model_value(model, x) for x in stack], dtype=np.float64)


def _maybe_clamp(x: np.ndarray, clamp: bool) -> np.ndarray:
    return np.clip(x, 0.0, 1.0) if clamp else x


# ---------------------------------------------------------------------------
# primitive attacks
# ---------------------------------------------------------------------------

def fgsm(model, window: np.ndarray, label: float, epsilon: float,
         clamp_inputs: bool = False) -> np.ndarray:
    """One sign-of-loss-gradient step of size epsilon away from the window."""
    if epsilon < 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    window = np.asarray(window, dtype=np.float64)
    if epsilon == 0:
        return window.copy()
    x = Tensor(window, requires_grad=True)
    pred = model.forward(x)
    target = Tensor(np.full_like(pred.data, float(label)))
    backward(mse_loss(pred, target))
    adv = window + epsilon * np.sign(x.grad)
    return _maybe_clamp(adv, clamp_inputs)


def project_linf(u: np.ndarray, epsilon: float) -> np.ndarray:
    """Nearest point of the epsilon-radius L-infinity ball: elementwise clamp."""
    if epsilon < 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    return np.clip(u, -epsilon, epsilon)


def check_fool(model, dataset: Sequence[Window], u: np.ndarray | None, alpha: float,
               clamp_inputs: bool = False) -> float:
    """Fraction of positive-label samples overpredicted past (1+alpha)*Y.

    Zero-label windows carry no overprediction threshold and are excluded
    from both numerator and denominator.
    """
    x, y = stack_windows(dataset)
    mask = y > 0
    if not mask.any():
        raise DomainError("check_fool needs at least one window with positive RUL")
    x, y = x[mask], y[mask]
    if u is not None:
        if u.shape != x.shape[1:]:
            raise DimensionError(f"perturbation shape {u.shape} does not match windows {x.shape[1:]}")
        x = _maybe_clamp(x + u, clamp_inputs)
    preds = _predict_stack(model, x)
    return float(np.count_nonzero(preds > (1.0 + alpha) * y)) / len(y)


def inner_min_r(model, x_plus_u: np.ndarray, label: float, alpha: float,
                step: float, max_iters: int,
                clamp_inputs: bool = False) -> tuple[np.ndarray, bool]:
    """Smallest greedy sign-ascent correction pushing one sample over threshold.

    Accumulates r <- r + step * sign(grad f) until f(x+r) > (1+alpha)*label,
    ascending the model output directly so the move is always toward
    overprediction. Returns (r, converged); a dead gradient is flagged and
    ends the search early.
    """
    threshold = (1.0 + alpha) * label
    r = np.zeros_like(x_plus_u)
    for _ in range(max_iters):
        x = Tensor(_maybe_clamp(x_plus_u + r, clamp_inputs), requires_grad=True)
        pred = model.forward(x)
        if pred.item() > threshold:
            return r, True
        backward(pred)
        if not x.grad.any():
            log.warning("inner solve stopped on an all-zero input gradient")
            return r, False
        r = r + step * np.sign(x.grad)
    final = _model_value(model, _maybe_clamp(x_plus_u + r, clamp_inputs))
    return r, final > threshold


def uap_compute(
    model,
    dataset: Sequence[Window],
    cfg: AttackConfig,
    model_id: str | None = None,
    on_update: Callable[[np.ndarray], None] | None = None,
) -> Perturbation:
    """Universal perturbation search over the given windows.

    Epochs sweep the (seeded-shuffled) dataset; each sample still under the
    overprediction threshold contributes an inner-solve correction, and the
    accumulated perturbation is clamped back onto the epsilon ball after
    every update. Stops once the fooled fraction reaches cfg.r_fool or the
    epoch budget cfg.e_fool is spent. `on_update` sees the perturbation
    after each projection.
    """
    if not dataset:
        raise DomainError("uap_compute needs a non-empty dataset")
    x_all, y_all = stack_windows(dataset)
    u = np.zeros(x_all.shape[1:], dtype=np.float64)
    step = cfg.effective_inner_step
    rng = np.random.default_rng(cfg.seed)
    order = np.arange(len(y_all))
    epochs_run = 0

    achieved = check_fool(model, dataset, u, cfg.alpha, cfg.clamp_inputs)
    while achieved < cfg.r_fool and epochs_run < cfg.e_fool:
        if cfg.epsilon > 0:  # on the zero ball every update projects back to 0
            for i in order:
                label = y_all[i]
                if label <= 0:
                    continue
                x_adv = _maybe_clamp(x_all[i] + u, cfg.clamp_inputs)
                if _model_value(model, x_adv) < (1.0 + cfg.alpha) * label:
                    r, _ = inner_min_r(
                        model, x_all[i] + u, label, cfg.alpha, step,
                        cfg.inner_max_iters, cfg.clamp_inputs,
                    )
                    u = project_linf(u + r, cfg.epsilon)
                    assert np.abs(u).max() <= cfg.epsilon
                    if on_update is not None:
                        on_update(u)
        epochs_run += 1
        rng.shuffle(order)
        achieved = check_fool(model, dataset, u, cfg.alpha, cfg.clamp_inputs)

    return Perturbation(
        u=u,
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        source_model=model_id if model_id is not None else getattr(model, "model_id", "model"),
        achieved_fooling=achieved,
        epochs_run=epochs_run,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_perturbation(pert: Perturbation, path) -> None:
    doc = {
        "format_version": PERTURBATION_VERSION,
        "shape": list(pert.u.shape),
        "epsilon": pert.epsilon,
        "alpha": pert.alpha,
        "source_model": pert.source_model,
        "achieved_fooling": pert.achieved_fooling,
        "epochs_run": pert.epochs_run,
        "values": pert.u.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_perturbation(path) -> Perturbation:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not a valid perturbation file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format_version") != PERTURBATION_VERSION:
        raise FormatError(f"{path}: unsupported perturbation format_version")
    try:
        u = np.asarray(doc["values"], dtype=np.float64)
        shape = tuple(doc["shape"])
        pert = Perturbation(
            u=u,
            epsilon=float(doc["epsilon"]),
            alpha=float(doc["alpha"]),
            source_model=str(doc["source_model"]),
            achieved_fooling=float(doc["achieved_fooling"]),
            epochs_run=int(doc["epochs_run"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed perturbation field ({exc})") from None
    if u.shape != shape:
        raise FormatError(f"{path}: values shape {u.shape} does not match declared {shape}")
    if np.abs(u).max(initial=0.0) > pert.epsilon:
        raise FormatError(f"{path}: values exceed the declared epsilon bound {pert.epsilon}")
    return pert
