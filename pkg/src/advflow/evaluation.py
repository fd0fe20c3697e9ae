"""Robustness evaluation: attack suites, budget sweeps, black-box transfer.

Evaluation follows the standard protocol: untargeted attacks on the true
labels, random start for everything except FGSM, top-1 accuracy reported
to 0.1% (argmax ties resolve to the lowest class index, which numpy's
argmax guarantees). Attacks are seeded per example index, so evaluating a
subset produces the same per-example adversarial inputs as evaluating the
full set.

Reports serialize to CSV with exact float round-trips (budgets via repr,
accuracy pre-rounded to 0.1). Wall time is recorded only when ``timing``
is requested: by default the seconds column is 0.0 so that identical
seed/config reruns produce byte-identical files.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import ATTACKS, AttackConfig
from .constraints import Budget
from .data import Dataset, normalize
from .exceptions import EvaluationError, FormatError
from . import container

log = logging.getLogger("advflow.evaluation")

PRISTINE = "pristine"

CSV_HEADER = "attack,eps_pixel,eps_spatial,steps,accuracy,examples,seconds"

DEFAULT_PIXEL_STEP = 2 * (2.0 / 255.0)
DEFAULT_SPATIAL_STEP = 0.15


@dataclass(frozen=True)
class SuiteEntry:
    """One evaluation row: an attack kind plus its configuration."""

    name: str
    kind: str
    cfg: AttackConfig | None = None

    def __post_init__(self):
        if self.kind != PRISTINE and self.kind not in ATTACKS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if (self.cfg is None) != (self.kind == PRISTINE):
            raise ValueError("attack entries need a cfg; the pristine entry takes none")


@dataclass(frozen=True)
class EvalRow:
    attack: str
    eps_pixel: float
    eps_spatial: float
    steps: int
    accuracy: float
    examples: int
    seconds: float

    def __post_init__(self):
        if not 0 <= self.accuracy <= 100:
            raise ValueError(f"accuracy must be in [0, 100], got {self.accuracy}")
        if self.examples <= 0:
            raise ValueError("examples evaluated must be > 0")


@dataclass
class EvalReport:
    rows: list[EvalRow]

    def row(self, attack: str) -> EvalRow:
        for r in self.rows:
            if r.attack == attack:
                return r
        raise KeyError(attack)

    def accuracy(self, attack: str) -> float:
        return self.row(attack).accuracy


def default_suite(
    budget: Budget,
    *,
    steps: int = 20,
    pixel_step: float = DEFAULT_PIXEL_STEP,
    spatial_step: float = DEFAULT_SPATIAL_STEP,
    seed: int = 0,
) -> list[SuiteEntry]:
    """The canonical five-row suite: Pristine, FGSM, PGDm, Spatial, Joint."""

    def cfg(random_start=True, n_steps=steps):
        return AttackConfig(
            budget=budget,
            steps=n_steps,
            pixel_step=pixel_step,
            spatial_step=spatial_step,
            random_start=random_start,
            targeted=False,
            seed=seed,
        )

    return [
        SuiteEntry("Pristine", PRISTINE),
        SuiteEntry("FGSM", "fgsm", cfg(random_start=False, n_steps=1)),
        SuiteEntry(f"PGD{steps}", "pgd", cfg()),
        SuiteEntry("Spatial", "spatial", cfg()),
        SuiteEntry("Joint", "joint-sp", cfg()),
    ]


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def _row_accuracy(model, dataset, entry, *, source_model, workers, chunk):
    """Correct-prediction count for one suite entry (deterministic)."""
    gen = source_model if source_model is not None else model
    labels = dataset.labels.astype(np.int64)

    def run(span):
        start, stop = span
        x = normalize(dataset.images[start:stop], gen.dtype)
        y = labels[start:stop]
        if entry.kind == PRISTINE:
            images = x
        else:
            images = ATTACKS[entry.kind](
                gen, x, y, entry.cfg, example_indices=np.arange(start, stop)
            ).images
        preds = model.predict(images.astype(model.dtype, copy=False))
        return int((preds == y).sum())

    spans = list(_chunks(len(dataset), chunk))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, spans))
    else:
        counts = [run(s) for s in spans]
    return sum(counts)


def evaluate_suite(
    model,
    dataset: Dataset,
    suite: list[SuiteEntry] | None = None,
    *,
    budget: Budget | None = None,
    limit: int | None = None,
    workers: int = 1,
    source_model=None,
    timing: bool = False,
    chunk: int = 256,
) -> EvalReport:
    """Accuracy of ``model`` under each suite entry.

    ``suite`` defaults to the five-row canonical suite for ``budget``
    (which must then be given). ``source_model`` switches to transfer
    mode: attacks are generated against it and only scored on ``model``.
    """
    ds = dataset.subset(limit)
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if suite is None:
        if budget is None:
            raise ValueError("need either an explicit suite or a budget for the default suite")
        suite = default_suite(budget)
    rows = []
    for entry in suite:
        t0 = time.perf_counter()
        correct = _row_accuracy(
            model, ds, entry, source_model=source_model, workers=workers, chunk=chunk
        )
        seconds = round(time.perf_counter() - t0, 3) if timing else 0.0
        c = entry.cfg
        rows.append(
            EvalRow(
                attack=entry.name,
                eps_pixel=c.budget.eps_pixel if c else 0.0,
                eps_spatial=c.budget.eps_spatial if c else 0.0,
                steps=c.steps if c else 0,
                accuracy=round(100.0 * correct / len(ds), 1),
                examples=len(ds),
                seconds=seconds,
            )
        )
        log.info("%s: %.1f%% on %d examples", entry.name, rows[-1].accuracy, len(ds))
    return EvalReport(rows)


def blackbox_eval(
    target_model,
    source_model,
    dataset: Dataset,
    suite: list[SuiteEntry] | None = None,
    **kwargs,
) -> EvalReport:
    """Transfer attacks: generated on ``source_model``, scored on ``target_model``."""
    return evaluate_suite(target_model, dataset, suite, source_model=source_model, **kwargs)


def budget_sweep(
    model,
    dataset: Dataset,
    axis: str,
    values: list[float],
    *,
    kind: str | None = None,
    steps: int = 20,
    pixel_step: float = DEFAULT_PIXEL_STEP,
    spatial_step: float = DEFAULT_SPATIAL_STEP,
    fixed_budget: float = 0.0,
    seed: int = 0,
    monotone_tol: float = 2.0,
    **kwargs,
) -> EvalReport:
    """Accuracy along one budget axis, the other budget held fixed.

    ``axis`` is "pixel" (default attack: pgd) or "spatial" (default:
    the spatial attack). Values must be strictly increasing; accuracy is
    checked to be non-increasing within ``monotone_tol`` points and a
    violation raises EvaluationError. A zero budget with the other axis
    at zero reproduces pristine accuracy exactly.
    """
    if axis not in ("pixel", "spatial"):
        raise ValueError(f"axis must be 'pixel' or 'spatial', got {axis!r}")
    vals = [float(v) for v in values]
    if not vals or any(v2 <= v1 for v1, v2 in zip(vals, vals[1:])) or vals[0] < 0:
        raise ValueError("values must be a nonempty strictly increasing list of budgets >= 0")
    if kind is None:
        kind = "pgd" if axis == "pixel" else "spatial"
    suite = []
    for v in vals:
        budget = Budget(v, fixed_budget) if axis == "pixel" else Budget(fixed_budget, v)
        cfg = AttackConfig(
            budget=budget,
            steps=steps,
            pixel_step=pixel_step,
            spatial_step=spatial_step,
            random_start=True,
            targeted=False,
            seed=seed,
        )
        suite.append(SuiteEntry(kind, kind, cfg))
    report = evaluate_suite(model, dataset, suite, **kwargs)
    accs = [r.accuracy for r in report.rows]
    for prev, cur, v in zip(accs, accs[1:], vals[1:]):
        if cur > prev + monotone_tol:
            raise EvaluationError(
                f"sweep lost monotonicity on the {axis} axis at budget {v}: "
                f"{cur:.1f}% follows {prev:.1f}% (tolerance {monotone_tol})"
            )
    return report


def _fmt_float(v: float) -> str:
    return repr(float(v))


def export_report(report: EvalReport, path) -> None:
    """Write the report as CSV; floats round-trip exactly through repr."""
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            f"{r.attack},{_fmt_float(r.eps_pixel)},{_fmt_float(r.eps_spatial)},"
            f"{r.steps},{r.accuracy:.1f},{r.examples},{r.seconds:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> EvalReport:
    """Parse a CSV written by export_report back into an EvalReport."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise FormatError(f"{path}: missing report header")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise FormatError(f"{path}: malformed row {line!r}")
        rows.append(
            EvalRow(
                attack=parts[0],
                eps_pixel=float(parts[1]),
                eps_spatial=float(parts[2]),
                steps=int(parts[3]),
                accuracy=float(parts[4]),
                examples=int(parts[5]),
                seconds=float(parts[6]),
            )
        )
    return EvalReport(rows)


def dump_attack_tensors(path, clean, adv, flow, delta, labels, preds) -> None:
    """Raw per-example dump (clean, adversarial, flow, delta, labels,
    predictions) in the checkpoint container format, for inspection."""
    container.write_container(
        path,
        {"kind": "attack-dump", "format": 1, "count": int(len(clean))},
        {
            "clean": clean,
            "adversarial": adv,
            "flow": flow,
            "delta": delta,
            "labels": np.asarray(labels, dtype=np.float32),
            "predictions": np.asarray(preds, dtype=np.float32),
        },
    )
