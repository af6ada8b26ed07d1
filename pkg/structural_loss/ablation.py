"""
Ablation drivers.

`run_ablation` trains one model per (setting, seed) and reports validation
mIoU as mean and sample standard deviation across seeds. `hard_proportion_sweep`
keeps a trained model frozen and recomputes the share of hard examples as a
single SSL parameter varies. `compare_losses` trains a loss and a baseline
side by side per seed and also scores the thin-structure region alone.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Union

import numpy as np

from .choices import AblationAxis, LossKind
from .datasets import SceneConfig, SyntheticDataset, SyntheticScene, generate_dataset
from .grids import one_hot_array
from .metrics import miou
from .network import TinyFcn
from .reports import SslReport
from .ssl import SslParams, ssl_arrays
from .training import TrainConfig, TrainingResult, evaluate, train

logger: logging.Logger = logging.getLogger(__name__)

MIN_SEEDS: Final[int] = 3
FROZEN_AXES: Final[tuple[str, ...]] = (AblationAxis.BETA, AblationAxis.SIGMA, AblationAxis.REGION_SIZE)
RESULT_HEADER: Final[List[str]] = ["axis", "value", "seed", "miou", "mean_hard_proportion"]
SUMMARY_HEADER: Final[List[str]] = ["axis", "value", "runs", "miou_mean", "miou_std", "hard_proportion_mean"]
SWEEP_HEADER: Final[List[str]] = ["param", "value", "M", "element_count", "hard_proportion"]
# CSV columns named after the quantity rather than the field
_COLUMN_FIELDS: Final[Dict[str, str]] = {"M": "hard_count"}
COMPARISON_HEADER: Final[List[str]] = ["seed", "loss", "miou", "thin_miou"]
COMPARISON_SUMMARY_HEADER: Final[List[str]] = ["metric", "baseline_mean", "challenger_mean", "mean_difference"]

_TRUE_WORDS: Final[frozenset[str]] = frozenset({"on", "true", "yes", "1"})
_FALSE_WORDS: Final[frozenset[str]] = frozenset({"off", "false", "no", "0"})

AxisValue = Union[float, int, bool, str]


def parse_axis_value(axis: str, text: str) -> AxisValue:
    axis = AblationAxis(axis)
    text = text.strip()
    if axis in (AblationAxis.BETA, AblationAxis.SIGMA):
        return float(text)
    if axis == AblationAxis.REGION_SIZE:
        return int(text)
    if axis == AblationAxis.LOSS_KIND:
        return LossKind(text).value
    lowered: str = text.lower()
    if lowered in _TRUE_WORDS:
        return True
    if lowered in _FALSE_WORDS:
        return False
    raise ValueError(f"{axis} expects on/off, got {text!r}")


def value_label(value: AxisValue) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    return repr(value) if isinstance(value, float) else str(value)


def apply_ssl_axis(params: SslParams, axis: str, value: AxisValue) -> SslParams:
    axis = AblationAxis(axis)
    if axis == AblationAxis.BETA:
        return replace(params, beta=float(value))
    if axis == AblationAxis.SIGMA:
        return params.with_window(params.window.size, float(value))
    if axis == AblationAxis.REGION_SIZE:
        return params.with_window(int(value), params.window.sigma)
    if axis == AblationAxis.OHEM:
        return replace(params, ohem_enabled=bool(value))
    if axis == AblationAxis.REWEIGHT:
        return replace(params, reweight_enabled=bool(value))
    raise ValueError(f"{axis} is not an SSL parameter")


def apply_axis(config: TrainConfig, axis: str, value: AxisValue) -> TrainConfig:
    if AblationAxis(axis) == AblationAxis.LOSS_KIND:
        return replace(config, loss_kind=LossKind(str(value)).value)
    return replace(config, ssl=apply_ssl_axis(config.ssl, axis, value))


@dataclass(frozen=True)
class AblationRow:
    axis: str
    value: str
    seed: int
    miou: float
    mean_hard_proportion: Optional[float]


@dataclass(frozen=True)
class AblationSummaryRow:
    axis: str
    value: str
    runs: int
    miou_mean: float
    miou_std: float
    hard_proportion_mean: Optional[float]


@dataclass(frozen=True)
class AblationTable:
    rows: List[AblationRow]
    summary: List[AblationSummaryRow]


def _mean_hard_proportion(result: TrainingResult) -> Optional[float]:
    proportions: List[float] = [row.hard_proportion for row in result.log if row.hard_proportion is not None]
    return float(np.mean(proportions)) if proportions else None


def summarize_rows(rows: Sequence[AblationRow]) -> List[AblationSummaryRow]:
    """Group by (axis, value) in first-seen order; std is the sample standard deviation."""
    groups: Dict[tuple[str, str], List[AblationRow]] = {}
    for row in rows:
        groups.setdefault((row.axis, row.value), []).append(row)

    summary: List[AblationSummaryRow] = []
    for (axis, value), members in groups.items():
        scores: np.ndarray = np.array([member.miou for member in members])
        proportions: List[float] = [
            member.mean_hard_proportion for member in members if member.mean_hard_proportion is not None
        ]
        summary.append(
            AblationSummaryRow(
                axis=axis,
                value=value,
                runs=len(members),
                miou_mean=float(scores.mean()),
                miou_std=float(scores.std(ddof=1)) if len(members) > 1 else 0.0,
                hard_proportion_mean=float(np.mean(proportions)) if proportions else None,
            )
        )
    return summary


def run_ablation(
    axis: str,
    values: Sequence[AxisValue],
    seeds: Sequence[int],
    base_config: TrainConfig = TrainConfig(),
    scene_config: SceneConfig = SceneConfig(),
) -> AblationTable:
    axis = AblationAxis(axis).value
    if len(seeds) < MIN_SEEDS:
        raise ValueError(f"an ablation needs at least {MIN_SEEDS} seeds, got {len(seeds)}")
    if not values:
        raise ValueError("an ablation needs at least one value")

    datasets: Dict[int, SyntheticDataset] = {}
    rows: List[AblationRow] = []
    for value in values:
        for seed in seeds:
            if seed not in datasets:
                datasets[seed] = generate_dataset(scene_config, seed)
            dataset: SyntheticDataset = datasets[seed]
            config: TrainConfig = replace(apply_axis(base_config, axis, value), seed=seed)
            model: TinyFcn = TinyFcn.initialize(scene_config.class_count, seed)
            result: TrainingResult = train(model, dataset, config)
            score: float = miou(evaluate(result.model, dataset.val, config.loss_kind))
            logger.info(f"Ablation {axis}={value_label(value)} seed {seed}: val mIoU {score:.4f}")
            rows.append(
                AblationRow(
                    axis=axis,
                    value=value_label(value),
                    seed=seed,
                    miou=score,
                    mean_hard_proportion=_mean_hard_proportion(result),
                )
            )
    return AblationTable(rows=rows, summary=summarize_rows(rows))


@dataclass(frozen=True)
class ComparisonRow:
    seed: int
    loss: str
    miou: float
    thin_miou: float


@dataclass(frozen=True)
class ComparisonSummaryRow:
    metric: str
    baseline_mean: float
    challenger_mean: float
    mean_difference: float


@dataclass(frozen=True)
class LossComparison:
    baseline: str
    challenger: str
    rows: List[ComparisonRow]

    def scores(self, loss: str, metric: str) -> np.ndarray:
        return np.array([getattr(row, metric) for row in self.rows if row.loss == loss])

    @property
    def summary(self) -> List[ComparisonSummaryRow]:
        """Mean over seeds per arm; the difference is challenger minus baseline."""
        summary: List[ComparisonSummaryRow] = []
        for metric in ("miou", "thin_miou"):
            baseline_mean: float = float(self.scores(self.baseline, metric).mean())
            challenger_mean: float = float(self.scores(self.challenger, metric).mean())
            summary.append(
                ComparisonSummaryRow(
                    metric=metric,
                    baseline_mean=baseline_mean,
                    challenger_mean=challenger_mean,
                    mean_difference=challenger_mean - baseline_mean,
                )
            )
        return summary

    def as_ablation_rows(self) -> List[AblationRow]:
        return [AblationRow(AblationAxis.LOSS_KIND, row.loss, row.seed, row.miou, None) for row in self.rows]


def compare_losses(
    challenger: str,
    baseline: str,
    seeds: Sequence[int],
    base_config: TrainConfig = TrainConfig(),
    scene_config: SceneConfig = SceneConfig(),
) -> LossComparison:
    """
    Train both losses from the same initialization on the same split for
    every seed and score each model on the whole validation set and on the
    thin-structure region only.
    """
    challenger, baseline = LossKind(challenger).value, LossKind(baseline).value
    if challenger == baseline:
        raise ValueError(f"comparing {challenger!r} with itself")
    if len(seeds) < MIN_SEEDS:
        raise ValueError(f"a comparison needs at least {MIN_SEEDS} seeds, got {len(seeds)}")

    rows: List[ComparisonRow] = []
    for seed in seeds:
        dataset: SyntheticDataset = generate_dataset(scene_config, seed)
        for loss in (baseline, challenger):
            config: TrainConfig = replace(base_config, loss_kind=loss, seed=seed)
            result: TrainingResult = train(TinyFcn.initialize(scene_config.class_count, seed), dataset, config)
            row = ComparisonRow(
                seed=seed,
                loss=loss,
                miou=miou(evaluate(result.model, dataset.val, loss)),
                thin_miou=miou(evaluate(result.model, dataset.val, loss, thin_only=True)),
            )
            logger.info(f"Comparison seed {seed} {loss}: val mIoU {row.miou:.4f}, thin mIoU {row.thin_miou:.4f}")
            rows.append(row)
    return LossComparison(baseline=baseline, challenger=challenger, rows=rows)


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: str
    hard_count: int
    element_count: int
    hard_proportion: float


def hard_proportion_sweep(
    model: TinyFcn,
    scenes: Sequence[SyntheticScene],
    axis: str,
    values: Sequence[AxisValue],
    base_params: SslParams = SslParams(),
) -> List[SweepRow]:
    """Hard-example proportion of a frozen model's predictions on `scenes` per parameter value."""
    axis = AblationAxis(axis).value
    if axis not in FROZEN_AXES:
        raise ValueError(f"frozen sweeps vary one of {list(FROZEN_AXES)}, got {axis!r}")

    logits: np.ndarray = model.predict(np.stack([scene.planes for scene in scenes]))
    targets: np.ndarray = np.stack([one_hot_array(scene.labels.ids, model.class_count) for scene in scenes])
    valid: np.ndarray = np.stack([scene.labels.valid_mask for scene in scenes])
    element_count: int = int(np.count_nonzero(valid)) * model.class_count

    rows: List[SweepRow] = []
    for value in values:
        report: SslReport = ssl_arrays(targets, logits, apply_ssl_axis(base_params, axis, value), valid)
        rows.append(
            SweepRow(
                param=axis,
                value=value_label(value),
                hard_count=report.hard_count,
                element_count=element_count,
                hard_proportion=report.hard_proportion,
            )
        )
    return rows


def _cell(value: Any) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def _to_csv(header: Sequence[str], records: Sequence[Any]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for record in records:
        writer.writerow([_cell(getattr(record, _COLUMN_FIELDS.get(column, column))) for column in header])
    return buffer.getvalue()


def results_csv(rows: Sequence[AblationRow]) -> str:
    return _to_csv(RESULT_HEADER, rows)


def summary_csv(summary: Sequence[AblationSummaryRow]) -> str:
    return _to_csv(SUMMARY_HEADER, summary)


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return _to_csv(SWEEP_HEADER, rows)


def comparison_csv(comparison: LossComparison) -> str:
    return _to_csv(COMPARISON_HEADER, comparison.rows)


def comparison_summary_csv(comparison: LossComparison) -> str:
    return _to_csv(COMPARISON_SUMMARY_HEADER, comparison.summary)


def parse_results_csv(text: str) -> List[AblationRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != RESULT_HEADER:
        raise ValueError(f"unexpected ablation header {reader.fieldnames}")
    return [
        AblationRow(
            axis=record["axis"],
            value=record["value"],
            seed=int(record["seed"]),
            miou=float(record["miou"]),
            mean_hard_proportion=float(record["mean_hard_proportion"]) if record["mean_hard_proportion"] else None,
        )
        for record in reader
    ]


def read_results_csv(path: Union[str, Path]) -> List[AblationRow]:
    return parse_results_csv(Path(path).read_text(encoding="utf-8"))


def is_non_increasing(values: Sequence[float]) -> bool:
    return all(later <= earlier or math.isclose(later, earlier) for earlier, later in zip(values, values[1:]))
