"""
CSV results and SVG plots.

Every CSV starts with a `# ensemble-vqc <schema> v<version>` comment line and a header row, and every
row carries the seed it was produced with. Plots are derived from those files only.
"""

import csv
import logging
import sys
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, TextIO, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel  # noqa: E402

from .errors import DataFormatError  # noqa: E402
from .state import CompareRow, RunRecord  # noqa: E402

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# ensemble-vqc"

SCHEMAS: Dict[str, Tuple[str, ...]] = {
    "training": ("model", "seed", "epoch", "train_loss", "test_accuracy", "wall_seconds"),
    "compare": ("model", "epoch", "repeats", "loss_mean", "loss_min", "loss_max",
                "accuracy_mean", "accuracy_min", "accuracy_max", "seed"),
    "bp": ("nq", "layers", "k", "grad_mean", "grad_var", "stderr", "samples", "seed"),
    "layer-bp": ("model", "nq", "layers", "k", "grad_mean", "grad_var", "stderr", "samples", "seed"),
    "concentration": ("nq", "layers", "samples", "mean_f", "var_f", "stderr", "target", "deviation",
                      "expressibility", "expressibility_stderr", "bound_rhs", "seed"),
    "layer-concentration": ("model", "nq", "layers", "samples", "mean_f", "var_f", "stderr", "target",
                            "deviation", "expressibility", "expressibility_stderr", "bound_rhs", "seed"),
    "expressibility": ("nq", "layers", "samples", "expressibility", "stderr", "seed"),
    "bound": ("nq", "layers", "lhs", "rhs", "stderr", "holds", "seed"),
    "gradcheck": ("model", "parameter_class", "max_deviation", "tolerance", "passed", "seed"),
}

Row = Union[Mapping, BaseModel]

# keep SVG output byte-stable across runs
plt.rcParams["svg.hashsalt"] = "ensemble-vqc"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


@contextmanager
def open_output(path: Union[str, Path]) -> Iterator[TextIO]:
    """`-` means stdout, which is left open."""
    if str(path) == "-":
        yield sys.stdout
        return
    with open(path, "w", newline="") as f:
        yield f


def write_csv(schema: str, rows: Iterable[Row], out: TextIO) -> int:
    """Write the version line, the header and one line per row; returns the row count."""
    if schema not in SCHEMAS:
        raise DataFormatError(f"unknown CSV schema {schema!r}")
    columns = SCHEMAS[schema]
    out.write(f"{SCHEMA_PREFIX} {schema} v{SCHEMA_VERSION}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    count = 0
    for row in rows:
        values = row.model_dump() if isinstance(row, BaseModel) else dict(row)
        missing = [c for c in columns if c not in values]
        if missing:
            raise DataFormatError(f"{schema} row is missing {', '.join(missing)}")
        writer.writerow([_format(values[c]) for c in columns])
        count += 1
    logger.debug("wrote %d %s rows", count, schema)
    return count


def read_csv(path: Union[str, Path]) -> Tuple[str, List[Dict[str, str]]]:
    """Returns (schema, rows). Header-only files and unknown layouts are errors."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e.strerror}") from e

    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise DataFormatError(f"{path}: missing '{SCHEMA_PREFIX} <schema> v<version>' line")
    parts = lines[0][len(SCHEMA_PREFIX):].split()
    if len(parts) != 2 or parts[0] not in SCHEMAS:
        raise DataFormatError(f"{path}: unrecognised schema line {lines[0]!r}")
    schema, version = parts
    if version != f"v{SCHEMA_VERSION}":
        raise DataFormatError(f"{path}: schema version {version} is not supported")

    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != SCHEMAS[schema]:
        raise DataFormatError(f"{path}: header does not match the {schema} schema")
    rows = []
    for number, values in enumerate(reader, start=3):
        if not values:
            continue
        if len(values) != len(header):
            raise DataFormatError(f"{path}:{number}: expected {len(header)} fields, got {len(values)}")
        rows.append(dict(zip(header, values)))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return schema, rows


def aggregate_runs(records: Iterable[RunRecord], seed: int) -> List[CompareRow]:
    """Per (model, epoch) mean/min/max of loss and accuracy over repetitions, in (model, epoch) order."""
    groups: Dict[Tuple[str, int], List[RunRecord]] = defaultdict(list)
    for record in records:
        groups[(record.model, record.epoch)].append(record)
    rows = []
    for (model, epoch), group in sorted(groups.items()):
        losses = np.array([r.train_loss for r in group])
        accuracies = np.array([r.test_accuracy for r in group])
        rows.append(CompareRow(
            model=model,
            epoch=epoch,
            repeats=len(group),
            loss_mean=float(losses.mean()),
            loss_min=float(losses.min()),
            loss_max=float(losses.max()),
            accuracy_mean=float(accuracies.mean()),
            accuracy_min=float(accuracies.min()),
            accuracy_max=float(accuracies.max()),
            seed=seed,
        ))
    return rows


def _number(row: Dict[str, str], key: str) -> float:
    try:
        return float(row[key])
    except ValueError as e:
        raise DataFormatError(f"column {key}: {row[key]!r} is not a number") from e


def _curve_bands(schema: str, rows: List[Dict[str, str]]) -> Dict[str, Dict[str, np.ndarray]]:
    """series -> epoch, loss mean/min/max, accuracy mean/min/max."""
    if schema == "training":
        compare_rows = aggregate_runs(
            (RunRecord(
                model=row["model"],
                seed=int(_number(row, "seed")),
                epoch=int(_number(row, "epoch")),
                train_loss=_number(row, "train_loss"),
                test_accuracy=_number(row, "test_accuracy"),
                wall_seconds=_number(row, "wall_seconds"),
            ) for row in rows),
            seed=int(_number(rows[0], "seed")),
        )
        rows = [{key: str(value) for key, value in r.model_dump().items()} for r in compare_rows]

    series: Dict[str, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        data = series[row["model"]]
        data["epoch"].append(_number(row, "epoch"))
        for key in ("loss_mean", "loss_min", "loss_max", "accuracy_mean", "accuracy_min", "accuracy_max"):
            data[key].append(_number(row, key))

    result = {}
    for model, data in sorted(series.items()):
        order = np.argsort(data["epoch"], kind="stable")
        result[model] = {key: np.asarray(values)[order] for key, values in data.items()}
    return result


def _plot_curves(schema: str, rows: List[Dict[str, str]]):
    fig, (loss_ax, accuracy_ax) = plt.subplots(1, 2, figsize=(10, 4))
    for model, data in _curve_bands(schema, rows).items():
        for ax, metric in ((loss_ax, "loss"), (accuracy_ax, "accuracy")):
            (line,) = ax.plot(data["epoch"], data[f"{metric}_mean"], label=model)
            line.set_gid(f"series-{model}-{metric}")
            band = ax.fill_between(data["epoch"], data[f"{metric}_min"], data[f"{metric}_max"],
                                   color=line.get_color(), alpha=0.25, linewidth=0)
            band.set_gid(f"band-{model}-{metric}")
    loss_ax.set(xlabel="epoch", ylabel="train loss (MSE)")
    accuracy_ax.set(xlabel="epoch", ylabel="test accuracy", ylim=(0.0, 1.02))
    loss_ax.legend()
    return fig


def _plot_variance(schema: str, rows: List[Dict[str, str]]):
    fig, ax = plt.subplots(figsize=(6, 4))
    groups: Dict[str, List[Tuple[float, float]]] = defaultdict(list)
    for row in rows:
        label = row.get("model") or f"L={row['layers']}"
        groups[label].append((_number(row, "nq"), _number(row, "grad_var")))
    for label, points in sorted(groups.items()):
        nq, variance = np.array(sorted(points)).T
        (line,) = ax.semilogy(nq, variance, marker="o", label=label)
        line.set_gid(f"series-{label}-grad_var")
    ax.set(xlabel="qubits", ylabel="Var[gradient]")
    ax.legend()
    return fig


def plot_csv(csv_path: Union[str, Path], out_svg: Union[str, Path]) -> Path:
    """Render a training, compare, bp or layer-bp CSV as a static SVG."""
    schema, rows = read_csv(csv_path)
    if schema in ("training", "compare"):
        fig = _plot_curves(schema, rows)
    elif schema in ("bp", "layer-bp"):
        fig = _plot_variance(schema, rows)
    else:
        raise DataFormatError(f"no plot defined for {schema} results")
    out_svg = Path(out_svg)
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("wrote %s", out_svg)
    return out_svg
