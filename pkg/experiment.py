"""
Command-line runner for the hybrid quantum-classical experiments.

    python experiment.py train    --model ensemble --nq 4 --layers 4 --digits 0,1 --epochs 10
    python experiment.py compare  --nq 6 --layers 6 --digits 0,1,2 --repeats 3
    python experiment.py diagnose bp --topology allpairs --observable global --nq 2:6 --layers 8
    python experiment.py gradcheck
    python experiment.py plot results.csv results.svg

Results are CSV on stdout (or --out); logs go to stderr.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.config import CONFIG_KEYS, ExperimentConfig, build_config, dump_config, read_config_file, setup_logging
from utils.data import Dataset, load_mnist, prepare, resolve_data_dir
from utils.diagnostics import (
    bp_scan,
    concentration_stats,
    expressibility_with_error,
    layer_bp_scan,
    layer_concentration_stats,
    observable_for,
    verify_bound,
)
from utils.errors import EXIT_OK, ConfigurationError, EnsembleVQCError, VerificationError, exit_code_for
from utils.network import (
    INPUT_DIM,
    HybridModel,
    QuantumLayerKind,
    check_gradients,
    save_checkpoint,
    train,
)
from utils.quantum.circuits import AnsatzConfig, init_params
from utils.quantum.gradients import check_circuit_jacobians
from utils.reporting import aggregate_runs, open_output, plot_csv, write_csv
from utils.state import RunRecord

logger = logging.getLogger("experiment")

DIAGNOSE_KINDS = ("bp", "layer-bp", "concentration", "layer-concentration", "expressibility", "bound")


class ExperimentParser(argparse.ArgumentParser):
    """Usage errors become ConfigurationError so main() owns the exit code."""

    def error(self, message):
        raise ConfigurationError(message)


# ---------------------------------------------------------------------------
# shared steps


def load_datasets(config: ExperimentConfig, data_dir: Optional[str]) -> Tuple[Dataset, Dataset]:
    """One split per invocation, drawn with the base seed so every repetition and model sees the same data."""
    archive = load_mnist(resolve_data_dir(data_dir))
    return prepare(archive, config.digits, config.train_size, config.test_size, config.seed)


def run_repetition(config: ExperimentConfig, kind: QuantumLayerKind, seed: int, train_set: Dataset,
                   test_set: Dataset, omit_timing: bool = False) -> Tuple[HybridModel, List[RunRecord]]:
    logger.info("training %s model: nq=%d layers=%d topology=%s seed=%d",
                kind.value, config.nq, config.layers, config.topology.value, seed)
    model = HybridModel.build(
        kind, config.nq, config.layers, train_set.n_classes,
        topology=config.topology, seed=seed, input_dim=train_set.images.shape[1],
        pre_layers=config.pre_layers, post_layers=config.post_layers,
    )
    curve = train(model, train_set, config.epochs, batch_size=config.batch_size, seed=seed, lr=config.lr,
                  test_set=test_set)
    records = []
    for record in curve:
        values = record.model_dump()
        if omit_timing:
            values["wall_seconds"] = 0.0
        records.append(RunRecord(model=kind.value, seed=seed, **values))
    return model, records


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    train_set, test_set = load_datasets(config, args.data_dir)
    rows = []
    for i, seed in enumerate(config.repeat_seeds()):
        model, records = run_repetition(config, config.model, seed, train_set, test_set, args.omit_timing)
        rows.extend(records)
        if i == 0 and args.checkpoint:
            save_checkpoint(model, args.checkpoint, digits=list(config.digits))
    with open_output(config.out_path) as out:
        write_csv("training", rows, out)
    return EXIT_OK


def cmd_compare(config: ExperimentConfig, args: argparse.Namespace) -> int:
    train_set, test_set = load_datasets(config, args.data_dir)
    records = []
    for kind in (QuantumLayerKind.REFERENCE, QuantumLayerKind.ENSEMBLE):
        for seed in config.repeat_seeds():
            records.extend(run_repetition(config, kind, seed, train_set, test_set)[1])
    with open_output(config.out_path) as out:
        write_csv("compare", aggregate_runs(records, config.seed), out)
    return EXIT_OK


def _grid(config: ExperimentConfig):
    for layers in config.layer_grid():
        for n in config.qubit_grid():
            yield AnsatzConfig(n_qubits=n, depth=layers, topology=config.topology, observable=config.observable)


def cmd_diagnose(config: ExperimentConfig, args: argparse.Namespace) -> int:
    kind = args.kind
    observable = observable_for(config.observable)
    samples, seed = config.samples, config.seed
    rows: List = []
    schema = kind

    if kind == "bp":
        for layers in config.layer_grid():
            rows.extend(bp_scan(config.topology, config.observable, config.qubit_grid(), layers, samples, seed))
    elif kind == "layer-bp":
        for layers in config.layer_grid():
            rows.extend(layer_bp_scan(config.topology, config.observable, config.qubit_grid(), layers, samples, seed))
    elif kind == "concentration":
        rows = [concentration_stats(ansatz, observable, samples, seed, frozen=config.frozen) for ansatz in _grid(config)]
    elif kind == "layer-concentration":
        for ansatz in _grid(config):
            for model, stats in layer_concentration_stats(ansatz, observable, samples, seed).items():
                rows.append({**stats.model_dump(), "model": model})
    elif kind == "expressibility":
        for ansatz in _grid(config):
            value, stderr = expressibility_with_error(ansatz, samples, seed, frozen=config.frozen)
            rows.append({"nq": ansatz.n_qubits, "layers": ansatz.depth, "samples": samples,
                         "expressibility": value, "stderr": stderr, "seed": seed})
    else:
        rows = [verify_bound(ansatz, observable, samples, seed, frozen=config.frozen) for ansatz in _grid(config)]

    with open_output(config.out_path) as out:
        write_csv(schema, rows, out)

    if kind == "bound":
        broken = [row for row in rows if not row.holds]
        if broken:
            raise VerificationError(
                f"concentration bound failed at {len(broken)} grid point(s): "
                + ", ".join(f"nq={row.nq} layers={row.layers}" for row in broken)
            )
    return EXIT_OK


def cmd_gradcheck(config: ExperimentConfig, args: argparse.Namespace) -> int:
    rng = np.random.default_rng(config.seed)
    n_classes = len(config.digits)
    images = rng.uniform(0.0, 1.0, size=(config.check_batch, INPUT_DIM))
    labels = np.eye(n_classes)[rng.integers(0, n_classes, size=config.check_batch)]

    report: Dict[Tuple[str, str], float] = {}
    for kind in (QuantumLayerKind.REFERENCE, QuantumLayerKind.ENSEMBLE):
        model = HybridModel.build(kind, config.nq, config.layers, n_classes, topology=config.topology,
                                  seed=config.seed, pre_layers=config.pre_layers, post_layers=config.post_layers)
        deviations = check_gradients(model, images, labels, h=config.fd_step, max_entries=config.check_entries,
                                     seed=config.seed)
        for group, deviation in deviations.items():
            report[(kind.value, group)] = deviation

    ansatz = AnsatzConfig(n_qubits=config.nq, depth=config.layers, topology=config.topology)
    theta = init_params(ansatz, rng)
    x = rng.uniform(0.0, 1.0, size=config.nq)
    for group, deviation in check_circuit_jacobians(ansatz, theta, x, h=config.fd_step).items():
        report[("circuit", group)] = deviation

    rows = [
        {"model": model, "parameter_class": group, "max_deviation": deviation, "tolerance": config.tolerance,
         "passed": deviation <= config.tolerance, "seed": config.seed}
        for (model, group), deviation in report.items()
    ]
    with open_output(config.out_path) as out:
        write_csv("gradcheck", rows, out)

    worst = max(report.values())
    logger.info("gradcheck: worst deviation %.3e (tolerance %.1e)", worst, config.tolerance)
    failed = [f"{row['model']}/{row['parameter_class']}" for row in rows if not row["passed"]]
    if failed:
        raise VerificationError(f"gradient check exceeded tolerance {config.tolerance:g} for {', '.join(failed)}")
    return EXIT_OK


def cmd_plot(config: ExperimentConfig, args: argparse.Namespace) -> int:
    plot_csv(args.csv_path, args.out_svg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file overriding the built-in defaults")
    parser.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ... (default: $ENSEMBLE_VQC_LOG_LEVEL or INFO)")
    parser.add_argument("--out", dest="out_path", help="CSV destination, '-' for stdout")
    parser.add_argument("--seed", type=int)


def _add_model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=[k.value for k in QuantumLayerKind])
    parser.add_argument("--topology", choices=["nn", "allpairs"])
    parser.add_argument("--nq", type=int, help="qubits in the quantum layer")
    parser.add_argument("--layers", type=int, help="circuit depth L (reference) or circuit count (ensemble)")
    parser.add_argument("--pre-layers", type=int)
    parser.add_argument("--post-layers", type=int)


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--digits", help="comma-separated digit set, e.g. 0,1,2")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--repeats", type=int, help="repetitions with seeds seed, seed+1, ...")
    parser.add_argument("--train-size", type=int)
    parser.add_argument("--test-size", type=int)
    parser.add_argument("--data-dir", help="MNIST IDX directory (default: $ENSEMBLE_VQC_DATA)")


def build_parser() -> ExperimentParser:
    parser = ExperimentParser(description="Reference vs ensemble quantum layers in a hybrid MNIST classifier.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ExperimentParser)

    p = commands.add_parser("train", help="train one model, one CSV row per epoch and repetition")
    _add_common(p)
    _add_model(p)
    _add_training(p)
    p.add_argument("--checkpoint", help="write the first repetition's final model to this .npz file")
    p.add_argument("--omit-timing", action="store_true", help="write wall_seconds as 0 for byte-stable output")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("compare", help="reference and ensemble on the same data, mean/min/max per epoch")
    _add_common(p)
    _add_model(p)
    _add_training(p)
    p.set_defaults(handler=cmd_compare)

    p = commands.add_parser("diagnose", help="barren plateau and concentration diagnostics")
    p.add_argument("kind", choices=DIAGNOSE_KINDS)
    _add_common(p)
    p.add_argument("--topology", choices=["nn", "allpairs"])
    p.add_argument("--observable", choices=["local", "global"])
    p.add_argument("--nq", dest="nq_range", help="qubit counts: 2:6 or 2,4,6")
    p.add_argument("--layers", dest="layers_range", help="depths: 1:8 or 1,2,4,8")
    p.add_argument("--samples", type=int)
    p.add_argument("--frozen", action="store_true", default=None, help="evaluate θ = 0 instead of sampling")
    p.set_defaults(handler=cmd_diagnose)

    p = commands.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    _add_common(p)
    _add_model(p)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--fd-step", type=float)
    p.set_defaults(handler=cmd_gradcheck)

    p = commands.add_parser("plot", help="render a results CSV as SVG")
    p.add_argument("csv_path")
    p.add_argument("out_svg")
    p.add_argument("--log-level")
    p.set_defaults(handler=cmd_plot)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS if hasattr(args, key)}
    return build_config(file_values, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        config = resolve_config(args)
        if getattr(args, "dump_config", False):
            sys.stdout.write(dump_config(config))
            return EXIT_OK
        return args.handler(config, args)
    except (EnsembleVQCError, OSError, ValueError, IndexError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
