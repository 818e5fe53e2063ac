from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

from chorus.checkpoint import Checkpoint, CheckpointMetadata, load_checkpoint, save_checkpoint
from chorus.config import RunConfig, apply_overrides, config_key, load_config
from chorus.data import ArrayView, load_csv, load_csv_with_labels, write_csv
from chorus.diagnostics import ChorusAggregateError, ChorusError
from chorus.ensemble import TeacherEnsemble
from chorus.experiment import (
    ALL_METHODS,
    MethodId,
    PreparedData,
    ablation_data_sources,
    ablation_weighting,
    compare_methods,
    ensemble_of,
    new_run_dir,
    parse_method,
    prepare_data,
    run_method,
    select_lambda,
    sweep_lambda,
    train_student,
    train_teachers,
)
from chorus.model import accuracy
from chorus.report import ExperimentReport, format_table, write_report
from chorus.training import LossLog


COMMANDS = ("gen-data", "train-teachers", "distill", "evaluate", "compare", "ablate", "sweep")


@dataclass
class Session:
    """What every subcommand starts from: the resolved config and a fresh run directory."""

    cfg: RunConfig
    run_dir: Path
    command: str

    def provenance(self, **extra: Any) -> dict[str, Any]:
        return {"command": self.command, "run_dir": str(self.run_dir), "config": self.cfg.snapshot(), **extra}

    def loss_log(self):
        if not self.cfg.loss_log:
            return nullcontext(None)
        return LossLog(self.run_dir / "losses.jsonl")


def _flag(name: str) -> str:
    return "--" + config_key(name).replace("_", "-")


def _add_common(parser: argparse.ArgumentParser, skip: frozenset[str] = frozenset()) -> None:
    parser.add_argument("--config", help="RunConfig file (.toml or .json)")
    parser.add_argument("--seed", type=int, help="Master seed (data split, generated data, teachers)")
    parser.add_argument("--out", help="Output directory for the run folder (overrides output_dir)")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("-v", "--verbose", action="store_true", help="Same as --log-level INFO")
    overrides = parser.add_argument_group("config overrides", "Any RunConfig key; tuples are comma-separated")
    for f in fields(RunConfig):
        if f.name in skip:
            continue
        overrides.add_argument(_flag(f.name), dest=f"override_{f.name}", metavar="VALUE")


def _add_teachers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--teachers", help="Directory of teacher-*.json checkpoints (default: train fresh teachers)")


def _new_parser(command: str, description: str) -> argparse.ArgumentParser:
    return argparse.ArgumentParser(prog=f"chorus {command}", description=description, allow_abbrev=False)


def build_gen_data_parser() -> argparse.ArgumentParser:
    parser = _new_parser("gen-data", "Generate the synthetic mixture and write its partitions as CSV")
    _add_common(parser)
    return parser


def build_train_teachers_parser() -> argparse.ArgumentParser:
    parser = _new_parser("train-teachers", "Train the teacher ensemble and save one checkpoint per teacher")
    _add_common(parser)
    return parser


def build_distill_parser() -> argparse.ArgumentParser:
    parser = _new_parser("distill", "Run one method for every configured seed")
    parser.add_argument("--method", default=MethodId.UNIKD.value, help="single, ensemble, kd_labeled, kd_unlabeled or unikd")
    _add_teachers(parser)
    _add_common(parser)
    return parser


def build_evaluate_parser() -> argparse.ArgumentParser:
    parser = _new_parser("evaluate", "Test accuracy of saved checkpoints (and of their uniform ensemble)")
    parser.add_argument("--checkpoint", nargs="+", required=True, help="One or more checkpoint files")
    parser.add_argument("--test-csv", help="Labeled CSV to evaluate on (default: the configured test data)")
    _add_common(parser)
    return parser


def build_compare_parser() -> argparse.ArgumentParser:
    parser = _new_parser("compare", "Compare single, ensemble, kd_labeled, kd_unlabeled and unikd")
    _add_teachers(parser)
    _add_common(parser)
    return parser


def build_ablate_parser() -> argparse.ArgumentParser:
    parser = _new_parser("ablate", "Data-source and weighting-mechanism ablations")
    parser.add_argument("--kind", choices=["data", "weighting", "both"], default="both")
    parser.add_argument("--with-plain", action="store_true", help="Add the all-weighting-off row")
    _add_teachers(parser)
    _add_common(parser)
    return parser


def build_sweep_parser() -> argparse.ArgumentParser:
    parser = _new_parser("sweep", "Sweep the disagreement strength lambda")
    parser.add_argument("--lambda", dest="grid", help="Comma-separated lambda grid (default: lambda_values)")
    parser.add_argument("--select", action="store_true", help="Also pick lambda on a validation share")
    _add_teachers(parser)
    _add_common(parser, skip=frozenset({"lam"}))
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO if args.verbose and args.log_level == "WARNING" else getattr(logging, args.log_level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides: dict[str, str] = {}
    for f in fields(RunConfig):
        value = getattr(args, f"override_{f.name}", None)
        if value is not None:
            overrides[config_key(f.name)] = value
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    if args.out is not None:
        overrides["output_dir"] = args.out
    grid = getattr(args, "grid", None)
    if grid is not None:
        overrides["lambda_values"] = grid
    return apply_overrides(cfg, overrides) if overrides else cfg


def _open_session(args: argparse.Namespace, command: str) -> Session:
    _configure_logging(args)
    cfg = _resolve_config(args)
    run_dir = new_run_dir(cfg.output_dir, cfg.master_seed)
    print(f"[ok] Run directory: {run_dir}")
    return Session(cfg=cfg, run_dir=run_dir, command=command)


def _report_errors(action: Callable[[], int]) -> int:
    try:
        return action()
    except ChorusAggregateError as exc:
        print(exc.pretty(), file=sys.stderr)
        return 1
    except ChorusError as exc:
        print(exc.pretty(), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


def _teachers(session: Session, data: PreparedData, teachers_dir: str | None) -> tuple[TeacherEnsemble, str]:
    if teachers_dir:
        paths = sorted(Path(teachers_dir).glob("teacher-*.json"), key=lambda p: (len(p.stem), p.stem))
        if not paths and not Path(teachers_dir).is_dir():
            raise ChorusError(code="missing_file", technical=f"teacher directory not found: `{teachers_dir}`")
        checkpoints = [load_checkpoint(p) for p in paths]
        print(f"[ok] Loaded {len(checkpoints)} teachers from {teachers_dir}")
        return ensemble_of(checkpoints), str(teachers_dir)
    cfg = session.cfg
    checkpoints = train_teachers(
        data.dataset,
        cfg.architecture(data.input_dim, data.num_classes),
        cfg.n_teachers,
        cfg.teacher_training(),
        cfg.master_seed,
        checkpoint_dir=session.run_dir / "teachers",
        rows=data.teacher_rows(cfg.include_unlabeled_in_teachers),
    )
    print(f"[ok] Trained {len(checkpoints)} teachers: {session.run_dir / 'teachers'}")
    return ensemble_of(checkpoints), "trained"


def _emit(session: Session, report: ExperimentReport, stem: str) -> None:
    csv_path, json_path = write_report(report, session.run_dir, stem)
    print(format_table(report), end="")
    print(f"[ok] Report written: {csv_path}")
    print(f"[ok] Report written: {json_path}")


def main_gen_data(argv: list[str] | None = None) -> int:
    args = build_gen_data_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "gen-data")
        data = prepare_data(session.cfg)
        outputs = {
            "source.csv": data.source,
            "labeled.csv": data.dataset.labeled_train,
            "unlabeled.csv": data.dataset.unlabeled_train,
            "test.csv": data.dataset.test,
        }
        if data.dataset.validation:
            outputs["validation.csv"] = data.dataset.validation
        for name, rows in outputs.items():
            path = write_csv(session.run_dir / name, rows)
            print(f"[ok] {len(rows)} rows written: {path}")
        return 0

    return _report_errors(action)


def main_train_teachers(argv: list[str] | None = None) -> int:
    args = build_train_teachers_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "train-teachers")
        data = prepare_data(session.cfg)
        teachers, _ = _teachers(session, data, None)
        test = ArrayView.labeled(data.dataset.test, data.input_dim)
        for name, acc in zip(teachers.names, teachers.individual_accuracies(test.features, test.labels)):
            print(f"{name}: test accuracy {100 * acc:.2f}")
        print(f"ensemble: test accuracy {100 * teachers.ensemble_accuracy(test.features, test.labels):.2f}")
        return 0

    return _report_errors(action)


def main_distill(argv: list[str] | None = None) -> int:
    args = build_distill_parser().parse_args(argv)

    def action() -> int:
        method = parse_method(args.method)
        session = _open_session(args, "distill")
        cfg = session.cfg
        data = prepare_data(cfg)
        teachers, origin = _teachers(session, data, args.teachers)
        report = ExperimentReport(title=f"distill: {method.value}", provenance=session.provenance(teachers=origin))
        distill_cfg = cfg.distill_config()
        training = cfg.student_training()
        test = ArrayView.labeled(data.dataset.test, data.input_dim)
        with session.loss_log() as loss_log:
            for seed in cfg.seeds:
                if method in (MethodId.SINGLE, MethodId.ENSEMBLE):
                    acc = run_method(method, data.dataset, teachers, distill_cfg, seed, training)
                else:
                    variant = distill_cfg if method is MethodId.UNIKD else distill_cfg.plain()
                    if loss_log is not None:
                        loss_log.run_label = f"{method.value}/seed={seed}"
                    result = train_student(
                        data.dataset,
                        teachers,
                        variant,
                        seed,
                        training,
                        use_labeled=method is not MethodId.KD_UNLABELED,
                        use_unlabeled=method is not MethodId.KD_LABELED,
                        loss_log=loss_log,
                    )
                    student = result.params
                    acc = accuracy(student, test.features, test.labels)
                    meta = CheckpointMetadata(seed=seed, epochs=training.epochs, final_train_loss=result.final_loss, role="student")
                    path = save_checkpoint(session.run_dir / f"student-seed{seed}.json", Checkpoint(student, meta))
                    print(f"[ok] Student saved: {path}")
                report.add(method.value, seed, acc, distill_cfg.lam if method is MethodId.UNIKD else None)
        _emit(session, report, "distill")
        return 0

    return _report_errors(action)


def main_evaluate(argv: list[str] | None = None) -> int:
    args = build_evaluate_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "evaluate")
        checkpoints = [load_checkpoint(p) for p in args.checkpoint]
        input_dim = checkpoints[0].architecture.input_dim
        if args.test_csv:
            label_map = load_csv_with_labels(session.cfg.data_path)[1] if session.cfg.data_path else None
            rows = load_csv(args.test_csv, label_map=label_map)
        else:
            rows = prepare_data(session.cfg).dataset.test
        test = ArrayView.labeled(rows, input_dim)
        report = ExperimentReport(title="evaluate", provenance=session.provenance(checkpoints=list(args.checkpoint)))
        for path, ckpt in zip(args.checkpoint, checkpoints):
            acc = accuracy(ckpt.parameters, test.features, test.labels)
            report.add(Path(path).stem, ckpt.metadata.seed, acc)
        if len(checkpoints) >= 2:
            acc = ensemble_of(checkpoints).ensemble_accuracy(test.features, test.labels)
            report.add(MethodId.ENSEMBLE.value, session.cfg.master_seed, acc)
        _emit(session, report, "evaluate")
        return 0

    return _report_errors(action)


def main_compare(argv: list[str] | None = None) -> int:
    args = build_compare_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "compare")
        cfg = session.cfg
        data = prepare_data(cfg)
        teachers, origin = _teachers(session, data, args.teachers)
        with session.loss_log() as loss_log:
            report = compare_methods(
                data.dataset,
                teachers,
                cfg.distill_config(),
                cfg.seeds,
                cfg.student_training(),
                methods=ALL_METHODS,
                provenance=session.provenance(teachers=origin),
                loss_log=loss_log,
            )
        _emit(session, report, "compare")
        return 0

    return _report_errors(action)


def main_ablate(argv: list[str] | None = None) -> int:
    args = build_ablate_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "ablate")
        cfg = session.cfg
        data = prepare_data(cfg)
        teachers, origin = _teachers(session, data, args.teachers)
        provenance = session.provenance(teachers=origin)
        with session.loss_log() as loss_log:
            common = (data.dataset, teachers, cfg.distill_config(), cfg.seeds, cfg.student_training())
            if args.kind in ("data", "both"):
                report = ablation_data_sources(*common, provenance=provenance, loss_log=loss_log)
                _emit(session, report, "ablate-data")
            if args.kind in ("weighting", "both"):
                report = ablation_weighting(
                    *common,
                    include_plain=args.with_plain,
                    provenance=provenance,
                    loss_log=loss_log,
                )
                _emit(session, report, "ablate-weighting")
        return 0

    return _report_errors(action)


def main_sweep(argv: list[str] | None = None) -> int:
    args = build_sweep_parser().parse_args(argv)

    def action() -> int:
        session = _open_session(args, "sweep")
        cfg = session.cfg
        data = prepare_data(cfg)
        teachers, origin = _teachers(session, data, args.teachers)
        provenance = session.provenance(teachers=origin)
        distill_cfg = cfg.distill_config()
        training = cfg.student_training()
        with session.loss_log() as loss_log:
            report = sweep_lambda(
                data.dataset,
                teachers,
                distill_cfg,
                cfg.lambda_values,
                cfg.seeds,
                training,
                provenance=provenance,
                loss_log=loss_log,
            )
        _emit(session, report, "sweep")
        if args.select:
            best, selection = select_lambda(
                data.dataset,
                teachers,
                distill_cfg,
                cfg.lambda_values,
                cfg.seeds[0],
                training,
                validation_fraction=cfg.validation_fraction,
                provenance=provenance,
            )
            _emit(session, selection, "select")
            print(f"[ok] Selected lambda: {best!r}")
        return 0

    return _report_errors(action)


HANDLERS: dict[str, Callable[[list[str] | None], int]] = {
    "gen-data": main_gen_data,
    "train-teachers": main_train_teachers,
    "distill": main_distill,
    "evaluate": main_evaluate,
    "compare": main_compare,
    "ablate": main_ablate,
    "sweep": main_sweep,
}

USAGE = "usage: chorus {" + ",".join(COMMANDS) + "} [options]\n"


def main(argv: list[str] | None = None) -> int:
    args = list(argv) if argv is not None else list(sys.argv[1:])
    if args and args[0] in ("-h", "--help"):
        print(USAGE, end="")
        return 0
    if not args or args[0] not in HANDLERS:
        given = f"unknown command `{args[0]}`\n" if args else ""
        print(USAGE + given, end="", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args[0]](args[1:])
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return exc.code if isinstance(exc.code, int) else 2

