"""Batch command-line surface over the toolkit.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure (divergence, degenerate input). Every command accepts ``--out`` for
artifact paths and ``--json`` for machine-readable stdout. Identical
invocations produce identical artifact bytes and identical stdout; anything
timing-related goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .angles import compute_angles, rank_consistency, render_rank_table, report_from_json
from .arch import (
    MANUAL_STRATEGY_ALIASES,
    describe_arch,
    full_plan,
    linear_probe_plan,
    manual_strategy,
    millions_str,
    param_count,
    plan_from_json,
    soup_millions_str,
)
from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .errors import FormatError, IoError, PftError, UsageError
from .model import predict
from .planner import FapftPolicy, default_policy, plan_fapft, plan_series
from .soup import SoupRecipe, arch_from_checkpoint, soup_param_total, uniform_soup, greedy_soup
from .tensors import Tensor
from .train import (
    TrainConfig,
    generate_dataset,
    grad_check,
    run_fapft_pipeline,
    train,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract says 1
        raise UsageError(message)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_text(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _emit_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _parse_dims(raw: str | None) -> dict:
    if raw is None:
        return {}
    try:
        dims = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--dims must be a JSON object: {exc}") from exc
    if not isinstance(dims, dict):
        raise UsageError("--dims must be a JSON object")
    return dims


def _resolve_arch(arch_id: str, dims_raw: str | None, ckpt: Checkpoint | None = None):
    dims = _parse_dims(dims_raw)
    if dims:
        return describe_arch(arch_id, **dims)
    if arch_id == "toy_vit" and ckpt is not None and "pft.arch_config" in ckpt.metadata:
        return arch_from_checkpoint(ckpt)
    return describe_arch(arch_id)


def _parse_topk(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"--topk must be comma-separated ints: {raw!r}") from exc


def _run_summary(config: TrainConfig, result) -> dict:
    return {
        "config_hash": result.config_hash,
        "checkpoint_hash": result.final_checkpoint.content_hash,
        "task": config.task,
        "strategy_tag": config.freeze.strategy_tag if config.freeze else None,
        "epochs": config.schedule.epochs,
        "final_train_loss": result.metrics[-1].train_loss,
        "final_val_accuracy": result.metrics[-1].val_accuracy,
    }


def _write_run_artifacts(out_dir: Path, stem: str, config: TrainConfig, result) -> dict:
    summary = _run_summary(config, result)
    write_checkpoint(result.final_checkpoint, out_dir / f"{stem}.ckpt")
    _write_text(out_dir / f"{stem}.metrics.jsonl", result.metrics_jsonl())
    _write_text(out_dir / f"{stem}.json", _emit_json(summary))
    return summary


def _print_run(summary: dict, as_json: bool):
    if as_json:
        sys.stdout.write(_emit_json(summary))
    else:
        tag = summary["strategy_tag"] or "FULL"
        sys.stdout.write(
            f"{summary['task']} [{tag}] epochs={summary['epochs']} "
            f"loss={summary['final_train_loss']:.6f} "
            f"val_acc={summary['final_val_accuracy']:.4f}\n"
            f"checkpoint {summary['checkpoint_hash']}\n"
        )


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------


def _cmd_angles(args) -> int:
    pre = read_checkpoint(args.pre)
    ft = read_checkpoint(args.ft)
    arch = _resolve_arch(args.arch, args.dims, pre)
    report = compute_angles(pre, ft, arch)
    if args.out:
        _write_text(args.out, report.to_json_text())
    if args.json:
        sys.stdout.write(_emit_json(report.to_json_obj()))
    else:
        sys.stdout.write(render_rank_table(report))
    return 0


def _cmd_rank(args) -> int:
    reports = [report_from_json(_read_text(path)) for path in args.reports]
    matrix = rank_consistency(reports)
    if args.out:
        _write_text(args.out, _emit_json(matrix.to_json_obj()))
    if args.json:
        sys.stdout.write(_emit_json(matrix.to_json_obj()))
    else:
        sys.stdout.write("pairwise kendall tau\n")
        for rid, row in zip(matrix.report_ids, matrix.tau):
            cells = " ".join(f"{v:+.3f}" for v in row)
            sys.stdout.write(f"  {rid:>12}  {cells}\n")
        sys.stdout.write(f"mean tau: {matrix.mean_tau:+.4f}\n")
    return 0


def _classes_list(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(c) for c in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"--classes must be comma-separated ints: {raw!r}") from exc


def _cmd_plan(args) -> int:
    if args.difficulty and (args.magnitude or args.topk):
        raise UsageError("--difficulty excludes --magnitude/--topk")
    if not args.difficulty and not (args.magnitude and args.topk):
        raise UsageError("supply either --difficulty or --magnitude with --topk")
    report = report_from_json(_read_text(args.report))
    arch = _resolve_arch(args.arch, args.dims)
    if args.difficulty:
        policy = default_policy(arch, args.difficulty)
    else:
        policy = FapftPolicy(args.magnitude, _parse_topk(args.topk))
    plan = plan_fapft(report, arch, policy)
    classes = _classes_list(args.classes)
    text = plan.to_json_text(classes)
    if args.out:
        _write_text(args.out, text)
    if args.json:
        sys.stdout.write(_emit_json(plan.to_json_obj(classes)))
    else:
        count = plan.trainable_param_count(classes[0])
        sys.stdout.write(
            f"FAPFT plan [{policy.magnitude}, topk={list(policy.topk_per_stage)}]: "
            f"{len(plan.trainable)} layers + head\n"
            f"trainable layers: {', '.join(plan.trainable_layer_ids) or '(none)'}\n"
            f"params @ {classes[0]} classes: {count} ({millions_str(count)}M)\n"
        )
    return 0


def _cmd_params(args) -> int:
    arch = _resolve_arch(args.arch, args.dims)
    if (args.plan is None) == (args.strategy is None):
        raise UsageError("supply exactly one of --plan or --strategy")
    if args.plan:
        plan = plan_from_json(_read_text(args.plan), arch)
    else:
        tag = args.strategy.lower()
        if tag == "linear_probe":
            plan = linear_probe_plan(arch)
        elif tag in ("full", "a"):
            plan = full_plan(arch)
        elif tag in MANUAL_STRATEGY_ALIASES or tag.upper() in "BCDEFGHI":
            plan = manual_strategy(arch, args.strategy)
        else:
            raise UsageError(f"unknown --strategy {args.strategy!r}")
    exact = param_count(arch, plan, args.classes)
    obj = {
        "arch_id": arch.arch_id,
        "strategy_tag": plan.strategy_tag,
        "classes": args.classes,
        "exact": exact,
        "display_millions": millions_str(exact),
    }
    if args.out:
        _write_text(args.out, _emit_json(obj))
    if args.json:
        sys.stdout.write(_emit_json(obj))
    else:
        sys.stdout.write(f"{exact}\n{millions_str(exact)}M\n")
    return 0


def _soup_manifest(recipe, ckpts_hashes, output_hash, classes) -> dict:
    param_total = None
    display = None
    if classes is not None and all(i.plan_path for i in recipe.inputs):
        arch = arch_from_checkpoint(read_checkpoint(recipe.base))
        plans = [
            plan_from_json(_read_text(inp.plan_path), arch) for inp in recipe.inputs
        ]
        param_total = soup_param_total(plans, classes)
        display = soup_millions_str(
            p.trainable_param_count(classes) for p in plans
        )
    return {
        "mode": recipe.mode,
        "output_hash": output_hash,
        "inputs": [
            {"path": inp.path, "hash": h, "weight": inp.weight}
            for inp, h in zip(recipe.inputs, ckpts_hashes)
        ],
        "param_total": param_total,
        "param_total_display": display,
        "classes": classes,
    }


def _accuracy_eval(config: TrainConfig):
    data = generate_dataset(config.dataset)
    _, _, x_val, y_val = data.task_split(config.task)

    def evaluate(ckpt: Checkpoint) -> float:
        params = {name: t.array for name, t in ckpt.tensors.items()}
        return float((predict(params, x_val, config.arch) == y_val).mean())

    return evaluate


def _cmd_soup(args) -> int:
    recipe = SoupRecipe.from_file(args.recipe)
    if not args.out:
        raise UsageError("soup requires --out for the merged checkpoint")
    if recipe.mode == "greedy":
        if not args.eval_config:
            raise UsageError("greedy recipes need --eval-config for held-out accuracy")
        config = TrainConfig.from_json(_read_text(args.eval_config))
        candidates = [read_checkpoint(i.path) for i in recipe.inputs]
        merged = greedy_soup(candidates, _accuracy_eval(config))
        input_hashes = [c.content_hash for c in candidates]
    else:
        merged = uniform_soup(recipe)
        # the merge already recorded every input's hash in recipe order
        input_hashes = [
            entry["hash"] for entry in json.loads(merged.metadata["pft.soup_inputs"])
        ]
    output_hash = write_checkpoint(merged, args.out)
    manifest = _soup_manifest(recipe, input_hashes, output_hash, args.classes)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    _write_text(manifest_path, _emit_json(manifest))
    if args.json:
        sys.stdout.write(_emit_json(manifest))
    else:
        sys.stdout.write(f"soup checkpoint {output_hash}\n")
        if manifest["param_total"] is not None:
            sys.stdout.write(
                f"param total: {manifest['param_total']} "
                f"({manifest['param_total_display']}M by per-run rounding)\n"
            )
    return 0


def _cmd_train(args) -> int:
    config = TrainConfig.from_json(_read_text(args.config))
    if args.plan:
        arch = config.descriptor()
        config = replace(config, freeze=plan_from_json(_read_text(args.plan), arch))
    init = read_checkpoint(args.init) if args.init else None
    started = time.monotonic()
    result = train(config, init=init)
    print(f"trained in {time.monotonic() - started:.2f}s", file=sys.stderr)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = _write_run_artifacts(out_dir, "run", config, result)
    else:
        summary = _run_summary(config, result)
    _print_run(summary, args.json)
    return 0


def _cmd_pipeline(args) -> int:
    config = TrainConfig.from_json(_read_text(args.config))
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.pre:
        pre_ckpt = read_checkpoint(args.pre)
    else:
        pretrain_config = replace(config, task="pretrain", freeze=None)
        pre_result = train(pretrain_config)
        pre_ckpt = pre_result.final_checkpoint
        if out_dir:
            _write_run_artifacts(out_dir, "pretrained", pretrain_config, pre_result)

    topk = _parse_topk(args.topk) if args.topk else None
    result = run_fapft_pipeline(
        pre_ckpt, config, args.difficulty, topk=topk, magnitude=args.magnitude
    )

    finetune_config = replace(config, task="finetune", freeze=None)
    summaries = {
        "full": _run_summary(finetune_config, result.full),
        "fapft": _run_summary(replace(finetune_config, freeze=result.plan), result.fapft),
        "linear_probe": _run_summary(
            replace(finetune_config, freeze=linear_probe_plan(config.descriptor())),
            result.linear_probe,
        ),
    }
    classes = config.arch.num_classes
    obj = {
        "difficulty": args.difficulty,
        "policy": result.policy.to_json_obj(),
        "pretrained_hash": pre_ckpt.content_hash,
        "angle_report": result.angle_report.to_json_obj(),
        "plan": result.plan.to_json_obj(classes=(classes,)),
        "runs": summaries,
        "series": [],
        "soup": None,
    }

    if out_dir:
        _write_text(out_dir / "angles.json", result.angle_report.to_json_text())
        _write_text(out_dir / "angles.txt", render_rank_table(result.angle_report))
        _write_text(out_dir / "plan.json", result.plan.to_json_text(classes=(classes,)))
        _write_run_artifacts(out_dir, "full", finetune_config, result.full)
        _write_run_artifacts(
            out_dir, "fapft", replace(finetune_config, freeze=result.plan), result.fapft
        )
        _write_run_artifacts(
            out_dir,
            "linear_probe",
            replace(finetune_config, freeze=linear_probe_plan(config.descriptor())),
            result.linear_probe,
        )

    if args.series:
        arch = config.descriptor()
        topk_values = [int(k) for k in args.series.split(",")]
        plans = plan_series(
            result.angle_report, arch, result.policy.magnitude, topk_values
        )
        member_ckpts = []
        for k, plan in zip(topk_values, plans):
            series_config = replace(finetune_config, freeze=plan)
            run = train(series_config, init=pre_ckpt)
            member_ckpts.append(run.final_checkpoint)
            entry = {
                "topk": [k],
                "run": _run_summary(series_config, run),
                "plan": plan.to_json_obj(classes=(classes,)),
            }
            obj["series"].append(entry)
            if out_dir:
                _write_run_artifacts(out_dir, f"series_k{k}", series_config, run)
                _write_text(
                    out_dir / f"series_k{k}.plan.json",
                    plan.to_json_text(classes=(classes,)),
                )
        from .soup import uniform_soup_checkpoints

        soup_ckpt = uniform_soup_checkpoints(member_ckpts)
        soup_hash = soup_ckpt.content_hash
        obj["soup"] = {
            "mode": "uniform",
            "output_hash": soup_hash,
            "inputs": [
                {"path": f"series_k{k}.ckpt", "hash": c.content_hash, "weight": 1.0}
                for k, c in zip(topk_values, member_ckpts)
            ],
            "param_total": soup_param_total(plans, classes),
            "param_total_display": soup_millions_str(
                p.trainable_param_count(classes) for p in plans
            ),
            "classes": classes,
        }
        if out_dir:
            write_checkpoint(soup_ckpt, out_dir / "soup.ckpt")
            _write_text(out_dir / "soup.manifest.json", _emit_json(obj["soup"]))

    if out_dir:
        _write_text(out_dir / "pipeline.json", _emit_json(obj))
    if args.json:
        sys.stdout.write(_emit_json(obj))
    else:
        sys.stdout.write(
            f"pipeline [{args.difficulty}] policy={result.policy.magnitude} "
            f"topk={list(result.policy.topk_per_stage)}\n"
        )
        for name in ("full", "fapft", "linear_probe"):
            s = summaries[name]
            sys.stdout.write(
                f"  {name:<13} val_acc={s['final_val_accuracy']:.4f} "
                f"loss={s['final_train_loss']:.6f}\n"
            )
        fapft_params = result.plan.trainable_param_count(classes)
        full_params = config.descriptor().full_param_count(classes)
        sys.stdout.write(
            f"  trainable params: fapft={fapft_params} vs full={full_params}\n"
        )
        if obj["soup"]:
            sys.stdout.write(
                f"  soup of {len(obj['series'])} runs: {obj['soup']['output_hash']}\n"
            )
    return 0


_ARTIFACT_KINDS = (
    ("pipeline.json", "pipeline-manifest"),
    (".manifest.json", "soup-manifest"),
    ("angles.json", "angle-report"),
    ("angles.txt", "angle-table"),
    ("plan.json", "freeze-plan"),
    (".metrics.jsonl", "metrics"),
    (".ckpt", "checkpoint"),
    (".json", "summary"),
)


def _cmd_report(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise IoError(f"{args.dir} is not a directory")
    artifacts = []
    for path in sorted(root.iterdir()):
        if not path.is_file():
            continue
        kind = next((k for suffix, k in _ARTIFACT_KINDS if path.name.endswith(suffix)), None)
        if kind is None:
            continue
        entry = {"file": path.name, "kind": kind}
        if kind == "summary":
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError:
                continue
            if isinstance(data, dict) and "final_val_accuracy" in data:
                entry["final_val_accuracy"] = data["final_val_accuracy"]
                entry["strategy_tag"] = data.get("strategy_tag")
        artifacts.append(entry)
    obj = {"directory": str(root), "artifacts": artifacts}
    if args.out:
        _write_text(args.out, _emit_json(obj))
    if args.json:
        sys.stdout.write(_emit_json(obj))
    else:
        sys.stdout.write(f"artifacts under {root}\n")
        for entry in artifacts:
            extra = ""
            if "final_val_accuracy" in entry:
                extra = (
                    f"  val_acc={entry['final_val_accuracy']:.4f}"
                    f" [{entry.get('strategy_tag') or 'FULL'}]"
                )
            sys.stdout.write(f"  {entry['file']:<28} {entry['kind']}{extra}\n")
    return 0


_GRADCHECK_DEFAULT = {
    "arch": {
        "depth": 2,
        "model_dim": 16,
        "heads": 2,
        "ffn_dim": 32,
        "seq_len": 4,
        "num_classes": 4,
    },
    "optimizer": {},
    "schedule": {"epochs": 1, "warmup_epochs": 0, "batch_size": 8},
    "seed": 1,
    "dataset": {
        "num_classes": 4,
        "seq_len": 4,
        "samples_per_class": 10,
        "feature_dim": 16,
        "seed": 1,
    },
}


def _cmd_grad_check(args) -> int:
    if args.config:
        config = TrainConfig.from_json(_read_text(args.config))
    else:
        from .model import ModelDims
        from .train import OptimizerConfig, ScheduleConfig, SyntheticSpec

        d = _GRADCHECK_DEFAULT
        config = TrainConfig(
            arch=ModelDims(**d["arch"]),
            optimizer=OptimizerConfig(**d["optimizer"]),
            schedule=ScheduleConfig(**d["schedule"]),
            seed=d["seed"],
            dataset=SyntheticSpec(**d["dataset"]),
        )
    result = grad_check(config, samples=args.samples, step_size=args.step)
    passed = result.max_rel_error <= args.tolerance
    obj = result.to_json_obj()
    obj["tolerance"] = args.tolerance
    obj["passed"] = passed
    if args.out:
        _write_text(args.out, _emit_json(obj))
    if args.json:
        sys.stdout.write(_emit_json(obj))
    else:
        sys.stdout.write(
            f"max relative error {result.max_rel_error:.3e} "
            f"(worst: {result.worst_tensor})\n"
            f"{'PASS' if passed else 'FAIL'} at tolerance {args.tolerance:.1e}\n"
        )
    return 0 if passed else 3


def _cmd_dataset(args) -> int:
    from .train import SyntheticSpec

    spec = SyntheticSpec.from_dict(json.loads(_read_text(args.spec)))
    data = generate_dataset(spec)
    if not args.out:
        raise UsageError("dataset requires --out for the container file")
    tensors = {
        "pretrain.features": Tensor(data.pretrain_x),
        "pretrain.labels": Tensor(data.pretrain_y.astype("float32")),
        "finetune.features": Tensor(data.finetune_x),
        "finetune.labels": Tensor(data.finetune_y.astype("float32")),
    }
    container = Checkpoint(
        tensors,
        {
            "pft.producer": "fapft-dataset",
            "pft.dataset_spec": json.dumps(spec.to_dict(), sort_keys=True),
        },
    )
    write_checkpoint(container, args.out)
    cut = int(0.8 * len(data.finetune_y))
    obj = {
        "content_hash": data.content_hash(),
        "samples": int(len(data.finetune_y)),
        "train_samples": cut,
        "val_samples": int(len(data.finetune_y)) - cut,
        "path": str(args.out),
    }
    if args.json:
        sys.stdout.write(_emit_json(obj))
    else:
        sys.stdout.write(
            f"dataset {obj['content_hash']}\n"
            f"{obj['samples']} samples ({obj['train_samples']} train / "
            f"{obj['val_samples']} val) -> {args.out}\n"
        )
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="fapft", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fapft {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="artifact output path")
        p.add_argument("--json", action="store_true", help="machine-readable stdout")

    p = sub.add_parser("angles", help="per-layer angles between two checkpoints")
    p.add_argument("--pre", required=True)
    p.add_argument("--ft", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--dims", help="JSON dimension overrides for toy_vit")
    common(p)
    p.set_defaults(func=_cmd_angles)

    p = sub.add_parser("rank", help="ranking consistency across angle reports")
    p.add_argument("--reports", nargs="+", required=True)
    common(p)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("plan", help="build a FAPFT freeze plan from an angle report")
    p.add_argument("--report", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--dims")
    p.add_argument("--difficulty", choices=["easy", "challenging"])
    p.add_argument("--magnitude", choices=["large", "small"])
    p.add_argument("--topk", help="comma-separated per-stage k")
    p.add_argument("--classes", default="100,1000")
    common(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("params", help="exact trainable-parameter accounting")
    p.add_argument("--arch", required=True)
    p.add_argument("--dims")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--plan", help="freeze-plan JSON file")
    p.add_argument("--strategy", help="A..I, full, linear_probe, attn_only, ...")
    common(p)
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("soup", help="merge checkpoints per a recipe")
    p.add_argument("--recipe", required=True)
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--classes", type=int, help="class count for param totals")
    p.add_argument("--eval-config", help="train config for greedy held-out accuracy")
    common(p)
    p.set_defaults(func=_cmd_soup)

    p = sub.add_parser("train", help="one deterministic training run")
    p.add_argument("--config", required=True)
    p.add_argument("--plan", help="freeze-plan JSON file")
    p.add_argument("--init", help="init checkpoint")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("pipeline", help="the four-step angle-guided pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--difficulty", required=True, choices=["easy", "challenging"])
    p.add_argument("--pre", help="pre-trained checkpoint (default: pretrain first)")
    p.add_argument("--topk", help="override per-stage k, comma-separated")
    p.add_argument("--magnitude", choices=["large", "small"])
    p.add_argument("--series", help="comma-separated topk list for a soup series")
    common(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("report", help="summarize an artifact directory")
    p.add_argument("--dir", required=True)
    common(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("grad-check", help="finite-difference gradient validation")
    p.add_argument("--config")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    common(p)
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("dataset", help="materialize a synthetic dataset container")
    p.add_argument("--spec", required=True)
    common(p)
    p.set_defaults(func=_cmd_dataset)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except PftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
