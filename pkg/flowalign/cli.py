"""Command-line entry point: ``flowalign <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from flowalign import __version__
from flowalign.checkpoint import (
    load_dataset,
    load_model,
    load_samples,
    save_dataset,
    save_samples,
)
from flowalign.config import RunConfig
from flowalign.errors import FlowAlignError
from flowalign.evaluation import detect_onsets, evaluate_samples, onset_strength
from flowalign.gradcheck import GradcheckTarget, gradcheck
from flowalign.sampler import SamplerKind
from flowalign.synthdata import ToyDataset
from flowalign.training import (
    Trainer,
    conditions,
    evaluation_dataset,
    format_table,
    generate,
    metric_teacher,
    parse_axes,
    run_ablation,
    training_dataset,
)
from flowalign.utils import format_metrics

logger = logging.getLogger(__name__)

PRESETS = {"desk": RunConfig.desk, "tiny": RunConfig.tiny}
EXIT_ERROR = 2
EXIT_CHECK_FAILED = 1


def _run_flags(parser: argparse.ArgumentParser, preset: str = "desk") -> None:
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument(
        "--preset", choices=sorted(PRESETS), default=preset, help="defaults when --config is absent"
    )
    parser.add_argument("--seed", type=int, help="override training.seed")
    parser.add_argument("--steps", type=int, help="override training.steps")
    parser.add_argument("--cfg-scale", type=float, help="override sampler.cfg_scale")
    parser.add_argument("--sampler", choices=SamplerKind.codes(), help="override sampler.kind")
    parser.add_argument("--sampler-steps", type=int, help="override sampler.steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowalign",
        description="Video-to-audio flow matching with onset conditioning "
        "and representation alignment.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    parser.add_argument("--quiet", action="store_true", help="no progress bars")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="write a synthetic dataset file")
    _run_flags(gen)
    gen.add_argument("--split", choices=["train", "eval"], default="train")
    gen.add_argument("--out", type=Path, required=True)

    train = commands.add_parser("train", help="train a model")
    _run_flags(train)
    train.add_argument("--dataset", type=Path, help="dataset file; generated when omitted")
    train.add_argument("--out", type=Path, default=Path("runs/train"))

    sample = commands.add_parser("sample", help="generate spectrograms from a checkpoint")
    sample.add_argument("--checkpoint", type=Path, required=True)
    sample.add_argument("--dataset", type=Path, help="conditions; the held-out split when omitted")
    sample.add_argument("--seed", type=int)
    sample.add_argument("--cfg-scale", type=float)
    sample.add_argument("--sampler", choices=SamplerKind.codes())
    sample.add_argument("--sampler-steps", type=int)
    sample.add_argument("--out", type=Path, default=Path("samples.bin"))

    evaluate = commands.add_parser("eval", help="score a sample file against a reference")
    evaluate.add_argument("--samples", type=Path, required=True)
    evaluate.add_argument(
        "--reference", type=Path, help="dataset file; the held-out split when omitted"
    )
    evaluate.add_argument("--out", type=Path, help="also write the metrics line here")

    check = commands.add_parser("gradcheck", help="finite-difference gradient check")
    _run_flags(check, preset="tiny")
    check.add_argument("--num-params", type=int, default=200)
    check.add_argument("--step", type=float, default=1e-5)
    check.add_argument("--target", choices=GradcheckTarget.codes(), default="total")
    check.add_argument("--tolerance", type=float, default=1e-4)

    ablate = commands.add_parser("ablate", help="train and compare an ablation matrix")
    _run_flags(ablate)
    ablate.add_argument("--axes", default="oac,tra", help="comma-separated axes")
    ablate.add_argument("--out", type=Path, help="per-cell run directories")
    return parser


def load_run(args: argparse.Namespace) -> RunConfig:
    run = RunConfig.load(args.config) if args.config else PRESETS[args.preset]()
    return run.with_overrides(
        seed=args.seed,
        steps=args.steps,
        cfg_scale=args.cfg_scale,
        sampler=args.sampler,
        sampler_steps=args.sampler_steps,
    )


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def cmd_gen_data(args: argparse.Namespace) -> int:
    run = load_run(args)
    dataset = training_dataset(run) if args.split == "train" else evaluation_dataset(run)
    save_dataset(args.out, dataset)
    logger.info("Wrote %d %s clips to %s", len(dataset), args.split, args.out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run(args)
    dataset = load_dataset(args.dataset) if args.dataset else None
    trainer = Trainer(run, args.out, progress=_progress(args), dataset=dataset)
    trainer.train()
    print(format_metrics({"step": trainer.step, **trainer.final_losses()}))
    return 0


def write_dump(path: Path, samples: np.ndarray, cues: np.ndarray) -> None:
    """Per-frame energy, flux, detected onset and conditioning cue of every sample."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter="\t")
        writer.writerow(["sample", "frame", "energy", "flux", "detected_onset", "cue"])
        for index, (spec, cue) in enumerate(zip(samples, cues)):
            energy, flux = onset_strength(spec)
            detected = detect_onsets(spec)
            for frame in range(energy.shape[0]):
                writer.writerow(
                    [
                        index,
                        frame,
                        f"{energy[frame]:.6g}",
                        f"{flux[frame]:.6g}",
                        int(detected[frame]),
                        f"{cue[frame]:.6g}",
                    ]
                )


def cmd_sample(args: argparse.Namespace) -> int:
    model, run, _ = load_model(args.checkpoint)
    run = run.with_overrides(
        seed=args.seed,
        cfg_scale=args.cfg_scale,
        sampler=args.sampler,
        sampler_steps=args.sampler_steps,
    )
    reference = load_dataset(args.dataset) if args.dataset else evaluation_dataset(run)
    samples = generate(model, run, conditions(reference))
    save_samples(args.out, samples, run, reference.onsets)
    dump = args.out.with_suffix(".tsv")
    write_dump(dump, samples, reference.c_o)
    logger.info("Wrote %d samples to %s and %s", samples.shape[0], args.out, dump)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    arrays, run = load_samples(args.samples)
    reference: ToyDataset = (
        load_dataset(args.reference) if args.reference else evaluation_dataset(run)
    )
    onsets = arrays.get("reference_onsets", reference.onsets)
    teacher = metric_teacher(run)
    metrics = evaluate_samples(
        arrays["samples"], reference.x_star, onsets, teacher, tol=run.training.onset_tolerance
    )
    line = format_metrics(metrics)
    print(line)
    if args.out:
        args.out.write_text(line + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    run = load_run(args)
    report = gradcheck(run, args.num_params, args.step, GradcheckTarget.from_code(args.target))
    print(
        format_metrics(
            {
                "max_rel_error": report.max_rel_error,
                "checked": report.checked,
                "worst": report.worst,
            }
        )
    )
    return 0 if report.passed(args.tolerance) else EXIT_CHECK_FAILED


def cmd_ablate(args: argparse.Namespace) -> int:
    run = load_run(args)
    axes = parse_axes(args.axes)
    rows = run_ablation(run, axes, args.out, progress=_progress(args))
    print(format_table(rows, axes))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FlowAlignError as error:
        logger.error("%s failed: %s", args.command, error)
        return EXIT_ERROR
    except OSError as error:
        logger.error("%s failed: %s", args.command, error)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
