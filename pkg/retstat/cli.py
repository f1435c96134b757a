"""
Command-line front end for retstat.

Every subcommand writes its artifacts plus ``manifest.json`` into the output
directory. On failure the files written by the run are removed and the
process exits non-zero.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from retstat import __version__
from retstat.baselines import (
    grassberger_entropy,
    kac_diagnostic,
    sample_overlapping_return,
    wyner_value,
)
from retstat.config import (
    DEFAULT_CONFIG,
    get_max_extension_doublings,
    get_out_dir,
    get_workers,
    load_config,
    set_value,
)
from retstat.dependence import (
    exact_pair_log_covariance,
    na_empirical_check,
    na_library,
    ordered_spacings_sample,
)
from retstat.errors import InvalidParameter, RetstatError
from retstat.ingest import DigitFileSpec, analyze_segments, parse_digit_file, segment
from retstat.manifest import RunManifest
from retstat.moments import DEFAULT_TOL, GeomParam, log_moment_report
from retstat.simulate import (
    SampleSummary,
    TrialConfig,
    gen_iid,
    mix_seed,
    qq_points,
    run_trials,
    summarize,
)
from retstat.statistics import ProcessModel, regime_check

console = Console()
logger = logging.getLogger("retstat")

TRIALS_CSV = "trials.csv"
TRIALS_DETAIL_CSV = "trials_detail.csv"
QQ_CSV = "qq.csv"
SEGMENTS_CSV = "segments.csv"
BASELINE_CSV = "baseline.csv"
SUMMARY_JSON = "summary.json"
DEFAULT_ALPHABET = 2


class RunFailed(Exception):
    """A run finished but some requested computation did not complete."""


def setup_logging(verbose: bool = False) -> None:
    """Route the ``retstat`` logger through a single rich handler."""
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


# =============================================================================
# Output handling
# =============================================================================


class OutputSet:
    """Files written by one run, removed again if the run fails."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path

    def csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format="%.17g")
        return path

    def json(self, data: dict[str, Any], name: str) -> Path:
        path = self._path(name)
        path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
        return path

    def manifest(self, manifest: RunManifest) -> Path:
        manifest.outputs = [p.name for p in self.written]
        path = self._path("manifest.json")
        manifest.write(self.out_dir)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)
        self.written.clear()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _run(args: argparse.Namespace, body: Any) -> None:
    """Run ``body(outputs)`` and turn library errors into a clean exit."""
    outputs = OutputSet(get_out_dir(getattr(args, "out_dir", None)))
    try:
        body(outputs)
    except RunFailed as exc:
        console.print(f"[yellow]✘ {exc}[/yellow]")
        console.print(f"  Outputs kept in {outputs.out_dir}")
        sys.exit(1)
    except (RetstatError, OSError) as exc:
        outputs.cleanup()
        console.print(f"[red]Error: {exc}[/red]")
        sys.exit(1)


def _parse_probs(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidParameter(f"Could not parse probabilities '{text}'") from None


def model_from_args(args: argparse.Namespace) -> ProcessModel:
    """Model from ``--alphabet`` and ``--probs``; no probabilities means uniform."""
    probs = _parse_probs(getattr(args, "probs", None))
    if probs is None:
        return ProcessModel.equidistributed(args.alphabet or DEFAULT_ALPHABET)
    if args.alphabet is not None and len(probs) != args.alphabet:
        raise InvalidParameter(
            f"--probs lists {len(probs)} values but --alphabet is {args.alphabet}"
        )
    model = ProcessModel.from_probs(probs, renormalize=args.allow_renormalize)
    if model.is_equidistributed:
        return ProcessModel.equidistributed(model.alphabet_size)
    return model


def _horizon(text: str) -> int | None:
    if text == "auto":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"horizon must be 'auto' or an integer, got {text}"
        ) from None
    if value < 1:
        raise argparse.ArgumentTypeError("horizon must be positive")
    return value


def _print_summary(title: str, rows: dict[str, SampleSummary | None]) -> None:
    table = Table(title=title)
    table.add_column("Statistic", style="cyan")
    for col in ("n", "mean", "variance", "KS D", "KS p", "QQ dev"):
        table.add_column(col, justify="right")
    for name, s in rows.items():
        if s is None:
            continue
        table.add_row(
            name,
            str(s.n),
            f"{s.mean:+.4f}",
            f"{s.variance:.4f}",
            f"{s.ks_D:.4f}",
            f"{s.ks_p:.4f}",
            f"{s.qq_max_central_deviation:.4f}",
        )
    console.print(table)


# =============================================================================
# simulate
# =============================================================================


def handle_simulate(args: argparse.Namespace) -> None:
    """Monte Carlo trials of the return-time statistic."""

    def body(outputs: OutputSet) -> None:
        model = model_from_args(args)
        workers = args.workers if args.workers is not None else get_workers()
        config = TrialConfig(
            model=model,
            k=args.k,
            ell=args.ell,
            trials=args.trials,
            master_seed=args.seed,
            length=args.horizon,
            max_doublings=get_max_extension_doublings(),
            correction=args.correction == "on",
            workers=workers,
        )
        manifest = RunManifest(
            "simulate",
            {
                "alphabet": model.alphabet_size,
                "probs": list(model.probabilities),
                "k": args.k,
                "ell": args.ell,
                "trials": args.trials,
                "horizon": "auto" if args.horizon is None else args.horizon,
                "max_extension_doublings": config.max_doublings,
                "correction": args.correction,
            },
            seeds={"master": args.seed},
        )
        console.print(
            f"[bold]Simulating[/bold] {args.trials} trials "
            f"(A={model.alphabet_size}, k={args.k}, ell={args.ell}, H={model.entropy_bits:.6f})"
        )
        results = run_trials(config)
        frame = pd.DataFrame(
            {
                "trial": [r.trial for r in results],
                "z": [r.z for r in results],
                "h_hat": [r.h_hat for r in results],
            }
        )
        outputs.csv(frame, TRIALS_CSV)
        detail = pd.DataFrame([vars(r) for r in results])
        outputs.csv(detail, TRIALS_DETAIL_CSV)
        summary = summarize(results, config)
        good = [r.z for r in results if r.z is not None]
        if len(good) >= 3:  # noqa: PLR2004
            qq = qq_points(good)
            outputs.csv(
                pd.DataFrame({"theoretical": qq.theoretical, "sample": qq.sample}), QQ_CSV
            )
        report = summary.as_dict()
        report["entropy_bits"] = model.entropy_bits
        outputs.json(report, SUMMARY_JSON)
        outputs.manifest(manifest)
        _print_summary(
            "Trial statistics",
            {"z": summary.z, "z corrected": summary.corrected, "z conditional": summary.conditional},
        )
        console.print(f"  mean H_hat: {summary.h_hat_mean:.6f} bits")
        console.print(f"[green]✔ Wrote outputs to[/green] {outputs.out_dir}")
        if summary.failed:
            raise RunFailed(f"{len(summary.failed)} trials ended censored")
        invalid = [r.trial for r in results if r.ok and r.error is not None]
        if invalid:
            raise RunFailed(
                f"{len(invalid)} trials fell back to the plain statistic "
                f"(first: trial {invalid[0]})"
            )

    _run(args, body)


# =============================================================================
# analyze
# =============================================================================


def handle_analyze(args: argparse.Namespace) -> None:
    """Per-segment statistics of a digit file."""

    def body(outputs: OutputSet) -> None:
        spec = DigitFileSpec(Path(args.file), args.alphabet)
        parsed = parse_digit_file(spec)
        segments = segment(parsed.sequence, args.segment_length)
        if len(segments) == 0:
            raise InvalidParameter(
                f"File has {parsed.count} digits, fewer than one segment of {args.segment_length}"
            )
        manifest = RunManifest(
            "analyze",
            {
                "file": str(spec.path),
                "alphabet": args.alphabet,
                "k": args.k,
                "ell": args.ell,
                "segment_length": args.segment_length,
                "overrun": args.overrun,
            },
        )
        manifest.add_input(spec.path)
        console.print(
            f"[bold]Analyzing[/bold] {len(segments)} segments of {args.segment_length} digits "
            f"({segments.discarded} discarded)"
        )
        model = ProcessModel.equidistributed(args.alphabet)
        rows = analyze_segments(segments, args.k, args.ell, model, overrun=args.overrun)
        frame = pd.DataFrame(
            {
                "segment": [r.segment for r in rows],
                "z": [r.z for r in rows],
                "h_hat": [r.h_hat for r in rows],
            }
        )
        outputs.csv(frame, SEGMENTS_CSV)
        good = [r.z for r in rows if r.z is not None]
        report: dict[str, Any] = {
            "digits": parsed.count,
            "segments": len(segments),
            "discarded": segments.discarded,
            "errors": {str(r.segment): r.error for r in rows if not r.ok},
            "regime": regime_check(args.k, args.ell, model).as_dict(),
        }
        if len(good) >= 3:  # noqa: PLR2004
            stats = SampleSummary.of(good)
            qq = qq_points(good)
            report["z"] = vars(stats)
            report["h_hat_mean"] = float(np.mean([r.h_hat for r in rows if r.h_hat is not None]))
            report["qq"] = {
                "theoretical": qq.theoretical.tolist(),
                "sample": qq.sample.tolist(),
                "slope": qq.slope,
                "intercept": qq.intercept,
            }
            _print_summary("Segment statistics", {"z": stats})
        outputs.json(report, SUMMARY_JSON)
        outputs.manifest(manifest)
        console.print(f"[green]✔ Wrote outputs to[/green] {outputs.out_dir}")
        failed = [r for r in rows if not r.ok]
        if failed:
            raise RunFailed(f"{len(failed)} segments could not be analyzed")

    _run(args, body)


# =============================================================================
# moments / na-check / baseline
# =============================================================================


def handle_moments(args: argparse.Namespace) -> None:
    """Exact and asymptotic log-moments of Geom(p)."""

    def body(outputs: OutputSet) -> None:
        report = log_moment_report(GeomParam(args.p), args.tol)
        data = vars(report) | {"mu_gap": report.mu_gap, "sigma2_gap": report.sigma2_gap}
        outputs.json(data, "moments.json")
        outputs.manifest(RunManifest("moments", {"p": args.p, "tol": args.tol}))
        console.print_json(json.dumps(_jsonable(data)))

    _run(args, body)


def handle_na_check(args: argparse.Namespace) -> None:
    """Pairwise covariance oracle plus Monte Carlo negative-association checks."""

    def body(outputs: OutputSet) -> None:
        cov = exact_pair_log_covariance(args.p, args.tol)
        data: dict[str, Any] = {
            "p": args.p,
            "covariance": cov.covariance,
            "truncation_bound": cov.truncation_bound,
            "terms": cov.terms,
            "envelopes": cov.envelopes,
        }
        threshold = args.threshold if args.threshold is not None else 1.0 / args.p
        if args.samples:
            samples = ordered_spacings_sample(args.k, args.p, args.seed, args.samples)
            checks = [
                na_empirical_check(samples, f1, f2)
                for f1, f2 in na_library(args.k, threshold)
            ]
            data["na_checks"] = [vars(c) | {"within_3se": c.within(3.0)} for c in checks]
        outputs.json(data, "na_check.json")
        outputs.manifest(
            RunManifest(
                "na-check",
                {
                    "p": args.p,
                    "tol": args.tol,
                    "k": args.k,
                    "samples": args.samples,
                    "threshold": threshold,
                },
                seeds={"sampler": args.seed},
            )
        )
        console.print_json(json.dumps(_jsonable(data)))

    _run(args, body)


def handle_baseline(args: argparse.Namespace) -> None:
    """Grassberger and Wyner comparator estimators on simulated data."""

    def body(outputs: OutputSet) -> None:
        model = model_from_args(args)
        params = {
            "mode": args.mode,
            "n": args.n,
            "alphabet": model.alphabet_size,
            "probs": list(model.probabilities),
            "sequences": args.sequences,
        }
        data: dict[str, Any] = {"mode": args.mode, "n": args.n, "entropy_bits": model.entropy_bits}
        if args.mode == "grassberger":
            seq = gen_iid(model, args.n + (args.extra or args.n), args.seed)
            estimate = grassberger_entropy(seq, args.n)
            frame = pd.DataFrame({"n": [args.n], "estimate": [estimate]})
            data["estimate"] = estimate
        elif args.mode == "wyner":
            rows = []
            for s in range(args.sequences):
                ret, _ = sample_overlapping_return(model, args.n, mix_seed(args.seed, s))
                if ret.time is None:
                    rows.append((s, None, None, None))
                    continue
                rows.append(
                    (
                        s,
                        ret.time,
                        wyner_value(ret.time, args.n, model),
                        wyner_value(ret.time, args.n, model, finite=True),
                    )
                )
            frame = pd.DataFrame(rows, columns=["sequence", "time", "z", "z_finite"])
            finite = frame["z_finite"].dropna().tolist()
            if len(finite) >= 3:  # noqa: PLR2004
                data["z"] = vars(SampleSummary.of(frame["z"].dropna().tolist()))
                data["z_finite"] = vars(SampleSummary.of(finite))
            data["censored"] = int(frame["time"].isna().sum())
        else:
            kac = kac_diagnostic(model, args.n, args.sequences, args.seed)
            frame = pd.DataFrame([vars(kac)])
            data |= vars(kac)
        outputs.csv(frame, BASELINE_CSV)
        outputs.json(data, SUMMARY_JSON)
        outputs.manifest(RunManifest("baseline", params, seeds={"master": args.seed}))
        console.print_json(json.dumps(_jsonable(data)))
        if data.get("censored"):
            raise RunFailed(f"{data['censored']} sequences censored")

    _run(args, body)


# =============================================================================
# config
# =============================================================================


def handle_config(args: argparse.Namespace) -> None:
    """Show or set configuration values."""
    if args.set:
        key, value = args.set
        try:
            set_value(key, value)
        except (KeyError, ValueError) as exc:
            console.print(f"[red]Error: {exc}[/red]")
            sys.exit(1)
        console.print(f"[green]✔ Set {key} = {value}[/green]")
        return
    config = load_config()
    table = Table(title="retstat configuration")
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    table.add_column("Default", style="dim")
    for key, default in DEFAULT_CONFIG.items():
        table.add_row(key, str(config.get(key)), str(default))
    table.add_row("out_dir (resolved)", str(get_out_dir()), "")
    console.print(table)


# =============================================================================
# Parser
# =============================================================================


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--alphabet",
        "-A",
        type=int,
        default=None,
        help=f"Alphabet size (default: number of --probs, else {DEFAULT_ALPHABET})",
    )
    parser.add_argument(
        "--probs",
        default=None,
        help="Comma-separated symbol probabilities (default: equidistributed)",
    )
    parser.add_argument(
        "--allow-renormalize",
        action="store_true",
        help="Rescale probabilities whose sum is off by more than 1e-9",
    )


def _add_out_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out-dir", "-o", default=None, help="Output directory (default: from config)"
    )


def register(subparsers: Any) -> None:
    """Register the retstat subcommands."""
    sim = subparsers.add_parser("simulate", help="Monte Carlo trials on IID data")
    _add_model_args(sim)
    sim.add_argument("--k", type=int, required=True, help="Number of return times per trial")
    sim.add_argument("--ell", type=int, required=True, help="Block length")
    sim.add_argument("--trials", type=int, default=500, help="Number of trials")
    sim.add_argument("--seed", type=int, default=0, help="Master seed")
    sim.add_argument(
        "--correction", choices=["on", "off"], default="on", help="Variance-corrected statistic"
    )
    sim.add_argument(
        "--horizon",
        type=_horizon,
        default=None,
        help="'auto' (grow data until all return) or a fixed symbol count per trial",
    )
    sim.add_argument("--workers", type=int, default=None, help="Parallel trial workers")
    _add_out_dir(sim)
    sim.set_defaults(func=handle_simulate)

    ana = subparsers.add_parser("analyze", help="Per-segment statistics of a digit file")
    ana.add_argument("--file", "-f", required=True, help="Digit file")
    ana.add_argument("--alphabet", type=int, choices=[2, 10], default=10)
    ana.add_argument("--k", type=int, default=1000)
    ana.add_argument("--ell", type=int, default=4)
    ana.add_argument("--segment-length", type=int, default=400_000)
    ana.add_argument(
        "--overrun",
        action="store_true",
        help="Let return-time scans continue past the end of each segment",
    )
    _add_out_dir(ana)
    ana.set_defaults(func=handle_analyze)

    mom = subparsers.add_parser("moments", help="Log-moments of Geom(p)")
    mom.add_argument("--p", type=float, required=True)
    mom.add_argument("--tol", type=float, default=DEFAULT_TOL)
    _add_out_dir(mom)
    mom.set_defaults(func=handle_moments)

    na = subparsers.add_parser("na-check", help="Covariance oracle and association checks")
    na.add_argument("--p", type=float, required=True)
    na.add_argument("--tol", type=float, default=1e-10)
    na.add_argument("--k", type=int, default=4, help="Targets for the Monte Carlo checks")
    na.add_argument(
        "--samples", type=int, default=0, help="Monte Carlo rows (0 skips the checks)"
    )
    na.add_argument("--threshold", type=float, default=None, help="Exceedance level")
    na.add_argument("--seed", type=int, default=0)
    _add_out_dir(na)
    na.set_defaults(func=handle_na_check)

    base = subparsers.add_parser("baseline", help="Comparator estimators")
    base.add_argument("--mode", choices=["grassberger", "wyner", "kac"], required=True)
    base.add_argument("--n", type=int, required=True, help="Prefix length")
    _add_model_args(base)
    base.add_argument("--seed", type=int, default=0)
    base.add_argument("--sequences", type=int, default=500)
    base.add_argument(
        "--extra", type=int, default=None, help="Symbols past n for grassberger (default n)"
    )
    _add_out_dir(base)
    base.set_defaults(func=handle_baseline)

    cfg = subparsers.add_parser("config", help="Show or set configuration")
    cfg.add_argument("--set", nargs=2, metavar=("KEY", "VALUE"), default=None)
    cfg.set_defaults(func=handle_config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retstat", description="Return-time statistics for finite-alphabet sources"
    )
    parser.add_argument("--version", action="version", version=f"retstat {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Subcommands")
    register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        sys.exit(1)
    setup_logging(args.verbose)
    args.func(args)


if __name__ == "__main__":
    main()
