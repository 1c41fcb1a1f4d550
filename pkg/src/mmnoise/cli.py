"""Command-line driver: ``mmnoise {analyze,estimate,synth,ber,code-gen}``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Every output is written to a temporary file and renamed into place, so a
failed run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_ALPHA,
    DEFAULT_GAP_TOLERANCE_S,
    DEFAULT_MIN_DURATION_S,
    EstimationConfig,
    background_stats,
    choose_alpha,
    cover_mask,
    detect_bursts,
    estimate_profile,
    impulse_mask,
    rms,
)
from .errors import MMNoiseError, UsageError
from .harness import CONVENTIONS, ExperimentConfig, format_ber_csv, run_ber
from .iq import DEFAULT_SAMPLE_RATE_HZ, FORMATS, IQRecording, atomic_write, load_iq, write_iq
from .ldpc import format_alist, peg_regular
from .model import ev_reference_profile
from .profile_io import format_kv, load_profile, profile_entries, report_entries
from .synth import synthesize_blocks, synthesize_noise

log = logging.getLogger("mmnoise")

BUILTIN_PROFILES = {"ev-reference": ev_reference_profile}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _alpha(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("alpha must be positive")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected an integer >= 1")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("expected an integer >= 0")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def _float_list(text):
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _csv_text(header_rows: dict, columns, rows) -> str:
    buf = io.StringIO()
    for k, v in header_rows.items():
        buf.write(f"# {k} = {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    return repr(float(v))


# --------------------------------------------------------------------------
# shared recording options


def _add_recording_args(p):
    p.add_argument("--in", dest="input", required=True, type=Path, help="IQ recording")
    p.add_argument("--format", required=True, choices=FORMATS, help="sample format of --in")
    p.add_argument("--rate", type=float, default=DEFAULT_SAMPLE_RATE_HZ, help="sample rate in Hz")


def _add_threshold_args(p):
    p.add_argument("--alpha", type=_alpha, default=None,
                   help=f"threshold factor or 'auto' (default {DEFAULT_ALPHA})")
    p.add_argument("--min-duration", type=float, default=None,
                   help=f"minimum burst duration in seconds (default {DEFAULT_MIN_DURATION_S})")
    p.add_argument("--gap-tolerance", type=float, default=DEFAULT_GAP_TOLERANCE_S,
                   help="longest unflagged gap inside a burst, seconds")
    p.add_argument("--bridge", type=float, default=None,
                   help="wider gap bridging in seconds; overrides --gap-tolerance when larger")
    p.add_argument("--window-len", type=_positive_int, default=None,
                   help="per-window thresholds over windows of this many samples")
    p.add_argument("--synthetic", action="store_true",
                   help="threshold and refinement presets for model-generated noise (listed in the README)")


def _estimation_config(args, M=4, **extra):
    kw = dict(M=M, gap_tolerance_s=args.gap_tolerance, window_len=args.window_len, **extra)
    if args.alpha is not None:
        kw["alpha"] = args.alpha
    if args.min_duration is not None:
        kw["min_duration_s"] = args.min_duration
    if args.bridge is not None:
        kw["bridge_s"] = args.bridge
    return EstimationConfig.for_synthetic(**kw) if args.synthetic else EstimationConfig(**kw)


def _default_out(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def _hist_rows(bg):
    centers = 0.5 * (bg.bin_edges[1:] + bg.bin_edges[:-1])
    width = np.diff(bg.bin_edges)
    di = bg.hist_i / (bg.n * width)
    dq = bg.hist_q / (bg.n * width)
    return [(_num(c), int(a), int(b), _num(x), _num(y)) for c, a, b, x, y in zip(centers, bg.hist_i, bg.hist_q, di, dq)]


HIST_COLUMNS = ("center", "count_i", "count_q", "density_i", "density_q")
BURST_COLUMNS = ("start", "end", "mean_power", "cluster")


def _burst_rows(bursts):
    return [(b.start, b.end, _num(b.mean_power), "" if b.cluster is None else b.cluster) for b in bursts]


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(args):
    rec = load_iq(args.input, args.format, args.rate)
    cfg = _estimation_config(args)
    if cfg.alpha == "auto":
        alpha, _ = choose_alpha(rec.samples, rec.sample_rate_hz, cfg)
    else:
        alpha = float(cfg.alpha)
    mask = impulse_mask(rec, alpha, cfg.window_len)
    bursts = detect_bursts(
        mask, rec.sample_rate_hz, cfg.min_duration_s, cfg.gap_tolerance_s, bridge_s=cfg.bridge_s,
        samples=rec.samples,
    )
    covered = cover_mask(len(rec), [b.start for b in bursts], [b.end for b in bursts])
    bg = background_stats(rec, covered)
    flagged = background_stats(rec, mask)
    echo = {"input": str(args.input), "format": args.format, "rate": _num(args.rate), "command": "analyze"}
    echo.update({f"config.{k}": v for k, v in cfg.as_dict().items()})
    entries = {
        "kind": "analysis",
        "n_samples": len(rec),
        "w_rms": rms(rec),
        "alpha": alpha,
        "threshold": float(np.max(mask.threshold)),
        "flagged_samples": int(mask.flags.sum()),
        "burst_count": len(bursts),
        "burst_samples": int(covered.sum()),
    }
    entries.update({f"background.{k}": v for k, v in bg.summary().items()})
    entries.update({f"unflagged.{k}": v for k, v in flagged.summary().items()})
    entries.update(echo)
    out = args.out or _default_out(args.input, ".analysis.txt")
    outputs = {out: format_kv(entries, f"mmnoise {__version__} analyze")}
    hdr = {k: v for k, v in echo.items() if k != "config.alpha_grid"}
    outputs[args.bursts_csv or _default_out(args.input, ".bursts.csv")] = _csv_text(hdr, BURST_COLUMNS, _burst_rows(bursts))
    if args.plotdata:
        outputs.update(_fig34(args.plotdata, hdr, bg, bursts))
    _write_all(outputs)
    log.info("%d bursts, background excess kurtosis %.4f", len(bursts), bg.kurtosis)
    return 0


def _fig34(directory, hdr, bg, bursts):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    return {
        d / "fig3_background_hist.csv": _csv_text(hdr, HIST_COLUMNS, _hist_rows(bg)),
        d / "fig4_burst_power.csv": _csv_text(
            hdr, ("start", "end", "mean_power", "power_db", "cluster"),
            [(b.start, b.end, _num(b.mean_power), _num(10 * np.log10(b.mean_power)), "" if b.cluster is None else b.cluster)
             for b in bursts],
        ),
    }


def _write_all(outputs):
    # build everything first, then publish; each file lands atomically
    for path, text in outputs.items():
        atomic_write(path, text, mode="w")


def cmd_estimate(args):
    if args.k is not None and args.M is not None and args.M != args.k + 1:
        raise UsageError("--k and --M disagree (M must equal k + 1)")
    M = args.M if args.M is not None else (args.k + 1 if args.k is not None else 4)
    extra = {}
    if args.refine_iters is not None:
        extra["refine_iters"] = args.refine_iters
    if args.cluster_domain is not None:
        extra["cluster_domain"] = args.cluster_domain
    cfg = _estimation_config(args, M=M, **extra)
    rec = load_iq(args.input, args.format, args.rate)
    report = estimate_profile(rec, cfg, workers=args.workers)
    echo = {"input": str(args.input), "format": args.format, "rate": _num(args.rate), "command": "estimate"}
    out = args.out or _default_out(args.input, ".report.txt")
    outputs = {out: format_kv(report_entries(report, echo), f"mmnoise {__version__} estimate")}
    hdr = dict(echo)
    hdr.update({f"config.{k}": v for k, v in cfg.as_dict().items() if k != "alpha_grid"})
    hdr["alpha_used"] = _num(report.alpha)
    outputs[args.bursts_csv or _default_out(args.input, ".bursts.csv")] = _csv_text(
        hdr, BURST_COLUMNS, _burst_rows(report.bursts)
    )
    if args.profile_out:
        outputs[args.profile_out] = format_kv(profile_entries(report.profile), f"estimated from {args.input}")
    if args.plotdata:
        outputs.update(_fig34(args.plotdata, hdr, report.background_stats, report.bursts))
    _write_all(outputs)
    pr = report.profile
    log.info("p = %s sigma = %s r = %.5f", np.round(pr.state_probs, 4), np.round(pr.state_sigmas, 5), pr.r)
    return 0


def _load_profile_ref(ref):
    if ref in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[ref]()
    return load_profile(ref)


def cmd_synth(args):
    profile = _load_profile_ref(args.profile)
    if args.block_len:
        real = synthesize_blocks(profile, args.n, args.seed, args.block_len, args.mode, args.workers)
    else:
        real = synthesize_noise(profile, args.n, args.seed, args.mode)
    samples = real.samples if args.mode == "complex" else real.samples.astype(np.complex128)
    rec = IQRecording(samples, args.rate, origin=f"synth seed={args.seed}")
    echo = {
        "command": "synth",
        "profile": args.profile,
        "n": args.n,
        "seed": args.seed,
        "mode": args.mode,
        "block_len": args.block_len or 0,
        "rate": _num(args.rate),
        "format": args.format,
    }
    meta = dict(profile_entries(profile))
    meta["kind"] = "synth"
    meta.update(echo)
    outputs = {}
    if args.plotdata:
        d = Path(args.plotdata)
        d.mkdir(parents=True, exist_ok=True)
        m = min(args.n, args.plot_samples)
        t = np.arange(m) / args.rate
        rows = [(_num(a), _num(b.real), _num(b.imag), int(s)) for a, b, s in zip(t, samples[:m], real.states[:m])]
        outputs[d / "fig5_noise.csv"] = _csv_text(echo, ("time_s", "i", "q", "state"), rows)
    write_iq(rec, args.out, args.format)
    outputs[_default_out(Path(args.out), ".meta.txt")] = format_kv(meta, f"mmnoise {__version__} synth")
    if args.states_out:
        outputs[args.states_out] = _csv_text(echo, ("index", "state"), enumerate(real.states.tolist()))
    _write_all(outputs)
    log.info("wrote %d samples to %s", args.n, args.out)
    return 0


def cmd_ber(args):
    detectors = ("bcjr", "awgn") if args.detector == "both" else (args.detector,)
    profile = args.profile
    if profile in BUILTIN_PROFILES:
        profile = BUILTIN_PROFILES[profile]()
    cfg = ExperimentConfig(
        profile=profile,
        code=args.code,
        snr_db=tuple(args.snr),
        detectors=detectors,
        convention=args.convention,
        max_codewords=args.max_codewords,
        target_errors=args.target_errors,
        seed=args.seed,
        max_iters=args.max_iters,
        batch_size=args.batch_size,
        workers=args.workers,
        all_zero=args.all_zero,
        interleave_depth=args.interleave_depth,
    )

    def progress(pt):
        log.info("%6.2f dB %-4s ber=%.3e errors=%d codewords=%d", pt.snr_db, pt.detector, pt.ber, pt.bit_errors, pt.codewords)

    points = run_ber(cfg, progress)
    echo = {"command": "ber", **cfg.echo()}
    if args.profile in BUILTIN_PROFILES:
        echo["profile"] = args.profile
    outputs = {args.out: format_ber_csv(points, echo)}
    if args.plotdata:
        d = Path(args.plotdata)
        d.mkdir(parents=True, exist_ok=True)
        snrs = list(dict.fromkeys(p.snr_db for p in points))
        by = {(p.snr_db, p.detector): p for p in points}
        cols = ["snr_db"] + [f"ber_{det}" for det in detectors]
        rows = [[_num(s)] + [_num(by[s, det].ber) for det in detectors] for s in snrs]
        outputs[d / "fig6_ber.csv"] = _csv_text(echo, cols, rows)
    _write_all(outputs)
    return 0


def cmd_code_gen(args):
    code = peg_regular(args.n, args.dv, args.dc, args.seed)
    atomic_write(args.out, format_alist(code), mode="w")
    log.info("n=%d m=%d k=%d", code.n, code.m, code.k)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmnoise", description="Bursty impulsive noise modeling and detection toolkit.")
    parser.add_argument("--version", action="version", version=f"mmnoise {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="threshold, bursts and background diagnostics")
    _add_recording_args(p)
    _add_threshold_args(p)
    p.add_argument("--out", type=Path, help="summary file (default: <in>.analysis.txt)")
    p.add_argument("--bursts-csv", type=Path, help="per-burst CSV (default: <in>.bursts.csv)")
    p.add_argument("--plotdata", type=Path, help="directory for histogram and burst-power CSVs")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("estimate", help="estimate a model profile from a recording")
    _add_recording_args(p)
    _add_threshold_args(p)
    p.add_argument("--k", type=_positive_int, help="impulsive clusters (M - 1)")
    p.add_argument("--M", type=_positive_int, help="total states, background included (default 4)")
    p.add_argument("--refine-iters", type=_nonneg_int, help="relabeling passes after threshold labeling (default 0, or 10 with --synthetic)")
    p.add_argument("--cluster-domain", choices=("db", "linear"), help="cluster burst powers in dB or linearly")
    p.add_argument("--workers", type=_positive_int, default=1, help="threads for relabeling")
    p.add_argument("--out", type=Path, help="report file (default: <in>.report.txt)")
    p.add_argument("--bursts-csv", type=Path, help="per-burst CSV (default: <in>.bursts.csv)")
    p.add_argument("--profile-out", type=Path, help="also write the bare profile file")
    p.add_argument("--plotdata", type=Path, help="directory for histogram and burst-power CSVs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("synth", help="synthesize noise from a profile")
    p.add_argument("--profile", required=True, help="profile file or 'ev-reference'")
    p.add_argument("--n", type=_positive_int, required=True, help="number of samples")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=FORMATS, default="f32le")
    p.add_argument("--mode", choices=("complex", "real"), default="complex")
    p.add_argument("--rate", type=float, default=DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--block-len", type=_positive_int, help="independently seeded blocks of this length")
    p.add_argument("--workers", type=_positive_int, default=1, help="threads for block synthesis")
    p.add_argument("--states-out", type=Path, help="CSV of the hidden state path")
    p.add_argument("--plotdata", type=Path, help="directory for a time-series excerpt CSV")
    p.add_argument("--plot-samples", type=_positive_int, default=26_000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ber", help="coded BER sweep for the detectors")
    p.add_argument("--profile", required=True, help="profile file or 'ev-reference'")
    p.add_argument("--code", required=True, help="alist file or peg:N[:SEED]")
    p.add_argument("--snr", type=_float_list, required=True, help="Eb/N0 grid in dB, comma-separated")
    p.add_argument("--detector", choices=("bcjr", "awgn", "both"), default="both")
    p.add_argument("--convention", choices=CONVENTIONS, default="total")
    p.add_argument("--max-codewords", type=_positive_int, default=10_000)
    p.add_argument("--target-errors", type=_positive_int, default=100)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--max-iters", type=_positive_int, default=50)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--interleave-depth", type=_positive_int, default=1,
                   help="codewords per randomly interleaved frame (1 = no interleaving)")
    p.add_argument("--all-zero", action="store_true", help="send the all-zero codeword")
    p.add_argument("--out", type=Path, required=True, help="CSV of BER points")
    p.add_argument("--plotdata", type=Path, help="directory for a BER-curve CSV")
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("code-gen", help="generate a regular LDPC code in alist format")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--dv", type=_positive_int, default=3)
    p.add_argument("--dc", type=_positive_int, default=6)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_code_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MMNoiseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
