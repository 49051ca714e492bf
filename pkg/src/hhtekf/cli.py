"""Command-line entry point: ``hhtekf {generate,analyze,reproduce,plotdata}``.

Exit codes: 0 success, 1 analysis failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__, signalgen
from .dataio import CsvFormatError, ingest_csv, write_csv, write_json, write_series
from .ekf import DEFAULT_Q, DEFAULT_R, HhtEkfConfig, run_ekf, run_hht_ekf
from .emd import EmdConfig
from .errors import AnalysisError
from .evaluation import ExperimentConfig, monte_carlo
from .hilbert import HhtConfig, hht, masking_hht

OUT_DIR_ENV = "HHTEKF_OUT_DIR"
SCENARIOS = {
    "case_a": signalgen.case_a,
    "case_b": signalgen.case_b,
    "surrogate": lambda noise_std, seed: signalgen.pmu_surrogate(seed),
}
TABLES = {
    "t1": ("case_a", "Table I: closely located frequencies"),
    "t2": ("case_b", "Table II: time-variant frequency"),
}
METHOD_LABELS = {"hht": "HHT", "masking": "Masking", "ekf": "EKF"}


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_tuning(p):
    p.add_argument("--n-modes", type=int, help="fix the EKF mode count instead of counting FFT peaks")
    p.add_argument("--q-scale", type=float, default=DEFAULT_Q, help="process noise variance (default 1e-9)")
    p.add_argument("--q-freq-scale", type=float, help="separate process noise for frequency/damping states")
    p.add_argument("--r", type=float, default=DEFAULT_R, help="measurement noise variance (default 1e-3)")
    p.add_argument("--dc-cutoff-hz", type=float, default=0.1)
    p.add_argument("--min-cycles", type=float, default=0.0, help="IMFs with fewer cycles over the record count as trend (0 = off)")
    p.add_argument("--sd-threshold", type=float, default=0.2)
    p.add_argument("--mask-freq-ratio", type=float, default=1.6)
    p.add_argument("--mask-amp-ratio", type=float, default=1.6)
    p.add_argument("--burn-in", type=float, default=0.1, help="fraction of samples skipped when scoring the EKF")
    p.add_argument("--robust-cov", action=argparse.BooleanOptionalAction, default=True)


def _check_tuning(args):
    if args.n_modes is not None and args.n_modes < 1:
        raise UsageError("--n-modes must be >= 1")
    if args.q_scale < 0 or (args.q_freq_scale is not None and args.q_freq_scale < 0):
        raise UsageError("--q-scale and --q-freq-scale must be >= 0")
    if not args.r > 0:
        raise UsageError("--r must be > 0")
    if args.dc_cutoff_hz < 0:
        raise UsageError("--dc-cutoff-hz must be >= 0")
    if args.min_cycles < 0:
        raise UsageError("--min-cycles must be >= 0")
    if not args.sd_threshold > 0:
        raise UsageError("--sd-threshold must be > 0")
    if not 0 <= args.burn_in < 1:
        raise UsageError("--burn-in must be in [0, 1)")


def _configs(args) -> tuple[HhtConfig, HhtEkfConfig]:
    hcfg = HhtConfig(
        emd=EmdConfig(sd_threshold=args.sd_threshold),
        dc_cutoff_hz=args.dc_cutoff_hz,
        min_cycles=args.min_cycles,
        mask_freq_ratio=args.mask_freq_ratio,
        mask_amp_ratio=args.mask_amp_ratio,
    )
    ecfg = HhtEkfConfig(
        hht=hcfg,
        n_modes=args.n_modes,
        q_scale=args.q_scale,
        q_freq_scale=args.q_freq_scale,
        r=args.r,
        robust_cov=args.robust_cov,
    )
    return hcfg, ecfg


def _config_echo(args) -> dict:
    return {
        "n_modes": args.n_modes,
        "q_scale": args.q_scale,
        "q_freq_scale": args.q_freq_scale,
        "r": args.r,
        "dc_cutoff_hz": args.dc_cutoff_hz,
        "min_cycles": args.min_cycles,
        "sd_threshold": args.sd_threshold,
        "mask_freq_ratio": args.mask_freq_ratio,
        "mask_amp_ratio": args.mask_amp_ratio,
        "burn_in": args.burn_in,
        "robust_cov": args.robust_cov,
    }


def _truth_rows(truth, series):
    t = series.times
    for m in range(truth.n_modes):
        for k in range(len(series)):
            yield (k, t[k], m + 1, truth.freq_rad_s[m, k], truth.damping_per_s[m, k])


def _write_truth(out, truth, series):
    write_csv(out / "truth.csv", ["k", "t_seconds", "mode_index", "freq_rad_s", "damping_per_s"], _truth_rows(truth, series))


def cmd_generate(args) -> int:
    if args.noise_std < 0:
        raise UsageError("--noise-std must be >= 0")
    series, truth = SCENARIOS[args.scenario](args.noise_std, args.seed)
    out = _out_dir(args)
    write_series(out / "signal.csv", series)
    _write_truth(out, truth, series)
    print(f"wrote {out / 'signal.csv'} ({len(series)} samples at {series.sample_rate_hz:g} Hz)")
    return 0


def _load_input(args):
    if args.scenario:
        if args.fs is not None:
            raise UsageError("--fs only applies to --input")
        series, truth = SCENARIOS[args.scenario](args.noise_std, args.seed)
        return series, truth, {"source": "scenario", "scenario": args.scenario, "noise_std": args.noise_std, "seed": args.seed}
    if args.fs is not None and not args.fs > 0:
        raise UsageError("--fs must be > 0")
    series = ingest_csv(args.input, args.fs)
    return series, None, {"source": "csv", "path": str(args.input)}


def _trace_rows_ekf(trace, t):
    for m in range(trace.n_modes):
        for k in range(len(trace)):
            w = trace.freq_rad_s[m, k]
            yield (k, t[k], m + 1, w, w / (2 * math.pi), trace.damping_per_s[m, k], trace.recon[m, k])


def _trace_rows_hht(components, t):
    for c in components:
        tr = c.trace
        for k in range(tr.freq_rad_s.size):
            w = tr.freq_rad_s[k]
            yield (k, t[k], c.imf.index, w, w / (2 * math.pi), tr.damping_per_s[k], c.imf.samples[k])


TRACE_HEADER = ["k", "t_seconds", "mode_index", "freq_rad_s", "freq_hz", "damping_per_s", "recon"]


def _write_decomposition(out, series, imfs, residue):
    header = ["k", "t_seconds"] + [f"imf_{i + 1}" for i in range(len(imfs))] + ["residue"]
    t = series.times
    cols = [np.arange(len(series)), t] + list(imfs) + [residue]
    write_csv(out / "decomposition.csv", header, zip(*cols))


def cmd_analyze(args) -> int:
    _check_tuning(args)
    series, truth, source = _load_input(args)
    source.update(n_samples=len(series), sample_rate_hz=series.sample_rate_hz)
    out = _out_dir(args)
    hcfg, ecfg = _configs(args)
    report = {
        "schema": "hhtekf.analysis/1",
        "version": __version__,
        "method": args.method,
        "input": source,
        "config": _config_echo(args),
        "status": "ok",
        "error": None,
        "n_modes": 0,
        "initialization": None,
        "modes": [],
        "diverged": False,
    }
    write_series(out / "signal.csv", series)
    if truth is not None:
        _write_truth(out, truth, series)
    t = series.times
    try:
        if args.method in ("hht", "masking"):
            result = (hht if args.method == "hht" else masking_hht)(series, hcfg)
            dec = result.decomposition
            _write_decomposition(out, series, [i.samples for i in dec.imfs], dec.residue)
            osc = result.oscillatory()
            write_csv(out / "trace.csv", TRACE_HEADER, _trace_rows_hht(osc, t))
            report["n_modes"] = len(osc)
            report["modes"] = [
                {
                    "index": c.imf.index,
                    "is_dc": c.is_dc,
                    "mean_freq_rad_s": c.trace.mean_freq,
                    "mean_freq_hz": c.trace.mean_freq / (2 * math.pi),
                    "final_freq_rad_s": float(c.trace.freq_rad_s[-1]),
                    "final_damping_per_s": float(c.trace.damping_per_s[-1]),
                }
                for c in result.components
            ]
        else:
            if args.method == "hht-ekf":
                result = run_hht_ekf(series, ecfg)
                trace, init = result.trace, result.init
                dec = result.decomposition
                _write_decomposition(out, series, [i.samples for i in dec.imfs], dec.residue)
            else:
                trace = run_ekf(series, ecfg)
                init = None
                _write_decomposition(out, series, [], np.full(len(series), series.samples.mean()))
            write_csv(out / "trace.csv", TRACE_HEADER, _trace_rows_ekf(trace, t))
            report["n_modes"] = trace.n_modes
            if init is not None:
                report["initialization"] = [
                    {
                        "freq_rad_s": p.freq_rad_s,
                        "freq_hz": p.freq_rad_s / (2 * math.pi),
                        "amplitude": p.amplitude,
                        "phase_rad": p.phase_rad,
                    }
                    for p in init.peaks
                ]
            burn = int(args.burn_in * len(series))
            report["modes"] = [
                {
                    "index": m + 1,
                    "is_dc": False,
                    "mean_freq_rad_s": float(trace.freq_rad_s[m, burn:].mean()),
                    "mean_freq_hz": float(trace.freq_rad_s[m, burn:].mean() / (2 * math.pi)),
                    "final_freq_rad_s": float(trace.freq_rad_s[m, -1]),
                    "final_damping_per_s": float(trace.damping_per_s[m, -1]),
                }
                for m in range(trace.n_modes)
            ]
    except AnalysisError as exc:
        report["status"] = "failed"
        report["error"] = {"stage": exc.stage, "message": str(exc)}
        report["diverged"] = exc.stage == "ekf"
        write_json(out / "report.json", report)
        print(f"hhtekf: analysis failed: {exc}", file=sys.stderr)
        return 1
    write_json(out / "report.json", report)
    print(f"wrote {out / 'trace.csv'} ({report['n_modes']} modes)")
    return 0


def _text_table(table: str, reports: dict, meta: dict) -> str:
    lines = [f"{TABLES[table][1]}: Q={meta['q_scale']:g} I, R={meta['r']:g}"]
    lines.append(f"{meta['experiment']}, {meta['n_runs']} runs, noise_std={meta['noise_std']:g}, base seed {meta['base_seed']}")

    def num(v):
        return "n/a" if v is None else f"{v:.2f}"

    if table == "t1":
        header = ["Method", "MSE w1", "MSE w2", "Mixing rate"]
        rows = [
            [METHOD_LABELS[m], num(r.mse[0]), num(r.mse[1]), f"{100 * r.failure_rate:.1f}%"]
            for m, r in reports.items()
        ]
    else:
        header = ["Method", "MSE w1", "MSE w1 of the middle third", "Failure rate"]
        rows = [
            [METHOD_LABELS[m], num(r.mse_full[0]), num(r.mse_middle[0]), f"{100 * r.failure_rate:.1f}%"]
            for m, r in reports.items()
        ]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(cells, widths))) + " |"

    lines += [sep, line(header), sep] + [line(r) for r in rows] + [sep]
    return "\n".join(lines) + "\n"


def cmd_reproduce(args) -> int:
    _check_tuning(args)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.noise_std < 0:
        raise UsageError("--noise-std must be >= 0")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    experiment, _ = TABLES[args.table]
    hcfg, ecfg = _configs(args)
    config = ExperimentConfig(noise_std=args.noise_std, burn_in_frac=args.burn_in, hht=hcfg, ekf=ecfg)
    result = monte_carlo(experiment, n_runs=args.runs, base_seed=args.seed, config=config, workers=args.workers)
    out = _out_dir(args)
    meta = {
        "table": args.table,
        "experiment": experiment,
        "n_runs": args.runs,
        "base_seed": args.seed,
        "noise_std": args.noise_std,
        "q_scale": args.q_scale,
        "r": args.r,
    }
    payload = {"schema": "hhtekf.table/1", "version": __version__, **meta, "config": _config_echo(args)}
    payload["methods"] = {m: _jsonable(r.to_dict()) for m, r in result.reports.items()}
    write_json(out / f"table{args.table[1]}.json", payload)
    text = _text_table(args.table, result.reports, meta)
    (out / f"table{args.table[1]}.txt").write_text(text)
    write_csv(
        out / "runs.csv",
        ["method", "seed", "mode_index", "failed", "mse", "mse_full", "mse_middle", "est_mean_freq_rad_s", "error"],
        (
            (r.method, r.seed, i + 1, r.failed[i], r.mse[i], r.mse_full[i], r.mse_middle[i], r.est_mean_freq[i], r.error or "")
            for r in result.runs
            for i in range(len(r.failed))
        ),
    )
    print(text, end="")
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _read_rows(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_plotdata(args) -> int:
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise UsageError(f"trace file {trace_path} does not exist")
    rows = _read_rows(trace_path)
    missing = set(TRACE_HEADER) - set(rows[0].keys() if rows else _header(trace_path))
    if missing:
        print(f"hhtekf: malformed trace {trace_path}: missing columns {sorted(missing)}", file=sys.stderr)
        return 1
    out = Path(args.out_dir) if args.out_dir else trace_path.parent
    out.mkdir(parents=True, exist_ok=True)
    header = ["series_name", "t", "value"]

    freq = []
    try:
        for r in rows:
            freq.append((f"mode_{int(r['mode_index'])}", float(r["t_seconds"]), float(r["freq_rad_s"])))
    except (TypeError, ValueError) as exc:
        print(f"hhtekf: malformed trace {trace_path}: {exc}", file=sys.stderr)
        return 1
    truth_path = trace_path.parent / "truth.csv"
    if truth_path.exists():
        for r in _read_rows(truth_path):
            freq.append((f"truth_{int(r['mode_index'])}", float(r["t_seconds"]), float(r["freq_rad_s"])))
    written = [write_csv(out / "panel_frequency.csv", header, freq)]

    signal_path = trace_path.parent / "signal.csv"
    if signal_path.exists():
        series = ingest_csv(signal_path)
        written.append(write_csv(out / "panel_measurement.csv", header, (("measurement", t, v) for t, v in zip(series.times, series.samples))))
    dec_path = trace_path.parent / "decomposition.csv"
    if dec_path.exists():
        dec = _read_rows(dec_path)
        if dec:
            imf_cols = [c for c in dec[0] if c.startswith("imf_")]
            recon = defaultdict(float)
            for r in rows:
                recon[float(r["t_seconds"])] += float(r["recon"])
            panel = [("imf_sum", float(r["t_seconds"]), sum(float(r[c]) for c in imf_cols)) for r in dec]
            panel += [("trend", float(r["t_seconds"]), float(r["residue"])) for r in dec]
            panel += [("recon_sum", t, v) for t, v in sorted(recon.items())]
            written.append(write_csv(out / "panel_decomposition.csv", header, panel))
    for p in written:
        print(f"wrote {p}")
    return 0


def _header(path):
    with Path(path).open(newline="") as fh:
        return next(csv.reader(fh), [])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hhtekf", description="EKF-enhanced Hilbert-Huang oscillation analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario to signal.csv / truth.csv")
    g.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    g.add_argument("--noise-std", type=float, default=signalgen.DEFAULT_NOISE_STD)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="analyze one signal")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", choices=sorted(SCENARIOS))
    src.add_argument("--input", type=Path, help="CSV with time,value or a single value column")
    a.add_argument("--fs", type=float, help="sample rate in Hz (required for single-column CSV)")
    a.add_argument("--method", choices=["hht", "masking", "ekf", "hht-ekf"], default="hht-ekf")
    a.add_argument("--noise-std", type=float, default=signalgen.DEFAULT_NOISE_STD)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir")
    _add_tuning(a)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("reproduce", help="Monte Carlo reproduction of a results table")
    r.add_argument("table", choices=sorted(TABLES))
    r.add_argument("--runs", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0, help="base seed; run i uses seed + i")
    r.add_argument("--noise-std", type=float, default=signalgen.DEFAULT_NOISE_STD)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out-dir")
    _add_tuning(r)
    r.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("plotdata", help="turn analyze outputs into long-format panel CSVs")
    p.add_argument("trace", help="path to trace.csv")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hhtekf: error: {exc}", file=sys.stderr)
        return 2
    except CsvFormatError as exc:
        print(f"hhtekf: [input] {exc}", file=sys.stderr)
        return 1
    except AnalysisError as exc:
        print(f"hhtekf: analysis failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
