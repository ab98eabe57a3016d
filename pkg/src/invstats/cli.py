"""Command-line front end.

Exit codes: 0 success, 1 I/O or parse error, 2 invalid argument. stdout
carries one JSON summary line; everything else goes to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import _accel, experiments, fpt, models, series, wavelet
from .config import ConfigError, load_config

log = logging.getLogger("invstats")

OUT_ENV = "INVSTATS_OUT_DIR"


class UsageError(Exception):
    """Invalid argument or infeasible request (exit 2)."""


def _column(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def _add_input_args(p):
    p.add_argument("input", help="CSV file with date and price columns")
    p.add_argument("--date-column", default="0", help="name or 0-based index (default 0)")
    p.add_argument("--price-column", default=None, help="name or 0-based index (default 1, or 0 with --raw)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--raw", action="store_true", help="input column is already a value series; no log transform")


def _add_out_args(p):
    p.add_argument("--out", default=os.environ.get(OUT_ENV, "invstats-out"), help=f"output directory (env {OUT_ENV})")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise FileNotFoundError(f"cannot read {path}: {e.strerror}") from None


def _load_series(args) -> tuple[np.ndarray, dict]:
    text = _read_text(args.input)
    if args.price_column is None:
        args.price_column = "0" if args.raw else "1"
    if args.raw:
        values = series.parse_values(text, series.CsvSchema(price_col=_column(args.price_column), delimiter=args.delimiter))
        return values, {"input": args.input, "raw": True, "n": len(values)}
    schema = series.CsvSchema(_column(args.date_column), _column(args.price_column), args.delimiter)
    p = series.parse_price_series(text, schema, label=Path(args.input).stem)
    meta = {
        "input": args.input,
        "raw": False,
        "n": len(p),
        "first_date": p.timestamps[0].isoformat(),
        "last_date": p.timestamps[-1].isoformat(),
    }
    return series.to_log(p).values, meta


def _hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def _hash_args(args, keys) -> str:
    return _hash({k: getattr(args, k) for k in keys})


# -- subcommands -------------------------------------------------------------


def cmd_ingest(args) -> dict:
    schema = series.CsvSchema(_column(args.date_column), _column(args.price_column), args.delimiter)
    p = series.parse_price_series(_read_text(args.input), schema, label=Path(args.input).stem)
    x = series.to_log(p)
    r = series.log_returns(x)
    rows = ["date,log_price,log_return"]
    for i, d in enumerate(p.timestamps):
        ret = "" if i == 0 else repr(float(r.values[i - 1]))
        rows.append(f"{d.isoformat()},{float(x.values[i])!r},{ret}")
    files = {
        "prices.csv": series.format_price_series(p, series.CsvSchema(delimiter=args.delimiter)).encode(),
        "log.csv": ("\n".join(rows) + "\n").encode(),
    }
    summary = {
        "n": len(p),
        "first_date": p.timestamps[0].isoformat(),
        "last_date": p.timestamps[-1].isoformat(),
        "daily_sigma": models.daily_sigma(p.prices) if len(p) >= 3 else None,
    }
    manifest = experiments.write_bundle(
        args.out, files, _hash_args(args, ["input", "date_column", "price_column", "delimiter"]), args.force, {"summary": summary}
    )
    return {**summary, "artifacts": [a["path"] for a in manifest["artifacts"]]}


def cmd_mra(args) -> dict:
    if args.level < 1:
        raise UsageError("level must be >= 1")
    wavelet.make_filter(args.filter)
    x, meta = _load_series(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = wavelet.mra(x, args.filter, args.level, args.boundary)
    for w in caught:
        log.warning("%s", w.message)
    files = {"mra.csv": d.to_csv().encode(), "mra.json": d.to_json().encode()}
    manifest = experiments.write_bundle(
        args.out, files, _hash_args(args, ["input", "filter", "level", "boundary", "raw", "price_column"]), args.force, {"input": meta}
    )
    return {"level": d.level, "filter": d.filter, "boundary": d.boundary, "artifacts": [a["path"] for a in manifest["artifacts"]]}


def cmd_fpt(args) -> dict:
    if args.rho is not None and (args.rho == 0 or not np.isfinite(args.rho)):
        raise UsageError("--rho must be non-zero")
    if args.rho_sigma is not None and not args.rho_sigma > 0:
        raise UsageError("--rho-sigma must be positive")
    try:
        fpt.parse_binning(args.binning)
    except fpt.FptError as e:
        raise UsageError(str(e)) from None
    x, meta = _load_series(args)
    if args.rho is not None:
        rho, rule = abs(args.rho), "absolute"
    else:
        k = 5.0 if args.rho_sigma is None else args.rho_sigma
        rho, rule = k * models.daily_sigma_of_log(x), f"{k!r}*sigma"
        if not rho > 0:
            raise UsageError("series has zero volatility; --rho-sigma gives rho = 0")
    files, dists = {}, {}
    for sign, direction in ((1.0, "gain"), (-1.0, "loss")):
        s = fpt.fpt_samples(x, sign * rho)
        if len(s.waits) == 0:
            log.warning("%s direction: no passages of %r", direction, sign * rho)
            body = {"empty": True, "rho": sign * rho, "n_starts": s.n_starts, "n_censored": s.n_censored}
            files[f"fpt_{direction}.json"] = json.dumps(body).encode()
            continue
        d = fpt.empirical_distribution(s, args.binning, label=meta.get("input", ""))
        dists[direction] = d
        files[f"fpt_{direction}.csv"] = d.to_csv().encode()
        files[f"fpt_{direction}.json"] = d.to_json(args.smoothing).encode()
    asym = {"rho": rho, "rho_rule": rule}
    if len(dists) == 2:
        stat = fpt.asymmetry_from(dists["gain"], dists["loss"], args.smoothing)
        asym.update(stat.to_dict())
    else:
        missing = sorted({"gain", "loss"} - set(dists))
        asym["error"] = f"empty {'/'.join(missing)}-direction sample set"
    files["asymmetry.json"] = json.dumps(asym, sort_keys=True).encode()
    manifest = experiments.write_bundle(
        args.out,
        files,
        _hash_args(args, ["input", "rho", "rho_sigma", "binning", "smoothing", "raw", "price_column"]),
        args.force,
        {"input": meta, "rho": rho, "rho_rule": rule},
    )
    out = {"rho": rho, "artifacts": [a["path"] for a in manifest["artifacts"]]}
    out["empty_directions"] = sorted({"gain", "loss"} - set(dists))
    if "log_ratio" in asym:
        out["log_ratio"] = asym["log_ratio"]
    return out


def cmd_simulate(args) -> dict:
    try:
        cfg = load_config(args.config) if args.config else {}
    except ConfigError as e:
        raise ConfigError(f"{args.config}: {e}") from None
    days = args.days if args.days is not None else cfg.get("t_steps", cfg.get("days"))
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if days is None:
        raise UsageError("number of days required (--days or t_steps in config)")
    if int(days) != days or int(days) < 1:
        raise UsageError("--days must be a positive integer")
    if seed is None:
        raise UsageError("an explicit --seed (or seed in config) is required")
    index = args.index or str(cfg.get("index", "price"))
    if index not in models.INDEX_KINDS:
        raise UsageError(f"unknown index kind {index!r}")
    try:
        params = models.params_from_mapping(cfg)
    except models.ModelError as e:
        raise UsageError(str(e)) from None
    path = models.simulate(params, int(days), int(seed), keep_stocks=args.stocks, index=index)
    files = {"path.csv": path.to_csv(include_stocks=args.stocks).encode()}
    info = {
        "params": params.to_dict(),
        "mu_r_calibrated": isinstance(cfg.get("mu_r", "calibrate"), str),
        "seed": int(seed),
        "days": int(days),
        "index": index,
        "daily_sigma": models.daily_sigma(path.index) if int(days) >= 2 else None,
        "distressed_fraction": float(np.mean(path.regimes)),
    }
    spec_hash = _hash({k: info[k] for k in ("params", "seed", "days", "index")} | {"stocks": args.stocks})
    manifest = experiments.write_bundle(args.out, files, spec_hash, args.force, info)
    return {"mu_r": params.mu_r, "seed": int(seed), "days": int(days), "artifacts": [a["path"] for a in manifest["artifacts"]]}


def cmd_experiment(args) -> dict:
    cfg = load_config(args.spec)
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        spec = experiments.ExperimentSpec.from_mapping(cfg, base_dir=Path(args.spec).parent)
    except (experiments.ExperimentError, models.ModelError, wavelet.WaveletError, fpt.FptError) as e:
        raise UsageError(str(e)) from None
    report = experiments.run_multiscale_fpt(spec)
    files = {f"report.{fmt}": experiments.render_report(report, fmt) for fmt in ("json", "csv", "svg")}
    for e in report.ordered():
        for direction, d in (("gain", e.gain), ("loss", e.loss)):
            if d is not None:
                files[f"fpt_{e.name}_{direction}.csv"] = d.to_csv().encode()
    levels = {e.name: (None if e.stat is None else e.stat.log_ratio) for e in report.ordered()}
    manifest = experiments.write_bundle(
        args.out, files, spec.spec_hash(), args.force, {"spec": spec.to_mapping(), "levels": [e.name for e in report.ordered()]}
    )
    return {"spec_hash": spec.spec_hash(), "log_ratio": levels, "artifacts": [a["path"] for a in manifest["artifacts"]]}


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invstats", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a price CSV and write log prices/returns")
    p.add_argument("input")
    p.add_argument("--date-column", default="0")
    p.add_argument("--price-column", default="1")
    p.add_argument("--delimiter", default=",")
    _add_out_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mra", help="wavelet multiresolution analysis of the log price")
    _add_input_args(p)
    p.add_argument("--filter", default="la8", help="haar, d4 or la8")
    p.add_argument("--level", type=int, default=6)
    p.add_argument("--boundary", choices=wavelet.BOUNDARIES, default="reflection")
    _add_out_args(p)
    p.set_defaults(func=cmd_mra)

    p = sub.add_parser("fpt", help="gain and loss first passage time distributions")
    _add_input_args(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float, help="absolute passage level (both signs are analysed)")
    g.add_argument("--rho-sigma", type=float, help="passage level as a multiple of the daily std (default 5)")
    p.add_argument("--binning", default="log", help="raw, log or log:K (K bins per decade)")
    p.add_argument("--smoothing", type=int, default=None, help="odd moving-average window in bins")
    _add_out_args(p)
    p.set_defaults(func=cmd_fpt)

    p = sub.add_parser("simulate", help="simulate the two-state market model")
    p.add_argument("--config", help="JSON or key = value parameter file")
    p.add_argument("--days", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--index", choices=models.INDEX_KINDS)
    p.add_argument("--stocks", action="store_true", help="also write per-stock price columns")
    _add_out_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a multiscale first passage experiment")
    p.add_argument("--spec", required=True, help="JSON or key = value experiment spec")
    p.add_argument("--seed", type=int, help="override the spec seed")
    _add_out_args(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    log.info("backend: %s", _accel.backend())
    if (Path(args.out) / "manifest.json").exists() and not args.force:
        print(f"error: {args.out} already holds outputs; use --force to overwrite", file=sys.stderr)
        return 1
    try:
        result = args.func(args)
    except (UsageError, wavelet.WaveletError, fpt.FptError, models.ModelError, experiments.ExperimentError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (series.SeriesError, ConfigError, FileNotFoundError, FileExistsError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "status": "ok", "out": str(args.out), **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
