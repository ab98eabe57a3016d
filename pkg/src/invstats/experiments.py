"""Multiscale first-passage pipelines: resolve a series, filter it at several
levels, and compare gain and loss passage times at each one."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import fpt, models, series, wavelet
from .config import ConfigError, as_number

PRESENT_THRESHOLD = 0.30
ABSENT_THRESHOLD = 0.25
DEFAULT_LEVELS = (6, 8, 10)


class ExperimentError(ValueError):
    pass


def classify(log_ratio: float) -> str:
    a = abs(log_ratio)
    if a > PRESENT_THRESHOLD:
        return "present"
    if a < ABSENT_THRESHOLD:
        return "absent"
    return "indeterminate"


@dataclass(frozen=True)
class ExperimentSpec:
    """What to analyse and how.

    ``source`` is either a CSV path or a ``ModelParams``. The passage level is
    ``rho`` when given, otherwise ``rho_sigma`` times the daily standard
    deviation of the unfiltered series.
    """

    source: str | models.ModelParams
    levels: tuple = DEFAULT_LEVELS
    filter: str = "LA8"
    boundary: str = "reflection"
    rho: float | None = None
    rho_sigma: float = 5.0
    binning: str = "log"
    smoothing: int | None = None
    seed: int | None = None
    t_steps: int | None = None
    index: str = "price"
    raw: bool = False
    schema: series.CsvSchema = field(default_factory=series.CsvSchema)
    label: str = ""

    def __post_init__(self):
        levels = tuple(int(j) for j in self.levels)
        if not levels:
            raise ExperimentError("levels must be non-empty")
        if any(j < 1 for j in levels):
            raise ExperimentError("every level must be >= 1")
        object.__setattr__(self, "levels", levels)
        if self.rho is not None and not self.rho > 0:
            raise ExperimentError("rho must be positive (both signs are always analysed)")
        if self.rho is None and not self.rho_sigma > 0:
            raise ExperimentError("rho multiplier must be positive")
        wavelet.make_filter(self.filter)
        if self.boundary not in wavelet.BOUNDARIES:
            raise ExperimentError(f"unknown boundary {self.boundary!r}")
        fpt.parse_binning(self.binning)
        if self.is_model:
            if self.seed is None:
                raise ExperimentError("model sources need an explicit seed")
            if self.t_steps is None or self.t_steps < 1:
                raise ExperimentError("model sources need t_steps >= 1")
            if self.index not in models.INDEX_KINDS:
                raise ExperimentError(f"unknown index kind {self.index!r}")

    @property
    def is_model(self) -> bool:
        return isinstance(self.source, models.ModelParams)

    def to_mapping(self) -> dict:
        d = {
            "levels": list(self.levels),
            "filter": wavelet.make_filter(self.filter).name,
            "boundary": self.boundary,
            "rho": self.rho,
            "rho_sigma": None if self.rho is not None else self.rho_sigma,
            "binning": self.binning,
            "smoothing": self.smoothing,
            "label": self.label,
        }
        if self.is_model:
            d.update(source="model", seed=self.seed, t_steps=self.t_steps, index=self.index)
            d.update(self.source.to_dict())
        else:
            d.update(
                source=str(self.source),
                raw=self.raw,
                date_col=self.schema.date_col,
                price_col=self.schema.price_col,
                delimiter=self.schema.delimiter,
            )
        return d

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_mapping(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_mapping(cls, d: dict, base_dir: str | Path | None = None) -> "ExperimentSpec":
        source = d.get("source", d.get("input"))
        if source is None:
            raise ConfigError("spec needs a 'source' (a CSV path or 'model')")
        kwargs = {}
        if "levels" in d:
            lv = d["levels"]
            if isinstance(lv, str):
                lv = [p for p in lv.replace(";", ",").split(",") if p.strip()]
            elif isinstance(lv, (int, float)):
                lv = [lv]
            try:
                kwargs["levels"] = tuple(int(j) for j in lv)
            except (TypeError, ValueError):
                raise ConfigError(f"levels: expected integers, got {d['levels']!r}") from None
        for key in ("filter", "boundary", "binning", "index", "label"):
            if key in d:
                kwargs[key] = str(d[key])
        if d.get("rho") is not None:
            kwargs["rho"] = as_number(d["rho"], "rho")
        if d.get("rho_sigma") is not None:
            kwargs["rho_sigma"] = as_number(d["rho_sigma"], "rho_sigma")
        if d.get("smoothing") is not None:
            kwargs["smoothing"] = int(as_number(d["smoothing"], "smoothing"))
        if d.get("seed") is not None:
            kwargs["seed"] = int(as_number(d["seed"], "seed"))
        steps = d.get("t_steps", d.get("days"))
        if steps is not None:
            kwargs["t_steps"] = int(as_number(steps, "t_steps"))
        if str(source).strip().lower() == "model":
            kwargs["source"] = models.params_from_mapping(d)
        else:
            path = Path(str(source))
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            kwargs["source"] = str(path)
            kwargs["raw"] = bool(d.get("raw", False))
            kwargs["schema"] = series.CsvSchema(
                date_col=d.get("date_col", 0),
                price_col=d.get("price_col", 1),
                delimiter=str(d.get("delimiter", ",")),
            )
        return cls(**kwargs)


@dataclass
class LevelResult:
    level: int  # 0 is the unfiltered series
    gain: fpt.FptDistribution | None = None
    loss: fpt.FptDistribution | None = None
    stat: fpt.AsymmetryStat | None = None
    errors: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return "X" if self.level == 0 else f"R{self.level}"

    @property
    def classification(self) -> str | None:
        if self.stat is None:
            return None
        return classify(self.stat.log_ratio)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "name": self.name,
            "gain": None if self.gain is None else self.gain.to_dict(_smoothing(self)),
            "loss": None if self.loss is None else self.loss.to_dict(_smoothing(self)),
            "asymmetry": None if self.stat is None else self.stat.to_dict(),
            "classification": self.classification,
            "errors": list(self.errors),
        }


def _smoothing(entry: LevelResult):
    return None if entry.stat is None else entry.stat.smoothing


@dataclass
class MultiscaleReport:
    entries: dict  # level -> LevelResult
    metadata: dict

    def entry(self, name_or_level) -> LevelResult:
        if isinstance(name_or_level, str):
            name_or_level = 0 if name_or_level == "X" else int(name_or_level.lstrip("R"))
        return self.entries[name_or_level]

    def ordered(self) -> list:
        return [self.entries[k] for k in sorted(self.entries)]


def _analyse(values, rho, binning, smoothing, level, label) -> LevelResult:
    out = LevelResult(level)
    dists = {}
    for sign, direction in ((1.0, "gain"), (-1.0, "loss")):
        samples = fpt.fpt_samples(values, sign * rho)
        if len(samples.waits) == 0:
            out.errors.append(f"empty {direction}-direction sample set at {out.name} (rho={sign * rho!r})")
            continue
        dists[direction] = fpt.empirical_distribution(samples, binning, label)
    out.gain, out.loss = dists.get("gain"), dists.get("loss")
    if out.gain is not None and out.loss is not None:
        out.stat = fpt.asymmetry_from(out.gain, out.loss, smoothing)
        if not out.stat.reliable:
            out.errors.append(
                f"fewer than {fpt.MIN_RELIABLE_SAMPLES} samples in one direction at {out.name}; mode unreliable"
            )
    return out


def multiscale_fpt(
    x,
    levels=DEFAULT_LEVELS,
    filter: str = "LA8",
    boundary: str = "reflection",
    rho: float | None = None,
    rho_sigma: float = 5.0,
    binning: str = "log",
    smoothing: int | None = None,
    label: str = "",
) -> MultiscaleReport:
    """Gain/loss passage-time analysis of ``x`` and of its residuals ``R_J``.

    One level of rho, taken from the unfiltered series, is used everywhere.
    Empty sample sets are recorded on their entry; other levels still run.
    """
    x = np.asarray(getattr(x, "values", x), dtype=float)
    sigma = models.daily_sigma_of_log(x)
    if rho is None:
        rho = rho_sigma * sigma
        rho_rule = f"{rho_sigma!r}*sigma"
    else:
        rho_rule = "absolute"
    if not rho > 0:
        raise ExperimentError(f"passage level must be positive, got {rho} (is the series constant?)")
    levels = sorted(set(int(j) for j in levels))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        residuals = wavelet.highpass_residuals(x, filter, levels, boundary)
    entries = {0: _analyse(x, rho, binning, smoothing, 0, label)}
    for j in levels:
        entries[j] = _analyse(residuals[j], rho, binning, smoothing, j, label)
    n = len(x)
    flen = wavelet.make_filter(filter).length
    meta = {
        "label": label,
        "n": n,
        "filter": wavelet.make_filter(filter).name,
        "boundary": boundary,
        "levels": levels,
        "boundary_dominated_levels": [j for j in levels if (flen - 1) * (2**j - 1) >= n],
        "rho": rho,
        "rho_rule": rho_rule,
        "daily_sigma": sigma,
        "binning": fpt.canonical_binning(binning),
        "smoothing": fpt.default_smoothing(binning) if smoothing is None else int(smoothing),
        "thresholds": {"present": PRESENT_THRESHOLD, "absent": ABSENT_THRESHOLD},
        "censored": {e.name: _censoring(e) for e in entries.values()},
        "warnings": sorted({str(w.message) for w in caught}),
    }
    return MultiscaleReport(entries, meta)


def _censoring(e: LevelResult) -> dict:
    return {
        "gain": None if e.gain is None else e.gain.n_censored,
        "loss": None if e.loss is None else e.loss.n_censored,
    }


def resolve_series(spec: ExperimentSpec) -> tuple[np.ndarray, dict]:
    """The unfiltered log series the spec points at, plus provenance metadata."""
    if spec.is_model:
        path = models.simulate(spec.source, spec.t_steps, spec.seed, keep_stocks=False, index=spec.index)
        meta = {
            "source": "model",
            "seed": spec.seed,
            "t_steps": spec.t_steps,
            "index": spec.index,
            "params": spec.source.to_dict(),
            "distressed_fraction": float(np.mean(path.regimes)),
        }
        return np.log(path.index), meta
    path = Path(spec.source)
    try:
        text = path.read_text()
    except OSError as e:
        raise FileNotFoundError(f"cannot read input {path}: {e.strerror}") from None
    if spec.raw:
        values = series.parse_values(text, series.CsvSchema(price_col=spec.schema.price_col, delimiter=spec.schema.delimiter))
        return values, {"source": str(path), "raw": True}
    p = series.parse_price_series(text, spec.schema, label=spec.label or path.stem)
    meta = {
        "source": str(path),
        "raw": False,
        "first_date": p.timestamps[0].isoformat(),
        "last_date": p.timestamps[-1].isoformat(),
    }
    return series.to_log(p).values, meta


def run_multiscale_fpt(spec: ExperimentSpec) -> MultiscaleReport:
    x, source_meta = resolve_series(spec)
    label = spec.label or (Path(spec.source).stem if not spec.is_model else f"model-N{spec.source.n_stocks}")
    report = multiscale_fpt(
        x,
        spec.levels,
        spec.filter,
        spec.boundary,
        spec.rho,
        spec.rho_sigma,
        spec.binning,
        spec.smoothing,
        label,
    )
    report.metadata.update(source_meta)
    report.metadata["spec_hash"] = spec.spec_hash()
    return report


def asymmetry_emergence_curve(source, j_range, **kwargs) -> list:
    """(J, AsymmetryStat or None) for the unfiltered series (J = 0) and each R_J."""
    if isinstance(source, ExperimentSpec):
        x, _ = resolve_series(source)
        opts = dict(
            filter=source.filter,
            boundary=source.boundary,
            rho=source.rho,
            rho_sigma=source.rho_sigma,
            binning=source.binning,
            smoothing=source.smoothing,
        )
        opts.update(kwargs)
    else:
        x, opts = source, kwargs
    report = multiscale_fpt(x, list(j_range), **opts)
    return [(e.level, e.stat) for e in report.ordered()]


# -- rendering ---------------------------------------------------------------


def report_to_dict(report: MultiscaleReport) -> dict:
    return {"metadata": report.metadata, "entries": [e.to_dict() for e in report.ordered()]}


def _render_csv(report: MultiscaleReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["series", "level", "direction", "rho", "support", "probability", "bin_days"])
    for e in report.ordered():
        for direction, d in (("gain", e.gain), ("loss", e.loss)):
            if d is None:
                continue
            for s, p, k in zip(d.support.tolist(), d.probabilities.tolist(), d.bin_days.tolist()):
                w.writerow([e.name, e.level, direction, repr(d.rho), repr(s), repr(p), k])
    return out.getvalue()


def _render_svg(report: MultiscaleReport) -> str:
    entries = report.ordered()
    pw, ph, pad = 320, 220, 40
    cols = 2
    rows = math.ceil(len(entries) / cols)
    width, height = cols * (pw + pad) + pad, rows * (ph + pad) + pad
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(str(report.metadata.get('label', '')))} first passage times</title>",
    ]
    supports = [d.support for e in entries for d in (e.gain, e.loss) if d is not None]
    tmax = max((float(s.max()) for s in supports), default=10.0)
    lx_max = max(1.0, math.log10(tmax) + 0.1)
    for i, e in enumerate(entries):
        ox = pad + (i % cols) * (pw + pad)
        oy = pad + (i // cols) * (ph + pad)
        parts.append(f'<g id="level-{e.name}" transform="translate({ox},{oy})">')
        parts.append(f'<rect x="0" y="0" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        title = e.name
        if e.stat is not None:
            title += f" (log ratio {e.stat.log_ratio:+.2f})"
        parts.append(f'<text x="4" y="-6" font-size="12">{escape(title)}</text>')
        for dec in range(0, int(lx_max) + 1):
            gx = pw * dec / lx_max
            parts.append(f'<text x="{gx:.1f}" y="{ph + 14}" font-size="10">1e{dec}</text>')
        dens = [d.density for d in (e.gain, e.loss) if d is not None]
        ymax = max((float(v.max()) for v in dens), default=1.0) or 1.0
        for d, color in ((e.gain, "blue"), (e.loss, "red")):
            if d is None:
                continue
            pts = " ".join(
                f"{pw * math.log10(s) / lx_max:.2f},{ph - ph * v / ymax:.2f}"
                for s, v in zip(d.support.tolist(), d.density.tolist())
            )
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_report(report: MultiscaleReport, format: str) -> bytes:
    """Serialize as ``csv``, ``json`` or ``svg`` (gain in blue, loss in red, log time axis)."""
    fmt = format.lower()
    if fmt == "json":
        return json.dumps(report_to_dict(report), sort_keys=True).encode()
    if fmt == "csv":
        return _render_csv(report).encode()
    if fmt == "svg":
        return _render_svg(report).encode()
    raise ExperimentError(f"unsupported format {format!r}; expected csv, json or svg")


def load_report(data: bytes | str) -> MultiscaleReport:
    """Inverse of the JSON rendering."""
    d = json.loads(data)
    entries = {}
    for ed in d["entries"]:
        e = LevelResult(ed["level"], errors=list(ed["errors"]))
        e.gain = None if ed["gain"] is None else fpt.FptDistribution.from_dict(ed["gain"])
        e.loss = None if ed["loss"] is None else fpt.FptDistribution.from_dict(ed["loss"])
        a = ed["asymmetry"]
        if a is not None:
            a = {k: v for k, v in a.items() if k != "reliable"}
            e.stat = fpt.AsymmetryStat(**a)
        entries[e.level] = e
    return MultiscaleReport(entries, d["metadata"])


def write_bundle(outdir: str | Path, files: dict, spec_hash: str, force: bool = False, extra: dict | None = None) -> dict:
    """Write ``files`` (name -> bytes) and a manifest listing them.

    Refuses to touch anything when a target exists and ``force`` is false.
    """
    outdir = Path(outdir)
    targets = [outdir / name for name in files] + [outdir / "manifest.json"]
    if not force:
        existing = [str(t) for t in targets if t.exists()]
        if existing:
            raise FileExistsError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"spec_hash": spec_hash, "artifacts": []}
    for name, blob in files.items():
        (outdir / name).write_bytes(blob)
        manifest["artifacts"].append({"path": name, "sha256": hashlib.sha256(blob).hexdigest(), "bytes": len(blob)})
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
