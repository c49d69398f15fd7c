"""File formats: schema JSON, data CSV, fit artifacts, reports, manifests.

All artifacts are language-neutral: CSV with RFC-4180 quoting for tabular
data and (gzip-compressed) JSON for structured results.  Fit files are
written with a fixed gzip mtime and sorted keys, so identical runs produce
byte-identical artifacts; wall-clock timings live in the run manifest only.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import json
from pathlib import Path
from typing import Union

import numpy as np

from .dataset import (
    CATEGORICAL,
    COUNT,
    LABELED_KINDS,
    ORDINAL,
    POSREAL,
    REAL,
    AttributeType,
    HeterogeneousDataset,
    Hyperparameters,
    make_dataset,
)
from .explore import EffectsReport, report_from_dict, report_to_dict
from .sampler import FitResult, RetainedSample, channel_layout
from .transforms import TransformSpec

DEFAULT_MISSING = ("", "NA")

FIT_FORMAT = "mixedlfm-fit-v1"


# --------------------------------------------------------------------------
# schema files
# --------------------------------------------------------------------------

def load_schema(path: Union[str, Path]):
    """Read a schema JSON file.

    Returns (names, types, missing_markers) where ``missing_markers[d]`` is
    the tuple of cell texts treated as missing in column d.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = doc["attributes"] if isinstance(doc, dict) else doc
    names, types, markers = [], [], []
    for rec in records:
        name = rec["name"]
        tag = rec["type"]
        if tag in ("cat", "ord"):
            labels = rec.get("labels")
            if not labels:
                raise ValueError(f"attribute {name!r}: {tag} needs a labels list")
            types.append(AttributeType(tag, tuple(labels)))
        elif tag in (REAL, POSREAL, COUNT):
            types.append(AttributeType(tag))
        else:
            raise ValueError(f"attribute {name!r}: unknown type tag {tag!r}")
        names.append(name)
        if "missing" in rec:
            markers.append(tuple({str(rec["missing"]), ""}))
        else:
            markers.append(DEFAULT_MISSING)
    if len(set(names)) != len(names):
        raise ValueError("schema attribute names must be unique")
    return tuple(names), tuple(types), tuple(markers)


def save_schema(path: Union[str, Path], names, types, markers=None):
    records = []
    for d, (name, t) in enumerate(zip(names, types)):
        rec = {"name": name, "type": t.kind}
        if t.kind in LABELED_KINDS:
            rec["labels"] = list(t.labels)
        if markers is not None and tuple(markers[d]) != DEFAULT_MISSING:
            custom = [mk for mk in markers[d] if mk != ""]
            if custom:
                rec["missing"] = custom[0]
        records.append(rec)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"attributes": records}, fh, indent=2)
        fh.write("\n")


def schema_hash(names, types) -> str:
    """Stable digest of the modeling-relevant schema content."""
    canon = [
        {"name": n, "type": t.kind, "labels": list(t.labels) if t.labels else None}
        for n, t in zip(names, types)
    ]
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# dataset CSV
# --------------------------------------------------------------------------

def load(csv_path: Union[str, Path], schema_path: Union[str, Path]) -> HeterogeneousDataset:
    """Load a CSV against a schema; header order does not matter.

    Missing markers ('' or 'NA' unless overridden) become mask entries;
    categorical/ordinal text labels map to 1-based indices in schema
    order.  Unparseable cells and unknown columns raise with location.
    """
    names, types, markers = load_schema(schema_path)
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{csv_path}: empty file")
        header = [h.strip() for h in header]
        missing_cols = [n for n in names if n not in header]
        if missing_cols:
            raise ValueError(f"{csv_path}: columns {missing_cols} not in CSV header")
        pos = {n: header.index(n) for n in names}
        raw_rows = [row for row in reader if row]

    n = len(raw_rows)
    d_count = len(names)
    mask = np.zeros((n, d_count), dtype=bool)
    columns = []
    label_maps = [
        {lab: idx + 1 for idx, lab in enumerate(t.labels)} if t.kind in LABELED_KINDS else None
        for t in types
    ]
    for d, (name, t) in enumerate(zip(names, types)):
        col = np.zeros(n, dtype=np.float64)
        for i, row in enumerate(raw_rows):
            text = row[pos[name]].strip()
            if text in markers[d]:
                mask[i, d] = True
                continue
            try:
                if t.kind in (REAL, POSREAL):
                    col[i] = float(text)
                elif t.kind == COUNT:
                    v = int(text)
                    if v < 0:
                        raise ValueError("negative count")
                    col[i] = v
                else:
                    col[i] = label_maps[d][text]
            except (ValueError, KeyError):
                raise ValueError(
                    f"{csv_path}: cannot parse cell (row {i + 1}, column {name!r}): {text!r}"
                ) from None
        columns.append(col)
    return make_dataset(columns, types, names, missing=mask)


def _format_cell(value, kind: str) -> str:
    if kind in (REAL, POSREAL):
        return repr(float(value))
    return str(int(value))


def save_dataset(dataset: HeterogeneousDataset, csv_path: Union[str, Path], labels: bool = True):
    """Write a dataset back to CSV (missing cells as empty fields).

    Labeled kinds are written as their label text when ``labels`` is set,
    else as 1-based indices.  Reals use shortest round-trip formatting.
    """
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.names)
        for i in range(dataset.n_objects):
            row = []
            for d, t in enumerate(dataset.types):
                if dataset.missing[i, d]:
                    row.append("")
                elif t.kind in LABELED_KINDS and labels:
                    row.append(t.labels[int(dataset.columns[d][i]) - 1])
                else:
                    row.append(_format_cell(dataset.columns[d][i], t.kind))
            writer.writerow(row)


# --------------------------------------------------------------------------
# fit artifacts
# --------------------------------------------------------------------------

def _spec_to_dict(spec: TransformSpec) -> dict:
    out = {"kind": spec.kind, "mu": spec.mu, "w": spec.w}
    if spec.thresholds is not None:
        out["thresholds"] = [repr(t) for t in spec.thresholds]
    if spec.n_categories is not None:
        out["n_categories"] = spec.n_categories
    return out


def _spec_from_dict(d: dict) -> TransformSpec:
    th = d.get("thresholds")
    return TransformSpec(
        d["kind"],
        mu=d.get("mu", 0.0),
        w=d.get("w", 1.0),
        thresholds=tuple(float(t) for t in th) if th is not None else None,
        n_categories=d.get("n_categories"),
    )


def _hyper_to_dict(h: Hyperparameters) -> dict:
    return {
        "alpha": h.alpha,
        "sigma_b_sq": h.sigma_b_sq,
        "sigma_u_sq": h.sigma_u_sq,
        "sample_alpha": h.sample_alpha,
        "alpha_prior": list(h.alpha_prior),
        "k_new_max": h.k_new_max,
        "k_init": h.k_init,
        "n_iterations": h.n_iterations,
        "burn_in": h.burn_in,
        "thinning": h.thinning,
        "seed": h.seed,
    }


def _hyper_from_dict(d: dict) -> Hyperparameters:
    d = dict(d)
    d["alpha_prior"] = tuple(d["alpha_prior"])
    return Hyperparameters(**d)


def _type_to_dict(t: AttributeType) -> dict:
    return {"kind": t.kind, "labels": list(t.labels) if t.labels else None}


def save_fit(fit: FitResult, path: Union[str, Path]):
    """Persist a fit as deterministic gzip JSON (no wall-time fields)."""
    doc = {
        "format": FIT_FORMAT,
        "schema_hash": schema_hash(fit.names, fit.types),
        "names": list(fit.names),
        "types": [_type_to_dict(t) for t in fit.types],
        "hyper": _hyper_to_dict(fit.hyper),
        "specs": [_spec_to_dict(s) for s in fit.specs],
        "data_ranges": [list(r) for r in fit.data_ranges],
        "trace": [repr(v) for v in fit.trace.tolist()],
        "samples": [
            {
                "z": s.z.astype(int).tolist(),
                "b": [[repr(v) for v in row] for row in s.b.tolist()],
                "thresholds": {str(d): [repr(t) for t in th] for d, th in s.thresholds.items()},
                "alpha": repr(s.alpha),
            }
            for s in fit.samples
        ],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
            gz.write(blob)


def load_fit(path: Union[str, Path]) -> tuple[FitResult, str]:
    """Load a fit artifact; returns (fit, stored schema hash)."""
    with gzip.open(path, "rb") as gz:
        doc = json.loads(gz.read().decode())
    if doc.get("format") != FIT_FORMAT:
        raise ValueError(f"{path}: not a fit artifact (format {doc.get('format')!r})")
    types = tuple(
        AttributeType(t["kind"], tuple(t["labels"]) if t["labels"] else None) for t in doc["types"]
    )
    hyper = _hyper_from_dict(doc["hyper"])
    samples = tuple(
        RetainedSample(
            z=np.asarray(s["z"], dtype=np.uint8),
            b=np.asarray([[float(v) for v in row] for row in s["b"]], dtype=np.float64),
            thresholds={int(d): tuple(float(t) for t in th) for d, th in s["thresholds"].items()},
            alpha=float(s["alpha"]),
        )
        for s in doc["samples"]
    )
    fit = FitResult(
        samples=samples,
        trace=np.asarray([float(v) for v in doc["trace"]], dtype=np.float64),
        sweep_seconds=np.zeros(len(doc["trace"])),
        specs=tuple(_spec_from_dict(s) for s in doc["specs"]),
        types=types,
        names=tuple(doc["names"]),
        hyper=hyper,
        layout=channel_layout(types),
        data_ranges=tuple((float(a), float(b)) for a, b in doc["data_ranges"]),
    )
    return fit, doc["schema_hash"]


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _pattern_slug(tag: str) -> str:
    if tag == "baseline":
        return "baseline"
    return "p" + tag.strip("()")


def write_report(report: EffectsReport, outdir: Union[str, Path]) -> list[Path]:
    """Write report.json plus one CSV per (pattern, attribute) table.

    CSV layout: value/label, probability-or-density, pattern, attribute.
    Returns the list of files written.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    jpath = outdir / "report.json"
    with open(jpath, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True)
        fh.write("\n")
    written.append(jpath)
    for table in list(report.tables) + list(report.baselines):
        fname = f"report_{table.name}_{_pattern_slug(table.tag)}.csv"
        fpath = outdir / fname
        with open(fpath, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "probability_or_density", "pattern", "attribute"])
            if table.is_discrete:
                for lab, p in zip(table.labels, table.probabilities):
                    writer.writerow([lab, repr(p), table.tag, table.name])
            else:
                for x, dens in zip(table.grid, table.density):
                    writer.writerow([repr(x), repr(dens), table.tag, table.name])
        written.append(fpath)
    return written


def read_report(path: Union[str, Path]) -> EffectsReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# trace / imputation CSVs
# --------------------------------------------------------------------------

def write_trace(fit: FitResult, path: Union[str, Path]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "joint_loglik"])
        for i, v in enumerate(fit.trace, start=1):
            writer.writerow([i, repr(float(v))])


def write_uncertainty(cells, types, names, path: Union[str, Path]):
    """Per-cell predictive summaries: entropy for discrete attributes,
    central 90% interval columns only when a continuous attribute occurs."""
    discrete = any(types[c.column].kind in (CATEGORICAL, ORDINAL, COUNT) for c in cells)
    continuous = any(types[c.column].kind in (REAL, POSREAL) for c in cells)
    header = ["row", "attribute", "value"]
    if discrete:
        header.append("entropy")
    if continuous:
        header += ["lo90", "hi90"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in cells:
            kind = types[c.column].kind
            row = [c.row, names[c.column]]
            if kind in (REAL, POSREAL):
                row.append(repr(float(c.value)))
                if discrete:
                    row.append("")
                row += [repr(c.interval[0]), repr(c.interval[1])]
            else:
                row.append(str(int(c.value)))
                if discrete:
                    row.append(repr(float(c.entropy)))
                if continuous:
                    row += ["", ""]
            writer.writerow(row)
