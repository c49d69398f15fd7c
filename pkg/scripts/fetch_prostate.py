#!/usr/bin/env python3
"""Fetch and prepare the public prostate-cancer clinical trial table.

The trial randomized 502 prostate cancer patients (stages 3 and 4) to four
diethylstilbestrol dose levels and recorded outcomes; the public file lives
in the Vanderbilt biostatistics dataset collection (now hbiostat.org).

This script selects five attributes and writes ``prostate.csv`` plus
``prostate.schema.json`` next to ``--out``.  The exact preparation applied
here (every choice is a documented convention, not part of the source data):

* ``stage``            categorical {stage3, stage4}, from ``stage``.
* ``des_level``        ordinal {low, medium, high}: placebo and 0.2 mg
                       estrogen count as ``low`` (0.2 mg was considered a
                       control-level dose), 1.0 mg is ``medium``, 5.0 mg is
                       ``high``.  From ``rx``.
* ``tumor_size_tens``  count: primary tumor area in tens of cm^2, i.e.
                       round(sz / 10).  Working in tens keeps the softplus
                       pseudo-observation scale compatible with unit noise;
                       raw cm^2 would make every distinct size its own
                       near-deterministic level.  From ``sz``.
* ``pap_log1p``        positive real: log(1 + serum prostatic acid
                       phosphatase).  The raw biomarker spans 0.1..10^4 and
                       is conventionally log-transformed; log1p keeps it
                       strictly positive.  From ``ap``.
* ``prognosis``        categorical {alive, vascular, prostatic, other}:
                       heart/vascular and cerebrovascular deaths are
                       ``vascular``, prostatic-cancer deaths ``prostatic``,
                       every other death ``other``.  From ``status``.

Missing cells stay missing (the model handles them).  Usage:

    python scripts/fetch_prostate.py --out data/
    python scripts/fetch_prostate.py --input /path/to/prostate.xls --out data/

Network fetch needs outbound HTTPS; .xls parsing needs ``xlrd``.
"""

import argparse
import io
import json
import math
import sys
import urllib.request
from pathlib import Path

URLS = [
    "https://hbiostat.org/data/repo/prostate.csv",
    "https://hbiostat.org/data/repo/prostate.xls",
]

SCHEMA = {
    "attributes": [
        {"name": "stage", "type": "cat", "labels": ["stage3", "stage4"]},
        {"name": "des_level", "type": "ord", "labels": ["low", "medium", "high"]},
        {"name": "tumor_size_tens", "type": "count"},
        {"name": "pap_log1p", "type": "posreal"},
        {"name": "prognosis", "type": "cat", "labels": ["alive", "vascular", "prostatic", "other"]},
    ]
}


def _read_raw(blob: bytes, name: str):
    import pandas as pd

    if name.endswith(".xls"):
        return pd.read_excel(io.BytesIO(blob))  # needs xlrd for legacy .xls
    return pd.read_csv(io.BytesIO(blob))


def _fetch():
    last = None
    for url in URLS:
        try:
            with urllib.request.urlopen(url, timeout=60) as resp:
                return resp.read(), url
        except Exception as exc:  # keep trying the next source
            last = exc
    raise SystemExit(f"could not download the prostate file: {last}")


def _map_rx(val) -> str:
    s = str(val).strip().lower()
    if "5" in s and "0.2" not in s and "1.0" not in s:
        return "high"
    if "1.0" in s:
        return "medium"
    if "placebo" in s or "0.2" in s:
        return "low"
    # numeric coding 1..4 (placebo, 0.2, 1.0, 5.0)
    code = int(float(s))
    return {1: "low", 2: "low", 3: "medium", 4: "high"}[code]


def _map_status(val) -> str:
    s = str(val).strip().lower()
    if s == "alive":
        return "alive"
    if "vascular" in s or "heart" in s or "cerebrovascular" in s:
        return "vascular"
    if "prostatic" in s:
        return "prostatic"
    return "other"


def prepare(df) -> list[dict]:
    import pandas as pd

    rows = []
    for _, rec in df.iterrows():
        row = {}
        row["stage"] = "" if pd.isna(rec["stage"]) else f"stage{int(rec['stage'])}"
        row["des_level"] = "" if pd.isna(rec["rx"]) else _map_rx(rec["rx"])
        row["tumor_size_tens"] = "" if pd.isna(rec["sz"]) else str(int(round(float(rec["sz"]) / 10.0)))
        row["pap_log1p"] = "" if pd.isna(rec["ap"]) else repr(math.log1p(float(rec["ap"])))
        row["prognosis"] = "" if pd.isna(rec["status"]) else _map_status(rec["status"])
        rows.append(row)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--input", help="local prostate.csv/.xls instead of downloading")
    ap.add_argument("--out", default="data", help="output directory")
    args = ap.parse_args(argv)

    if args.input:
        blob, src = Path(args.input).read_bytes(), args.input
    else:
        blob, src = _fetch()
    df = _read_raw(blob, str(src))
    for col in ("stage", "rx", "sz", "ap", "status"):
        if col not in df.columns:
            raise SystemExit(f"source file lacks expected column {col!r} (got {list(df.columns)})")
    rows = prepare(df)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [a["name"] for a in SCHEMA["attributes"]]
    csv_path = outdir / "prostate.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(row[n] for n in names) + "\n")
    with open(outdir / "prostate.schema.json", "w", encoding="utf-8") as fh:
        json.dump(SCHEMA, fh, indent=2)
        fh.write("\n")
    print(f"prepared {len(rows)} patients from {src} -> {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
