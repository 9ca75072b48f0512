"""Text and JSON formats for datasets, covariances, reports and manifests.

Dataset text format::

    # comments start with '#', blank lines are ignored
    n p q [mean]
    <p rows of q numbers: the known mean, only if the header says 'mean'>
    <n blocks of p rows of q numbers: the observations, row-major>

Numbers are written with ``repr`` so parsing gives back the same doubles.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np

from .core import EstimateReport, KroneckerCovariance, MatrixDataset, Status
from .errors import DimensionMismatch
from .uniqueness import Classification, UniquenessReport, WPolynomial

PathLike = Union[str, Path]


class FormatError(DimensionMismatch):
    """Malformed input file."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _rows(m: np.ndarray) -> Iterable[str]:
    for row in np.atleast_2d(m):
        yield " ".join(_fmt(v) for v in row)


def format_dataset(data: MatrixDataset) -> str:
    lines = ["# kronlik dataset: header 'n p q [mean]', then matrices row-major"]
    head = f"{data.n} {data.p} {data.q}"
    if data.known_mean is not None:
        lines.append(head + " mean")
        lines.extend(_rows(data.known_mean))
    else:
        lines.append(head)
    for k, x in enumerate(data.observations):
        lines.append(f"# X_{k + 1}")
        lines.extend(_rows(x))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> MatrixDataset:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise FormatError("empty dataset file")
    head = rows[0]
    if len(head) not in (3, 4) or (len(head) == 4 and head[3] != "mean"):
        raise FormatError(f"bad header {' '.join(head)!r}; expected 'n p q [mean]'")
    try:
        n, p, q = (int(t) for t in head[:3])
    except ValueError as exc:
        raise FormatError(f"bad header {' '.join(head)!r}") from exc
    if min(n, p, q) < 1:
        raise FormatError("n, p, q must be positive")
    has_mean = len(head) == 4
    body = rows[1:]
    expected = p * (n + int(has_mean))
    if len(body) != expected:
        raise FormatError(f"expected {expected} matrix rows, found {len(body)}")
    try:
        values = np.array([[float(t) for t in r] for r in body if len(r) == q])
    except ValueError as exc:
        raise FormatError(f"non-numeric entry: {exc}") from exc
    if values.shape != (expected, q):
        raise FormatError(f"every matrix row must have {q} entries")
    mean = None
    if has_mean:
        mean, values = values[:p], values[p:]
    return MatrixDataset(values.reshape(n, p, q), mean)


def read_dataset(path: PathLike) -> MatrixDataset:
    return parse_dataset(Path(path).read_text())


def write_dataset(data: MatrixDataset, path: PathLike) -> None:
    Path(path).write_text(format_dataset(data))


def format_matrix(m: np.ndarray) -> str:
    return "\n".join(_rows(m)) + "\n"


def read_matrix(path: PathLike) -> np.ndarray:
    try:
        return np.loadtxt(path, comments="#", ndmin=2, dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_matrix(m: np.ndarray, path: PathLike) -> None:
    Path(path).write_text(format_matrix(m))


# structured (JSON-compatible) forms


def dataset_to_dict(data: MatrixDataset) -> dict:
    return {
        "n": data.n,
        "p": data.p,
        "q": data.q,
        "observations": data.observations.tolist(),
        "known_mean": None if data.known_mean is None else data.known_mean.tolist(),
    }


def dataset_from_dict(d: dict) -> MatrixDataset:
    data = MatrixDataset(np.array(d["observations"], dtype=float), d.get("known_mean"))
    if (data.n, data.p, data.q) != (d["n"], d["p"], d["q"]):
        raise FormatError("declared shape does not match observations")
    return data


def covariance_to_dict(cov: KroneckerCovariance) -> dict:
    return {"gamma": cov.gamma.tolist(), "psi": cov.psi.tolist(), "canonical": cov.canonical}


def covariance_from_dict(d: dict) -> KroneckerCovariance:
    return KroneckerCovariance(np.array(d["gamma"]), np.array(d["psi"]), bool(d.get("canonical", False)))


def estimate_to_dict(rep: EstimateReport) -> dict:
    return {
        "model": rep.model,
        "status": rep.status.value,
        "zone": rep.zone,
        "log_likelihood": rep.log_likelihood,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "covariance": covariance_to_dict(rep.covariance),
        "trace": list(rep.trace),
    }


def estimate_from_dict(d: dict) -> EstimateReport:
    return EstimateReport(
        covariance=covariance_from_dict(d["covariance"]),
        log_likelihood=d["log_likelihood"],
        iterations=d["iterations"],
        status=Status(d["status"]),
        residual=d["residual"],
        trace=list(d.get("trace", [])),
        zone=d.get("zone"),
        model=d.get("model", "general"),
    )


def uniqueness_to_dict(rep: UniquenessReport) -> dict:
    return {
        "classification": rep.classification.value,
        "v1": rep.w.v1,
        "v2": rep.w.v2,
        "v3": rep.w.v3,
        "discriminant": rep.w.discriminant,
        "interval": None if rep.interval is None else list(rep.interval),
        "unique_point": None if rep.unique_point is None else list(rep.unique_point),
        "family_loglik": rep.family_loglik,
    }


def uniqueness_from_dict(d: dict) -> UniquenessReport:
    return UniquenessReport(
        classification=Classification(d["classification"]),
        w=WPolynomial(d["v1"], d["v2"], d["v3"]),
        interval=None if d["interval"] is None else tuple(d["interval"]),
        unique_point=None if d["unique_point"] is None else tuple(d["unique_point"]),
        family_loglik=d.get("family_loglik"),
    )


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def write_curves(table: dict, path_or_buf) -> None:
    """Write a curve table as CSV with columns b, g, h1, h2, w_negative."""
    cols = ["b", "g", "h1", "h2", "w_negative"]
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(len(table["b"])):
            writer.writerow(
                [_fmt(table[c][i]) for c in cols[:4]] + [int(bool(table["w_negative"][i]))]
            )
    finally:
        if own:
            fh.close()


def read_curves(path: PathLike) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {c: np.array([float(r[c]) for r in rows]) for c in ("b", "g", "h1", "h2")}
    out["w_negative"] = np.array([r["w_negative"] == "1" for r in rows])
    return out


def file_digest(path: Optional[PathLike]) -> Optional[str]:
    if path is None:
        return None
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()

