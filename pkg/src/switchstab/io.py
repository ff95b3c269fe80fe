"""File formats: family, certificate, signal, report JSON and the CSV exports.

Signal and certificate files keep full float precision so they round-trip
bit-exactly; reports and CSV exports use 12 significant digits.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .certificates import CertificateSet, QuadraticCertificate
from .criteria import CriterionReport
from .family import STABLE, UNSTABLE, Subsystem, SwitchedFamily, TransitionGraph
from .signals import InvalidSignalError, SwitchingSignal


class FormatError(ValueError):
    """Malformed input file; the message names the offending field."""


def fmt(x) -> str:
    """12 significant digits, scientific notation."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.11e}"


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be an object")
    return data


def _field(data: dict, key: str, where: str):
    if key not in data:
        raise FormatError(f"{where}: missing field {key!r}")
    return data[key]


def _matrix(value, d: int, where: str) -> np.ndarray:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: not a numeric matrix") from None
    if m.ndim == 1 and m.size == d * d:
        m = m.reshape(d, d)
    if m.shape != (d, d):
        raise FormatError(f"{where}: expected {d}x{d} matrix, got shape {m.shape}")
    return m


# family


def family_to_dict(family: SwitchedFamily) -> dict:
    return {
        "dimension": family.dimension,
        "subsystems": [
            {"id": s.id, "class": s.declared_class, "matrix": s.matrix.tolist()} for s in family.subsystems
        ],
        "edges": [list(e) for e in family.graph.sorted_edges()],
    }


def family_from_dict(data: dict) -> SwitchedFamily:
    d = _field(data, "dimension", "family")
    if not isinstance(d, int) or d < 1:
        raise FormatError("family.dimension: must be a positive integer")
    subs_raw = _field(data, "subsystems", "family")
    if not isinstance(subs_raw, list) or not subs_raw:
        raise FormatError("family.subsystems: must be a non-empty array")
    subs = []
    for k, item in enumerate(subs_raw):
        where = f"family.subsystems[{k}]"
        sid = _field(item, "id", where)
        cls = _field(item, "class", where)
        if cls not in (STABLE, UNSTABLE):
            raise FormatError(f"{where}.class: expected 'stable' or 'unstable', got {cls!r}")
        subs.append(Subsystem(int(sid), _matrix(_field(item, "matrix", where), d, f"{where}.matrix"), cls))
    ids = sorted(s.id for s in subs)
    if ids != list(range(1, len(subs) + 1)):
        raise FormatError(f"family.subsystems: ids must be 1..{len(subs)}, got {ids}")
    subs.sort(key=lambda s: s.id)
    edges = _field(data, "edges", "family")
    try:
        edge_set = frozenset((int(i), int(j)) for i, j in edges)
    except (TypeError, ValueError):
        raise FormatError("family.edges: expected an array of [i, j] pairs") from None
    stable = frozenset(s.id for s in subs if s.declared_class == STABLE)
    unstable = frozenset(s.id for s in subs if s.declared_class == UNSTABLE)
    return SwitchedFamily(tuple(subs), d, TransitionGraph(len(subs), edge_set), stable, unstable)


def read_family(path) -> SwitchedFamily:
    return family_from_dict(_load_json(path))


def write_family(family: SwitchedFamily, path) -> None:
    _write_json(family_to_dict(family), path)


# certificates


def certs_to_dict(cert_set: CertificateSet) -> dict:
    return {
        "certs": [
            {"id": i, "lambda": c.lam, "P": c.P.tolist()} for i, c in sorted(cert_set.certs.items())
        ],
        "mu": [{"from": i, "to": j, "value": v} for (i, j), v in sorted(cert_set.mu.items())],
    }


def certs_from_dict(data: dict) -> CertificateSet:
    certs = {}
    for k, item in enumerate(_field(data, "certs", "certificates")):
        where = f"certificates.certs[{k}]"
        i = int(_field(item, "id", where))
        P = np.asarray(_field(item, "P", where), dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise FormatError(f"{where}.P: not a square matrix")
        certs[i] = QuadraticCertificate(i, P, float(_field(item, "lambda", where)))
    mu = {}
    for k, item in enumerate(_field(data, "mu", "certificates")):
        where = f"certificates.mu[{k}]"
        mu[(int(_field(item, "from", where)), int(_field(item, "to", where)))] = float(_field(item, "value", where))
    return CertificateSet(certs, mu)


def read_certs(path) -> CertificateSet:
    return certs_from_dict(_load_json(path))


def write_certs(cert_set: CertificateSet, path) -> None:
    _write_json(certs_to_dict(cert_set), path)


# signals


def read_signal(path) -> SwitchingSignal:
    data = _load_json(path)
    try:
        return SwitchingSignal.from_dict(data)
    except InvalidSignalError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_signal(signal: SwitchingSignal, path) -> None:
    _write_json(signal.to_dict(), path)


def _write_json(data: dict, path) -> None:
    # json writes floats with repr, the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


# reports


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(fmt(value)) if math.isfinite(value) else fmt(value)
    return value


def report_to_dict(report: CriterionReport) -> dict:
    return _clean(report.to_dict())


def write_report(report: CriterionReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n")


def read_report(path) -> dict:
    data = _load_json(path)
    for key in ("criterion", "satisfied", "margin"):
        _field(data, key, "report")
    return data


# CSV


def csv_text(header: list[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (int, np.integer, str)) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_text(csv_text(header, rows))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], np.array(rows[1:], dtype=float)


def stats_rows(signal: SwitchingSignal, graph, ts):
    """Header and rows for the statistics export at sample times ``ts``."""
    from .criteria import density_samples

    d = density_samples(signal, graph, ts)
    edges = graph.sorted_edges()
    header = ["t", "N", "nu"] + [f"eta_{j}" for j in range(1, graph.n + 1)] + [f"rho_{k}_{l}" for k, l in edges]
    rows = []
    for i, t in enumerate(d["t"]):
        row = [t, int(d["N"][i]), d["nu"][i]]
        row += [d["eta"][j][i] for j in range(1, graph.n + 1)]
        row += [d["rho"][e][i] for e in edges]
        rows.append(row)
    return header, rows


def trace_rows(signal: SwitchingSignal, cert_set: CertificateSet, partition, graph, ts):
    from .criteria import composite_density, psi

    ts = np.asarray(ts, dtype=float)
    p = psi(signal, cert_set, ts)
    dens = composite_density(signal, cert_set, partition, graph, ts)
    return ["t", "psi", "Psi"], [[t, a, b] for t, a, b in zip(ts, p, dens)]
