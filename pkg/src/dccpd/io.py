"""File formats: tensor-set / signal / solution JSON and CSV reports.

Floating point values are serialized through Python's shortest-repr float
encoding, which round-trips ``double`` values bit-exactly.  Grid and
dataset indices in files are 0-based, matching the in-memory convention.
"""

import csv
import json

import numpy as np

from .exceptions import DimensionError
from .jbss import MultiSetSignals
from .model import DcCpdProblem, DcCpdSolution

__all__ = [
    "save_problem",
    "load_problem",
    "save_signals",
    "load_signals",
    "save_solution",
    "load_solution",
    "write_csv_report",
    "CSV_COLUMNS",
]

TENSOR_SET_VERSION = 1

CSV_COLUMNS = [
    "experiment",
    "run",
    "snr_db",
    "solver",
    "epsilon",
    "iterations",
    "wall_ms",
    "seed",
]


def _encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    return {
        "shape": list(arr.shape),
        "re": arr.real.reshape(-1).tolist(),
        "im": arr.imag.reshape(-1).tolist(),
    }


def _decode_array(entry, what, expected_shape=None):
    """Rebuild an array from re/im payloads.

    The ``shape`` key is optional when the schema determines the shape;
    if both are available they must agree.
    """
    shape = tuple(entry["shape"]) if "shape" in entry else expected_shape
    if shape is None:
        raise DimensionError(f"{what}: no shape information available")
    if expected_shape is not None and shape != tuple(expected_shape):
        raise DimensionError(
            f"{what}: declared shape {shape} does not match expected {expected_shape}"
        )
    size = int(np.prod(shape)) if shape else 1
    re = np.asarray(entry["re"], dtype=float)
    im = np.asarray(entry["im"], dtype=float)
    if re.size != size or im.size != size:
        raise DimensionError(
            f"{what}: payload length {re.size}/{im.size} does not match shape {shape}"
        )
    return (re + 1j * im).reshape(shape)


def save_problem(p, path):
    """Write a grid to the tensor-set JSON format."""
    payload = {
        "version": TENSOR_SET_VERSION,
        "M": p.M,
        "dims_n": list(p.dims_n),
        "T": p.T,
        "symmetric": bool(p.symmetric),
        "tensors": [
            {"m": m, "n": n, **_encode_array(p.tensors[(m, n)])}
            for m, n in p.pairs()
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_problem(path):
    """Read a grid from the tensor-set JSON format."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != TENSOR_SET_VERSION:
        raise DimensionError(
            f"unsupported tensor-set version {payload.get('version')!r}"
        )
    dims = tuple(int(n) for n in payload["dims_n"])
    t_dim = int(payload["T"])
    tensors = {}
    for entry in payload["tensors"]:
        key = (int(entry["m"]), int(entry["n"]))
        if not (0 <= key[0] < len(dims) and 0 <= key[1] < len(dims)):
            raise DimensionError(f"tensor index {key} out of range")
        expected = (dims[key[0]], dims[key[1]], t_dim)
        tensors[key] = _decode_array(entry, f"tensor {key}", expected)
    return DcCpdProblem(
        M=int(payload["M"]),
        dims_n=dims,
        T=t_dim,
        tensors=tensors,
        symmetric=bool(payload["symmetric"]),
    )


def save_signals(sig, path):
    """Write multi-set signals to the signal JSON format."""
    payload = {
        "M": sig.M,
        "Q": sig.Q,
        "dims_n": list(sig.dims_n),
        "datasets": [
            {"m": m, **_encode_array(sig.X[m])} for m in range(sig.M)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_signals(path):
    """Read multi-set signals from the signal JSON format."""
    with open(path) as fh:
        payload = json.load(fh)
    dims = [int(n) for n in payload["dims_n"]]
    q = int(payload["Q"])
    x = {}
    for entry in payload["datasets"]:
        m = int(entry["m"])
        if not 0 <= m < len(dims):
            raise DimensionError(f"dataset index {m} out of range")
        x[m] = _decode_array(entry, f"dataset {m}", (dims[m], q))
    return MultiSetSignals(M=int(payload["M"]), X=x, Q=q)


def save_solution(sol, path):
    """Write factor matrices to the solution JSON format."""
    payload = {
        "R": sol.R,
        "M": sol.M,
        "A": [{"m": m, **_encode_array(sol.A[m])} for m in sorted(sol.A)],
        "C": [
            {"m": m, "n": n, **_encode_array(sol.C[(m, n)])}
            for (m, n) in sorted(sol.C)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_solution(path):
    """Read factor matrices from the solution JSON format."""
    with open(path) as fh:
        payload = json.load(fh)
    a = {int(e["m"]): _decode_array(e, f"A[{e['m']}]") for e in payload["A"]}
    c = {
        (int(e["m"]), int(e["n"])): _decode_array(e, f"C[{e['m']},{e['n']}]")
        for e in payload["C"]
    }
    return DcCpdSolution(R=int(payload["R"]), A=a, C=c)


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv_report(rows, path):
    """Write benchmark rows using the fixed column set and 17-digit floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row.get(col)) for col in CSV_COLUMNS])
