"""JSON interchange for CVQP instances.

The on-disk format mirrors CvqpProblem field for field.  Matrices are
nested row-major lists; P may instead be {"diag": [...]} for a diagonal
quadratic cost.  Infinite bounds are spelled as the strings "inf" and
"-inf" since JSON has no literal for them.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .core import CvqpProblem

__all__ = ["problem_to_dict", "problem_from_dict", "dump_problem", "load_problem"]

_REQUIRED = ("P", "q", "A", "B", "l", "u", "beta", "kappa")


def _encode_bound(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _decode_bound(x) -> float:
    if isinstance(x, str):
        if x not in ("inf", "-inf"):
            raise ValueError(f"bad bound string {x!r}; use 'inf' or '-inf'")
        return float(x)
    return float(x)


def problem_to_dict(problem: CvqpProblem) -> dict:
    if problem.P.ndim == 1:
        P = {"diag": problem.P.tolist()}
    else:
        P = problem.P.tolist()
    return {
        "P": P,
        "q": problem.q.tolist(),
        "A": problem.A.tolist(),
        "B": problem.B.tolist(),
        "l": [_encode_bound(x) for x in problem.l.tolist()],
        "u": [_encode_bound(x) for x in problem.u.tolist()],
        "beta": problem.beta,
        "kappa": problem.kappa,
    }


def problem_from_dict(data: dict) -> CvqpProblem:
    if not isinstance(data, dict):
        raise ValueError("problem document must be a JSON object")
    missing = [key for key in _REQUIRED if key not in data]
    if missing:
        raise ValueError(f"problem document missing keys: {', '.join(missing)}")

    raw_P = data["P"]
    if isinstance(raw_P, dict):
        if set(raw_P) != {"diag"}:
            raise ValueError("P object form must have exactly the key 'diag'")
        P = np.asarray(raw_P["diag"], dtype=float)
    else:
        P = np.asarray(raw_P, dtype=float)

    q = np.asarray(data["q"], dtype=float)
    n = q.shape[0] if q.ndim == 1 else 0

    def matrix(key: str) -> np.ndarray:
        arr = np.asarray(data[key], dtype=float)
        if arr.size == 0:
            # An empty list means no rows; give it a (0, n) shape so the
            # problem still validates.
            return np.zeros((0, n))
        return arr

    return CvqpProblem(
        P=P,
        q=q,
        A=matrix("A"),
        B=matrix("B"),
        l=np.asarray([_decode_bound(x) for x in data["l"]], dtype=float),
        u=np.asarray([_decode_bound(x) for x in data["u"]], dtype=float),
        beta=float(data["beta"]),
        kappa=float(data["kappa"]),
    )


def dump_problem(problem: CvqpProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh)
        fh.write("\n")


def load_problem(path) -> CvqpProblem:
    with open(path) as fh:
        data = json.load(fh)
    return problem_from_dict(data)
