"""Reading data tables and persisting fitted models.

Model documents are JSON. Floats are written with Python's shortest
round-trip representation, so loading a document gives back bit-identical
parameters.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import GaussianState, HmmModel
from .em import FitConfig
from .errors import DataFormatError
from .glasso import graph_of
from .selection import CRITERIA, score

SCHEMA_VERSION = 1


def read_matrix(path, delimiter=",", header=False):
    """Read a rectangular numeric table; row ``t`` is observation ``t``.

    Parameters
    ----------
    path : str or path-like
    delimiter : str
        Field separator (``","`` for CSV, ``"\\t"`` for TSV).
    header : bool
        Skip the first line.

    Returns
    -------
    ndarray, shape (n, p)

    Raises
    ------
    DataFormatError
        Empty table, ragged rows or non-numeric cells; ``line`` holds the
        1-based line number of the offending row.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if header and lineno == 1:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                bad = next(f for f in fields if not _is_number(f))
                raise DataFormatError(
                    f"{path}: line {lineno}: non-numeric cell {bad!r}", line=lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} fields, found {len(values)}",
                    line=lineno)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_matrix(path, matrix, delimiter=","):
    """Write a matrix with 17 significant digits, so it reads back exactly."""
    matrix = np.atleast_2d(np.asarray(matrix))
    fmt = "%d" if np.issubdtype(matrix.dtype, np.integer) else "%.17g"
    np.savetxt(path, matrix, fmt=fmt, delimiter=delimiter)


# -- model documents -----------------------------------------------------------

def model_to_dict(model):
    return {
        "transition": model.transition.tolist(),
        "initial": model.initial.tolist(),
        "states": [{"mean": s.mean.tolist(), "precision": s.precision.tolist()}
                   for s in model.states],
    }


def model_from_dict(d):
    states = tuple(GaussianState(np.array(s["mean"], dtype=float),
                                 np.array(s["precision"], dtype=float))
                   for s in d["states"])
    return HmmModel(states=states, transition=np.array(d["transition"], dtype=float),
                    initial=np.array(d["initial"], dtype=float))


@dataclass(eq=False)
class ModelDocument:
    """Everything needed to reuse a fitted model.

    ``config``, ``scores`` and ``termination`` are ``None`` for documents
    that describe a data-generating model rather than a fit.
    """

    n: int
    p: int
    model: HmmModel
    config: FitConfig | None = None
    scores: dict | None = None
    termination: dict | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def edges(self):
        return [sorted(graph_of(s.precision)) for s in self.model.states]

    @classmethod
    def from_fit(cls, fit):
        resp = fit.resp
        return cls(
            n=resp.n, p=fit.model.dim, model=fit.model, config=fit.config,
            scores={c: score(fit, c).total for c in CRITERIA},
            termination={"status": fit.termination, "iterations": fit.iterations,
                         "collapsed_state": fit.collapsed_state,
                         "log_likelihood": float(resp.log_likelihood),
                         "penalized_nll_trace": [float(v) for v in fit.penalized_nll_trace]})

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "n": self.n,
            "p": self.p,
            "config": asdict(self.config) if self.config is not None else None,
            "model": model_to_dict(self.model),
            "edges": [[list(e) for e in es] for es in self.edges],
            "scores": self.scores,
            "termination": self.termination,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataFormatError(f"unsupported schema version {version!r}")
        config = FitConfig(**d["config"]) if d.get("config") is not None else None
        return cls(n=int(d["n"]), p=int(d["p"]), model=model_from_dict(d["model"]),
                   config=config, scores=d.get("scores"),
                   termination=d.get("termination"), schema_version=version)


def _check_finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("documents cannot hold non-finite numbers")
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)


def dumps(obj):
    """Serialize a plain structure deterministically (sorted keys, exact floats)."""
    _check_finite(obj)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def serialize(doc):
    return dumps(doc.to_dict())


def deserialize(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed document: {exc}", line=exc.lineno) from None
    return ModelDocument.from_dict(d)


def save_document(path, doc):
    with open(path, "w") as fh:
        fh.write(serialize(doc))


def load_document(path):
    with open(path) as fh:
        return deserialize(fh.read())


def prune_trace_to_dict(trace):
    """Document for a backward-pruning run: one model document per K."""
    steps = []
    for step in trace.steps:
        steps.append({
            "K": step.K,
            "action": list(step.action) if step.action is not None else None,
            "candidates": [{"action": list(a), "score": v}
                           for a, v in step.candidates.items()],
            "scores": {c: step.scores[c].total for c in CRITERIA},
            "document": ModelDocument.from_fit(step.fit).to_dict(),
        })
    return {"schema_version": SCHEMA_VERSION, "criterion": trace.criterion,
            "selected_K": trace.selected_K, "steps": steps}


def write_records(records, stream):
    """Write one JSON object per line."""
    for rec in records:
        stream.write(json.dumps(rec, sort_keys=True) + "\n")
