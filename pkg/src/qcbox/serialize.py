"""JSON documents for processes, boxes, extensions, local operations, Fock states and reports.

Every document is an object with ``version`` and ``kind`` fields.  Complex
numbers are ``[re, im]`` pairs and floats are written with full precision, so
``load(dump(x))`` reproduces ``x`` exactly.  Keys are sorted on output.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from .causalbox import CausalBox, Port, SequenceRep, Slice
from .errors import SchemaError, SchemaVersionMismatch
from .extension import Extension, ProjectiveExtension
from .fock import FockState, OccupationState, wire
from .linalg import ComplexMatrix, ComplexVector, SpaceSpec
from .qcqc import FUTURE, LocalOperation, QcQc

SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# field access with JSON paths


def _field(doc: Any, key: str, path: str, kind: type | tuple[type, ...] | None = None):
    if not isinstance(doc, dict):
        raise SchemaError("expected an object", path)
    if key not in doc:
        raise SchemaError(f"missing field {key!r}", path)
    value = doc[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool) and bool not in _tuple(kind)):
        raise SchemaError(f"expected {_names(kind)}", f"{path}.{key}")
    return value


def _tuple(kind) -> tuple:
    return kind if isinstance(kind, tuple) else (kind,)


def _names(kind) -> str:
    return " or ".join(k.__name__ for k in _tuple(kind))


def _list(doc, key: str, path: str) -> list:
    return _field(doc, key, path, list)


def _int(doc, key: str, path: str) -> int:
    return _field(doc, key, path, int)


def _complex(value, path: str) -> complex:
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)):
        raise SchemaError("expected a [re, im] pair", path)
    return complex(float(value[0]), float(value[1]))


def _pair(z: complex) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


# --------------------------------------------------------------------------
# matrices and vectors


def _factors_to_json(space: SpaceSpec) -> list[dict]:
    return [{"label": lab, "dim": d} for lab, d in space.factors]


def _factors_from_json(items, path: str) -> SpaceSpec:
    if not isinstance(items, list):
        raise SchemaError("expected a list of factors", path)
    return SpaceSpec(tuple((_field(f, "label", f"{path}[{i}]", str), _int(f, "dim", f"{path}[{i}]"))
                           for i, f in enumerate(items)))


def _entries_from_json(items, count: int, path: str) -> np.ndarray:
    if not isinstance(items, list):
        raise SchemaError("expected a list of [re, im] pairs", path)
    if len(items) != count:
        raise SchemaError(f"expected {count} entries, found {len(items)}", path)
    return np.array([_complex(z, f"{path}[{i}]") for i, z in enumerate(items)], dtype=complex)


def matrix_to_json(m: ComplexMatrix | np.ndarray) -> dict:
    """Dense row-major matrix; labeled matrices also carry their row and column factors."""
    arr = m.entries if isinstance(m, ComplexMatrix) else np.asarray(m, dtype=complex)
    doc = {"rows": arr.shape[0], "cols": arr.shape[1], "entries": [_pair(z) for z in arr.reshape(-1)]}
    if isinstance(m, ComplexMatrix):
        doc["factors"] = _factors_to_json(m.row_space)
        doc["col_factors"] = _factors_to_json(m.col_space)
    return doc


def matrix_from_json(doc, path: str = "$") -> ComplexMatrix | np.ndarray:
    rows, cols = _int(doc, "rows", path), _int(doc, "cols", path)
    arr = _entries_from_json(_field(doc, "entries", path), rows * cols, f"{path}.entries").reshape(rows, cols)
    if "factors" not in doc:
        return arr
    rs = _factors_from_json(doc["factors"], f"{path}.factors")
    cs = _factors_from_json(doc.get("col_factors", doc["factors"]), f"{path}.col_factors")
    if (rs.dim, cs.dim) != (rows, cols):
        raise SchemaError(f"factors give shape {(rs.dim, cs.dim)}, rows/cols give {(rows, cols)}", path)
    return ComplexMatrix(rs, cs, arr)


def sparse_to_json(m) -> dict:
    c = sp.coo_matrix(m)
    c.sum_duplicates()
    order = np.lexsort((c.col, c.row))
    return {"rows": int(c.shape[0]), "cols": int(c.shape[1]),
            "nonzeros": [[int(c.row[i]), int(c.col[i]), _pair(c.data[i])] for i in order]}


def sparse_from_json(doc, path: str = "$") -> sp.csr_matrix:
    rows, cols = _int(doc, "rows", path), _int(doc, "cols", path)
    items = _list(doc, "nonzeros", path)
    r, c, v = [], [], []
    for i, item in enumerate(items):
        where = f"{path}.nonzeros[{i}]"
        if (not isinstance(item, list) or len(item) != 3
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in item[:2])):
            raise SchemaError("expected [row, col, [re, im]]", where)
        if not (0 <= item[0] < rows and 0 <= item[1] < cols):
            raise SchemaError("index out of range", where)
        r.append(item[0])
        c.append(item[1])
        v.append(_complex(item[2], f"{where}[2]"))
    return sp.csr_matrix((np.array(v, dtype=complex), (r, c)), shape=(rows, cols))


def vector_to_json(v: ComplexVector | np.ndarray) -> dict:
    arr = v.entries if isinstance(v, ComplexVector) else np.asarray(v, dtype=complex).reshape(-1)
    doc = {"entries": [_pair(z) for z in arr]}
    if isinstance(v, ComplexVector):
        doc["factors"] = _factors_to_json(v.space)
    return doc


def vector_from_json(doc, path: str = "$") -> ComplexVector | np.ndarray:
    items = _list(doc, "entries", path)
    arr = _entries_from_json(items, len(items), f"{path}.entries")
    if "factors" not in doc:
        return arr
    space = _factors_from_json(doc["factors"], f"{path}.factors")
    if space.dim != arr.size:
        raise SchemaError(f"factors give {space.dim} entries, found {arr.size}", path)
    return ComplexVector(space, arr)


# --------------------------------------------------------------------------
# processes and local operations


def _endpoint_to_json(k) -> int | str:
    return k if isinstance(k, str) else int(k)


def _endpoint_from_json(value, path: str):
    if value == FUTURE or (isinstance(value, int) and not isinstance(value, bool)):
        return value
    raise SchemaError(f"expected a party number or {FUTURE!r}", path)


def qcqc_to_json(q: QcQc) -> dict:
    ops = sorted(q.ops.items(), key=lambda kv: (sorted(kv[0][0]), kv[0][1], str(kv[0][2])))
    return {
        "name": q.name,
        "n_parties": q.n_parties,
        "dims": [list(d) for d in q.dims],
        "past_dim": q.past_dim,
        "future_dim": q.future_dim,
        "ancilla_dims": list(q.ancilla_dims),
        "ops": [{"acted": sorted(K), "from": _endpoint_to_json(k), "to": _endpoint_to_json(kn),
                 "matrix": matrix_to_json(m)} for (K, k, kn), m in ops],
    }


def qcqc_from_json(doc, path: str = "$") -> QcQc:
    ops = {}
    for i, item in enumerate(_list(doc, "ops", path)):
        where = f"{path}.ops[{i}]"
        acted = _list(item, "acted", where)
        key = (frozenset(acted), _endpoint_from_json(_field(item, "from", where), f"{where}.from"),
               _endpoint_from_json(_field(item, "to", where), f"{where}.to"))
        mat = matrix_from_json(_field(item, "matrix", where, dict), f"{where}.matrix")
        ops[key] = mat.entries if isinstance(mat, ComplexMatrix) else mat
    dims = _list(doc, "dims", path)
    for i, d in enumerate(dims):
        if not isinstance(d, list) or len(d) != 2:
            raise SchemaError("expected [d_in, d_out]", f"{path}.dims[{i}]")
    return QcQc(_int(doc, "n_parties", path), tuple(tuple(d) for d in dims), _int(doc, "past_dim", path),
                _int(doc, "future_dim", path), tuple(_list(doc, "ancilla_dims", path)), ops,
                name=doc.get("name", "qcqc"))


def local_ops_to_json(ops) -> dict:
    return {"ops": [{"party": op.party, "kraus": matrix_to_json(op.kraus)} for op in ops]}


def local_ops_from_json(doc, path: str = "$") -> list[LocalOperation]:
    out = []
    for i, item in enumerate(_list(doc, "ops", path)):
        where = f"{path}.ops[{i}]"
        out.append(LocalOperation(_int(item, "party", where),
                                  matrix_from_json(_field(item, "kraus", where, dict), f"{where}.kraus")))
    return out


def lambdas_to_json(lambdas: dict) -> dict:
    items = sorted(lambdas.items())
    return {"entries": [{"order": list(o), "index": list(idx), "amp": _pair(a)} for (o, idx), a in items]}


def lambdas_from_json(doc, path: str = "$") -> dict:
    out = {}
    for i, item in enumerate(_list(doc, "entries", path)):
        where = f"{path}.entries[{i}]"
        key = (tuple(_list(item, "order", where)), tuple(_list(item, "index", where)))
        out[key] = _complex(_field(item, "amp", where), f"{where}.amp")
    return out


# --------------------------------------------------------------------------
# Fock states


def fock_state_to_json(s: FockState) -> dict:
    terms = sorted(s.amplitudes.items(), key=lambda kv: kv[0].items)
    return {
        "truncation": s.truncation,
        "wires": [{"label": w.label, "message_dim": w.message_dim, "times": list(w.times)} for w in s.wires],
        "terms": [{"counts": [[w, t, i, c] for (w, t, i), c in key.items], "amp": _pair(a)} for key, a in terms],
    }


def fock_state_from_json(doc, path: str = "$") -> FockState:
    wires = [wire(_field(w, "label", f"{path}.wires[{i}]", str), _int(w, "message_dim", f"{path}.wires[{i}]"),
                  _list(w, "times", f"{path}.wires[{i}]"))
             for i, w in enumerate(_list(doc, "wires", path))]
    amps = {}
    for i, term in enumerate(_list(doc, "terms", path)):
        where = f"{path}.terms[{i}]"
        counts = {}
        for j, c in enumerate(_list(term, "counts", where)):
            if not isinstance(c, list) or len(c) != 4:
                raise SchemaError("expected [wire, time, index, count]", f"{where}.counts[{j}]")
            counts[(c[0], c[1], c[2])] = c[3]
        amps[OccupationState.from_counts(counts)] = _complex(_field(term, "amp", where), f"{where}.amp")
    return FockState(tuple(wires), amps, _int(doc, "truncation", path))


# --------------------------------------------------------------------------
# boxes and extensions


def port_to_json(p: Port) -> dict:
    return {"wires": [[w, d] for w, d in p.wires], "time": p.time, "truncation": p.truncation}


def port_from_json(doc, path: str) -> Port:
    wires = _list(doc, "wires", path)
    for i, w in enumerate(wires):
        if not isinstance(w, list) or len(w) != 2:
            raise SchemaError("expected [label, message dimension]", f"{path}.wires[{i}]")
    return Port(tuple(tuple(w) for w in wires), _int(doc, "time", path), _int(doc, "truncation", path))


def _ports(doc, key: str, path: str) -> list[Port]:
    return [port_from_json(p, f"{path}.{key}[{i}]") for i, p in enumerate(_list(doc, key, path))]


def box_to_json(cb: CausalBox) -> dict:
    ports = cb.in_ports + cb.out_ports
    doc = {"wires_in": [port_to_json(p) for p in cb.in_ports], "wires_out": [port_to_json(p) for p in cb.out_ports],
           "truncation": max((p.truncation for p in ports), default=0)}
    if cb.is_isometric:
        doc["isometry"] = sparse_to_json(cb.isometry)
        doc["env_dim"] = cb.env_dim
    else:
        doc["choi"] = matrix_to_json(cb.choi)
    return doc


def box_from_json(doc, path: str = "$") -> CausalBox:
    ins, outs = _ports(doc, "wires_in", path), _ports(doc, "wires_out", path)
    if "isometry" in doc:
        return CausalBox(ins, outs, isometry=sparse_from_json(doc["isometry"], f"{path}.isometry"),
                         env_dim=_int(doc, "env_dim", path))
    choi = matrix_from_json(_field(doc, "choi", path, dict), f"{path}.choi")
    if not isinstance(choi, ComplexMatrix):
        space = SpaceSpec(tuple((p.label, p.dim) for p in ins + outs))
        if choi.shape != (space.dim, space.dim):
            raise SchemaError(f"Choi matrix must be {space.dim}x{space.dim}", f"{path}.choi")
        choi = ComplexMatrix(space, space, choi)
    return CausalBox(ins, outs, choi=choi)


def _slice_to_json(s: Slice) -> dict:
    return {"in_ports": [port_to_json(p) for p in s.in_ports], "out_ports": [port_to_json(p) for p in s.out_ports],
            "mem_in": s.mem_in, "mem_out": s.mem_out, "matrix": sparse_to_json(s.matrix)}


def _slice_from_json(doc, path: str) -> Slice:
    return Slice(tuple(_ports(doc, "in_ports", path)), tuple(_ports(doc, "out_ports", path)),
                 sparse_from_json(_field(doc, "matrix", path, dict), f"{path}.matrix"),
                 _int(doc, "mem_in", path), _int(doc, "mem_out", path))


def extension_to_json(ext: Extension | ProjectiveExtension) -> dict:
    """A self-contained extension: the process, the slices, and the layout of the extra modes."""
    base = ext.base if isinstance(ext, ProjectiveExtension) else ext
    doc = {
        "variant": base.variant,
        "qcqc": qcqc_to_json(base.qcqc),
        "truncation": base.truncation,
        "readout": base.readout,
        "extra": [[k, n, e] for (k, n), e in sorted(base.extra.items())],
        "info": base.info,
        "slices": [_slice_to_json(s) for s in base.sequence.slices],
    }
    if isinstance(ext, ProjectiveExtension):
        doc["accept_in"] = [np.flatnonzero(m).tolist() for m in ext.accept_in]
        doc["accept_out"] = [np.flatnonzero(m).tolist() for m in ext.accept_out]
        doc["accept_sizes"] = [[m.size, o.size] for m, o in zip(ext.accept_in, ext.accept_out)]
    return doc


def extension_from_json(doc, path: str = "$") -> Extension | ProjectiveExtension:
    slices = tuple(_slice_from_json(s, f"{path}.slices[{i}]") for i, s in enumerate(_list(doc, "slices", path)))
    extra = {}
    for i, item in enumerate(_list(doc, "extra", path)):
        if not isinstance(item, list) or len(item) != 3:
            raise SchemaError("expected [party, slot, extra modes]", f"{path}.extra[{i}]")
        extra[(item[0], item[1])] = item[2]
    ext = Extension(_field(doc, "variant", path, str), qcqc_from_json(_field(doc, "qcqc", path, dict), f"{path}.qcqc"),
                    SequenceRep(slices), _int(doc, "truncation", path), extra, _field(doc, "readout", path, str),
                    dict(doc.get("info", {})))
    if "accept_in" not in doc:
        return ext
    sizes = _list(doc, "accept_sizes", path)
    masks_in, masks_out = [], []
    for (n_in, n_out), idx_in, idx_out in zip(sizes, _list(doc, "accept_in", path), _list(doc, "accept_out", path)):
        m_in, m_out = np.zeros(n_in, dtype=bool), np.zeros(n_out, dtype=bool)
        m_in[idx_in] = True
        m_out[idx_out] = True
        masks_in.append(m_in)
        masks_out.append(m_out)
    return ProjectiveExtension(ext, masks_in, masks_out)


# --------------------------------------------------------------------------
# documents


def _is_extension(x) -> bool:
    return isinstance(x, (Extension, ProjectiveExtension))


_WRITERS: list[tuple[str, Callable[[Any], bool], Callable[[Any], dict]]] = [
    ("qcqc", lambda x: isinstance(x, QcQc), qcqc_to_json),
    ("extension", _is_extension, extension_to_json),
    ("causal_box", lambda x: isinstance(x, CausalBox), box_to_json),
    ("fock_state", lambda x: isinstance(x, FockState), fock_state_to_json),
    ("matrix", lambda x: isinstance(x, ComplexMatrix), matrix_to_json),
    ("vector", lambda x: isinstance(x, (ComplexVector, np.ndarray)) and np.ndim(getattr(x, "entries", x)) == 1,
     vector_to_json),
    ("local_ops", lambda x: isinstance(x, (list, tuple)) and x and all(isinstance(o, LocalOperation) for o in x),
     local_ops_to_json),
]

_READERS: dict[str, Callable[[Any, str], Any]] = {
    "qcqc": qcqc_from_json,
    "extension": extension_from_json,
    "causal_box": box_from_json,
    "fock_state": fock_state_from_json,
    "matrix": matrix_from_json,
    "vector": vector_from_json,
    "local_ops": local_ops_from_json,
    "lambdas": lambdas_from_json,
    "report": lambda doc, path: doc,
}


def dump(obj, kind: str | None = None) -> dict:
    """Document for ``obj``; ``kind`` is required for reports (plain dicts) and lambdas."""
    if kind == "report":
        body = dict(obj)
    elif kind == "lambdas":
        body = lambdas_to_json(obj)
    else:
        match = next(((k, w) for k, test, w in _WRITERS if (kind is None or k == kind) and test(obj)), None)
        if match is None:
            raise TypeError(f"cannot serialize {type(obj).__name__}" + (f" as {kind!r}" if kind else ""))
        kind, writer = match
        body = writer(obj)
    return {"version": SCHEMA_VERSION, "kind": kind, **body}


def load(doc, kind: str | None = None):
    """Inverse of :func:`dump`; ``kind`` restricts the accepted document kind."""
    version = _field(doc, "version", "$")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema version {version!r} is not supported (expected {SCHEMA_VERSION})",
                                    "$.version")
    found = _field(doc, "kind", "$", str)
    if found not in _READERS:
        raise SchemaError(f"unknown kind {found!r}", "$.kind")
    if kind is not None and found != kind:
        raise SchemaError(f"expected a {kind!r} document, found {found!r}", "$.kind")
    return _READERS[found](doc, "$")


def dumps(obj, kind: str | None = None) -> str:
    return json.dumps(dump(obj, kind), sort_keys=True, separators=(",", ":"), allow_nan=False)


def loads(text: str, kind: str | None = None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"invalid JSON: {err.msg} (line {err.lineno}, column {err.colno})") from err
    return load(doc, kind)


def write(obj, path: str | Path, kind: str | None = None) -> None:
    Path(path).write_text(dumps(obj, kind) + "\n")


def read(path: str | Path, kind: str | None = None):
    return loads(Path(path).read_text(), kind)
