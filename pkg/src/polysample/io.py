"""Reading and writing polytopes, MPS input, and sample/report output.

Native polytope files are plain UTF-8 text::

    #form K2
    #dims d n k
    #A
    row col value        (0-indexed, one stored entry per line)
    #b
    value                (one per line)

Values are written with ``repr``, the shortest decimal that reads back to
the same double, so a file round trip is exact. For ``K1`` files the header
is ``#dims d 0 k`` with ``A`` of shape ``k x d`` (``A v <= b``).

The MPS reader accepts whitespace-separated (free) MPS with the sections
NAME, ROWS, COLUMNS, RHS, BOUNDS and ENDATA. RANGES and integer markers are
rejected.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MpsParseError, PolytopeFormatError
from .model import ConstrainedPolytope, FullDimPolytope

__all__ = [
    "dumps_polytope",
    "loads_polytope",
    "write_polytope",
    "read_polytope",
    "MpsModel",
    "MpsConversion",
    "parse_mps",
    "read_mps",
    "convert_mps",
    "mps_to_constrained",
    "write_samples_csv",
    "read_samples_csv",
    "write_report_json",
    "json_ready",
]


# ---------------------------------------------------------------------------
# native format


def dumps_polytope(p) -> str:
    if isinstance(p, ConstrainedPolytope):
        lines = ["#form K2", f"#dims {p.d} {p.n} {p.k}", "#A"]
        coo = p.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        rows, cols, vals = coo.row[order], coo.col[order], coo.data[order]
    elif isinstance(p, FullDimPolytope):
        lines = ["#form K1", f"#dims {p.dim} 0 {p.k}", "#A"]
        rows, cols = np.nonzero(p.A)
        vals = p.A[rows, cols]
    else:
        raise TypeError("expected a ConstrainedPolytope or FullDimPolytope")
    lines += [f"{int(i)} {int(j)} {float(v)!r}" for i, j, v in zip(rows, cols, vals)]
    lines.append("#b")
    lines += [repr(float(v)) for v in p.b]
    return "\n".join(lines) + "\n"


def loads_polytope(text: str):
    form = dims = None
    section = None
    trip, bvals = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tok = line.split()
            tag = tok[0]
            if tag == "#form":
                if len(tok) != 2 or tok[1] not in ("K1", "K2"):
                    raise PolytopeFormatError("form must be K1 or K2", lineno)
                form = tok[1]
            elif tag == "#dims":
                try:
                    dims = tuple(int(t) for t in tok[1:])
                except ValueError:
                    dims = ()
                if len(dims) != 3 or min(dims) < 0:
                    raise PolytopeFormatError("#dims needs three nonnegative integers d n k", lineno)
            elif tag in ("#A", "#b"):
                section = tag
            else:
                raise PolytopeFormatError(f"unknown section {tag!r}", lineno)
            continue
        tok = line.split()
        try:
            if section == "#A" and len(tok) == 3:
                trip.append((int(tok[0]), int(tok[1]), float(tok[2])))
            elif section == "#b" and len(tok) == 1:
                bvals.append(float(tok[0]))
            else:
                raise ValueError
        except ValueError:
            raise PolytopeFormatError(f"cannot read {line!r}", lineno) from None
    if form is None or dims is None:
        raise PolytopeFormatError("missing #form or #dims header")
    d, n, k = dims
    nrows = n if form == "K2" else k
    if len(bvals) != nrows:
        raise PolytopeFormatError(f"expected {nrows} values in #b, found {len(bvals)}")
    r = np.array([t[0] for t in trip], dtype=int)
    c = np.array([t[1] for t in trip], dtype=int)
    v = np.array([t[2] for t in trip], dtype=float)
    if trip and (r.min() < 0 or r.max() >= nrows or c.min() < 0 or c.max() >= d):
        raise PolytopeFormatError(f"matrix entry outside the declared {nrows} x {d} shape")
    if trip and np.unique(r * d + c).size != r.size:
        raise PolytopeFormatError("duplicate matrix entry")
    A = sp.csc_matrix((v, (r, c)), shape=(nrows, d))
    if form == "K2":
        return ConstrainedPolytope(A, np.array(bvals), k)
    return FullDimPolytope(A.toarray(), np.array(bvals))


def write_polytope(p, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_polytope(p))


def read_polytope(path):
    with open(path, encoding="utf-8") as f:
        return loads_polytope(f.read())


# ---------------------------------------------------------------------------
# MPS


@dataclass
class MpsModel:
    name: str = ""
    rows: list = field(default_factory=list)  # (type, name), objective included
    columns: list = field(default_factory=list)  # (column, row, value)
    rhs: list = field(default_factory=list)  # (row, value)
    bounds: list = field(default_factory=list)  # (type, column, value or None)

    @property
    def objective(self):
        return next(name for kind, name in self.rows if kind == "N")

    @property
    def column_names(self):
        seen = {}
        for col, _, _ in self.columns:
            seen.setdefault(col, None)
        return list(seen)


_SECTIONS = ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES", "ENDATA", "OBJSENSE")
_BOUND_TYPES = ("LO", "UP", "FX", "FR", "MI", "PL")
_NO_VALUE = ("FR", "MI", "PL")


def _number(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise MpsParseError(f"expected a number, found {tok!r}", lineno) from None


def parse_mps(text: str) -> MpsModel:
    """Parse free-format MPS text into a :class:`MpsModel`."""
    m = MpsModel()
    section = None
    row_type = {}
    entries, rhs_seen, bound_seen = set(), set(), set()
    columns_done = set()
    last_col = None
    seen_sections = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head not in _SECTIONS:
                raise MpsParseError(f"unknown section {tok[0]!r}", lineno)
            if head == "RANGES":
                raise MpsParseError("RANGES section is not supported", lineno)
            if head == "OBJSENSE":
                raise MpsParseError("OBJSENSE section is not supported", lineno)
            if head in seen_sections:
                raise MpsParseError(f"duplicate section {head}", lineno)
            seen_sections.add(head)
            section = head
            if head == "NAME":
                m.name = tok[1] if len(tok) > 1 else ""
            if head == "ENDATA":
                break
            continue
        if section == "ROWS":
            if len(tok) != 2 or tok[0].upper() not in ("N", "E", "L", "G"):
                raise MpsParseError(f"bad row record {raw.strip()!r}", lineno)
            kind, name = tok[0].upper(), tok[1]
            if name in row_type:
                raise MpsParseError(f"duplicate row {name!r}", lineno)
            row_type[name] = kind
            m.rows.append((kind, name))
        elif section == "COLUMNS":
            if "'MARKER'" in tok or "MARKER" in tok:
                raise MpsParseError("integer markers are not supported", lineno)
            if len(tok) not in (3, 5):
                raise MpsParseError(f"bad column record {raw.strip()!r}", lineno)
            col = tok[0]
            if col != last_col:
                if col in columns_done:
                    raise MpsParseError(f"column {col!r} is not contiguous", lineno)
                if last_col is not None:
                    columns_done.add(last_col)
                last_col = col
            for row, val in zip(tok[1::2], tok[2::2]):
                if row not in row_type:
                    raise MpsParseError(f"column {col!r} refers to undeclared row {row!r}", lineno)
                if (col, row) in entries:
                    raise MpsParseError(f"duplicate entry for column {col!r}, row {row!r}", lineno)
                entries.add((col, row))
                m.columns.append((col, row, _number(val, lineno)))
        elif section == "RHS":
            # an odd token count means the record starts with the RHS set name
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            if len(pairs) not in (2, 4):
                raise MpsParseError(f"bad RHS record {raw.strip()!r}", lineno)
            for row, val in zip(pairs[::2], pairs[1::2]):
                if row not in row_type:
                    raise MpsParseError(f"RHS refers to undeclared row {row!r}", lineno)
                if row in rhs_seen:
                    raise MpsParseError(f"duplicate RHS for row {row!r}", lineno)
                rhs_seen.add(row)
                m.rhs.append((row, _number(val, lineno)))
        elif section == "BOUNDS":
            kind = tok[0].upper()
            if kind not in _BOUND_TYPES:
                raise MpsParseError(f"unsupported bound type {tok[0]!r}", lineno)
            want = 3 if kind in _NO_VALUE else 4
            if len(tok) == want - 1:
                tok = [tok[0], ""] + tok[1:]  # no bound set name
            if len(tok) != want:
                raise MpsParseError(f"bad bound record {raw.strip()!r}", lineno)
            col = tok[2]
            if col not in columns_done and col != last_col:
                raise MpsParseError(f"bound refers to undeclared column {col!r}", lineno)
            if (kind, col) in bound_seen:
                raise MpsParseError(f"duplicate {kind} bound for column {col!r}", lineno)
            bound_seen.add((kind, col))
            m.bounds.append((kind, col, None if kind in _NO_VALUE else _number(tok[3], lineno)))
        else:
            raise MpsParseError("data line outside any section", lineno)
    for need in ("ROWS", "COLUMNS", "RHS"):
        if need not in seen_sections:
            raise MpsParseError(f"missing {need} section")
    n_obj = sum(1 for kind, _ in m.rows if kind == "N")
    if n_obj != 1:
        raise MpsParseError(f"expected exactly one objective (N) row, found {n_obj}")
    return m


def read_mps(path) -> MpsModel:
    with open(path, encoding="utf-8") as f:
        return parse_mps(f.read())


@dataclass(frozen=True, eq=False)
class MpsConversion:
    """Constrained polytope of an MPS model and the map back to its variables.

    ``original = T @ x + offset`` for a point ``x`` of ``polytope``.
    """

    polytope: ConstrainedPolytope
    T: sp.csr_matrix
    offset: np.ndarray
    variable_names: list
    coordinate_labels: list

    def to_original(self, x):
        x = np.asarray(x, dtype=float)
        return (self.T @ x.T).T + self.offset


def convert_mps(m: MpsModel) -> MpsConversion:
    """Rewrite the feasible set of ``m`` as ``{x : A x = b, x[-k:] >= 0}``.

    * E rows are kept; L and G rows get a nonnegative slack.
    * A variable with lower bound ``l`` becomes ``l + y`` with ``y >= 0``; a finite
      upper bound ``u`` adds the row ``y + t = u - l`` with a slack ``t >= 0``.
    * A variable with only an upper bound ``u`` becomes ``u - y``, ``y >= 0``.
    * Free variables (FR, or MI without UP) stay free and go to the leading block.
    * A fixed variable (FX) stays free and gets the equality row ``x = value``.

    The objective row is dropped. Default bounds are ``[0, inf)``.
    """
    names = m.column_names
    index = {c: j for j, c in enumerate(names)}
    nv = len(names)
    lo = np.zeros(nv)
    up = np.full(nv, np.inf)
    fixed = np.full(nv, np.nan)
    for kind, col, val in m.bounds:
        j = index[col]
        if kind == "LO":
            lo[j] = val
        elif kind == "UP":
            up[j] = val
        elif kind == "FX":
            fixed[j] = val
        elif kind == "FR":
            lo[j], up[j] = -np.inf, np.inf
        elif kind == "MI":
            lo[j] = -np.inf
        elif kind == "PL":
            up[j] = np.inf

    cons = [(kind, name) for kind, name in m.rows if kind != "N"]
    row_index = {name: i for i, (_, name) in enumerate(cons)}
    nr = len(cons)
    rr, cc, vv = [], [], []
    for col, row, val in m.columns:
        if row in row_index:
            rr.append(row_index[row])
            cc.append(index[col])
            vv.append(val)
    A0 = sp.csr_matrix((vv, (rr, cc)), shape=(nr, nv)).toarray()
    b0 = np.zeros(nr)
    for row, val in m.rhs:
        if row in row_index:
            b0[row_index[row]] = val

    # each new coordinate: (kind, label); original j = scale * coordinate + shift
    free_cols, tail_cols = [], []  # lists of column vectors over the rows built below
    free_lab, tail_lab = [], []
    extra_rows = []  # (coefficient dict over new coordinates, rhs)
    T_entries = []  # (original j, ("free"|"tail", position), coefficient)
    offset = np.zeros(nv)
    b = b0.copy()
    for j in range(nv):
        a = A0[:, j]
        if not np.isnan(fixed[j]):
            free_cols.append(a)
            free_lab.append(names[j])
            T_entries.append((j, ("free", len(free_cols) - 1), 1.0))
            extra_rows.append(({("free", len(free_cols) - 1): 1.0}, fixed[j]))
        elif np.isfinite(lo[j]):
            if up[j] < lo[j]:
                raise MpsParseError(f"column {names[j]!r} has upper bound below lower bound")
            tail_cols.append(a)
            tail_lab.append(names[j])
            pos = ("tail", len(tail_cols) - 1)
            T_entries.append((j, pos, 1.0))
            offset[j] = lo[j]
            b -= a * lo[j]
            if np.isfinite(up[j]):
                tail_cols.append(np.zeros(nr))
                tail_lab.append(f"{names[j]}:upper_slack")
                extra_rows.append(({pos: 1.0, ("tail", len(tail_cols) - 1): 1.0}, up[j] - lo[j]))
        elif np.isfinite(up[j]):
            tail_cols.append(-a)
            tail_lab.append(names[j])
            T_entries.append((j, ("tail", len(tail_cols) - 1), -1.0))
            offset[j] = up[j]
            b -= a * up[j]
        else:
            free_cols.append(a)
            free_lab.append(names[j])
            T_entries.append((j, ("free", len(free_cols) - 1), 1.0))
    for i, (kind, name) in enumerate(cons):
        if kind in ("L", "G"):
            s = np.zeros(nr)
            s[i] = 1.0 if kind == "L" else -1.0
            tail_cols.append(s)
            tail_lab.append(f"{name}:slack")

    L, k = len(free_cols), len(tail_cols)
    d = L + k

    def pos_index(pos):
        return pos[1] if pos[0] == "free" else L + pos[1]

    top = np.zeros((nr, d))
    for i, col in enumerate(free_cols):
        top[:, i] = col
    for i, col in enumerate(tail_cols):
        top[:, L + i] = col[:nr] if col.size >= nr else np.pad(col, (0, nr - col.size))
    bottom = np.zeros((len(extra_rows), d))
    rhs_extra = np.zeros(len(extra_rows))
    for r, (coef, val) in enumerate(extra_rows):
        for pos, c in coef.items():
            bottom[r, pos_index(pos)] = c
        rhs_extra[r] = val
    A = np.vstack([top, bottom])
    bb = np.concatenate([b, rhs_extra])
    T = sp.csr_matrix(
        ([c for _, _, c in T_entries],
         ([j for j, _, _ in T_entries], [pos_index(pos) for _, pos, _ in T_entries])),
        shape=(nv, d),
    )
    poly = ConstrainedPolytope(sp.csc_matrix(A), bb, k)
    return MpsConversion(poly, T, offset, names, free_lab + tail_lab)


def mps_to_constrained(m: MpsModel) -> ConstrainedPolytope:
    return convert_mps(m).polytope


# ---------------------------------------------------------------------------
# results


def write_samples_csv(chain, path, labels=None):
    """One row per kept sample, 17 significant digits; a header-only file for empty chains."""
    X = np.asarray(getattr(chain, "samples", chain), dtype=float)
    if X.ndim != 2:
        raise ValueError("samples must be a matrix")
    labels = [f"x{j}" for j in range(X.shape[1])] if labels is None else list(labels)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(labels)
        for row in X:
            w.writerow([f"{v:.17g}" for v in row])


def read_samples_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    return np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))


def json_ready(obj):
    """Convert numpy values to plain Python; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_report_json(report, path):
    """Write a report (anything with ``to_dict`` or a mapping) as JSON with sorted keys."""
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(json_ready(data), f, indent=2, sort_keys=True)
        f.write("\n")
