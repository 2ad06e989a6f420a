"""Column-typed observation tables and their delimited text format.

File layout (comma separated)::

    id,T1,C,O1
    integer|id,discrete:2|treatment,discrete:3|covariate,continuous|outcome
    0,1,2,0.4312
    ...

The first line names the columns, the second carries ``type|role`` for each
column. Types are ``discrete:<arity>`` (states ``0..arity-1``),
``continuous`` and ``integer``. Roles are ``treatment``, ``outcome``,
``covariate`` and ``id``.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

ROLES = ("treatment", "outcome", "covariate", "id")
KINDS = ("discrete", "continuous", "integer")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    kind: str
    arity: int | None = None
    role: str = "covariate"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"unknown column type {self.kind!r}")
        if self.kind == "discrete":
            if self.arity is None or int(self.arity) < 2:
                raise DatasetError("discrete columns need arity >= 2")
        elif self.arity is not None:
            raise DatasetError(f"{self.kind} columns take no arity")
        if self.role not in ROLES:
            raise DatasetError(f"unknown role {self.role!r}")

    @property
    def annotation(self) -> str:
        t = f"discrete:{self.arity}" if self.kind == "discrete" else self.kind
        return f"{t}|{self.role}"

    @classmethod
    def parse(cls, text: str) -> "ColumnSpec":
        text = text.strip()
        type_part, _, role = text.partition("|")
        role = role.strip() or "covariate"
        kind, _, arity = type_part.strip().partition(":")
        try:
            return cls(kind, int(arity) if arity else None, role)
        except ValueError as exc:
            raise DatasetError(f"bad column annotation {text!r}: {exc}") from None


def discrete(arity, role="covariate"):
    return ColumnSpec("discrete", int(arity), role)


def continuous(role="covariate"):
    return ColumnSpec("continuous", None, role)


def integer(role="covariate"):
    return ColumnSpec("integer", None, role)


class Dataset:
    """Named, typed columns of equal length plus a role per column.

    Discrete and integer columns are stored as ``int64`` arrays, continuous
    columns as ``float64``.
    """

    def __init__(self, columns: Mapping[str, Sequence], specs: Mapping[str, ColumnSpec]):
        names = list(columns)
        if set(names) != set(specs):
            raise DatasetError("columns and specs name different variables")
        lengths = {len(columns[c]) for c in names}
        if len(lengths) > 1:
            raise DatasetError(f"ragged columns: lengths {sorted(lengths)}")
        self._names = tuple(names)
        self._specs = {c: specs[c] for c in names}
        self._cols = {}
        for c in names:
            spec = specs[c]
            if spec.kind == "continuous":
                arr = np.asarray(columns[c], dtype=float)
            else:
                arr = np.asarray(columns[c])
                if arr.size and not np.issubdtype(arr.dtype, np.integer):
                    if not np.all(np.mod(arr, 1) == 0):
                        raise DatasetError(f"column {c!r} holds non-integer values")
                arr = arr.astype(np.int64)
            if spec.kind == "discrete" and arr.size:
                bad = np.flatnonzero((arr < 0) | (arr >= spec.arity))
                if bad.size:
                    i = int(bad[0])
                    raise DatasetError(
                        f"column {c!r} row {i}: value {arr[i]} outside arity {spec.arity}"
                    )
            arr.setflags(write=False)
            self._cols[c] = arr
        self._n = lengths.pop() if lengths else 0

    # access ---------------------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def n_rows(self) -> int:
        return self._n

    def __len__(self):
        return self._n

    def __contains__(self, name):
        return name in self._cols

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self._cols[name]
        except KeyError:
            raise DatasetError(f"no column {name!r}") from None

    def spec(self, name) -> ColumnSpec:
        if name not in self._specs:
            raise DatasetError(f"no column {name!r}")
        return self._specs[name]

    @property
    def specs(self) -> dict[str, ColumnSpec]:
        return dict(self._specs)

    @property
    def roles(self) -> dict[str, str]:
        return {c: s.role for c, s in self._specs.items()}

    def with_role(self, role) -> list[str]:
        return [c for c in self._names if self._specs[c].role == role]

    def arity(self, name) -> int:
        s = self.spec(name)
        if s.kind != "discrete":
            raise DatasetError(f"column {name!r} is not discrete")
        return s.arity

    def matrix(self, names: Sequence[str], dtype=None) -> np.ndarray:
        return np.column_stack([self[c] for c in names]).astype(dtype or float, copy=False)

    def require_discrete(self, names):
        for c in names:
            if self.spec(c).kind != "discrete":
                raise DatasetError(f"column {c!r} is {self.spec(c).kind}, expected discrete")

    # derived datasets -------------------------------------------------------
    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset({c: self._cols[c][rows] for c in self._names}, self._specs)

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset({c: self[c] for c in names}, {c: self.spec(c) for c in names})

    def drop(self, names) -> "Dataset":
        names = set(names)
        return self.select([c for c in self._names if c not in names])

    def relabel_roles(self, roles: Mapping[str, str]) -> "Dataset":
        specs = {
            c: ColumnSpec(s.kind, s.arity, roles.get(c, s.role)) for c, s in self._specs.items()
        }
        return Dataset(self._cols, specs)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self._names == other._names
            and self._specs == other._specs
            and all(np.array_equal(self._cols[c], other._cols[c]) for c in self._names)
        )

    def __repr__(self):
        cols = ", ".join(f"{c}:{self._specs[c].annotation}" for c in self._names)
        return f"Dataset(n={self._n}, [{cols}])"

    # text format ------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self._names)
        w.writerow([self._specs[c].annotation for c in self._names])
        cols = [self._format_column(c) for c in self._names]
        w.writerows(zip(*cols))
        return buf.getvalue()

    def _format_column(self, c):
        arr = self._cols[c]
        if self._specs[c].kind == "continuous":
            return [repr(float(x)) for x in arr]
        return [str(int(x)) for x in arr]

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _parse_value(tok, spec):
    tok = tok.strip()
    if spec.kind == "continuous":
        x = float(tok)
        if math.isnan(x):
            raise ValueError("NaN")
        return x
    x = int(tok)
    if spec.kind == "discrete" and not 0 <= x < spec.arity:
        raise ValueError(f"value {x} outside arity {spec.arity}")
    return x


def parse_dataset(text: str, schema: Mapping[str, ColumnSpec | str] | None = None) -> Dataset:
    """Parse the delimited format.

    With ``schema`` the file carries only the name header and ``schema``
    supplies each column's type and role (for externally produced CSVs).
    Row-level problems are collected and reported together, first ten shown.
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(t.strip() for t in r)]
    if not rows:
        raise DatasetError("empty file")
    names = [n.strip() for n in rows[0]]
    if len(set(names)) != len(names):
        raise DatasetError("duplicate column names")
    if schema is None:
        if len(rows) < 2:
            raise DatasetError("missing type/role header line")
        if len(rows[1]) != len(names):
            raise DatasetError("type/role header has wrong number of fields")
        specs = {n: ColumnSpec.parse(a) for n, a in zip(names, rows[1])}
        body, first_line = rows[2:], 3
    else:
        missing = [n for n in names if n not in schema]
        if missing:
            raise DatasetError(f"schema lacks columns {missing}")
        specs = {
            n: schema[n] if isinstance(schema[n], ColumnSpec) else ColumnSpec.parse(schema[n])
            for n in names
        }
        body, first_line = rows[1:], 2
    values = {n: [] for n in names}
    problems = []
    for i, row in enumerate(body):
        lineno = first_line + i
        if len(row) != len(names):
            problems.append(f"line {lineno}: expected {len(names)} fields, got {len(row)}")
            continue
        parsed = []
        for n, tok in zip(names, row):
            try:
                parsed.append(_parse_value(tok, specs[n]))
            except ValueError as exc:
                problems.append(f"line {lineno}: column {n!r}: {tok.strip()!r} ({exc})")
                break
        else:
            for n, x in zip(names, parsed):
                values[n].append(x)
    if problems:
        shown = "\n  ".join(problems[:10])
        more = f"\n  ... {len(problems) - 10} more" if len(problems) > 10 else ""
        raise DatasetError(f"{len(problems)} offending line(s):\n  {shown}{more}")
    return Dataset(values, specs)


def read_dataset(path, schema=None) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh.read(), schema)


def validate_ids(data: Dataset, expect_unique=False):
    """Check the ``id`` column; with ``expect_unique`` one row per subject."""
    ids = data.with_role("id")
    if len(ids) != 1:
        raise DatasetError(f"expected exactly one id column, found {ids}")
    col = data[ids[0]]
    if expect_unique and len(np.unique(col)) != len(col):
        raise DatasetError("id column is not unique")
    return ids[0]
