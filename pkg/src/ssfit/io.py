"""File formats: CSV time series, JSON model and configuration files.

Time series travel as plain CSV with a header row ``t, u1..um, y1..yp``.
Models and configurations are schema-versioned JSON with matrices as
row-major nested arrays, so artifacts stay diffable.  Regions use a compact
text syntax (``disk 0.998 0``, ``intersect(half_plane 0.3, disk 0.998 0)``)
with raw generating matrices accepted for expert use.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .identify import EigConstraintSpec, ProblemSpec
from .indexsets import IndexSet, full_lower, diagonal, direct_sum
from .nlp import SolveOptions
from .regions import LmiRegion, band, cone, disk, half_plane, intersect, left_half_plane
from .statespace import Dataset, InnovationModel, LadmSpec

__all__ = [
    "SchemaError",
    "RunConfig",
    "load_dataset",
    "save_dataset",
    "load_model",
    "save_model",
    "parse_region",
    "region_to_text",
    "parse_index_set",
    "index_set_to_config",
    "load_config",
    "parse_config",
    "config_to_dict",
]

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A file does not match its documented schema."""


# -- time series -------------------------------------------------------------

def load_dataset(path: str) -> Dataset:
    """Read a dataset CSV with columns ``t, u1..um, y1..yp``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t":
            raise SchemaError(f"{path}: first column must be 't', got {header[:1]}")
        m = sum(1 for h in header if h.startswith("u"))
        p = sum(1 for h in header if h.startswith("y"))
        expected_u = [f"u{i + 1}" for i in range(m)]
        expected_y = [f"y{i + 1}" for i in range(p)]
        if header != ["t"] + expected_u + expected_y or p == 0:
            raise SchemaError(
                f"{path}: header must read t, u1..um, y1..yp; got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(header)} fields, "
                    f"got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(v) for v in vals):
                raise SchemaError(f"{path}:{lineno}: nonfinite value")
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    arr = np.asarray(rows)
    t = arr[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return Dataset(arr[:, 1:1 + m], arr[:, 1 + m:], dt=dt)


def save_dataset(path: str, data: Dataset) -> None:
    """Write a dataset CSV (deterministic formatting, 17 significant digits)."""
    m, p = data.u.shape[1], data.y.shape[1]
    header = ["t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(data.N):
            row = [_fmt(k * data.dt)]
            row += [_fmt(v) for v in data.u[k]]
            row += [_fmt(v) for v in data.y[k]]
            writer.writerow(row)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# -- models -------------------------------------------------------------------

def save_model(path: str, model: InnovationModel,
               ladm: LadmSpec | None = None, meta: dict | None = None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dims": {"n": model.n, "m": model.m, "p": model.p},
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
        "D": model.D.tolist(),
        "x0hat": model.x0hat.tolist(),
        "K": model.K.tolist(),
        "Re": model.Re.tolist(),
    }
    if ladm is not None:
        doc["ladm"] = {
            "n_s": ladm.n_s, "n_d": ladm.n_d, "m": ladm.m, "p": ladm.p,
            "plant_form": ladm.plant_form,
            "Bd": ladm.Bd.tolist(), "Cd": ladm.Cd.tolist(),
            "C_fixed": None if ladm.C_fixed is None else ladm.C_fixed.tolist(),
        }
    if meta:
        doc["meta"] = meta
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str):
    """Read a model file; returns ``(model, ladm_or_None, meta)``."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    required = {"schema_version", "dims", "A", "B", "C", "D", "x0hat", "K", "Re"}
    missing = required - doc.keys()
    if missing:
        raise SchemaError(f"{path}: missing keys {sorted(missing)}")
    unknown = doc.keys() - required - {"ladm", "meta"}
    if unknown:
        raise SchemaError(f"{path}: unknown keys {sorted(unknown)}")
    dims = doc["dims"]
    try:
        model = InnovationModel(
            np.asarray(doc["A"], dtype=float),
            np.asarray(doc["B"], dtype=float),
            np.asarray(doc["C"], dtype=float),
            np.asarray(doc["D"], dtype=float),
            np.asarray(doc["x0hat"], dtype=float),
            np.asarray(doc["K"], dtype=float),
            np.asarray(doc["Re"], dtype=float),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if (model.n, model.m, model.p) != (dims.get("n"), dims.get("m"), dims.get("p")):
        raise SchemaError(f"{path}: declared dims {dims} do not match matrices")
    ladm = None
    if "ladm" in doc:
        block = doc["ladm"]
        keys = {"n_s", "n_d", "m", "p", "plant_form", "Bd", "Cd", "C_fixed"}
        bad = block.keys() - keys
        if bad:
            raise SchemaError(f"{path}: unknown ladm keys {sorted(bad)}")
        ladm = LadmSpec(
            n_s=int(block["n_s"]), n_d=int(block["n_d"]),
            m=int(block["m"]), p=int(block["p"]),
            Bd=np.asarray(block["Bd"], dtype=float),
            Cd=np.asarray(block["Cd"], dtype=float),
            plant_form=block.get("plant_form", "full"),
            C_fixed=None if block.get("C_fixed") is None
            else np.asarray(block["C_fixed"], dtype=float),
        )
    return model, ladm, doc.get("meta", {})


# -- regions -------------------------------------------------------------------

_PRESETS = {
    "half_plane": (half_plane, 1),
    "left_half_plane": (left_half_plane, 1),
    "disk": (disk, 2),
    "cone": (cone, 2),
    "band": (band, 1),
}


def parse_region(spec) -> LmiRegion:
    """Parse a region from text or raw generating matrices.

    Text syntax: ``half_plane 0.3``, ``disk 0.998 0``, ``cone 1 0``,
    ``band 2`` and ``intersect(<region>, <region>, ...)``.  A mapping with
    keys ``M0``/``M1`` builds a raw region.
    """
    if isinstance(spec, dict):
        extra = spec.keys() - {"M0", "M1", "label"}
        if extra:
            raise SchemaError(f"unknown region keys {sorted(extra)}")
        if "M0" not in spec or "M1" not in spec:
            raise SchemaError("raw region needs both M0 and M1")
        return LmiRegion(np.asarray(spec["M0"], dtype=float),
                         np.asarray(spec["M1"], dtype=float),
                         kind="raw", label=spec.get("label", "raw"))
    if not isinstance(spec, str):
        raise SchemaError(f"region must be text or raw matrices, got {type(spec)}")
    text = spec.strip()
    if text.startswith("intersect"):
        inner = text[len("intersect"):].strip()
        if not (inner.startswith("(") and inner.endswith(")")):
            raise SchemaError(f"malformed intersect syntax: {spec!r}")
        parts = _split_top_level(inner[1:-1])
        if len(parts) < 2:
            raise SchemaError("intersect needs at least two regions")
        return intersect(*[parse_region(p) for p in parts])
    fields = text.split()
    if not fields or fields[0] not in _PRESETS:
        raise SchemaError(
            f"unknown region {text!r}; expected one of "
            f"{sorted(_PRESETS)} or intersect(...)")
    ctor, nargs = _PRESETS[fields[0]]
    args = fields[1:]
    if len(args) != nargs:
        raise SchemaError(
            f"region {fields[0]} takes {nargs} parameter(s), got {len(args)}")
    try:
        values = [float(a) for a in args]
    except ValueError as exc:
        raise SchemaError(f"bad region parameter in {text!r}: {exc}") from None
    return ctor(*values)


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur).strip())
    return [p for p in parts if p]


def region_to_text(region: LmiRegion):
    """Inverse of :func:`parse_region` for preset-built regions."""
    if region.kind in _PRESETS:
        return f"{region.kind} " + " ".join(_fmt_short(v) for v in region.params)
    if region.kind == "intersect":
        return "intersect(" + ", ".join(
            region_to_text(r) for r in region.params) + ")"
    return {"M0": region.m0.tolist(), "M1": region.m1.tolist(),
            "label": region.label or "raw"}


def _fmt_short(v: float) -> str:
    return format(float(v), "g")


# -- index sets ----------------------------------------------------------------

def parse_index_set(spec, n: int) -> IndexSet:
    """Parse a sparsity pattern: ``"full"``, ``"diag"``,
    ``"blockdiag(n1,n2,...)"`` or an explicit list of ``[i, j]`` pairs."""
    if isinstance(spec, str):
        text = spec.strip()
        if text == "full":
            return full_lower(n)
        if text == "diag":
            return diagonal(n)
        if text.startswith("blockdiag(") and text.endswith(")"):
            try:
                sizes = [int(s) for s in text[len("blockdiag("):-1].split(",")]
            except ValueError:
                raise SchemaError(f"bad blockdiag sizes in {text!r}") from None
            if sum(sizes) != n:
                raise SchemaError(
                    f"blockdiag sizes sum to {sum(sizes)}, expected {n}")
            out = full_lower(sizes[0])
            for s in sizes[1:]:
                out = direct_sum(out, full_lower(s))
            return out
        raise SchemaError(f"unknown index set keyword {text!r}")
    try:
        entries = tuple(sorted((int(i), int(j)) for i, j in spec))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad index set entries: {exc}") from None
    return IndexSet(n, entries)


def index_set_to_config(pattern: IndexSet):
    if pattern == full_lower(pattern.n):
        return "full"
    if pattern == diagonal(pattern.n):
        return "diag"
    return [[i, j] for i, j in pattern.entries]


# -- run configuration -----------------------------------------------------------

_MODEL_KEYS = {"n_s", "n_d", "n_u", "n_y", "plant_form", "Bd", "Cd",
               "C_fixed", "re_pattern"}
_CONSTRAINT_KEYS = {"region", "target", "epsilon_i", "weight", "shift"}
_OBJECTIVE_KEYS = {"rho", "delta_re", "epsilon"}
_SOLVER_KEYS = {"tol_eq", "tol_in", "tol_stat", "max_outer", "max_inner",
                "penalty0", "multistart", "verbose"}
_IO_KEYS = {"seed"}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for one identification run."""

    problem: ProblemSpec
    solver: SolveOptions
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)


def load_config(path: str) -> RunConfig:
    search = [path]
    default_dir = os.environ.get("SSFIT_CONFIG_DIR")
    if default_dir and not os.path.isabs(path):
        search.append(os.path.join(default_dir, path))
    for candidate in search:
        if os.path.exists(candidate):
            with open(candidate) as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{candidate}: invalid JSON ({exc})") from None
            return parse_config(doc, origin=candidate)
    raise FileNotFoundError(f"config not found: {path}")


def parse_config(doc: dict, origin: str = "<config>") -> RunConfig:
    top = {"schema_version", "model", "constraints", "objective", "solver", "io"}
    unknown = doc.keys() - top
    if unknown:
        raise SchemaError(f"{origin}: unknown keys {sorted(unknown)}")
    if "model" not in doc:
        raise SchemaError(f"{origin}: missing model block")
    mdl = dict(doc["model"])
    bad = mdl.keys() - _MODEL_KEYS
    if bad:
        raise SchemaError(f"{origin}: unknown model keys {sorted(bad)}")
    for key in ("n_s", "n_u", "n_y"):
        if key not in mdl:
            raise SchemaError(f"{origin}: model block needs {key}")
    p = int(mdl["n_y"])
    n_d = int(mdl.get("n_d", p))
    try:
        ladm = LadmSpec(
            n_s=int(mdl["n_s"]), n_d=n_d, m=int(mdl["n_u"]), p=p,
            Bd=None if mdl.get("Bd") in (None, "zero")
            else np.asarray(mdl["Bd"], dtype=float),
            Cd=None if mdl.get("Cd") in (None, "identity")
            else np.asarray(mdl["Cd"], dtype=float),
            plant_form=mdl.get("plant_form", "full"),
            C_fixed=None if mdl.get("C_fixed") in (None, "free")
            else (np.eye(int(mdl["n_s"]))[:p] if mdl["C_fixed"] == "identity"
                  else np.asarray(mdl["C_fixed"], dtype=float)),
        )
    except ValueError as exc:
        raise SchemaError(f"{origin}: {exc}") from None
    re_pattern = None
    if mdl.get("re_pattern") not in (None, "full"):
        re_pattern = parse_index_set(mdl["re_pattern"], p)

    constraints = []
    for i, cdoc in enumerate(doc.get("constraints", [])):
        bad = cdoc.keys() - _CONSTRAINT_KEYS
        if bad:
            raise SchemaError(f"{origin}: constraint {i}: unknown keys {sorted(bad)}")
        if "region" not in cdoc:
            raise SchemaError(f"{origin}: constraint {i}: missing region")
        try:
            region = parse_region(cdoc["region"])
            constraints.append(EigConstraintSpec(
                region=region,
                target=cdoc.get("target", "filter"),
                epsilon_i=float(cdoc.get("epsilon_i", 0.03)),
                weight=None if cdoc.get("weight") is None
                else np.asarray(cdoc["weight"], dtype=float),
                shift=None if cdoc.get("shift") is None
                else np.asarray(cdoc["shift"], dtype=float),
            ))
        except (ValueError, SchemaError) as exc:
            raise SchemaError(f"{origin}: constraint {i}: {exc}") from None

    obj = dict(doc.get("objective", {}))
    bad = obj.keys() - _OBJECTIVE_KEYS
    if bad:
        raise SchemaError(f"{origin}: unknown objective keys {sorted(bad)}")
    delta = obj.get("delta_re", "auto")
    if delta != "auto":
        delta = float(delta)
    try:
        problem = ProblemSpec(
            ladm=ladm,
            re_pattern=re_pattern,
            eig_constraints=tuple(constraints),
            rho=float(obj.get("rho", 0.0)),
            epsilon=float(obj.get("epsilon", 1e-6)),
            delta_re=delta,
        )
    except ValueError as exc:
        raise SchemaError(f"{origin}: {exc}") from None

    sol = dict(doc.get("solver", {}))
    bad = sol.keys() - _SOLVER_KEYS
    if bad:
        raise SchemaError(f"{origin}: unknown solver keys {sorted(bad)}")
    solver = SolveOptions(
        tol_eq=float(sol.get("tol_eq", 1e-7)),
        tol_in=float(sol.get("tol_in", 1e-7)),
        tol_stat=float(sol.get("tol_stat", 1e-6)),
        max_outer=int(sol.get("max_outer", 50)),
        max_inner=int(sol.get("max_inner", 400)),
        penalty0=float(sol.get("penalty0", 100.0)),
        multistart=int(sol.get("multistart", 0)),
        init_multipliers="lsq",
        verbose=int(sol.get("verbose", 0)),
    )
    io_doc = dict(doc.get("io", {}))
    bad = io_doc.keys() - _IO_KEYS
    if bad:
        raise SchemaError(f"{origin}: unknown io keys {sorted(bad)}")
    return RunConfig(problem=problem, solver=solver,
                     seed=int(io_doc.get("seed", 0)), raw=doc)


def config_to_dict(config: RunConfig) -> dict:
    """Emit a configuration document that reparses to the same problem."""
    spec = config.problem
    ladm = spec.ladm
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": {
            "n_s": ladm.n_s, "n_d": ladm.n_d,
            "n_u": ladm.m, "n_y": ladm.p,
            "plant_form": ladm.plant_form,
            "Bd": ladm.Bd.tolist(),
            "Cd": ladm.Cd.tolist(),
            "C_fixed": None if ladm.C_fixed is None else ladm.C_fixed.tolist(),
            "re_pattern": "full" if spec.re_pattern is None
            else index_set_to_config(spec.re_pattern),
        },
        "constraints": [
            {
                "region": region_to_text(c.region),
                "target": c.target if isinstance(c.target, str) else "custom",
                "epsilon_i": c.epsilon_i,
                **({"weight": c.weight.tolist()} if c.weight is not None else {}),
                **({"shift": c.shift.tolist()} if c.shift is not None else {}),
            }
            for c in spec.eig_constraints
        ],
        "objective": {"rho": spec.rho, "delta_re": spec.delta_re,
                      "epsilon": spec.epsilon},
        "solver": {
            "tol_eq": config.solver.tol_eq,
            "tol_in": config.solver.tol_in,
            "tol_stat": config.solver.tol_stat,
            "max_outer": config.solver.max_outer,
            "max_inner": config.solver.max_inner,
            "penalty0": config.solver.penalty0,
            "multistart": config.solver.multistart,
            "verbose": config.solver.verbose,
        },
        "io": {"seed": config.seed},
    }
    return doc
