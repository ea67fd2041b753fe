"""Discrete phase space of a 1-D slab: grid, optical fields, inner products.

Fields live on arrays of shape ``(n_cells, n_ord)``. Kernels are stored per
cell as ``kappa[i, k_in, k_out]``.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidGrid, ScenarioError, ShapeMismatch


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PhaseGrid:
    n_cells: int
    length: float
    mu: np.ndarray
    w: np.ndarray
    mu_min: float

    @property
    def h(self):
        return self.length / self.n_cells

    @property
    def n_ord(self):
        return self.mu.size

    @property
    def shape(self):
        return (self.n_cells, self.n_ord)

    @property
    def size(self):
        return self.n_cells * self.n_ord


def build_grid(n_cells, length, n_per_half, mu_min):
    """Gauss-Legendre nodes on [mu_min, 1], mirrored, weights summing to one."""
    if int(n_cells) != n_cells or n_cells < 1:
        raise InvalidGrid(f"n_cells must be a positive integer, got {n_cells}")
    if int(n_per_half) != n_per_half or n_per_half < 1:
        raise InvalidGrid(f"n_per_half must be a positive integer, got {n_per_half}")
    if not length > 0 or not math.isfinite(length):
        raise InvalidGrid(f"length must be positive, got {length}")
    if not 0 < mu_min < 1:
        raise InvalidGrid(f"mu_min must lie in (0, 1), got {mu_min}")
    x, wx = np.polynomial.legendre.leggauss(int(n_per_half))
    mu_half = mu_min + 0.5 * (1.0 - mu_min) * (x + 1.0)
    w_half = wx / (2.0 * wx.sum())
    mu = np.concatenate([-mu_half[::-1], mu_half])
    w = np.concatenate([w_half[::-1], w_half])
    w = w / w.sum()
    return PhaseGrid(int(n_cells), float(length), _frozen(mu), _frozen(w), float(mu_min))


@dataclass(frozen=True)
class OpticalField:
    sigma: np.ndarray
    kappa: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        s, k, p = (np.asarray(a) for a in (self.sigma, self.kappa, self.phi))
        if s.ndim != 2 or k.shape != s.shape + (s.shape[1],) or p.shape != k.shape:
            raise ShapeMismatch(
                f"sigma {s.shape}, kappa {k.shape}, phi {p.shape} are inconsistent")
        for name, a in (("sigma", s), ("kappa", k), ("phi", p)):
            if not np.all(np.isfinite(a)):
                raise ShapeMismatch(f"{name} has non-finite entries")
            if np.any(a < 0):
                raise ShapeMismatch(f"{name} has negative entries")
        if np.any(s <= 0):
            raise ShapeMismatch("sigma must be strictly positive")
        for name in ("sigma", "kappa", "phi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class AssumptionReport:
    alpha: float
    M: float
    c_f: float
    rho: float
    passed: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def as_dict(self):
        return {"alpha": self.alpha, "M": self.M, "c_f": self.c_f, "rho": self.rho,
                "pass": dict(self.passed), "ok": self.ok}


def _check_shapes(grid, optics):
    if optics.sigma.shape != grid.shape:
        raise ShapeMismatch(f"optics shape {optics.sigma.shape} does not match grid {grid.shape}")


def _masses(grid, table):
    # out-mass of each incoming ordinate and in-mass of each outgoing ordinate
    w = grid.w
    row = np.einsum("ijk,k->ij", table, w)
    col = np.einsum("ijk,j->ik", table, w)
    return row, col


def compute_rho(grid, optics):
    _check_shapes(grid, optics)
    row, col = _masses(grid, optics.kappa)
    return float(np.max(np.maximum(row, col) / optics.sigma))


def check_assumptions(grid, optics):
    _check_shapes(grid, optics)
    krow, kcol = _masses(grid, optics.kappa)
    frow, fcol = _masses(grid, optics.phi)
    sig = optics.sigma
    alpha = float(np.min(np.minimum(sig - krow, sig - kcol)))
    M = float(max(krow.max(), kcol.max(), frow.max(), fcol.max()))
    c_f = float(optics.phi.min())
    rho = compute_rho(grid, optics)
    passed = {"accretive": alpha > 0, "fission_positive": c_f > 0, "contractive": rho < 1}
    return AssumptionReport(alpha, M, c_f, rho, passed)


def weights(grid, optics=None):
    """Diagonal of the inner product: h*w_k, times sigma if optics is given."""
    d = np.broadcast_to(grid.h * grid.w, grid.shape)
    if optics is not None:
        d = d * optics.sigma
    return np.array(d)


def inner_product(grid, u, v, optics=None):
    """<u, v> with cells outer, ordinates inner; sigma-weighted if optics given."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != grid.shape or v.shape != grid.shape:
        raise ShapeMismatch(f"fields {u.shape}, {v.shape} do not match grid {grid.shape}")
    terms = weights(grid, optics) * u * np.conj(v)
    # per-cell partial sums first, then across cells
    total = terms.sum(axis=1).sum()
    return complex(total) if np.iscomplexobj(terms) else float(total)


def norm(grid, u, optics=None):
    u = np.asarray(u)
    if u.shape != grid.shape:
        raise ShapeMismatch(f"field {u.shape} does not match grid {grid.shape}")
    return math.sqrt(float(np.sum(weights(grid, optics) * np.abs(u) ** 2)))


# -- scenario files ---------------------------------------------------------

def _material_blocks(n_cells, entries):
    """Split cells into contiguous material blocks, left to right."""
    sizes = []
    explicit = [e.get("cells") if isinstance(e, dict) else None for e in entries]
    if all(c is not None for c in explicit):
        sizes = [int(c) for c in explicit]
        if sum(sizes) != n_cells:
            raise ScenarioError(f"material cell counts sum to {sum(sizes)}, grid has {n_cells}")
    else:
        m = len(entries)
        if n_cells % m:
            raise ScenarioError(f"{n_cells} cells cannot be split evenly into {m} materials")
        sizes = [n_cells // m] * m
    return sizes


def _kernel_table(grid, spec):
    mu = grid.mu
    if isinstance(spec, (int, float)):
        return np.full((grid.n_ord, grid.n_ord), float(spec))
    if isinstance(spec, dict) and "value" in spec and "separable" not in spec:
        spec = spec["value"]
        return _kernel_table(grid, spec)
    if isinstance(spec, dict) and "separable" in spec:
        s = spec["separable"]
        c = float(s.get("value", 1.0))
        g = float(s.get("anisotropy", 0.0))
        if abs(g) > 1:
            raise ScenarioError("anisotropy must lie in [-1, 1]")
        return c * (1.0 + g * np.outer(mu, mu))
    raise ScenarioError(f"unrecognised kernel entry {spec!r}")


def _field(grid, spec, kind, base_dir):
    nc, no = grid.shape
    if not isinstance(spec, dict):
        raise ScenarioError(f"{kind}: expected an object, got {spec!r}")
    if "constant" in spec or "separable" in spec:
        entries = [spec.get("constant", spec)]
    elif "per_material" in spec:
        entries = spec["per_material"]
        if not entries:
            raise ScenarioError(f"{kind}: empty per_material list")
    elif "table" in spec:
        path = Path(spec["table"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        try:
            arr = np.load(path) if path.suffix == ".npy" else np.array(json.loads(path.read_text()))
        except (OSError, ValueError) as exc:
            raise ScenarioError(f"{kind}: cannot read table {path}: {exc}") from exc
        want = (nc, no) if kind == "sigma" else (nc, no, no)
        if kind == "sigma" and arr.shape == (nc,):
            arr = np.repeat(arr[:, None], no, axis=1)
        if arr.shape != want:
            raise ScenarioError(f"{kind}: table shape {arr.shape}, expected {want}")
        return arr.astype(float)
    else:
        raise ScenarioError(f"{kind}: unknown spec keys {sorted(spec)}")

    sizes = _material_blocks(nc, entries)
    blocks = []
    for size, e in zip(sizes, entries):
        if kind == "sigma":
            v = e["value"] if isinstance(e, dict) else e
            if not isinstance(v, (int, float)):
                raise ScenarioError(f"sigma: expected a number, got {v!r}")
            blocks.append(np.full((size, no), float(v)))
        else:
            t = _kernel_table(grid, e)
            blocks.append(np.broadcast_to(t, (size, no, no)))
    return np.concatenate(blocks, axis=0)


def optics_from_spec(grid, spec, base_dir="."):
    try:
        return OpticalField(
            _field(grid, spec["sigma"], "sigma", base_dir),
            _field(grid, spec["kappa"], "kappa", base_dir),
            _field(grid, spec["phi"], "phi", base_dir))
    except KeyError as exc:
        raise ScenarioError(f"optics section lacks {exc}") from exc


def scenario_from_dict(data, base_dir="."):
    """Return (grid, optics, extra) where extra holds any remaining sections."""
    try:
        g = data["grid"]
        grid = build_grid(g["n_cells"], g["length"], g["n_per_half"], g["mu_min"])
        optics = optics_from_spec(grid, data["optics"], base_dir)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    extra = {k: v for k, v in data.items() if k not in ("grid", "optics")}
    return grid, optics, extra


def load_scenario(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ScenarioError(f"cannot parse scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario {path} is not a JSON object")
    return scenario_from_dict(data, base_dir=path.parent)


# -- named scenarios --------------------------------------------------------

SCENARIOS = {
    "const": {
        "name": "SCEN-CONST",
        "grid": {"n_cells": 16, "length": 1.0, "n_per_half": 4, "mu_min": 0.05},
        "optics": {"sigma": {"constant": 2.0}, "kappa": {"constant": 0.5},
                   "phi": {"constant": 0.5}},
    },
    "het": {
        "name": "SCEN-HET",
        "grid": {"n_cells": 16, "length": 2.0, "n_per_half": 4, "mu_min": 0.05},
        "optics": {"sigma": {"per_material": [3.0, 1.5]},
                   "kappa": {"per_material": [1.0, 0.4]},
                   "phi": {"constant": 0.8}},
    },
    "ref": {
        "name": "SCEN-REF",
        "grid": {"n_cells": 32, "length": 4.0, "n_per_half": 4, "mu_min": 0.05},
        "optics": {
            "sigma": {"per_material": [{"value": 2.0, "cells": 12},
                                       {"value": 1.2, "cells": 8},
                                       {"value": 2.5, "cells": 12}]},
            "kappa": {"per_material": [
                {"separable": {"value": 0.9, "anisotropy": 0.6}, "cells": 12},
                {"value": 0.8, "cells": 8},
                {"separable": {"value": 1.2, "anisotropy": -0.3}, "cells": 12}]},
            "phi": {"per_material": [{"value": 0.9, "cells": 12},
                                     {"value": 0.1, "cells": 8},
                                     {"separable": {"value": 0.6, "anisotropy": 0.5},
                                      "cells": 12}]},
        },
    },
}


def named_scenario(name):
    key = name.lower().replace("scen-", "")
    if key not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    return scenario_from_dict(SCENARIOS[key])
