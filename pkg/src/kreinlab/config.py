"""Experiment configuration: JSON schema, validation and boundary-data factory.

A configuration file is a JSON object with the fields below (all optional
except where noted).

``name``
    Label copied into reports.
``domain``
    ``{"dim": 1, "ell": 1.0, "n": 200, "a": "constant"}`` or
    ``{"dim": 2, "Lx": 1.0, "Ly": 1.0, "nx": 16, "ny": 16, "a": "smooth"}``.
    ``a`` names a coefficient preset or is a positive number.
``boundary``
    ``{"kind": <builder>, "params": {...}}`` with builder one of
    :data:`BOUNDARY_KINDS`; parameters per builder are listed there.
``lambdas``, ``times``
    Shift and time grids used by the checks.
``seed``, ``n_samples``
    Randomness for the semigroup corpus and seeded batteries.
``tolerances``
    Overrides for :data:`DEFAULT_TOLERANCES`.
``sweep``
    ``{"parameter": [values]}`` or ``{"parameter": {"start", "stop", "num"}}``;
    parameters are boundary ``params`` keys.  The grid is the Cartesian
    product in key order.
``convergence``
    ``{"study": "dtn" | "resolvent" | "krein" | "periodic", "ns": [...], "lam": 1.0}``.
``spectrum``
    ``{"count": 10}``.
``evolve``
    ``{"times": [...], "source": null}``; ``source`` is an interior index
    (default: the node nearest the centre).
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from .boundary import (
    boundary_geometry,
    jump_killing_B,
    levy_circulant_B,
    mean_value_projector,
    mixed_dn_projector,
    wentzell_B,
)
from .discrete import COEFFICIENTS, DiscreteElliptic, Domain1D, Domain2D, assemble, dtn_discrete
from .errors import DomainError
from .markov import BoundaryForm

__all__ = [
    "ConfigError",
    "DomainSpec",
    "BoundarySpec",
    "ExperimentConfig",
    "BOUNDARY_KINDS",
    "DEFAULT_TOLERANCES",
    "load_config",
    "sweep_grid",
]

BOUNDARY_KINDS = {
    "neumann": (),
    "dirichlet": (),
    "robin": ("beta",),
    "krein": (),
    "conservative_jump": ("b",),
    "theta": ("theta",),
    "full": ("B", "b11", "b12", "b22"),
    "rank_one": ("v", "b"),
    "periodic": ("b",),
    "mask": ("indices", "B"),
    "mixed_dn": ("indices",),
    "mean_value": ("b",),
    "wentzell": ("b1", "bs", "b0", "s"),
    "levy": ("c", "nu"),
    "jump_killing": ("J", "kappa"),
}

DEFAULT_TOLERANCES = {
    "brute_force": 1e-8,
    "agreement": 1e-8,
    "resolvent": 1e-8,
    "conservative": 1e-10,
    "sandwich": 1e-10,
    "yosida": 1e-10,
    "plim": 1e-2,
    "wentzell": 1e-8,
}

STUDIES = ("dtn", "resolvent", "krein", "periodic")


class ConfigError(DomainError):
    """Malformed or inconsistent configuration."""


def _num(x, name):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x):
        raise ConfigError(f"{name} must be a finite number")
    return x


@dataclass
class DomainSpec:
    dim: int = 1
    ell: float = 1.0
    n: int = 100
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 16
    ny: int = 16
    a: Union[str, float] = "constant"

    def validate(self):
        if self.dim not in (1, 2):
            raise ConfigError("domain.dim must be 1 or 2")
        for k in ("ell", "Lx", "Ly"):
            _num(getattr(self, k), f"domain.{k}")
        for k in ("n", "nx", "ny"):
            v = getattr(self, k)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"domain.{k} must be an integer")
        if isinstance(self.a, str):
            if self.a not in COEFFICIENTS:
                raise ConfigError(f"unknown coefficient preset {self.a!r}; known: {sorted(COEFFICIENTS)}")
        else:
            _num(self.a, "domain.a")

    def build(self) -> DiscreteElliptic:
        try:
            if self.dim == 1:
                return assemble(Domain1D(self.ell, self.n, self.a))
            return assemble(Domain2D(self.Lx, self.Ly, self.nx, self.ny, self.a))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class BoundarySpec:
    kind: str = "neumann"
    params: Dict[str, Any] = field(default_factory=dict)

    def validate(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ConfigError(f"unknown boundary kind {self.kind!r}; known: {sorted(BOUNDARY_KINDS)}")
        if not isinstance(self.params, dict):
            raise ConfigError("boundary.params must be an object")
        extra = set(self.params) - set(BOUNDARY_KINDS[self.kind])
        if extra:
            raise ConfigError(f"boundary kind {self.kind!r} does not take {sorted(extra)}")

    def build(self, disc: DiscreteElliptic) -> BoundaryForm:
        """Boundary datum on ``disc``; builder errors become :class:`ConfigError`."""
        try:
            return _build_boundary(self.kind, self.params, disc)
        except ConfigError:
            raise
        except (DomainError, ValueError, TypeError, KeyError, IndexError) as exc:
            raise ConfigError(f"boundary {self.kind!r}: {exc}") from exc


def _p0_form(disc):
    return dtn_discrete(disc, 0.0)


def _build_boundary(kind: str, p: dict, disc: DiscreteElliptic) -> BoundaryForm:
    nb, w = disc.nb, disc.weights
    arr = lambda key: np.asarray(p[key], dtype=float)
    if kind == "neumann":
        return BoundaryForm.full(np.zeros((nb, nb)), w)
    if kind == "dirichlet":
        return BoundaryForm.zero(nb, w)
    if kind == "robin":
        return BoundaryForm.full(float(p.get("beta", 1.0)) * np.eye(nb), w)
    if kind == "krein":
        return BoundaryForm.full(_p0_form(disc), w)
    if kind == "conservative_jump":
        return BoundaryForm.full(-float(p.get("b", 1.0)) * _p0_form(disc), w)
    if kind == "theta":
        return BoundaryForm.full(arr("theta") + _p0_form(disc), w)
    if kind == "full":
        if "B" in p:
            return BoundaryForm.full(arr("B"), w)
        if nb != 2:
            raise ConfigError("b11/b12/b22 parameters need a two-point boundary")
        b11, b12, b22 = (float(p.get(k, 0.0)) for k in ("b11", "b12", "b22"))
        return BoundaryForm.full(np.array([[b11, b12], [b12, b22]]), w)
    if kind == "rank_one":
        v = arr("v")
        return BoundaryForm.rank_one(v / np.linalg.norm(v), float(p.get("b", 0.0)), w)
    if kind == "periodic":
        return BoundaryForm.rank_one(np.ones(nb) / np.sqrt(nb), float(p.get("b", 0.0)), w)
    if kind == "mask":
        B = arr("B") if "B" in p else None
        return BoundaryForm.mask(p["indices"], nb, B, w)
    geom = boundary_geometry(disc)
    if kind == "mixed_dn":
        return mixed_dn_projector(geom, p["indices"])
    if kind == "mean_value":
        return mean_value_projector(geom)(float(p.get("b", 0.0)))
    if kind == "wentzell":
        return wentzell_B(geom, float(p.get("b1", 1.0)), float(p.get("bs", 0.0)), float(p.get("b0", 0.0)), float(p.get("s", 0.5)))
    if kind == "levy":
        return levy_circulant_B(geom, float(p.get("c", 0.0)), arr("nu"))
    if kind == "jump_killing":
        return jump_killing_B(geom, arr("J"), arr("kappa"))
    raise ConfigError(f"unknown boundary kind {kind!r}")


def _float_list(x, name, positive=True):
    if not isinstance(x, list):
        raise ConfigError(f"{name} must be a list")
    for v in x:
        _num(v, name)
        if positive and v <= 0:
            raise ConfigError(f"{name} entries must be positive")
    return x


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    domain: DomainSpec = field(default_factory=DomainSpec)
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    lambdas: List[float] = field(default_factory=lambda: [0.5, 1.0, 5.0])
    times: List[float] = field(default_factory=lambda: [0.01, 0.1, 1.0])
    seed: int = 0
    n_samples: int = 32
    tolerances: Dict[str, float] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    convergence: Dict[str, Any] = field(default_factory=dict)
    spectrum: Dict[str, Any] = field(default_factory=dict)
    evolve: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.name, str):
            raise ConfigError("name must be a string")
        self.domain.validate()
        self.boundary.validate()
        _float_list(self.lambdas, "lambdas")
        _float_list(self.times, "times")
        for k in ("seed", "n_samples"):
            v = getattr(self, k)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{k} must be a nonnegative integer")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerances {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if _num(v, f"tolerances.{k}") < 0:
                raise ConfigError(f"tolerances.{k} must be nonnegative")
        sweep_grid(self.sweep)
        if self.convergence:
            study = self.convergence.get("study", "dtn")
            if study not in STUDIES:
                raise ConfigError(f"unknown convergence study {study!r}; known: {list(STUDIES)}")
            ns = self.convergence.get("ns", [25, 50, 100, 200, 400])
            if not isinstance(ns, list) or len(ns) < 2 or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in ns):
                raise ConfigError("convergence.ns must list at least two positive integers")
        if self.evolve:
            _float_list(self.evolve.get("times", [0.01]), "evolve.times")
        return self

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        d = copy.deepcopy(d)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration fields {sorted(extra)}")
        try:
            dom = d.pop("domain", {})
            bnd = d.pop("boundary", {})
            if not isinstance(dom, dict) or not isinstance(bnd, dict):
                raise ConfigError("domain and boundary must be objects")
            cfg = cls(domain=DomainSpec(**dom), boundary=BoundarySpec(**bnd), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    def with_params(self, **params) -> "ExperimentConfig":
        """Copy with boundary parameters replaced."""
        new = copy.deepcopy(self)
        new.boundary.params.update(params)
        return new


def load_config(path: Union[str, Path, None]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    return ExperimentConfig.loads(text)


def sweep_grid(sweep: dict) -> List[dict]:
    """Cartesian product of the sweep ranges, in key order then value order."""
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be an object")
    axes = []
    for key, spec in sweep.items():
        if isinstance(spec, list):
            vals = [_num(v, f"sweep.{key}") for v in spec]
        elif isinstance(spec, dict):
            if set(spec) != {"start", "stop", "num"}:
                raise ConfigError(f"sweep.{key} range needs exactly start, stop, num")
            num = spec["num"]
            if isinstance(num, bool) or not isinstance(num, int) or num < 0:
                raise ConfigError(f"sweep.{key}.num must be a nonnegative integer")
            vals = np.linspace(_num(spec["start"], key), _num(spec["stop"], key), num).tolist()
        else:
            raise ConfigError(f"sweep.{key} must be a list or a range object")
        axes.append((key, vals))
    if not axes:
        return []
    keys = [k for k, _ in axes]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]
