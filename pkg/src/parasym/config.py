"""Experiment configuration: YAML files validated against a fixed schema.

Numeric fields accept plain numbers or short arithmetic strings in ``pi``
such as ``"3*pi"`` or ``"pi/2"``.
"""

from __future__ import annotations

import ast
import math
import operator
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field as PField, ValidationError

from .domain import Domain, Field, build_interval, build_symmetric_2d
from .nonlinearity import Forcing, Nonlinearity, catalog_get, forcing_get
from .solver import SolverParams

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_number(value: Any) -> float:
    """Number or arithmetic string over ``pi``."""
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError("expected a number or an expression string")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {value!r}")

    try:
        tree = ast.parse(value.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {value!r}") from exc
    return float(ev(tree))


Num = Annotated[float, BeforeValidator(parse_number)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IntervalSpec(_Strict):
    kind: Literal["interval"] = "interval"
    half_length: Num
    n_cells: int


class Symmetric2DSpec(_Strict):
    kind: Literal["symmetric_2d"]
    rows: list[Any]
    h: Num = 1.0


DomainSpec = Annotated[Union[IntervalSpec, Symmetric2DSpec], PField(discriminator="kind")]


class NonlinearitySpec(_Strict):
    name: str
    params: dict[str, Num] = {}


class ForcingSpec(_Strict):
    name: str = "none"
    amplitude: Num = 0.0
    decay_rate: Num = 1.0
    center: Num | None = None
    width: Num | None = None


class BumpIC(_Strict):
    kind: Literal["bump"]
    center: Num = 0.0
    width: Num = 1.0
    height: Num = 1.0


class CosineIC(_Strict):
    """``amplitude * (offset + cos(frequency * (x1 - shift)))``, clipped at 0."""

    kind: Literal["cosine"]
    amplitude: Num = 1.0
    frequency: Num = 1.0
    offset: Num = 0.0
    shift: Num = 0.0


class EquilibriumPerturbationIC(_Strict):
    kind: Literal["equilibrium_plus_perturbation"]
    guess: Union[BumpIC, CosineIC]
    amplitude: Num = 1e-3
    mode: int = 13


class FileIC(_Strict):
    kind: Literal["file"]
    path: str


InitialSpec = Annotated[
    Union[BumpIC, CosineIC, EquilibriumPerturbationIC, FileIC], PField(discriminator="kind")
]


class SolverSpec(_Strict):
    dt: Num | None = None
    t_end: Num = 50.0
    stride: int = 1
    linear_solver: Literal["direct", "cg"] = "direct"
    linear_tol: Num = 1e-12
    steady_tol: Num | None = None
    blowup_ceiling: Num | None = None


class Tolerances(_Strict):
    tol_rel: Num = 1e-9
    tol_sym: Num = 1e-6
    tol_mon: Num = 1e-6
    forcing_tol: Num = 1e-8
    tail_fraction: Num = 0.25


class SweepSpec(_Strict):
    n_guesses: int = 50


class Theorem2Spec(_Strict):
    guess: Union[BumpIC, CosineIC] = CosineIC(kind="cosine", amplitude=1.1, offset=1.0)
    amplitude: Num | None = None
    directions: list[Literal[1, -1]] = [1]
    record_directions: list[Literal[1, -1]] = []
    baselines: bool = True


class ConvergenceSpec(_Strict):
    n_cells: list[int] = [32, 64, 128, 256]
    dts: list[Num] = [0.1, 0.05, 0.025, 0.0125]
    t_end: Num = 1.0


class RunOverride(_Strict):
    name: str | None = None
    initial: InitialSpec | None = None
    nonlinearity: NonlinearitySpec | None = None
    forcing: ForcingSpec | None = None


class ExperimentConfig(_Strict):
    experiment: Literal["simulate", "equilibria", "theorem1", "theorem2", "convergence"]
    domain: DomainSpec | None = None
    nonlinearity: NonlinearitySpec = NonlinearitySpec(name="logistic")
    forcing: ForcingSpec = ForcingSpec()
    initial: InitialSpec | None = None
    solver: SolverSpec = SolverSpec()
    tolerances: Tolerances = Tolerances()
    sweep: SweepSpec = SweepSpec()
    theorem2: Theorem2Spec = Theorem2Spec()
    convergence: ConvergenceSpec = ConvergenceSpec()
    matrix: list[RunOverride] = []
    output: str | None = None
    seed: int = 0
    save_snapshots: bool = False


class ConfigError(ValueError):
    pass


def _line_of(node, loc) -> int | None:
    """Source line of the YAML node at key path ``loc``, or of its deepest existing parent."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == key]
            if not match:
                hit = [k for k, _ in node.value if k.value == key]
                return hit[0].start_mark.line + 1 if hit else line
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            continue
        line = node.start_mark.line + 1
    return line


def load_config(path: str | Path) -> tuple[ExperimentConfig, dict]:
    """Parse and validate; errors name the offending key and line."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
        tree = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = [p for p in err["loc"] if not (isinstance(p, str) and p in _UNION_TAGS)]
            where = ".".join(str(p) for p in loc) or "<root>"
            lines.append(f"{path}:{_line_of(tree, loc)}: {where}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from exc
    return cfg, raw


_UNION_TAGS = {
    "interval", "symmetric_2d", "bump", "cosine", "equilibrium_plus_perturbation", "file",
    "BumpIC", "CosineIC",
}


# --------------------------------------------------------------------------
# builders


def build_domain(spec: IntervalSpec | Symmetric2DSpec | None) -> Domain:
    if spec is None:
        raise ConfigError("this experiment needs a 'domain' section")
    if isinstance(spec, IntervalSpec):
        return build_interval(spec.half_length, spec.n_cells)
    return build_symmetric_2d(spec.rows, h=spec.h)


def build_nonlinearity(spec: NonlinearitySpec) -> Nonlinearity:
    try:
        return catalog_get(spec.name, **spec.params)
    except KeyError as exc:
        raise ConfigError(f"unknown nonlinearity {spec.name!r}") from exc


def build_forcing(spec: ForcingSpec, domain: Domain) -> Forcing:
    try:
        return forcing_get(
            spec.name, spec.amplitude, spec.decay_rate,
            half_extent=domain.half_extent, center=spec.center, width=spec.width,
        )
    except KeyError as exc:
        raise ConfigError(f"unknown forcing {spec.name!r}") from exc


def build_solver(spec: SolverSpec, f: Nonlinearity) -> SolverParams:
    dt = spec.dt if spec.dt is not None else 1.0 / (2.0 * max(f.lipschitz, 1.0))
    return SolverParams(
        dt=dt, t_end=spec.t_end, stride=spec.stride, linear_tol=spec.linear_tol,
        linear_solver=spec.linear_solver, steady_tol=spec.steady_tol,
        blowup_ceiling=spec.blowup_ceiling,
    )


def build_initial(spec, domain: Domain, f: Nonlinearity | None = None, base_dir: Path | None = None) -> Field:
    if spec is None:
        raise ConfigError("this experiment needs an 'initial' section")
    if isinstance(spec, BumpIC):
        def bump(x):
            r2 = (x[..., 0] - spec.center) ** 2 if x.ndim > 1 else (x - spec.center) ** 2
            if x.ndim > 1:
                r2 = r2 + np.sum(x[..., 1:] ** 2, axis=-1)
            return spec.height * np.exp(-r2 / spec.width**2)
        return _apply(domain, bump)
    if isinstance(spec, CosineIC):
        def cosine(x):
            x1 = x[..., 0] if x.ndim > 1 else x
            return np.maximum(spec.amplitude * (spec.offset + np.cos(spec.frequency * (x1 - spec.shift))), 0.0)
        return _apply(domain, cosine)
    if isinstance(spec, EquilibriumPerturbationIC):
        from .dynamics import stable_even_perturbation
        from .equilibria import find_equilibrium

        if f is None:
            raise ConfigError("equilibrium_plus_perturbation needs a nonlinearity")
        rec = find_equilibrium(f, domain, build_initial(spec.guess, domain))
        pert = stable_even_perturbation(rec, spec.mode)
        return Field(domain, np.maximum(rec.field.values + spec.amplitude * pert.values, 0.0))
    if isinstance(spec, FileIC):
        from .io import read_snapshot

        path = Path(spec.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        field, _, _ = read_snapshot(path)
        if not field.domain.same_as(domain):
            raise ConfigError(f"snapshot {path} lives on a different domain")
        return field
    raise ConfigError(f"unsupported initial condition {spec!r}")


def _apply(domain: Domain, func) -> Field:
    x = domain.coordinates()
    vals = func(x if domain.dim > 1 else x[:, 0])
    return Field(domain, np.asarray(vals, dtype=float))
