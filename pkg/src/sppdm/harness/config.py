"""Experiment configuration: INI parsing, validation and serialization.

A config file has the sections ``[problem]``, ``[graph]``, ``[solver]``,
``[run]`` and ``[output]``; every key is optional and unknown keys are
rejected.  Names are case-sensitive (``N`` agents, ``n`` features).  Example::

    [problem]
    N = 5
    m = 20

    [solver]
    algorithms = sppdm, sppd, psgd
    batch = 13
"""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import GraphError, ParseError, ValidationError
from ..graph import Graph, build_graph
from ..solver import MOMENTUM_KINDS, SolverConfig

__all__ = [
    "ProblemBlock",
    "GraphBlock",
    "SolverBlock",
    "RunBlock",
    "OutputBlock",
    "ExperimentConfig",
    "ALGORITHMS",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "output_root",
]

ALGORITHMS = ("sppdm", "sppd", "ppdm", "ppd", "pg-extra", "pg-extra-metropolis", "prox-dgd", "psgd")
OUTPUT_ENV = "SPPDM_OUTPUT_ROOT"


@dataclass(frozen=True)
class ProblemBlock:
    N: int = 5
    m: int = 20
    n: int = 32
    S: int = 4
    rho: float = 3.0
    noise_sd: float = 2.0
    l1_weight: float = 0.01
    box_lo: float = -1.0
    box_hi: float = 1.0
    L: Optional[float] = None
    mu: Optional[float] = None


@dataclass(frozen=True)
class GraphBlock:
    topology: str = "circle"
    edges: str = ""


@dataclass(frozen=True)
class SolverBlock:
    algorithms: Tuple[str, ...] = ("sppdm", "sppd", "psgd")
    alpha: float = 2.0
    beta: float = 0.9
    gamma: float = 3.0
    c: float = 2.0
    kappa: float = 1.0
    momentum: str = "nesterov"
    eta: float = 0.0
    batch: Optional[int] = 13
    init_dual_step: bool = False
    sigma5: float = 1.0
    pg_extra_step: float = 0.05


@dataclass(frozen=True)
class RunBlock:
    iterations: int = 2000
    trials: int = 10
    seed: int = 0
    every: int = 1
    phi: bool = False
    phi_tol: float = 1e-10
    wall_clock: bool = False
    workers: int = 1
    save_data: bool = False


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    graph: GraphBlock = field(default_factory=GraphBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    run: RunBlock = field(default_factory=RunBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def build_graph(self) -> Graph:
        topo = self.graph.topology.strip()
        if topo == "edges":
            return build_graph(("edges", self.problem.N), self.graph.edges)
        if "(" in topo:
            return build_graph(topo)
        return build_graph((topo, self.problem.N))

    def psi(self) -> np.ndarray:
        """Per-agent ``psi_i = gamma + 2 c d_i + kappa``."""
        s = self.solver
        return s.gamma + 2.0 * s.c * self.build_graph().degrees.astype(float) + s.kappa

    def solver_config(self, algorithm: str = "sppdm", seed: int | None = None) -> SolverConfig:
        s = self.solver
        momentum, batch = s.momentum, s.batch
        if algorithm in ("sppd", "ppd"):
            momentum = "zero"
        if algorithm in ("ppdm", "ppd", "pg-extra", "pg-extra-metropolis", "prox-dgd"):
            batch = None
        return SolverConfig(alpha=s.alpha, beta=s.beta, gamma=s.gamma, c=s.c, kappa=s.kappa,
                            momentum=momentum, eta=s.eta, batch=batch, iterations=self.run.iterations,
                            seed=self.run.seed if seed is None else seed, init_dual_step=s.init_dual_step)

    def output_dir(self) -> Path:
        p = Path(self.output.directory)
        return p if p.is_absolute() else output_root() / p

    def with_param(self, name: str, value) -> "ExperimentConfig":
        """Copy with one field replaced; ``name`` is ``key`` or ``section.key``."""
        section, key = _locate(name)
        block = getattr(self, section)
        coerced = _coerce(section, key, str(value))
        new = replace(self, **{section: replace(block, **{key: coerced})})
        _validate(new)
        return new


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or ".")


_SECTIONS = {
    "problem": ProblemBlock,
    "graph": GraphBlock,
    "solver": SolverBlock,
    "run": RunBlock,
    "output": OutputBlock,
}


def _locate(name: str) -> Tuple[str, str]:
    if "." in name:
        section, key = name.split(".", 1)
        if section in _SECTIONS and key in {f.name for f in fields(_SECTIONS[section])}:
            return section, key
        raise ValidationError(name, f"unknown parameter {name!r}")
    hits = [s for s, cls in _SECTIONS.items() if name in {f.name for f in fields(cls)}]
    if len(hits) != 1:
        raise ValidationError(name, f"unknown or ambiguous parameter {name!r}")
    return hits[0], name


def _field_type(section, key):
    return {f.name: f.type for f in fields(_SECTIONS[section])}[key]


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw: str):
    ftype = str(_field_type(section, key))
    raw = raw.strip()
    try:
        if key == "algorithms":
            return tuple(a.strip().lower() for a in raw.split(",") if a.strip())
        if key == "batch":
            return None if raw.lower() in ("full", "none", "") else int(raw)
        if ftype.startswith("Optional[float]"):
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ValidationError(key, f"cannot read {raw!r} as a value for {section}.{key}") from None


def _validate(cfg: ExperimentConfig):
    p, s, r = cfg.problem, cfg.solver, cfg.run
    for name in ("N", "m", "n", "S"):
        if getattr(p, name) < 1:
            raise ValidationError(name, f"{name} must be positive")
    if p.S > p.n:
        raise ValidationError("S", "S cannot exceed n")
    if p.rho <= 0:
        raise ValidationError("rho", "rho must be positive")
    if p.noise_sd < 0:
        raise ValidationError("noise_sd", "noise_sd must be non-negative")
    if p.l1_weight < 0:
        raise ValidationError("l1_weight", "l1_weight must be non-negative")
    if not p.box_lo <= 0 <= p.box_hi:
        raise ValidationError("box_lo", "the box must contain 0")
    for name in ("alpha", "gamma", "c", "kappa", "sigma5", "pg_extra_step"):
        if not getattr(s, name) > 0:
            raise ValidationError(name, f"{name} must be positive")
    if not 0 < s.beta <= 1:
        raise ValidationError("beta", "beta must lie in (0, 1]")
    if s.eta < 0:
        raise ValidationError("eta", "eta must be non-negative")
    if s.momentum not in MOMENTUM_KINDS:
        raise ValidationError("momentum", f"momentum must be one of {MOMENTUM_KINDS}")
    if s.batch is not None and s.batch < 1:
        raise ValidationError("batch", "batch must be a positive integer or 'full'")
    if not s.algorithms:
        raise ValidationError("algorithms", "at least one algorithm is required")
    for a in s.algorithms:
        if a not in ALGORITHMS:
            raise ValidationError("algorithms", f"unknown algorithm {a!r}")
    for name in ("iterations", "trials", "every", "workers"):
        if getattr(r, name) < 1:
            raise ValidationError(name, f"{name} must be at least 1")
    if r.phi_tol <= 0:
        raise ValidationError("phi_tol", "phi_tol must be positive")
    try:
        g = cfg.build_graph()
    except GraphError as exc:
        raise ValidationError("topology", str(exc)) from None
    if g.n_nodes != p.N:
        raise ValidationError("topology", f"topology has {g.n_nodes} nodes but N = {p.N}")


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    where: Dict[Tuple[str, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, ""), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            where.setdefault((section, m.group(1).strip()), lineno)
    return where


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive: N and n are different sizes
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", lineno) from None
    where = _line_index(text)
    blocks = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ParseError(f"unknown section [{section}]", where.get((section, "")))
    for name, cls in _SECTIONS.items():
        known = {f.name: f.name for f in fields(cls)}
        values = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in known:
                    raise ParseError(f"unknown key {key!r} in [{name}]", where.get((name, key)))
                values[known[key]] = _coerce(name, known[key], raw)
        blocks[name] = cls(**values)
    cfg = ExperimentConfig(**blocks)
    _validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"config file {path} does not exist")
    return parse_config_text(path.read_text())


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to an equal config."""
    out = []
    for name in _SECTIONS:
        block = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(block):
            val = getattr(block, f.name)
            if f.name == "batch" and val is None:
                out.append("batch = full")
            else:
                out.append(f"{f.name} = {_format(val)}")
        out.append("")
    return "\n".join(out)
