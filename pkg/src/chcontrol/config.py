"""Run configuration: sectioned key/value files, validated against (A1)-(A7).

The format is INI-style (configparser) with '#' inline comments. Field-valued
entries accept either a numeric constant or a relative path to a field
snapshot (.fld); paths resolve against the config file's directory. Unknown
keys are rejected, and every numeric constraint of the model assumptions is
checked at load time; violations carry the tag of the assumption they break.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import BoxConstraints, Control, HSpec, SparsitySpec
from .forward import InitialData, TimeGrid
from .grid import Field, Grid, read_field
from .model import (LOGARITHMIC, ModelParams, NonlinearitySpec, PotentialSpec,
                    REGULAR)
from .reduced import CostSpec, OptOptions


@dataclass
class ConfigViolation:
    tag: str
    location: str
    message: str

    def __str__(self):
        return f"[{self.tag}] {self.location}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" +
                         "\n".join(str(v) for v in self.violations))


_ALLOWED_KEYS = {
    "grid": {"dim", "cells", "lengths"},
    "time": {"t_final", "steps"},
    "model": {"alpha", "tau", "chi", "potential", "k1", "safeguard_eps",
              "p0", "p_interval", "h_interval"},
    "initial": {"mu0", "mu0_prime", "phi0", "sigma0"},
    "cost": {"b1", "b2", "b3", "kappa", "target_q", "target_omega", "sparsity"},
    "control": {"parametrization", "u1", "u2", "u1_lo", "u1_hi", "u2_lo",
                "u2_hi", "z_hat", "u_series", "z_tilde", "w1", "kernel",
                "kernel_radius", "kernel_sigma"},
    "optimizer": {"max_iterations", "tolerance", "step0", "backtrack_factor",
                  "sufficient_decrease"},
    "run": {"seed"},
}

_REQUIRED_SECTIONS = ("grid", "time", "model", "initial", "cost", "control")


@dataclass
class RunConfig:
    """Validated run setup, ready to hand to the solvers."""

    grid: Grid
    tg: TimeGrid
    params: ModelParams
    pot: PotentialSpec
    nl: NonlinearitySpec
    init: InitialData
    cost: CostSpec
    box: BoxConstraints
    control: Control
    opt: OptOptions
    seed: int
    path: Path
    sha256: str


class _Reader:
    """Typed accessors over a parsed config, accumulating violations."""

    def __init__(self, parser, base_dir: Path):
        self.parser = parser
        self.base_dir = base_dir
        self.violations: list[ConfigViolation] = []

    def flag(self, tag, location, message):
        self.violations.append(ConfigViolation(tag, location, message))

    def get(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return default

    def number(self, section, key, default=None, tag="parse"):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                self.flag(tag, f"{section}.{key}", "missing required value")
            return default
        try:
            return float(raw)
        except ValueError:
            self.flag(tag, f"{section}.{key}", f"not a number: {raw!r}")
            return default

    def integer(self, section, key, default=None, tag="parse"):
        val = self.number(section, key, default, tag)
        return None if val is None else int(val)

    def field_values(self, section, key, grid: Grid, default=0.0):
        """A constant or an .fld snapshot path, as flat grid values."""
        raw = self.get(section, key)
        if raw is None:
            return np.full(grid.ncells, float(default))
        try:
            return np.full(grid.ncells, float(raw))
        except ValueError:
            pass
        path = self.base_dir / raw
        try:
            return read_field(path, grid).values
        except (OSError, ValueError) as err:
            self.flag("parse", f"{section}.{key}",
                      f"cannot load field snapshot {raw!r}: {err}")
            return np.full(grid.ncells, 0.0)


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration.

    Raises ConfigError listing every violation, each tagged with the model
    assumption it breaks ((A1)-(A7), the initial-datum domain condition
    2.19, the threshold ordering 3.47, or the sparsity sign condition 5.5).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([ConfigViolation("parse", str(path), "no such file")])
    text = path.read_text()
    sha = hashlib.sha256(text.encode()).hexdigest()

    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError([ConfigViolation("parse", str(path), str(err))])

    rd = _Reader(parser, path.parent)

    for section in parser.sections():
        if section not in _ALLOWED_KEYS:
            rd.flag("unknown-key", section, "unknown section")
            continue
        for key in parser.options(section):
            if key not in _ALLOWED_KEYS[section]:
                rd.flag("unknown-key", f"{section}.{key}", "unknown key")
    for section in _REQUIRED_SECTIONS:
        if not parser.has_section(section):
            rd.flag("parse", section, "missing required section")
    if rd.violations:
        raise ConfigError(rd.violations)

    # -- grid / time ---------------------------------------------------------
    dim = rd.integer("grid", "dim", 1)
    try:
        cells = tuple(int(float(c))
                      for c in rd.get("grid", "cells", "32").split(","))
        lengths = tuple(float(c)
                        for c in rd.get("grid", "lengths", "1.0").split(","))
    except ValueError:
        rd.flag("grid", "grid", "cells/lengths must be comma-separated numbers")
        cells, lengths = (32,) * (dim or 1), (1.0,) * (dim or 1)
    if dim not in (1, 2):
        rd.flag("grid", "grid.dim", f"dim must be 1 or 2, got {dim}")
    if len(cells) != dim or len(lengths) != dim:
        rd.flag("grid", "grid", "cells/lengths must list one entry per axis")
    if any(c < 4 for c in cells):
        rd.flag("grid", "grid.cells", "need at least 4 cells per axis")
    if any(l <= 0 for l in lengths):
        rd.flag("grid", "grid.lengths", "side lengths must be positive")

    t_final = rd.number("time", "t_final", 1.0)
    steps = rd.integer("time", "steps", 100)
    if t_final is not None and t_final <= 0:
        rd.flag("time", "time.t_final", "final time must be positive")
    if steps is not None and steps <= 0:
        rd.flag("time", "time.steps", "steps must be positive")

    # -- model ---------------------------------------------------------------
    alpha = rd.number("model", "alpha", 1.0)
    tau = rd.number("model", "tau", 1.0)
    chi = rd.number("model", "chi", 1.0)
    for name, val in (("alpha", alpha), ("tau", tau), ("chi", chi)):
        if val is not None and val <= 0:
            rd.flag("A1", f"model.{name}", "must be a positive constant")

    kind = rd.get("model", "potential", REGULAR)
    if kind not in (REGULAR, LOGARITHMIC):
        rd.flag("A2", "model.potential", f"unknown potential kind {kind!r}")
        kind = REGULAR
    k1 = rd.number("model", "k1", 2.0)
    if kind == LOGARITHMIC and k1 is not None and k1 <= 1.0:
        rd.flag("A2", "model.k1",
                f"logarithmic well requires k1 > 1, got {k1:g}")
    eps = rd.number("model", "safeguard_eps", 1e-8)
    if eps is not None and not (0 < eps < 0.5):
        rd.flag("A2", "model.safeguard_eps", "must lie in (0, 0.5)")

    p0 = rd.number("model", "p0", 0.5)
    if p0 is not None and p0 < 0:
        rd.flag("A3", "model.p0", "proliferation amplitude must be >= 0")

    def interval(key, tag):
        raw = rd.get("model", key, "-1.0, 1.0")
        try:
            lo, hi = (float(v) for v in raw.split(","))
        except ValueError:
            rd.flag(tag, f"model.{key}", f"expected 'lo, hi', got {raw!r}")
            return (-1.0, 1.0)
        if not lo < hi:
            rd.flag(tag, f"model.{key}", "endpoints must be increasing")
            return (-1.0, 1.0)
        return (lo, hi)

    p_interval = interval("p_interval", "A3")
    h_interval = interval("h_interval", "A4")

    # -- cost ----------------------------------------------------------------
    b1 = rd.number("cost", "b1", 0.0)
    b2 = rd.number("cost", "b2", 0.0)
    b3 = rd.number("cost", "b3", 1.0)
    kappa = rd.number("cost", "kappa", 0.0)
    if b1 is not None and b1 < 0:
        rd.flag("A5", "cost.b1", "must be nonnegative")
    if b2 is not None and b2 < 0:
        rd.flag("A5", "cost.b2", "must be nonnegative")
    if b3 is not None and b3 <= 0:
        rd.flag("A5", "cost.b3", "must be positive")
    if kappa is not None and kappa < 0:
        rd.flag("A5", "cost.kappa", "must be nonnegative")
    sparsity_kind = rd.get("cost", "sparsity", "l1_full")
    if sparsity_kind not in ("none", "l1_full"):
        rd.flag("A7", "cost.sparsity", f"unknown sparsity kind {sparsity_kind!r}")
        sparsity_kind = "none"

    # -- control -------------------------------------------------------------
    parametrization = rd.get("control", "parametrization", "full")
    if parametrization not in ("full", "scenario1", "scenario2", "scenario3"):
        rd.flag("parse", "control.parametrization",
                f"unknown parametrization {parametrization!r}")
        parametrization = "full"
    lo1 = rd.number("control", "u1_lo", -np.inf)
    hi1 = rd.number("control", "u1_hi", np.inf)
    lo2 = rd.number("control", "u2_lo", -np.inf)
    hi2 = rd.number("control", "u2_hi", np.inf)
    if lo1 > hi1 or lo2 > hi2:
        rd.flag("3.47", "control", "box thresholds must satisfy lo <= hi")
    if kappa and kappa > 0 and sparsity_kind == "l1_full":
        free_first = parametrization != "scenario1"
        if free_first and not (lo1 < 0 < hi1):
            rd.flag("5.5", "control.u1_lo/u1_hi",
                    "sparsity with kappa > 0 needs lo < 0 < hi")
        if not (lo2 < 0 < hi2):
            rd.flag("5.5", "control.u2_lo/u2_hi",
                    "sparsity with kappa > 0 needs lo < 0 < hi")

    kernel_kind = rd.get("control", "kernel", "gaussian")
    kernel_radius = rd.integer("control", "kernel_radius", 2)
    kernel_sigma = rd.number("control", "kernel_sigma", 1.0)

    # -- optimizer / run -------------------------------------------------------
    step0_raw = rd.get("optimizer", "step0", "auto")
    if step0_raw in (None, "auto"):
        step0 = None
    else:
        try:
            step0 = float(step0_raw)
        except ValueError:
            rd.flag("parse", "optimizer.step0",
                    f"expected a number or 'auto', got {step0_raw!r}")
            step0 = None
    opt = OptOptions(
        step0=step0,
        backtrack_factor=rd.number("optimizer", "backtrack_factor", 0.5),
        sufficient_decrease=rd.number("optimizer", "sufficient_decrease", 1e-4),
        max_iterations=rd.integer("optimizer", "max_iterations", 500),
        tolerance=rd.number("optimizer", "tolerance", 1e-6),
    )
    seed = rd.integer("run", "seed", 0)

    if rd.violations:
        raise ConfigError(rd.violations)

    # -- construct objects (shape errors surface as violations too) -----------
    grid = Grid(cells, lengths)
    tg = TimeGrid(t_final, steps)
    params = ModelParams(alpha, tau, chi)
    pot = PotentialSpec(kind, k1=k1, safeguard_eps=eps)
    nl = NonlinearitySpec(p0=p0, p_interval=p_interval, h_interval=h_interval)

    init_values = {key: rd.field_values("initial", key, grid)
                   for key in ("mu0", "mu0_prime", "phi0", "sigma0")}
    lo, hi = pot.domain
    phi0 = init_values["phi0"]
    if not (np.all(phi0 > lo) and np.all(phi0 < hi)):
        rd.flag("2.19", "initial.phi0",
                f"phi0 must lie strictly inside ({lo:g}, {hi:g}); "
                f"got range [{phi0.min():g}, {phi0.max():g}]")

    target_q = rd.field_values("cost", "target_q", grid)
    target_omega = rd.field_values("cost", "target_omega", grid)

    shape = (tg.steps, grid.ncells)
    u2 = np.broadcast_to(rd.field_values("control", "u2", grid), shape).copy()
    if parametrization == "full":
        u1 = np.broadcast_to(rd.field_values("control", "u1", grid), shape).copy()
        control = Control.full(u1, u2)
    elif parametrization == "scenario1":
        u1 = np.broadcast_to(rd.field_values("control", "u1", grid), shape).copy()
        control = Control.scenario1(u1, u2)
    elif parametrization == "scenario2":
        z_hat = rd.field_values("control", "z_hat", grid, default=1.0)
        try:
            series_value = float(rd.get("control", "u_series", "0.0"))
        except ValueError:
            rd.flag("parse", "control.u_series", "not a number")
            series_value = 0.0
        control = Control.scenario2(z_hat, np.full(tg.steps, series_value), u2)
    else:
        z_tilde = np.broadcast_to(
            rd.field_values("control", "z_tilde", grid), shape).copy()
        w1 = np.broadcast_to(rd.field_values("control", "w1", grid), shape).copy()
        try:
            h_spec = HSpec(kernel_kind, kernel_radius, kernel_sigma)
            if h_spec.kernel().size > min(grid.cells):
                rd.flag("parse", "control.kernel_radius",
                        "kernel wider than the grid")
        except ValueError as err:
            rd.flag("parse", "control.kernel", str(err))
            h_spec = HSpec("delta")
        control = Control.scenario3(z_tilde, h_spec, w1, u2)

    if rd.violations:
        raise ConfigError(rd.violations)

    init = InitialData(Field(grid, init_values["mu0"]),
                       Field(grid, init_values["mu0_prime"]),
                       Field(grid, init_values["phi0"]),
                       Field(grid, init_values["sigma0"]))
    cost = CostSpec(b1=b1, b2=b2, b3=b3, kappa=kappa,
                    target_q=target_q, target_omega=target_omega,
                    sparsity=SparsitySpec(sparsity_kind, kappa))
    box = BoxConstraints(lo1, hi1, lo2, hi2)

    return RunConfig(grid=grid, tg=tg, params=params, pot=pot, nl=nl,
                     init=init, cost=cost, box=box, control=control, opt=opt,
                     seed=seed, path=path, sha256=sha)
