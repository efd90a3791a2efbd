"""Run configuration: INI sections, environment overrides and schema checks.

Precedence, lowest first: scenario defaults, config file, ``TSRIS_<SECTION>_<KEY>``
environment variables, explicit overrides from the command line.
"""
from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, fields, replace

from .oracles import scenario
from .potentials import ConfigurationError
from .two_speed import TwoSpeedConfig

ENV_PREFIX = "TSRIS_"

PROBLEM_KEYS = ("scenario", "name", "density", "density_params", "dissipation",
                "loading_offset", "loading_slope", "u0", "horizon")
GRID_KEYS = ("dim", "n_nodes", "length")
SOLVER_KEYS = ("lambdas", "delta", "tau_ratio", "tau_fast", "tau_slow", "lam_slow",
               "newton_tol", "drop_cap", "energy_tol", "jobs")
TWO_SPEED_KEYS = ("m_max", "window", "window_merge", "eps_tail", "eps_stab", "eps_active",
                  "eps_connect", "theta_hold", "theta_max", "slide_tilt", "slide_step",
                  "min_slide_var", "slide_normal_tol", "max_slide_steps")
OUTPUT_KEYS = ("directory", "formats")
SCHEMA = {"problem": PROBLEM_KEYS, "grid": GRID_KEYS, "solver": SOLVER_KEYS,
          "two_speed": TWO_SPEED_KEYS, "output": OUTPUT_KEYS}
FORMATS = ("csv", "json", "svg")
_INT_FIELDS = {"m_max", "max_slide_steps", "jobs", "dim", "n_nodes"}


@dataclass(frozen=True)
class RunConfig:
    problem: dict
    two_speed: TwoSpeedConfig
    directory: str = "run"
    formats: tuple = FORMATS

    def build_problem(self):
        from .viscous_solver import build_problem
        return build_problem(self.problem)

    def to_ini(self) -> str:
        """Resolved configuration; loading it back reproduces this object."""
        p = self.problem
        load = p.get("loading") or {}
        grid = p.get("grid") or {"dim": 0}
        lines = ["[problem]", f"name = {p.get('name', '')}", f"density = {p['density']}",
                 f"density_params = {_json(p.get('density_params') or {})}",
                 f"dissipation = {_json(p['dissipation'])}",
                 f"loading_offset = {_json(load.get('offset', 0.0))}",
                 f"loading_slope = {_json(load.get('slope', 0.0))}",
                 f"u0 = {_json(p.get('u0', 0.0))}", f"horizon = {_num(p['horizon'])}", "",
                 "[grid]"]
        lines += [f"{k} = {_json(grid[k])}" for k in GRID_KEYS if k in grid]
        c = self.two_speed
        lines += ["", "[solver]", "lambdas = " + ", ".join(_num(x) for x in c.lambdas)]
        for k in SOLVER_KEYS[1:]:
            v = getattr(c, k)
            lines.append(f"{k} = {'none' if v is None else _num(v)}")
        lines += ["", "[two_speed]"]
        lines += [f"{k} = {_num(getattr(c, k))}" for k in TWO_SPEED_KEYS]
        lines += ["", "[output]", f"directory = {self.directory}",
                  "formats = " + ", ".join(self.formats), ""]
        return "\n".join(lines)


def _num(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def _json(x) -> str:
    return json.dumps(x, sort_keys=True)


def _parse_value(path: str, raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigurationError(f"{path}: cannot parse {raw!r} as a number or JSON value") from None


def _number(path, raw, *, integer=False, allow_none=False):
    if allow_none and raw.strip().lower() in ("none", ""):
        return None
    v = _parse_value(path, raw)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {raw!r}")
    if integer:
        if float(v) != int(v):
            raise ConfigurationError(f"{path}: expected an integer, got {raw!r}")
        return int(v)
    return float(v)


def parse_lambdas(raw: str, path: str = "solver.lambdas") -> tuple:
    parts = [x.strip() for x in raw.replace(";", ",").split(",") if x.strip()]
    if not parts:
        raise ConfigurationError(f"{path}: at least one value is required")
    out = []
    for x in parts:
        try:
            v = float(x)
        except ValueError:
            raise ConfigurationError(f"{path}: {x!r} is not a number") from None
        if not v > 0:
            raise ConfigurationError(f"{path}: values must be positive, got {x}")
        out.append(v)
    return tuple(out)


def _collect(text: str | None, env) -> dict:
    """Raw key-value pairs per section from file text and environment."""
    raw = {s: {} for s in SCHEMA}
    if text is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigurationError(f"config: {e}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigurationError(f"{sec}: unknown section")
            for k, v in cp.items(sec):
                raw[sec][k] = v
    for name, v in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for sec in sorted(SCHEMA, key=len, reverse=True):
            if rest.startswith(sec + "_"):
                raw[sec][rest[len(sec) + 1:]] = v
                break
        else:
            raise ConfigurationError(f"{name}: does not name a config section")
    for sec, kv in raw.items():
        for k in kv:
            if k not in SCHEMA[sec]:
                raise ConfigurationError(f"{sec}.{k}: unknown field")
    return raw


def load_config(text: str | None = None, *, scenario_name: str | None = None,
                env=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from INI text plus environment and explicit overrides.

    ``overrides`` may hold ``lambdas`` (tuple), ``jobs`` (int) and ``directory``.
    """
    env = os.environ if env is None else env
    raw = _collect(text, env)
    prob = raw["problem"]
    name = scenario_name or prob.get("scenario", "").strip() or None
    if name:
        sc = scenario(name)
        spec = json.loads(json.dumps(sc.spec))
        base = sc.config
    else:
        spec, base = {}, TwoSpeedConfig()

    if "name" in prob:
        spec["name"] = prob["name"].strip()
    for key in ("density",):
        if key in prob:
            spec[key] = prob[key].strip()
    for key in ("density_params", "dissipation"):
        if key in prob:
            v = _parse_value(f"problem.{key}", prob[key])
            if not isinstance(v, dict):
                raise ConfigurationError(f"problem.{key}: expected a JSON object")
            spec[key] = v
    load = dict(spec.get("loading") or {})
    for key, dst in (("loading_offset", "offset"), ("loading_slope", "slope")):
        if key in prob:
            load[dst] = _parse_value(f"problem.{key}", prob[key])
    spec["loading"] = load
    if "u0" in prob:
        spec["u0"] = _parse_value("problem.u0", prob["u0"])
    if "horizon" in prob:
        spec["horizon"] = _number("problem.horizon", prob["horizon"])
    for key in ("density", "dissipation", "horizon"):
        if key not in spec:
            raise ConfigurationError(f"problem.{key}: required (or set problem.scenario)")
    if not spec["horizon"] > 0:
        raise ConfigurationError("problem.horizon: must be positive")

    grid = dict(spec.get("grid") or {"dim": 0})
    for k, v in raw["grid"].items():
        grid[k] = _number(f"grid.{k}", v, integer=k in _INT_FIELDS)
    if grid.get("dim", 0) not in (0, 1):
        raise ConfigurationError("grid.dim: must be 0 or 1")
    if grid.get("dim", 0) == 1 and grid.get("n_nodes", 64) < 1:
        raise ConfigurationError("grid.n_nodes: must be positive")
    if "length" in grid and not grid["length"] > 0:
        raise ConfigurationError("grid.length: must be positive")
    spec["grid"] = grid

    changes = {}
    for sec in ("solver", "two_speed"):
        for k, v in raw[sec].items():
            path = f"{sec}.{k}"
            if k == "lambdas":
                changes[k] = parse_lambdas(v, path)
            else:
                changes[k] = _number(path, v, integer=k in _INT_FIELDS, allow_none=k == "drop_cap")
    overrides = dict(overrides or {})
    if overrides.get("lambdas") is not None:
        changes["lambdas"] = tuple(overrides["lambdas"])
    if overrides.get("jobs") is not None:
        changes["jobs"] = int(overrides["jobs"])
    valid = {f.name for f in fields(TwoSpeedConfig)}
    cfg = replace(base, **{k: v for k, v in changes.items() if k in valid})

    out = raw["output"]
    directory = overrides.get("directory") or out.get("directory", "run").strip() or "run"
    formats = FORMATS
    if "formats" in out:
        formats = tuple(x.strip().lower() for x in out["formats"].split(",") if x.strip())
        bad = [x for x in formats if x not in FORMATS]
        if bad or not formats:
            raise ConfigurationError(f"output.formats: expected a subset of {FORMATS}, got {out['formats']!r}")
    rc = RunConfig(problem=spec, two_speed=cfg, directory=directory, formats=formats)
    try:
        rc.build_problem()
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"problem: {e}") from None
    return rc
