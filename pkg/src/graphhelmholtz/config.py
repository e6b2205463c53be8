"""Run configuration: TOML file with embedded defaults and strict key
checking."""

from __future__ import annotations

import copy
import math
import sys

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .geometry import GraphDomainSpec
from .grid import make_grid

__all__ = ["ConfigError", "DEFAULTS", "RunConfig", "load_config", "dump_config"]

U64_MAX = 2**64 - 1

DEFAULTS = {
    "seed": 0,
    "eta": {"kind": "flat", "params": {}},
    "grid": {"d": 1, "N": 64, "L": 2 * math.pi, "T": 12.0, "count": 129, "ratio": 1.03},
    "solver": {"method": "direct", "q": 2.0, "r": [], "taper_width": 0.0},
    "ensemble": {"size": 8, "kmax": 4},
    "sweep": {"lips": [0.5, 1.0, 2.0, 5.0], "qs": [4.0 / 3.0, 2.0, 4.0], "refine": True},
    "verify": {"refine": True},
    "oracle": {"slope": 2.0, "strip_step_halvings": 1},
}

_OPTIONAL_TOP = {"lip"}


class ConfigError(ValueError):
    """Invalid configuration (the CLI exits with status 2)."""


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k in _OPTIONAL_TOP and not path:
            out[k] = v
            continue
        if k not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[k], dict) and k != "params":
            if not isinstance(v, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def _num(x, name, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"'{name}' must be a number")
    if integer and int(x) != x:
        raise ConfigError(f"'{name}' must be an integer")
    return int(x) if integer else float(x)


class RunConfig:
    """Validated configuration.

    Attributes
    ----------
    data : dict
        Merged values (defaults overridden by the file and the command line).
    domain : GraphDomainSpec
    grid : HalfGrid
    """

    def __init__(self, data):
        self.data = data
        self._validate()

    def _validate(self):
        d = self.data
        seed = d["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        g = d["grid"]
        dim = _num(g["d"], "grid.d", integer=True)
        if dim not in (1, 2):
            raise ConfigError("grid.d must be 1 or 2")
        N = _num(g["N"], "grid.N", integer=True)
        if N < 8 or N % 2:
            raise ConfigError(f"grid.N must be even and >= 8 (got {N})")
        count = _num(g["count"], "grid.count", integer=True)
        if count < 3:
            raise ConfigError(f"grid.count must be >= 3 (got {count})")
        L, T, ratio = _num(g["L"], "grid.L"), _num(g["T"], "grid.T"), _num(g["ratio"], "grid.ratio")
        if not L > 0:
            raise ConfigError("grid.L must be positive")
        if not T > 0:
            raise ConfigError("grid.T must be positive")
        if not ratio >= 1:
            raise ConfigError("grid.ratio must be >= 1")
        s = d["solver"]
        if s["method"] not in ("direct", "formula"):
            raise ConfigError("solver.method must be 'direct' or 'formula'")
        q = _num(s["q"], "solver.q")
        if not 1 < q < math.inf:
            raise ConfigError("solver.q must lie in (1, inf)")
        if not isinstance(s["r"], list):
            raise ConfigError("solver.r must be a list")
        for r in s["r"]:
            if not 1 < _num(r, "solver.r") <= math.inf:
                raise ConfigError("entries of solver.r must exceed 1")
        if _num(s["taper_width"], "solver.taper_width") < 0:
            raise ConfigError("solver.taper_width must be >= 0")
        e = d["ensemble"]
        if _num(e["size"], "ensemble.size", integer=True) < 1:
            raise ConfigError("ensemble.size must be >= 1")
        if _num(e["kmax"], "ensemble.kmax", integer=True) < 1:
            raise ConfigError("ensemble.kmax must be >= 1")
        sw = d["sweep"]
        for key in ("lips", "qs"):
            if not isinstance(sw[key], list) or not sw[key]:
                raise ConfigError(f"sweep.{key} must be a non-empty list")
        for v in sw["lips"]:
            if _num(v, "sweep.lips") < 0:
                raise ConfigError("sweep.lips entries must be >= 0")
        for v in sw["qs"]:
            if not 1 < _num(v, "sweep.qs") < math.inf:
                raise ConfigError("sweep.qs entries must lie in (1, inf)")
        for sec, key in (("sweep", "refine"), ("verify", "refine")):
            if not isinstance(d[sec][key], bool):
                raise ConfigError(f"{sec}.{key} must be true or false")
        o = d["oracle"]
        _num(o["slope"], "oracle.slope")
        if _num(o["strip_step_halvings"], "oracle.strip_step_halvings", integer=True) < 1:
            raise ConfigError("oracle.strip_step_halvings must be >= 1")
        eta = d["eta"]
        if not isinstance(eta.get("params", {}), dict):
            raise ConfigError("eta.params must be a table")
        lip = d.get("lip")
        try:
            self.domain = GraphDomainSpec(
                eta["kind"], dict(eta.get("params", {})), L=L, lip=None if lip is None else float(lip), d=dim
            )
            self.grid = make_grid(dim, N, L, T, count, ratio)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    @property
    def seed(self):
        return int(self.data["seed"])

    def ensemble_seeds(self):
        """Member seeds derived from the master seed."""
        ss = np.random.SeedSequence(self.seed)
        return [int(v) for v in ss.generate_state(int(self.data["ensemble"]["size"]), np.uint64)]

    def to_toml(self):
        return dump_config(self.data)


def dump_config(data):
    """TOML text of a configuration dictionary."""
    return tomli_w.dumps(data)


def load_config(path=None, overrides=None):
    """Defaults, then the TOML file at ``path``, then ``overrides``.

    Raises
    ------
    ConfigError
        Unreadable file, unknown key, or violated precondition.
    """
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        data = _merge(data, raw)
    if overrides:
        data = _merge(data, overrides)
    return RunConfig(data)
