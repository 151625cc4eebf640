"""JSON run configurations with a strict schema.

A configuration is a JSON object with the sections ``problem``, ``network``,
``evolution``, ``fit``, ``collocation``, ``benchmark``, an optional ``sweep``
and an ``out`` directory. Only ``problem.kind`` is required; everything else
falls back to per-problem defaults. Unknown keys are rejected, and every
validation message names the offending field and the line it sits on.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .evolution import EULER, RK4, CollocationSet, EvolutionConfig, FitConfig
from .network import IDENTITY, KAN, MLP, PERIODIC, Network
from .problems import DIVERGENCE_FREE, LITERAL, AllenCahnSpec, ContractError, NavierStokesSpec

AC1D, AC2D, NSE2D = "ac1d", "ac2d", "nse2d"
PROBLEMS = (AC1D, AC2D, NSE2D)


class ConfigError(ValueError):
    def __init__(self, message, field=None, line=None):
        where = ""
        if field:
            where += f"{field}: "
        if line:
            where = f"line {line}: " + where
        super().__init__(where + message)
        self.field = field
        self.line = line


# per-problem defaults, merged under the user's values
DEFAULTS = {
    AC1D: {
        "problem": {"eps": 0.02, "amplitude": 0.25, "shift": 1.0},
        "network": {"widths": [1, 8, 8, 1]},
        "evolution": {"dt": 1e-4, "T": 1.0},
        "collocation": {"n": 256},
        # the data near the zero crossings is ~1e-3 and bistable growth amplifies fit errors
        "fit": {"tol": 1e-6},
    },
    AC2D: {
        "problem": {"eps": 0.05, "alpha": 1, "shift": 1.0},
        "network": {"widths": [2, 8, 8, 1]},
        # 5e-4 sits on the edge of explicit stability for this network and grid
        "evolution": {"dt": 4e-4, "T": 0.5},
        "collocation": {"n": 64},
        "fit": {"tol": 5e-4},
    },
    NSE2D: {
        "problem": {"nu": 0.05, "ic": DIVERGENCE_FREE},
        "network": {"widths": [2, 10, 10, 2]},
        "evolution": {"dt": 1e-3, "T": 0.2},
        "collocation": {"n": 64},
        "fit": {"tol": 5e-4},
    },
}

COMMON = {
    "network": {"backend": KAN, "order": 3, "grid": 8, "embedding": PERIODIC, "seed": 0, "hidden_domain": None},
    "evolution": {"integrator": RK4, "regularization": 1e-8, "sav": False, "snapshot_every": 10},
    "fit": {"max_iter": 200, "tol": 1e-5, "damping": 1e-3, "seed": 0},
    "collocation": {"mode": "grid", "count": None, "seed": 0, "resample": False},
    "benchmark": {"scheme": "imex", "n_ref": None, "dt": None},
}


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# key -> (type, check, description of the check)
SCHEMA = {
    "problem": {
        "kind": (str, lambda v: v in PROBLEMS, f"one of {PROBLEMS}"),
        "eps": (float, _positive, "> 0"),
        "amplitude": (float, None, ""),
        "alpha": (int, lambda v: v >= 1, ">= 1"),
        "shift": (float, _positive, "> 0"),
        "nu": (float, _positive, "> 0"),
        "ic": (str, lambda v: v in (DIVERGENCE_FREE, LITERAL), f"{DIVERGENCE_FREE!r} or {LITERAL!r}"),
    },
    "network": {
        "backend": (str, lambda v: v in (KAN, MLP), f"{KAN!r} or {MLP!r}"),
        "widths": (list, lambda v: len(v) >= 2 and all(type(w) is int and w >= 1 for w in v),
                   "a list of at least two positive integers"),
        "order": (int, lambda v: v >= 1, ">= 1"),
        "grid": (int, lambda v: v >= 2, ">= 2"),
        "embedding": (str, lambda v: v in (IDENTITY, PERIODIC), f"{IDENTITY!r} or {PERIODIC!r}"),
        "seed": (int, _nonneg, ">= 0"),
        "hidden_domain": (list, lambda v: len(v) == 2 and v[0] < v[1], "[lo, hi] with lo < hi"),
    },
    "evolution": {
        "dt": (float, _positive, "> 0"),
        "T": (float, _positive, "> 0"),
        "integrator": (str, lambda v: v in (EULER, RK4), f"{EULER!r} or {RK4!r}"),
        "regularization": (float, _nonneg, ">= 0"),
        "sav": (bool, None, ""),
        "snapshot_every": (int, lambda v: v >= 1, ">= 1"),
    },
    "fit": {
        "max_iter": (int, _nonneg, ">= 0"),
        "tol": (float, _positive, "> 0"),
        "damping": (float, _positive, "> 0"),
        "seed": (int, _nonneg, ">= 0"),
    },
    "collocation": {
        "mode": (str, lambda v: v in ("grid", "random"), "'grid' or 'random'"),
        "n": (int, lambda v: v >= 4, ">= 4"),
        "count": (int, lambda v: v >= 1, ">= 1"),
        "seed": (int, _nonneg, ">= 0"),
        "resample": (bool, None, ""),
    },
    "benchmark": {
        "scheme": (str, lambda v: v in ("imex", "sav"), "'imex' or 'sav'"),
        "n_ref": (int, lambda v: v >= 16, ">= 16"),
        "dt": (float, _positive, "> 0"),
    },
    "sweep": {
        "values": (list, lambda v: len(v) >= 1 and all(type(x) in (int, float) and x > 0 for x in v),
                   "a nonempty list of positive numbers"),
    },
}
TOP_LEVEL = set(SCHEMA) | {"out"}


def _line_of(text: str | None, section: str, key: str | None = None) -> int | None:
    """Best-effort line number of ``section.key`` in the JSON source."""
    if not text:
        return None
    m = re.search(rf'"{re.escape(section)}"\s*:', text)
    if not m:
        return None
    pos = m.start()
    if key is not None:
        k = re.compile(rf'"{re.escape(key)}"\s*:').search(text, m.end())
        if k:
            pos = k.start()
    return text.count("\n", 0, pos) + 1


def _typecheck(value, typ) -> bool:
    if value is None:
        return True
    if typ is float:
        return type(value) in (int, float)
    if typ in (int, bool):
        return type(value) is typ
    return isinstance(value, typ)


@dataclass
class RunConfig:
    kind: str
    problem: AllenCahnSpec | NavierStokesSpec
    network: Network
    network_seed: int
    evolution: EvolutionConfig
    fit: FitConfig
    collocation: dict
    benchmark: dict
    sweep: list[float] | None
    out: str | None
    resolved: dict

    @property
    def sweep_parameter(self) -> str:
        return "nu" if self.kind == NSE2D else "eps"

    @property
    def parameter_value(self) -> float:
        return getattr(self.problem, self.sweep_parameter)

    @property
    def method(self) -> str:
        return "EvoKAN" if self.network.backend == KAN else "EDNN"

    def make_collocation(self) -> CollocationSet:
        c = self.collocation
        dim = self.problem.dim
        if c["mode"] == "grid":
            return CollocationSet.uniform_grid(c["n"], dim, self.problem.half_width)
        count = c["count"] if c["count"] is not None else c["n"] ** dim
        return CollocationSet.uniform_random(count, dim, c["seed"], self.problem.half_width, c["resample"])

    def config_hash(self) -> str:
        return config_hash(self.resolved)

    def children(self) -> list["RunConfig"]:
        """One configuration per sweep value (``[self]`` without a sweep)."""
        if not self.sweep:
            return [self]
        out = []
        for v in self.sweep:
            d = copy.deepcopy(self.resolved)
            d.pop("sweep", None)
            d["problem"][self.sweep_parameter] = v
            d["out"] = None
            out.append(from_dict(d))
        return out

    def child_name(self) -> str:
        return f"{self.sweep_parameter}_{self.parameter_value:g}"


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def from_dict(raw: dict, text: str | None = None) -> RunConfig:
    """Validate ``raw`` (the parsed JSON) and build the run objects."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", line=1)
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", line=_line_of(text, unknown[0]))
    problem = raw.get("problem")
    if not isinstance(problem, dict) or "kind" not in problem:
        raise ConfigError("missing required key", field="problem.kind", line=_line_of(text, "problem"))
    kind = problem["kind"]
    if kind not in PROBLEMS:
        raise ConfigError(f"must be one of {PROBLEMS}, got {kind!r}", field="problem.kind",
                          line=_line_of(text, "problem", "kind"))

    resolved: dict = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section)
        if given is None:
            if section == "sweep":
                continue
            given = {}
        if not isinstance(given, dict):
            raise ConfigError("must be an object", field=section, line=_line_of(text, section))
        unknown = sorted(set(given) - set(keys))
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", field=section, line=_line_of(text, section, unknown[0]))
        merged = dict(COMMON.get(section, {}))
        merged.update(DEFAULTS[kind].get(section, {}))
        merged.update(given)
        for key, value in given.items():
            typ, check, desc = keys[key]
            name = f"{section}.{key}"
            if not _typecheck(value, typ):
                raise ConfigError(f"expected {typ.__name__}, got {type(value).__name__}", name,
                                  _line_of(text, section, key))
            if value is not None and check is not None and not check(value):
                raise ConfigError(f"must be {desc}, got {value!r}", name, _line_of(text, section, key))
        resolved[section] = merged
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("expected a path string", field="out", line=_line_of(text, "out"))
    resolved["out"] = out
    return _build(kind, resolved, text)


def _build(kind: str, d: dict, text) -> RunConfig:
    p, n, e, f = d["problem"], d["network"], d["evolution"], d["fit"]
    dim = 1 if kind == AC1D else 2
    irrelevant = {"eps", "amplitude", "alpha", "shift"} if kind == NSE2D else {"nu", "ic"}
    if kind == AC1D:
        irrelevant.add("alpha")
    if kind == AC2D:
        irrelevant.add("amplitude")
    bad = sorted(irrelevant & set(p))
    if bad:
        raise ConfigError(f"not a {kind} parameter", field=f"problem.{bad[0]}", line=_line_of(text, "problem", bad[0]))
    try:
        if kind == NSE2D:
            spec = NavierStokesSpec(nu=p["nu"], ic=p["ic"])
        else:
            spec = AllenCahnSpec(dim=dim, eps=p["eps"], amplitude=p.get("amplitude", 0.25), alpha=p.get("alpha", 1),
                                 shift=p["shift"])
    except (ContractError, ValueError) as err:
        raise ConfigError(str(err), field="problem", line=_line_of(text, "problem")) from err
    widths = tuple(n["widths"])
    if widths[0] != dim or widths[-1] != spec.n_outputs:
        raise ConfigError(f"must start with {dim} and end with {spec.n_outputs} for {kind}, got {list(widths)}",
                          field="network.widths", line=_line_of(text, "network", "widths"))
    try:
        net = Network(widths, backend=n["backend"], embedding=n["embedding"], order=n["order"], grid=n["grid"],
                      hidden_domain=tuple(n["hidden_domain"]) if n["hidden_domain"] else None)
    except ValueError as err:
        raise ConfigError(str(err), field="network", line=_line_of(text, "network")) from err
    try:
        evo = EvolutionConfig(dt=e["dt"], T=e["T"], integrator=e["integrator"], regularization=e["regularization"],
                              sav=e["sav"], snapshot_every=e["snapshot_every"])
    except ValueError as err:
        raise ConfigError(str(err), field="evolution", line=_line_of(text, "evolution")) from err
    if abs(evo.n_steps * evo.dt - evo.T) > 1e-9 * evo.T:
        raise ConfigError(f"T={evo.T} is not a whole number of steps of dt={evo.dt}", field="evolution.T",
                          line=_line_of(text, "evolution", "T"))
    if evo.sav and kind == NSE2D:
        raise ConfigError("SAV mode applies to Allen-Cahn only", field="evolution.sav",
                          line=_line_of(text, "evolution", "sav"))
    fit = FitConfig(max_iter=f["max_iter"], tol=f["tol"], damping=f["damping"], seed=f["seed"])
    colloc = d["collocation"]
    if kind == NSE2D and colloc["mode"] != "grid":
        raise ConfigError("the Navier-Stokes residual needs grid collocation", field="collocation.mode",
                          line=_line_of(text, "collocation", "mode"))
    if colloc["mode"] == "grid" and colloc["n"] & (colloc["n"] - 1):
        raise ConfigError(f"grid size must be a power of two, got {colloc['n']}", field="collocation.n",
                          line=_line_of(text, "collocation", "n"))
    bench = d["benchmark"]
    if kind == NSE2D and bench["scheme"] != "imex":
        raise ConfigError("the Navier-Stokes benchmark has a single scheme", field="benchmark.scheme",
                          line=_line_of(text, "benchmark", "scheme"))
    sweep = d.get("sweep", {}).get("values") if d.get("sweep") else None
    return RunConfig(kind, spec, net, n["seed"], evo, fit, colloc, bench, sweep, d.get("out"), d)


def loads(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err.msg}", line=err.lineno) from err
    # a run manifest embeds its resolved configuration
    if isinstance(raw, dict) and "config" in raw and "config_hash" in raw:
        raw = raw["config"]
        text = None
    return from_dict(raw, text)


def load(path) -> RunConfig:
    return loads(Path(path).read_text())
