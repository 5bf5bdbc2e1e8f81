"""Run configuration (YAML), CSV/JSON emission and the command dispatcher."""
from __future__ import annotations

import csv
import inspect
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import experiments as ex
from .laws import OffspringLaw, make_law
from .schroeder import IteratedMap, compute_h, default_x_max
from .simulator import SimConfig, set_workers, simulate_coupled, simulate_path
from .validation import validate_assumptions
from .wlimit import N_TRUNC, sample_W, w_moments

log = logging.getLogger(__name__)

COMMANDS = ("simulate", "coupled", "compute-h", "sample-w", "verify", "recover-z0",
            "validate-law")

EXPERIMENTS = {
    "verify_theorem1": ex.verify_theorem1,
    "verify_fixed_time": ex.verify_fixed_time,
    "verify_main": ex.verify_main,
    "verify_corollary_shift": ex.verify_corollary_shift,
    "verify_sublog": ex.verify_sublog,
}
_ALIASES = {"theorem1": "verify_theorem1", "fixed_time": "verify_fixed_time",
            "main": "verify_main", "shift": "verify_corollary_shift",
            "sublog": "verify_sublog"}

# experiment arguments supplied by RunConfig fields rather than ``params``
_FROM_CONFIG = {"law", "z0", "K_grid", "R", "seed", "c", "gamma", "H"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    law: dict
    command: str = "simulate"
    K: float | None = None
    z0: int = 1
    c: float = 0.6
    gamma: float = 0.8
    n_max: int | None = None
    mode: str = "fast"
    seed: int = 0
    replicates: int = 1
    K_grid: list | None = None
    experiment: str | None = None
    params: dict = field(default_factory=dict)
    h: dict = field(default_factory=lambda: {"x_max": None, "knots": 1025, "tol": 1e-8})
    out: str = "results"
    threads: int = 1

    def sim_config(self, K: float | None = None) -> SimConfig:
        return SimConfig(K if K is not None else self.K, self.z0, self.c, self.gamma,
                         self.n_max, self.seed, self.mode)

    def build_law(self) -> OffspringLaw:
        return make_law(self.law)

    def to_dict(self) -> dict:
        return ex._plain(asdict(self))


_KEYS = set(RunConfig.__dataclass_fields__)
_H_KEYS = {"x_max", "knots", "tol"}


def _resolve_experiment(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown id {name!r}; choose from {sorted(EXPERIMENTS)}")
    return name


def _experiment_defaults(name: str) -> dict:
    sig = inspect.signature(EXPERIMENTS[name])
    return {k: p.default for k, p in sig.parameters.items()
            if p.default is not inspect.Parameter.empty}


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse and validate a YAML run configuration; every default is filled in.

    ``overrides`` (for example the command named on the command line) replace
    top-level keys before validation.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"not valid YAML: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    if "law" not in doc:
        raise ConfigError("law: required")
    if not isinstance(doc["law"], dict) or "family" not in doc["law"]:
        raise ConfigError("law: expected a mapping with a 'family' entry")
    doc = dict(doc)
    h = dict(RunConfig.__dataclass_fields__["h"].default_factory())
    extra_h = set(doc.get("h") or {}) - _H_KEYS
    if extra_h:
        raise ConfigError(f"h: unknown key(s): {', '.join(sorted(extra_h))}")
    h.update(doc.get("h") or {})
    doc["h"] = h
    if doc.get("experiment"):
        doc["experiment"] = _resolve_experiment(doc["experiment"])
        doc.setdefault("command", "verify")
    _check_types(doc)
    cfg = RunConfig(**doc)
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown {cfg.command!r}; choose from {COMMANDS}")
    try:
        cfg.build_law()
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(f"law: {err}") from None
    if cfg.K is not None:
        cfg.K = float(cfg.K)
    if cfg.K_grid is not None:
        cfg.K_grid = [float(k) for k in cfg.K_grid]
    try:
        SimConfig(cfg.K if cfg.K is not None else 1.0, cfg.z0, cfg.c, cfg.gamma,
                  cfg.n_max, cfg.seed, cfg.mode)
    except ValueError as err:
        msg = str(err)
        fld = msg.split()[0] if msg.split()[0] in ("c", "gamma", "K", "z0", "n_max", "mode") else "sim"
        raise ConfigError(f"{fld}: {msg}") from None
    if cfg.command in ("simulate", "coupled", "recover-z0") and cfg.K is None:
        raise ConfigError(f"K: required for command {cfg.command!r}")
    if cfg.command == "verify":
        if not cfg.experiment:
            raise ConfigError("experiment: required for command 'verify'")
        defaults = _experiment_defaults(cfg.experiment)
        bad = set(cfg.params) - (set(defaults) - _FROM_CONFIG) - _required_params(cfg.experiment)
        if bad:
            raise ConfigError(f"params: unknown for {cfg.experiment}: {', '.join(sorted(bad))}")
        for k, v in defaults.items():
            if k not in _FROM_CONFIG:
                cfg.params.setdefault(k, v)
        if cfg.K_grid is None and "K_grid" in defaults:
            cfg.K_grid = [float(k) for k in defaults["K_grid"]]
        if "R" in defaults and cfg.replicates == 1 and "replicates" not in doc:
            cfg.replicates = defaults["R"]
        missing = _required_params(cfg.experiment) - set(cfg.params)
        if missing:
            raise ConfigError(f"params: missing {', '.join(sorted(missing))} for {cfg.experiment}")
    cfg.params = ex._plain(cfg.params)
    return cfg


_INT_FIELDS = ("z0", "seed", "replicates", "threads", "n_max")
_NUM_FIELDS = ("K", "c", "gamma")


def _check_types(doc: dict) -> None:
    for key in _INT_FIELDS:
        v = doc.get(key)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
    for key in _NUM_FIELDS:
        if doc.get(key) is not None:
            doc[key] = _number(key, doc[key])
    if doc.get("replicates", 1) < 1 or doc.get("threads", 1) < 1:
        raise ConfigError("replicates/threads: must be at least 1")
    if doc.get("K_grid") is not None:
        if not isinstance(doc["K_grid"], list):
            raise ConfigError("K_grid: expected a list of capacities")
        doc["K_grid"] = [_number("K_grid", v) for v in doc["K_grid"]]


def _number(key, v):
    # YAML 1.1 reads "1e4" as a string, so numeric strings are accepted
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return v
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            pass
    raise ConfigError(f"{key}: expected a number, got {v!r}")


def _required_params(name: str) -> set:
    sig = inspect.signature(EXPERIMENTS[name])
    return {k for k, p in sig.parameters.items()
            if p.default is inspect.Parameter.empty and k not in _FROM_CONFIG}


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)


# -- emission ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV: header row, CRLF line ends, locale-independent floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(ex._plain(obj), indent=2, sort_keys=True) + "\n")


def run_header(cfg: RunConfig, **extra) -> dict:
    return {"schema_version": ex.SCHEMA_VERSION, "seed": cfg.seed, "config": cfg.to_dict(),
            "law": cfg.build_law().to_dict(), **extra}


def _h_for(law, cfg, w_max=None):
    x_max = cfg.h.get("x_max")
    if x_max is None:
        try:
            x_max = default_x_max(law)
        except ValueError:
            x_max = 2.0 * max(cfg.z0, 1)
        if w_max is not None:
            x_max = max(x_max, 1.01 * w_max)
    return compute_h(IteratedMap(law), x_max, cfg.h.get("knots", 1025), cfg.h.get("tol", 1e-8))


def _load_observations(source):
    if isinstance(source, (list, tuple)):
        return np.asarray(source, dtype=float)
    with open(source, newline="") as fh:
        return np.array([float(r["value"]) for r in csv.DictReader(fh)])


def run(cfg: RunConfig) -> int:
    """Execute the configured command; returns the process exit status."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
    except OSError as err:
        log.error("cannot write to %s: %s", out, err)
        return 2
    set_workers(cfg.threads)
    law = cfg.build_law()
    try:
        return _dispatch(cfg, law, out)
    except OSError as err:
        log.error("I/O failure: %s", err)
        return 2
    except (ValueError, OverflowError, RuntimeError) as err:
        log.error("%s failed: %s", cfg.command, err)
        return 1


def _dispatch(cfg, law, out) -> int:
    a = law.a
    if cfg.command == "simulate":
        sim = cfg.sim_config()
        rows = []
        for r in range(cfg.replicates):
            p = simulate_path(law, sim, r)
            rows += [(r, n, int(z), z / sim.K) for n, z in enumerate(p.counts)]
        write_csv(out / "trajectories.csv", ["replicate", "n", "Z", "X"], rows)
        write_json(out / "trajectories.json", run_header(cfg))
        return 0
    if cfg.command == "coupled":
        sim = cfg.sim_config()
        horizon = sim.n_max if sim.n_max is not None else sim.n_K(a)
        rows, summary, bad = [], [], 0
        for r in range(cfg.replicates):
            cp = simulate_coupled(law, sim, r, horizon)
            bad += cp.sandwich_violations()
            summary.append({"replicate": r, "tau": cp.tau, "nu": cp.nu})
            rows += [(r, n, int(z), int(zt), int(zg))
                     for n, (z, zt, zg) in enumerate(zip(cp.Z, cp.Z_gw, cp.Z_gamma))]
        write_csv(out / "coupled.csv", ["replicate", "n", "Z", "Z_gw", "Z_gamma"], rows)
        write_json(out / "coupled.json", run_header(cfg, violations=bad, stopping_times=summary))
        return 0 if bad == 0 else 1
    if cfg.command == "compute-h":
        H = _h_for(law, cfg)
        H.to_csv(out / "h.csv")
        return 0
    if cfg.command == "sample-w":
        n_trunc = int(cfg.params.get("n_trunc", N_TRUNC))
        ws = sample_W(law, cfg.z0, n_trunc, cfg.seed, cfg.replicates)
        write_csv(out / "w.csv", ["replicate", "value"], enumerate(ws.values))
        mean, var = w_moments(law, cfg.z0)
        write_json(out / "w.json", run_header(cfg, n_trunc=n_trunc, theoretical_mean=mean,
                                              theoretical_variance=var))
        return 0
    if cfg.command == "validate-law":
        rep = validate_assumptions(law, cfg.params.get("x_grid"), cfg.params.get("K_grid"))
        write_json(out / "assumptions.json", {**run_header(cfg), "report": rep.to_dict()})
        return 0 if rep.ok else 1
    if cfg.command == "recover-z0":
        obs = _load_observations(cfg.params["observations"])
        H = _h_for(law, cfg)
        while H.values[-1] < obs.max() and H.x_max < 1e6:
            H = compute_h(IteratedMap(law), 2 * H.x_max, H.x.size, H.tol)
        res = ex.recover_z0(obs, H, law, cfg.K, cfg.params.get("mode", "deterministic"),
                            cfg.params.get("level", 0.95), cfg.params.get("z_max", 20),
                            seed=cfg.seed)
        write_json(out / "recovery.json", {**run_header(cfg), "result": asdict(res)})
        return 0 if res.estimate is not None else 1
    # verify
    fn = EXPERIMENTS[cfg.experiment]
    kwargs = dict(cfg.params)
    sig = inspect.signature(fn).parameters
    for k, v in (("z0", cfg.z0), ("K_grid", cfg.K_grid), ("R", cfg.replicates),
                 ("seed", cfg.seed), ("c", cfg.c), ("gamma", cfg.gamma)):
        if k in sig:
            kwargs[k] = v
    rep = fn(law, **kwargs)
    header, rows = rep.csv_rows()
    write_csv(out / f"{rep.experiment}.csv", header, rows)
    write_json(out / f"{rep.experiment}.json", {**run_header(cfg), "report": rep.to_dict()})
    for name, verdict in rep.verdicts.items():
        log.info("%-28s %s", name, {True: "PASS", False: "FAIL", None: "n/a"}[verdict])
    return 0 if rep.passed else 1

