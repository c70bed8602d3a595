"""Command line entry point: ``scatterwave run | list | describe-potential | default-config``.

A run is a pure function of its JSON config.  Every run writes CSV tables,
plot specs and a manifest into the config's output directory.
Exit codes: 0 passed, 2 invalid config, 3 numeric failure or failed check.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field

import click
import numpy as np
import scipy

from . import __version__, kernels

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

_FIELDS = ("experiment", "grid", "potential", "k", "filter", "tolerances", "r_ladder", "t_ladder",
           "eps_ladder", "params", "output_dir")


# sections merged key-by-key into the experiment defaults; others replace them
_MERGED = ("grid", "filter", "tolerances", "params")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    grid: dict | None = None
    potential: dict | None = None
    k: list = field(default_factory=list)
    filter: dict | None = None
    tolerances: dict = field(default_factory=dict)
    r_ladder: list = field(default_factory=list)
    t_ladder: list = field(default_factory=list)
    eps_ladder: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    output_dir: str = "scatterwave-out"

    @classmethod
    def from_dict(cls, d: dict, defaults: bool = True) -> "ExperimentConfig":
        from .experiments import CATALOG, DEFAULTS
        if not isinstance(d, dict) or "experiment" not in d:
            raise ConfigError("config must be a JSON object with an 'experiment' key")
        unknown = set(d) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        name = d["experiment"]
        if name not in CATALOG:
            raise ConfigError(f"unknown experiment {name!r}")
        merged = dict(DEFAULTS.get(name, {})) if defaults else {}
        for key, val in d.items():
            if key in _MERGED and isinstance(val, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **val}
            else:
                merged[key] = val
        merged["experiment"] = name
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @property
    def ks(self) -> list:
        return [complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in self.k]

    def validate(self):
        if self.grid is not None:
            L, N = self.grid.get("L"), self.grid.get("N")
            if not (isinstance(N, int) and N >= 4 and N % 2 == 0):
                raise ConfigError("grid.N must be an even integer >= 4")
            if not (isinstance(L, (int, float)) and L > 0):
                raise ConfigError("grid.L must be positive")
        for v in self.k:
            if not (isinstance(v, (list, tuple)) and len(v) == 2):
                raise ConfigError("spectral points are [re, im] pairs")
            if not v[1] > 0:
                raise ConfigError(f"spectral point {v} is not in the upper half plane")
        if self.filter is not None:
            a, b = self.filter.get("a"), self.filter.get("b")
            if not (a is not None and b is not None and 0 < a < b):
                raise ConfigError("filter needs 0 < a < b")
        for name in ("r_ladder", "t_ladder"):
            lad = getattr(self, name)
            if any(y <= x for x, y in zip(lad[:-1], lad[1:])):
                raise ConfigError(f"{name} must increase")
        if any(e <= 0 for e in self.eps_ladder):
            raise ConfigError("eps_ladder entries must be positive")
        if self.potential is not None:
            from .potentials import from_config
            try:
                from_config(self.potential)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"invalid potential: {e}") from e

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class _Cfg:
    """Config view handed to experiments (complex spectral points)."""

    def __init__(self, cfg: ExperimentConfig):
        self._cfg = cfg
        self.k = cfg.ks

    def __getattr__(self, name):
        return getattr(self._cfg, name)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if np.isfinite(o) else repr(o)
    if isinstance(o, (complex, np.complexfloating)):
        return [float(o.real), float(o.imag)]
    return o


def _write_table(path, name, table, chash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])
    if table.plot:
        spec = {"table": os.path.basename(path), **table.plot}
        with open(path[:-4] + ".plot.json", "w") as fh:
            json.dump(spec, fh, indent=2, sort_keys=True)


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "scatterwave": __version__, "kernels": "compiled" if kernels.COMPILED else "python"}


def run_config(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run one experiment and write its artifacts; returns the manifest."""
    from .experiments import CATALOG
    os.makedirs(cfg.output_dir, exist_ok=True)
    chash = cfg.hash()
    manifest = {"experiment": cfg.experiment, "config_hash": chash, "config": cfg.canonical(),
                "versions": versions(), "jobs": jobs, "outputs": []}
    t0 = time.perf_counter()
    try:
        outcome = CATALOG[cfg.experiment][0](_Cfg(cfg), jobs=jobs)
    except Exception as e:      # numeric failure: still write the manifest
        manifest.update(status="numeric_failure", exit_code=EXIT_NUMERIC,
                        diagnostics={"error": f"{type(e).__name__}: {e}",
                                     "detail": _jsonable(getattr(e, "diffs", getattr(e, "history", None))),
                                     "traceback": traceback.format_exc()})
    else:
        for name, table in outcome.tables.items():
            path = os.path.join(cfg.output_dir, f"{cfg.experiment}.{name}.csv")
            _write_table(path, name, table, chash)
            manifest["outputs"].append(os.path.basename(path))
        manifest.update(summary=_jsonable(outcome.summary), passed=bool(outcome.passed),
                        status="passed" if outcome.passed else "check_failed",
                        exit_code=EXIT_OK if outcome.passed else EXIT_NUMERIC)
    manifest["wall_time"] = time.perf_counter() - t0
    with open(os.path.join(cfg.output_dir, f"{cfg.experiment}.manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
    return manifest


def _jobs(jobs):
    if jobs is not None:
        return jobs
    env = os.environ.get("SCATTERWAVE_JOBS")
    return int(env) if env else 1


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from e


@click.group()
@click.version_option(__version__)
def main():
    """Scattering and wave-propagation experiments."""


@main.command()
@click.argument("config", type=click.Path())
@click.option("--jobs", type=int, default=None, help="worker cap (default: SCATTERWAVE_JOBS or 1)")
@click.option("--out", "out", type=click.Path(), default=None, help="override the output directory")
def run(config, jobs, out):
    """Run the experiment described by CONFIG (JSON)."""
    try:
        d = _load(config)
        if out is not None:
            d["output_dir"] = out
        cfg = ExperimentConfig.from_dict(d)
    except ConfigError as e:
        click.echo(f"invalid config: {e}", err=True)
        sys.exit(EXIT_INVALID)
    man = run_config(cfg, _jobs(jobs))
    click.echo(f"{cfg.experiment} [{man['config_hash']}] {man['status']} ({man['wall_time']:.1f}s)")
    if "summary" in man:
        click.echo(json.dumps(man["summary"], indent=2, sort_keys=True))
    else:
        click.echo(man["diagnostics"]["error"], err=True)
    sys.exit(man["exit_code"])


@main.command("list")
def list_cmd():
    """List the experiment catalog."""
    from .experiments import list_experiments
    for e in list_experiments():
        click.echo(f"{e['name']:28s} {e['target']}")


@main.command("describe-potential")
@click.argument("config", type=click.Path())
def describe_potential(config):
    """Print family, parameters and shell sups of the config's potential."""
    from .potentials import from_config
    try:
        d = _load(config)
        spec = d.get("potential", d)
        V = from_config(spec)
    except (ConfigError, KeyError, TypeError, ValueError) as e:
        click.echo(f"invalid config: {e}", err=True)
        sys.exit(EXIT_INVALID)
    click.echo(json.dumps(_jsonable(V.describe()), indent=2, sort_keys=True))


@main.command("default-config")
@click.argument("experiment")
def default_config(experiment):
    """Print the default config for EXPERIMENT."""
    from .experiments import CATALOG, DEFAULTS
    if experiment not in CATALOG:
        click.echo(f"unknown experiment {experiment!r}", err=True)
        sys.exit(EXIT_INVALID)
    click.echo(json.dumps({"experiment": experiment, **DEFAULTS.get(experiment, {})}, indent=2))


if __name__ == "__main__":
    main()
