"""Run configuration: a flat ``key = value`` text format with a fixed schema.

Unknown keys are rejected, every value is parsed by its declared type, and
``dumps(loads(text))`` is canonical, so a config round-trips exactly and its
hash identifies a run.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .noise import NoiseSpec, SubspaceF


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------- value codecs


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _entries(s):
    """``k1:k2:k3:pol[:part]`` items separated by ``;``."""
    out = []
    for item in (v.strip() for v in s.split(";")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise ConfigError(f"bad mode entry {item!r}; expected k1:k2:k3:pol[:re|im]")
        out.append(tuple(int(v) for v in parts[:4]) + tuple(parts[4:]))
    return tuple(out)


def _vectors(s):
    out = []
    for item in (v.strip() for v in s.split(";")):
        if item:
            k = tuple(int(v) for v in item.split(":"))
            if len(k) != 3:
                raise ConfigError(f"bad wavevector {item!r}")
            out.append(k)
    return tuple(out)


def _shells(s):
    out = {}
    for item in (v.strip() for v in s.split(",")):
        if item:
            q, a = item.split(":")
            out[int(q)] = float(a)
    return out


def _mode_amps(s):
    out = {}
    for item in (v.strip() for v in s.split(";")):
        if item:
            lhs, a = item.split("=")
            k1, k2, k3, pol = (int(v) for v in lhs.split(":"))
            out[((k1, k2, k3), pol)] = float(a)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        if all(isinstance(k, int) for k in v):
            return ",".join(f"{k}:{v[k]!r}" for k in sorted(v))
        return ";".join(f"{k[0][0]}:{k[0][1]}:{k[0][2]}:{k[1]}={v[k]!r}" for k in sorted(v))
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(":".join(str(x) for x in e) for e in v)
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


_PARSERS = {"int": int, "float": float, "bool": _bool, "str": str, "floats": _floats, "ints": _ints,
            "entries": _entries, "vectors": _vectors, "shells": _shells, "mode_amps": _mode_amps}


def _f(kind, default, doc):
    factory = (lambda: dict(default)) if isinstance(default, dict) else None
    if factory is not None:
        return field(default_factory=factory, metadata={"kind": kind, "doc": doc})
    return field(default=default, metadata={"kind": kind, "doc": doc})


@dataclass
class RunConfig:
    name: str = _f("str", "run", "label used for the output directory")
    N: int = _f("int", 1, "Galerkin cutoff, modes with 0 < |k| <= N")
    nu: float = _f("float", 0.5, "viscosity")
    dt: float = _f("float", 0.01, "SDE time step")
    T: float = _f("float", 1.0, "horizon")
    ensemble_size: int = _f("int", 100000, "number of independent members")
    seed: int = _f("int", 20240611, "root seed of the counter-based generator")
    initial_condition: str = _f("str", "zero", "zero | F:<a> | shell:<|k|^2>:<a>")
    linear_only: bool = _f("bool", False, "drop the nonlinear term (Ornstein-Uhlenbeck dynamics)")
    drop_blowups: bool = _f("bool", False, "exclude non-finite members instead of failing")
    batch_size: int = _f("int", 8192, "members integrated together")
    noise_r: float = _f("float", 2.0, "power-law exponent, sigma_k = |k|^-r")
    noise_shells: dict = _f("shells", {}, "per-shell amplitudes, q:amp,... keyed by |k|^2")
    noise_modes: dict = _f("mode_amps", {}, "per-mode amplitudes, k1:k2:k3:pol=amp;...")
    noise_support: tuple = _f("vectors", (), "restrict forcing to these wavevectors, k1:k2:k3;... (empty: all)")
    noise_pols: tuple = _f("ints", (1, 2), "forced polarizations")
    F: tuple = _f("entries", ((1, 0, 0, 1),), "observed subspace, k1:k2:k3:pol[:re|im];...")
    snapshot_every: float = _f("float", 0.05, "spacing of recorded snapshot times")
    grid_nodes: int = _f("int", 64, "grid nodes per axis")
    grid_extent: float = _f("float", 6.0, "grid half-width in sample standard deviations")
    bandwidth: str = _f("str", "silverman", "silverman or a fixed bandwidth")
    w_min: float = _f("float", 10.0, "regression mask threshold (effective samples)")
    fp_check: bool = _f("bool", True, "solve the marginal Fokker-Planck equation")
    fp_dt: float = _f("float", 0.001, "Fokker-Planck time step")
    compare_times: tuple = _f("floats", (0.25, 0.5, 1.0), "times of the FP-vs-KDE comparison")
    alpha: tuple = _f("floats", (0.25, 0.5, 0.75), "Hoelder exponents of the main statistic")
    p_list: tuple = _f("floats", (1.0, 2.0), "moments of the drift functional")
    t_min: float = _f("float", 0.0, "lower end of time sups; 0 means 10*dt")
    moment_powers: tuple = _f("ints", (1, 2), "powers of the energy moment monitor")
    exp_lambda: tuple = _f("floats", (), "lambdas of the exponential moment monitor")
    kernel_bounds: bool = _f("bool", True, "tabulate the heat-kernel bound ratios")
    stationary_windows: tuple = _f("floats", (), "tail windows for the stationary residual")
    ou_check_members: int = _f("int", 10000, "members used by the Ornstein-Uhlenbeck variance check")

    # ---------------------------------------------------------------- derived

    def noise(self) -> NoiseSpec:
        return NoiseSpec(r=self.noise_r, shells=self.noise_shells, modes=self.noise_modes,
                         support=self.noise_support or None, pols=self.noise_pols)

    def subspace(self) -> SubspaceF:
        return SubspaceF.build(self.F, self.noise())

    @property
    def effective_t_min(self):
        return self.t_min if self.t_min > 0 else 10.0 * self.dt

    def snapshot_times(self):
        n = int(round(self.T / self.snapshot_every))
        times = [round(i * self.snapshot_every, 12) for i in range(n + 1)]
        extra = [t for t in self.compare_times if all(abs(t - s) > 1e-12 for s in times)]
        return sorted(set(times) | set(extra))

    def with_values(self, **kw):
        return replace(self, **kw)

    def check(self):
        if self.N < 1 or self.ensemble_size < 1 or self.batch_size < 1 or self.grid_nodes < 8:
            raise ConfigError("N, ensemble_size and batch_size must be positive, grid_nodes >= 8")
        for k in ("nu", "dt", "T", "snapshot_every", "fp_dt", "grid_extent"):
            if getattr(self, k) <= 0:
                raise ConfigError(f"{k} must be positive")
        if self.bandwidth != "silverman":
            try:
                if float(self.bandwidth) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"bandwidth must be 'silverman' or a positive number: {self.bandwidth!r}") from None
        if not self.F:
            raise ConfigError("F must list at least one mode")
        if any(not 0 < a < 1 for a in self.alpha):
            raise ConfigError("every alpha must lie in (0, 1)")
        return self


SCHEMA = {f.name: f for f in fields(RunConfig)}


def loads(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; known keys: {', '.join(SCHEMA)}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, val)
    return RunConfig(**values).check()


def parse_value(key, text):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}; known keys: {', '.join(SCHEMA)}")
    kind = SCHEMA[key].metadata["kind"]
    try:
        return _PARSERS[kind](text)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key} ({kind}): {text!r}: {exc}") from None


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_fmt(getattr(cfg, k))}\n" for k in SCHEMA)


def load(path) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read())


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


def describe() -> str:
    """One line per key: name, type, default and meaning."""
    d = RunConfig()
    return "".join(f"{k:20s} {f.metadata['kind']:9s} {_fmt(getattr(d, k)) or '(empty)':24s} {f.metadata['doc']}\n"
                   for k, f in SCHEMA.items())


# ------------------------------------------------------------------ presets

PRESETS = {
    # linear dynamics, one real coordinate: every stage has a closed form
    "linear-ou": dict(name="linear-ou", N=1, dt=0.002, linear_only=True, F=((1, 0, 0, 1, "re"),),
                      grid_nodes=512, alpha=(0.5,), kernel_bounds=False),
    # the cutoff N=1 admits no triads, so this is the full system at N=1
    "nonlinear-n1": dict(name="nonlinear-n1", N=1, F=((1, 0, 0, 1),)),
    # smallest cutoff with genuine triad interactions
    "nonlinear-n2": dict(name="nonlinear-n2", N=2, F=((1, 0, 0, 1),)),
    "n2-line": dict(name="n2-line", N=2, F=((0, 1, 1, 2, "re"),), grid_nodes=256),
    # forcing on a single lattice line: generation of Z^3 must fail
    "line-noise": dict(name="line-noise", N=2, noise_support=((1, 0, 0), (2, 0, 0)),
                       F=((1, 0, 0, 1),), ensemble_size=2000),
    "stationary-n1": dict(name="stationary-n1", N=1, T=12.0, ensemble_size=20000, snapshot_every=0.1,
                          fp_check=False, compare_times=(), stationary_windows=(1.0, 2.0, 4.0),
                          kernel_bounds=False, alpha=(0.5,)),
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return RunConfig(**{**PRESETS[name], **overrides}).check()
