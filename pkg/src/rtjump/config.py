"""Run configuration: INI file with sections, command-line overrides, validation.

Every resolved value remembers where it came from (``default``, ``file`` or
``flag``; ``auto`` for values derived at run time such as the truncation).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .kernel import FAMILIES, KernelSpec
from .process import ProcessConfig


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit status 2."""


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _optional_float(text):
    text = str(text).strip().lower()
    return None if text in ("", "auto", "none") else float(text)


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [_int(v) for v in str(text).replace(",", " ").split()]


def _vector(text):
    text = str(text).strip().lower()
    if text in ("", "uniform", "none"):
        return None
    return _float_list(text)


def _family(text):
    text = str(text).strip().lower().replace("-", "_").replace("+", "_plus_")
    aliases = {"s_plus_s": "smooth_plus_singular", "smoothplussingular": "smooth_plus_singular"}
    text = aliases.get(text, text)
    if text not in FAMILIES:
        raise ValueError(f"unknown family {text!r}; choose from {', '.join(FAMILIES)}")
    return text


def _str(text):
    return str(text).strip()


# section -> key -> (parser, default)
SCHEMA = {
    "kernel": {
        "d": (_int, 2),
        "beta": (_float, 0.5),
        "a1": (_optional_float, None),
        "family": (_family, "pure"),
        "f1": (_optional_float, None),
        "delta": (_float, 0.6),
        "delta_prime": (_float, 0.8),
        "n_mollify": (_optional_float, None),
        "base_family": (_family, "pure"),
        "epsilon": (_optional_float, None),
        "profile": (_str, "default"),
    },
    "process": {
        "eta": (_optional_float, None),
        "t_max": (_float, 2.0),
        "k0": (_vector, "0,0,1"),
        "x0": (_vector, None),
        "seed": (_int, 0),
    },
    "experiment": {
        "paths": (_int, 10000),
        "nmax": (_int, 64),
        "degrees": (_int_list, [1, 2, 3]),
        "t_grid": (_float_list, [0.25, 0.5, 1.0, 2.0]),
        "eps_list": (_float_list, [0.4, 0.2, 0.1]),
        "peaked_eps": (_float_list, [0.5, 0.25, 0.125]),
        "t": (_float, 1.0),
        "lags": (_float_list, [0.5, 1.0]),
        "t_large": (_optional_float, None),
        "k_samples": (_int, 100),
        "robustness": (_int, 0),
    },
    "run": {
        "out": (_str, "."),
        "workers": (_optional_float, None),
    },
}

# values that do not change results and are left out of the fingerprint
NON_SEMANTIC = {("run", "out"), ("run", "workers")}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    def set(self, key, value, source):
        section, name = key.split(".")
        self.values[section][name] = value
        self.provenance[key] = source

    @property
    def workers(self):
        w = self["run.workers"]
        return None if w is None else int(w)

    def semantic(self) -> dict:
        return {s: {k: v for k, v in kv.items() if (s, k) not in NON_SEMANTIC}
                for s, kv in self.values.items()}

    def kernel(self) -> KernelSpec:
        k = self.values["kernel"]
        d, beta, a1 = k["d"], k["beta"], k["a1"]
        fam = k["family"]
        if fam == "pure":
            return KernelSpec.pure(d, beta, a1)
        if fam == "peaked":
            if k["epsilon"] is None:
                raise ConfigError("kernel.epsilon is required for the peaked family")
            amp = a1 if a1 is not None else KernelSpec.pure(d, beta).a1
            return KernelSpec.peaked(d, beta, amp, k["epsilon"], k["profile"])
        if fam == "smooth_plus_singular":
            amp = a1 if a1 is not None else KernelSpec.pure(d, beta).a1
            return KernelSpec.smooth_plus_singular(d, beta, amp, f1=k["f1"], delta=k["delta"],
                                                   delta_prime=k["delta_prime"])
        if k["n_mollify"] is None:
            raise ConfigError("kernel.n_mollify is required for the mollified family")
        if k["base_family"] == "smooth_plus_singular":
            amp = a1 if a1 is not None else KernelSpec.pure(d, beta).a1
            base = KernelSpec.smooth_plus_singular(d, beta, amp, f1=k["f1"], delta=k["delta"],
                                                   delta_prime=k["delta_prime"])
        else:
            base = KernelSpec.pure(d, beta, a1)
        return KernelSpec.mollified(base, k["n_mollify"])

    def k0(self):
        k0 = self["process.k0"]
        d = self["kernel.d"]
        if k0 is None:
            return None
        if len(k0) == 3 and d != 2 and self.provenance.get("process.k0") == "default":
            k0 = [0.0] * d + [1.0]
        if len(k0) != d + 1:
            raise ConfigError(f"process.k0 must have d + 1 = {d + 1} components, got {len(k0)}")
        n = math.sqrt(sum(v * v for v in k0))
        if n == 0:
            raise ConfigError("process.k0 must be a nonzero vector")
        return tuple(v / n for v in k0)

    def process(self, eta: float, t_max: float | None = None, k0="config") -> ProcessConfig:
        x0 = self["process.x0"]
        return ProcessConfig(self.kernel(), eta, self["process.t_max"] if t_max is None else t_max,
                             None if x0 is None else tuple(x0), self.k0() if k0 == "config" else k0,
                             self["process.seed"])


def _defaults() -> RunConfig:
    rc = RunConfig({s: {k: p[0](p[1]) if isinstance(p[1], str) else p[1] for k, p in keys.items()}
                   for s, keys in SCHEMA.items()})
    rc.provenance = {f"{s}.{k}": "default" for s, keys in SCHEMA.items() for k in keys}
    return rc


def _assign(rc: RunConfig, section: str, key: str, raw, source: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]; allowed: {', '.join(SCHEMA)}")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {', '.join(SCHEMA[section])}")
    parser = SCHEMA[section][key][0]
    try:
        value = parser(raw) if raw is not None else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key} = {raw!r}: {exc}") from None
    rc.set(f"{section}.{key}", value, source)


def validate(rc: RunConfig) -> RunConfig:
    v = rc.values
    k, p, e = v["kernel"], v["process"], v["experiment"]
    if k["d"] < 1:
        raise ConfigError(f"kernel.d must be an integer >= 1, got {k['d']}")
    if not 0 < k["beta"] < 1:
        raise ConfigError(
            f"kernel.beta = {k['beta']} is outside the admissible range (0, 1): the kernel "
            "hypothesis (1-s)^(beta+d/2) F(s) -> a1 with 0 < beta < 1 is required")
    if k["a1"] is not None and not k["a1"] > 0:
        raise ConfigError(f"kernel.a1 must lie in (0, inf), got {k['a1']}")
    if p["eta"] is not None and not 0 <= p["eta"] < 2:
        raise ConfigError(f"process.eta must lie in [0, 2) or be 'auto', got {p['eta']}")
    if not p["t_max"] > 0:
        raise ConfigError(f"process.t_max must be > 0, got {p['t_max']}")
    if not 0 <= p["seed"] < 2 ** 64:
        raise ConfigError("process.seed must be a 64-bit unsigned integer")
    if e["paths"] < 1:
        raise ConfigError(f"experiment.paths must be >= 1, got {e['paths']}")
    if e["nmax"] < 1:
        raise ConfigError(f"experiment.nmax must be >= 1, got {e['nmax']}")
    for name in ("eps_list", "peaked_eps"):
        if any(not 0 < x <= 1 for x in e[name]):
            raise ConfigError(f"experiment.{name} entries must lie in (0, 1]")
    if any(t < 0 for t in e["t_grid"]) or any(t <= 0 for t in e["lags"]):
        raise ConfigError("experiment time grids must be nonnegative (lags positive)")
    if v["run"]["workers"] is not None and v["run"]["workers"] < 1:
        raise ConfigError("run.workers must be >= 1")
    try:
        rc.kernel()
        rc.k0()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return rc


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``overrides`` (``"section.key" -> raw``)."""
    rc = _defaults()
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        for section in cp.sections():
            for key, raw in cp.items(section):
                _assign(rc, section, key, raw, "file")
    for dotted, raw in (overrides or {}).items():
        section, key = dotted.split(".")
        _assign(rc, section, key, raw, "flag")
    return validate(rc)
