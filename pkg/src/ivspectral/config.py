"""Run configuration: strict TOML parsing and canonical serialization.

A document looks like::

    command = "simulate"
    output_format = "json"

    [scenario]
    replications = 200
    master_seed = 7

    [scenario.dgp]
    n = 500
    k = 250
    sigma_vu = [0.5]

    [scenario.dgp.pi]
    kind = "fixed_support"
    support_size = 3

    [scenario.dgp.design]
    kind = "iid_gaussian"

    [[scenario.estimators]]
    label = "tikhonov_cv"
    method = "tsls_regularized"
    grid = [1e-6, 1e-5, 1e-4]
    grid_scale = "relative"

Unknown keys are rejected. Validation errors carry the dotted path of the
offending field, e.g. ``scenario.dgp.design.rho``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Callable

import tomli
import tomli_w

from . import dgp as dgp_mod
from . import estimators as est
from .errors import ConfigurationError, IVSpectralError
from .montecarlo import EstimatorSpec, ScenarioConfig

COMMANDS = ("simulate", "estimate", "diagnose")
FORMATS = ("json", "csv")
DESIGN_ALIASES = {"ar1": "ar1_correlated"}


@dataclass(frozen=True)
class DiagnoseOptions:
    """Where the diagnose command gets its coefficients, and its tuning knobs.

    Exactly one of ``pi`` (inline, K rows), ``pi_path`` (CSV) or ``truth``
    (a DGP whose scheme is materialized at the data's K and N) is used.
    """

    c: float = 1.0
    k_grid: tuple[int, ...] | None = None
    pi: tuple[tuple[float, ...], ...] | None = None
    pi_path: str | None = None
    truth: dgp_mod.DgpConfig | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError(f"must be > 0, got {self.c}", field="c")
        sources = [s for s in (self.pi, self.pi_path, self.truth) if s is not None]
        if len(sources) > 1:
            raise ConfigurationError("give at most one of pi, pi_path, truth", field="pi")


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: ScenarioConfig | None = None
    input_path: str | None = None
    estimators: tuple[EstimatorSpec, ...] = ()
    output_path: str | None = None
    output_format: str = "json"
    diagnose: DiagnoseOptions | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"must be one of {list(COMMANDS)}, got {self.command!r}", field="command")
        if self.output_format not in FORMATS:
            raise ConfigurationError(f"must be one of {list(FORMATS)}, got {self.output_format!r}", field="output_format")
        if self.command == "simulate" and self.scenario is None:
            raise ConfigurationError("simulate requires a [scenario] section", field="scenario")
        if self.command in ("estimate", "diagnose") and not self.input_path:
            raise ConfigurationError(f"{self.command} requires input_path (or --data)", field="input_path")
        if self.command == "estimate" and not self.estimators:
            raise ConfigurationError("estimate needs at least one estimator", field="estimators")
        labels = [e.label for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"labels must be unique, got {labels}", field="estimators")


# --------------------------------------------------------------------------
# field readers
# --------------------------------------------------------------------------

_MISSING = object()


class _Section:
    """Key access over one table that remembers its path and rejects leftovers."""

    def __init__(self, table: Any, path: str):
        if not isinstance(table, dict):
            raise ConfigurationError(f"expected a table, got {type(table).__name__}", field=path or None)
        self.table = dict(table)
        self.path = path
        self.used: set[str] = set()

    def where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def raw(self, key: str, default=_MISSING):
        self.used.add(key)
        if key in self.table:
            return self.table[key]
        if default is _MISSING:
            raise ConfigurationError("required key is missing", field=self.where(key))
        return default

    def has(self, key: str) -> bool:
        return key in self.table

    def count(self, key: str, default=_MISSING) -> int:
        if key not in self.table and default is not _MISSING:
            self.used.add(key)
            return default
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}", field=self.where(key))
        return value

    def real(self, key: str, default=_MISSING) -> float:
        if key not in self.table and default is not _MISSING:
            self.used.add(key)
            return default
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", field=self.where(key))
        return float(value)

    def text(self, key: str, default=_MISSING) -> str:
        if key not in self.table and default is not _MISSING:
            self.used.add(key)
            return default
        value = self.raw(key)
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", field=self.where(key))
        return value

    def reals(self, key: str, default=_MISSING) -> tuple[float, ...]:
        if key not in self.table and default is not _MISSING:
            self.used.add(key)
            return default
        value = self.raw(key)
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigurationError(f"expected a list of numbers, got {value!r}", field=self.where(key))
        return tuple(float(v) for v in value)

    def counts(self, key: str, default=_MISSING) -> tuple[int, ...]:
        if key not in self.table and default is not _MISSING:
            self.used.add(key)
            return default
        value = self.raw(key)
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigurationError(f"expected a list of integers, got {value!r}", field=self.where(key))
        return tuple(value)

    def section(self, key: str) -> "_Section":
        return _Section(self.raw(key), self.where(key))

    def finish(self) -> None:
        extra = sorted(set(self.table) - self.used)
        if extra:
            raise ConfigurationError(f"unknown key(s) {extra}", field=self.where(extra[0]))


def _build(path: str, factory: Callable, **kwargs):
    try:
        return factory(**kwargs)
    except IVSpectralError as exc:
        raise exc.with_prefix(path) from None


def _kind(sec: _Section, registry: dict, aliases: dict | None = None) -> type:
    kind = sec.text("kind")
    kind = (aliases or {}).get(kind, kind)
    if kind not in registry:
        raise ConfigurationError(f"must be one of {sorted(registry)}, got {kind!r}", field=sec.where("kind"))
    return registry[kind]


def _parse_pi(sec: _Section) -> dgp_mod.PiScheme:
    cls = _kind(sec, dgp_mod.PI_SCHEMES)
    if cls is dgp_mod.FixedSupport:
        kw = dict(support_size=sec.count("support_size"), value=sec.real("value", 1.0))
    elif cls is dgp_mod.GeometricDecay:
        kw = dict(base=sec.real("base", 1.0), ratio=sec.real("ratio", 0.5))
    elif cls is dgp_mod.Weak:
        kw = dict(scale=sec.real("scale", 1.0))
    elif cls is dgp_mod.Sparse:
        kw = dict(support_indices=sec.counts("support_indices"), values=sec.reals("values"))
    else:
        kw = dict(values=sec.reals("values"))
    sec.finish()
    return _build(sec.path, cls, **kw)


def _parse_design(sec: _Section) -> dgp_mod.InstrumentDesign:
    cls = _kind(sec, dgp_mod.DESIGNS, DESIGN_ALIASES)
    if cls is dgp_mod.AR1Correlated:
        kw = dict(rho=sec.real("rho"))
    elif cls is dgp_mod.Factor:
        kw = dict(num_factors=sec.count("num_factors", 1), loadings_scale=sec.real("loadings_scale", 1.0))
    elif cls is dgp_mod.Continuum:
        kw = dict(base_dim=sec.count("base_dim", 1))
        if sec.has("tau_grid"):
            kw["tau_grid"] = sec.reals("tau_grid")
        kw["quadrature_weights"] = sec.reals("quadrature_weights", None)
    else:
        kw = {}
    sec.finish()
    return _build(sec.path, cls, **kw)


def _parse_dgp(sec: _Section) -> dgp_mod.DgpConfig:
    g = sec.count("g", 1)
    kw = dict(
        n=sec.count("n"),
        k=sec.count("k"),
        g=g,
        pi=_parse_pi(sec.section("pi")),
        design=_parse_design(sec.section("design")) if sec.has("design") else dgp_mod.IidGaussian(),
        delta_true=sec.reals("delta_true", (1.0,) * g),
        sigma_u=sec.real("sigma_u", 1.0),
        sigma_vu=sec.reals("sigma_vu", (0.0,) * g),
        sigma_v=sec.real("sigma_v", 1.0),
    )
    sec.finish()
    return _build(sec.path, dgp_mod.DgpConfig, **kw)


def _parse_scheme(sec: _Section) -> est.RegularizationScheme:
    cls = _kind(sec, est.SCHEMES)
    if cls is est.Tikhonov:
        kw = dict(alpha=sec.real("alpha"))
    elif cls is est.SpectralCutoff:
        kw = dict(threshold=sec.real("threshold"))
    elif cls is est.PrincipalComponents:
        kw = dict(m=sec.count("m"))
    else:
        kw = dict(iterations=sec.count("iterations"), step=sec.real("step"))
    sec.finish()
    return _build(sec.path, cls, **kw)


def _parse_estimators(value: Any, path: str) -> tuple[EstimatorSpec, ...]:
    if not isinstance(value, list):
        raise ConfigurationError("expected an array of tables", field=path)
    specs = []
    for i, item in enumerate(value):
        sec = _Section(item, f"{path}[{i}]")
        method = sec.text("method")
        kw = dict(
            label=sec.text("label", method),
            method=method,
            scheme=_parse_scheme(sec.section("scheme")) if sec.has("scheme") else None,
            grid=sec.reals("grid", None),
            select_kind=sec.text("select_kind", "tikhonov"),
            grid_scale=sec.text("grid_scale", "absolute"),
            folds=sec.count("folds", 5),
        )
        sec.finish()
        specs.append(_build(sec.path, EstimatorSpec, **kw))
    return tuple(specs)


def _parse_scenario(sec: _Section, master_seed: int | None) -> ScenarioConfig:
    kw = dict(
        dgp=_parse_dgp(sec.section("dgp")),
        estimators=_parse_estimators(sec.raw("estimators"), sec.where("estimators")),
        replications=sec.count("replications", 100),
        master_seed=sec.count("master_seed", 0),
        n_grid=sec.counts("n_grid", None),
    )
    if master_seed is not None:
        kw["master_seed"] = master_seed
    sec.finish()
    return _build(sec.path, ScenarioConfig, **kw)


def _parse_pi_rows(value: Any, path: str) -> tuple[tuple[float, ...], ...]:
    if not isinstance(value, list) or not value:
        raise ConfigurationError("expected a non-empty list", field=path)
    rows = []
    for v in value:
        row = v if isinstance(v, list) else [v]
        if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in row):
            raise ConfigurationError(f"expected numbers, got {v!r}", field=path)
        rows.append(tuple(float(x) for x in row))
    if len({len(r) for r in rows}) != 1:
        raise ConfigurationError("all rows must have the same length", field=path)
    return tuple(rows)


def _parse_diagnose(sec: _Section) -> DiagnoseOptions:
    kw = dict(
        c=sec.real("c", 1.0),
        k_grid=sec.counts("k_grid", None),
        pi=_parse_pi_rows(sec.raw("pi"), sec.where("pi")) if sec.has("pi") else None,
        pi_path=sec.text("pi_path", None),
        truth=_parse_dgp(sec.section("truth")) if sec.has("truth") else None,
        weights=sec.reals("weights", None),
    )
    sec.finish()
    return _build(sec.path, DiagnoseOptions, **kw)


DEFAULT_ESTIMATORS = (EstimatorSpec("ols", "ols"), EstimatorSpec("tsls", "tsls"))


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Keyword overrides (``command``, ``input_path``, ``output_path``,
    ``output_format``, ``master_seed``) take precedence over the document,
    which is how command-line flags are merged in.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from None
    top = _Section(doc, "")
    command = top.text("command", None)
    if overrides.get("command") is not None:
        if command is not None and command != overrides["command"]:
            raise ConfigurationError(
                f"document declares {command!r} but {overrides['command']!r} was requested", field="command"
            )
        command = overrides["command"]
    if command is None:
        raise ConfigurationError("required key is missing", field="command")

    def pick(key):
        doc_value = top.text(key, None)
        return overrides.get(key) if overrides.get(key) is not None else doc_value

    input_path = pick("input_path")
    output_path = pick("output_path")
    output_format = pick("output_format") or "json"
    scenario = (
        _parse_scenario(top.section("scenario"), overrides.get("master_seed")) if top.has("scenario") else None
    )
    if top.has("estimators"):
        estimators = _parse_estimators(top.raw("estimators"), "estimators")
    else:
        estimators = DEFAULT_ESTIMATORS if command == "estimate" else ()
    diagnose = _parse_diagnose(top.section("diagnose")) if top.has("diagnose") else None
    if command == "diagnose" and diagnose is None:
        diagnose = DiagnoseOptions()
    top.finish()
    return RunConfig(
        command=command,
        scenario=scenario,
        input_path=input_path,
        estimators=estimators,
        output_path=output_path,
        output_format=output_format,
        diagnose=diagnose,
    )


# --------------------------------------------------------------------------
# canonical form
# --------------------------------------------------------------------------


def _plain(obj) -> dict:
    """Dataclass -> dict with its ``kind`` tag first and None fields dropped."""
    out: dict[str, Any] = {}
    kind = getattr(type(obj), "kind", None)
    if kind is not None:
        out["kind"] = kind
    for f in fields(obj):
        value = getattr(obj, f.name)
        if value is None:
            continue
        out[f.name] = to_plain(value)
    return out


def to_plain(value):
    if hasattr(value, "__dataclass_fields__"):
        return _plain(value)
    if isinstance(value, (tuple, list)):
        return [to_plain(v) for v in value]
    return value


def run_config_to_dict(cfg: RunConfig, include_output: bool = True) -> dict:
    out = _plain(cfg)
    if not include_output:
        out.pop("output_path", None)
    if not out.get("estimators"):
        out.pop("estimators", None)
    return out


def canonical_toml(cfg: RunConfig) -> str:
    return tomli_w.dumps(run_config_to_dict(cfg))
