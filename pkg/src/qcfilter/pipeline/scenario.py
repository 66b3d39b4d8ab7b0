"""Scenario files: YAML documents validated into frozen dataclasses.

Every key is checked; unknown keys are an error. Defaults are filled in and
the validated scenario can be dumped back (``Scenario.to_dict``) so a run
records exactly what it used.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..bayes import ESTIMATORS, MCMCConfig
from ..calib import CalibrationConfig
from ..plans import AlwaysAccept, ARModel, ExecutionLimit, MortarMeanCriterion, Policy, UnitTwoStage
from ..priors import DomainError
from ..wall import MasonrySpec, WallGeometry

WALL_BINDINGS = ("units", "mortar", "execution")


class ScenarioError(ValueError):
    """Schema violation; ``path`` locates the offending key."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


PLAN_TYPES = {
    "unit_two_stage": (UnitTwoStage, {"fc_declared": float, "fm_declared": float, "n_per_stage": int,
                                      "k_char": float, "second_stage_policy": str}),
    "mortar_mean": (MortarMeanCriterion, {"xk_declared": float, "n": int, "margin_factor": float}),
    "execution_limit": (ExecutionLimit, {"limit": float, "n": int}),
    "always_accept": (AlwaysAccept, {}),
}
AR_KEYS = {"phi1": float, "phi2": float, "innov_mean_scale": float, "innov_var_scale": float, "burn_in": int}


@dataclass(frozen=True)
class PriorSpec:
    mean: float
    v0: float
    n: int


@dataclass(frozen=True)
class StageSpec:
    plan: dict
    ar: dict | None = None

    def build(self):
        cls, _ = PLAN_TYPES[self.plan["type"]]
        kwargs = {k: v for k, v in self.plan.items() if k != "type"}
        ar = ARModel(**self.ar) if self.ar is not None else None
        return cls(**kwargs), ar


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    homogeneity: float | str
    mode: str = "mcmc"
    prior: PriorSpec | None = None
    stages: tuple = ()
    v_fixed: tuple = ()
    v_upper: tuple = ()


@dataclass(frozen=True)
class WallSpec:
    h: float = 3.3
    t: float = 0.24
    e: float = 0.024
    f_b: float = 15.0
    f_m: float = 5.0
    big_k: float = 0.79
    exp_alpha: float = 0.585
    exp_beta: float = 0.162
    k_e: float = 2400.0

    @property
    def geometry(self):
        return WallGeometry(self.h, self.t, self.e)

    @property
    def masonry(self):
        return MasonrySpec(self.f_b, self.f_m, self.big_k, self.exp_alpha, self.exp_beta, self.k_e)


@dataclass(frozen=True)
class OCSpec:
    channel: str
    levels: tuple = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5)
    fixed_cov: float = 0.25
    n_sim: int = 20_000


@dataclass(frozen=True)
class SubsetSpec:
    name: str
    channels: tuple
    stage: int


@dataclass(frozen=True)
class ReportSpec:
    q_digits: int = 3
    r_digits: int = 2
    gamma_digits: int = 2
    v_digits: int = 3
    cov_measure: str = "predictive"
    write_chains: bool = False
    density_points: int = 400
    prior_draws: int = 100_000


@dataclass(frozen=True)
class Scenario:
    channels: tuple
    seed: int = 0
    wall: WallSpec | None = None
    calib: CalibrationConfig = field(default_factory=CalibrationConfig)
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    report: ReportSpec = field(default_factory=ReportSpec)
    subsets: tuple = ()
    oc: tuple = ()

    @property
    def n_stages(self) -> int:
        counts = [len(c.stages) if c.mode == "mcmc" else len(c.v_fixed) - 1 for c in self.channels]
        return max(counts)

    def channel(self, name) -> ChannelSpec:
        for c in self.channels:
            if c.name == name:
                return c
        raise ScenarioError("channels", f"no channel named {name!r}")

    def homogeneity(self, ch: ChannelSpec) -> float:
        if isinstance(ch.homogeneity, str):
            from ..wall import design_point_degrees
            return design_point_degrees(self.wall.geometry, self.wall.masonry)[ch.homogeneity.split(".", 1)[1]]
        return float(ch.homogeneity)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed), mcmc=replace(self.mcmc, seed=int(seed)))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Policy):
        return obj.value
    return obj


# --------------------------------------------------------------------------
# validation helpers
# --------------------------------------------------------------------------

def _mapping(node, path):
    if not isinstance(node, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(node).__name__}")
    return node


def _strict(node, path, allowed):
    unknown = sorted(set(node) - set(allowed))
    if unknown:
        raise ScenarioError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")


def _required(node, key, path):
    if key not in node:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required key")
    return node[key]


def _coerce(value, typ, path):
    if typ is bool:
        if not isinstance(value, bool):
            raise ScenarioError(path, "expected true/false")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ScenarioError(path, f"expected a finite number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ScenarioError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(typ)


def _fields(node, path, schema, cls=None):
    node = _mapping(node or {}, path)
    _strict(node, path, schema)
    kwargs = {k: _coerce(node[k], t, f"{path}.{k}") for k, t in schema.items() if k in node}
    if cls is None:
        return kwargs
    try:
        return cls(**kwargs)
    except (DomainError, ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None


def _float_list(node, path):
    if not isinstance(node, list) or not node:
        raise ScenarioError(path, "expected a non-empty list of numbers")
    return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(node))


def _plan(node, path):
    node = _mapping(node, path)
    kind = _coerce(_required(node, "type", path), str, f"{path}.type")
    if kind not in PLAN_TYPES:
        raise ScenarioError(f"{path}.type", f"unknown plan type {kind!r}; expected one of {sorted(PLAN_TYPES)}")
    cls, schema = PLAN_TYPES[kind]
    rest = {k: v for k, v in node.items() if k != "type"}
    kwargs = _fields(rest, path, schema)
    try:
        cls(**kwargs)
    except (DomainError, ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None
    return {"type": kind, **kwargs}


def _ar(node, path):
    if node is None or node is False:
        return None
    if node is True:
        node = {}
    kwargs = _fields(node, path, AR_KEYS)
    try:
        ARModel(**kwargs)
    except DomainError as exc:
        raise ScenarioError(path, str(exc)) from None
    return asdict(ARModel(**kwargs))


def _channel(node, path, has_wall):
    node = _mapping(node, path)
    _strict(node, path, {"name", "homogeneity", "mode", "prior", "stages", "v_fixed", "v_upper"})
    name = _coerce(_required(node, "name", path), str, f"{path}.name")
    hom = _required(node, "homogeneity", path)
    if isinstance(hom, str):
        if not hom.startswith("wall.") or hom[5:] not in WALL_BINDINGS:
            raise ScenarioError(f"{path}.homogeneity", f"expected a number or one of wall.{{{','.join(WALL_BINDINGS)}}}")
        if not has_wall:
            raise ScenarioError(f"{path}.homogeneity", "wall binding used but no wall block given")
    else:
        hom = _coerce(hom, float, f"{path}.homogeneity")
    mode = _coerce(node.get("mode", "mcmc"), str, f"{path}.mode")
    if mode not in ("mcmc", "fixed"):
        raise ScenarioError(f"{path}.mode", "expected 'mcmc' or 'fixed'")
    if mode == "fixed":
        v_fixed = _float_list(_required(node, "v_fixed", path), f"{path}.v_fixed")
        v_upper = _float_list(node["v_upper"], f"{path}.v_upper") if "v_upper" in node else ()
        if v_upper and len(v_upper) != len(v_fixed):
            raise ScenarioError(f"{path}.v_upper", "must have the same length as v_fixed")
        if any(v <= 0 for v in v_fixed + v_upper):
            raise ScenarioError(f"{path}.v_fixed", "coefficients of variation must be positive")
        return ChannelSpec(name, hom, mode, v_fixed=v_fixed, v_upper=v_upper)
    for key in ("v_fixed", "v_upper"):
        if key in node:
            raise ScenarioError(f"{path}.{key}", "only allowed with mode: fixed")
    prior = _fields(_required(node, "prior", path), f"{path}.prior", {"mean": float, "v0": float, "n": int})
    for key in ("mean", "v0", "n"):
        _required(prior, key, f"{path}.prior")
    prior = PriorSpec(**prior)
    stages_node = _required(node, "stages", path)
    if not isinstance(stages_node, list) or not stages_node:
        raise ScenarioError(f"{path}.stages", "expected a non-empty list")
    stages = []
    for i, st in enumerate(stages_node):
        sp = f"{path}.stages[{i}]"
        st = _mapping(st, sp)
        _strict(st, sp, {"plan", "ar"})
        stages.append(StageSpec(_plan(_required(st, "plan", sp), f"{sp}.plan"), _ar(st.get("ar"), f"{sp}.ar")))
    return ChannelSpec(name, hom, mode, prior, tuple(stages))


TOP_KEYS = {"seed", "channels", "wall", "calibration", "mcmc", "report", "subsets", "oc"}


def parse_scenario(doc) -> Scenario:
    if doc is None:
        doc = {}
    doc = _mapping(doc, "")
    _strict(doc, "", TOP_KEYS)
    seed = _coerce(_required(doc, "seed", ""), int, "seed")
    chans_node = _required(doc, "channels", "")
    if not isinstance(chans_node, list) or not chans_node:
        raise ScenarioError("channels", "expected a non-empty list")
    wall = _fields(doc["wall"], "wall", {k: float for k in WallSpec.__dataclass_fields__}, WallSpec) if "wall" in doc else None
    channels = tuple(_channel(c, f"channels[{i}]", wall is not None) for i, c in enumerate(chans_node))
    names = [c.name for c in channels]
    for i, n in enumerate(names):
        if n in names[:i]:
            raise ScenarioError(f"channels[{i}].name", f"duplicate channel name {n!r}")

    calib = _fields(doc.get("calibration"), "calibration",
                    {k: float for k in CalibrationConfig.__dataclass_fields__}, CalibrationConfig)
    mcmc_schema = {"n_chains": int, "n_samples": int, "burn_in": int, "proposal_scale_mu": float,
                   "proposal_scale_logq": float, "pa_estimator": str, "grid_size": int,
                   "grid_n_sim": int, "mc_n_sim": int}
    mcmc_kw = _fields(doc.get("mcmc"), "mcmc", mcmc_schema)
    if mcmc_kw.get("pa_estimator", "auto") not in ESTIMATORS:
        raise ScenarioError("mcmc.pa_estimator", f"expected one of {ESTIMATORS}")
    try:
        mcmc = MCMCConfig(seed=seed, **mcmc_kw)
    except DomainError as exc:
        raise ScenarioError("mcmc", str(exc)) from None
    report = _fields(doc.get("report"), "report",
                     {"q_digits": int, "r_digits": int, "gamma_digits": int, "v_digits": int,
                      "cov_measure": str, "write_chains": bool, "density_points": int, "prior_draws": int},
                     ReportSpec)
    if report.cov_measure not in ("predictive", "conditional"):
        raise ScenarioError("report.cov_measure", "expected 'predictive' or 'conditional'")

    counts = {len(c.stages) if c.mode == "mcmc" else len(c.v_fixed) - 1 for c in channels}
    counts.discard(0)
    if len(counts) > 1:
        raise ScenarioError("channels", f"controlled channels disagree on the number of stages: {sorted(counts)}")

    subsets = []
    for i, s in enumerate(doc.get("subsets") or []):
        sp = f"subsets[{i}]"
        s = _mapping(s, sp)
        _strict(s, sp, {"name", "channels", "stage"})
        chans = _required(s, "channels", sp)
        if not isinstance(chans, list) or not all(isinstance(c, str) for c in chans):
            raise ScenarioError(f"{sp}.channels", "expected a list of channel names")
        for c in chans:
            if c not in names:
                raise ScenarioError(f"{sp}.channels", f"unknown channel {c!r}")
        stage = _coerce(_required(s, "stage", sp), int, f"{sp}.stage")
        if not 1 <= stage <= max(counts or {0}):
            raise ScenarioError(f"{sp}.stage", f"stage {stage} out of range")
        subsets.append(SubsetSpec(_coerce(_required(s, "name", sp), str, f"{sp}.name"), tuple(chans), stage))

    ocs = []
    for i, o in enumerate(doc.get("oc") or []):
        sp = f"oc[{i}]"
        o = _mapping(o, sp)
        _strict(o, sp, {"channel", "levels", "fixed_cov", "n_sim"})
        kw = _fields({k: v for k, v in o.items() if k != "levels"}, sp,
                     {"channel": str, "fixed_cov": float, "n_sim": int})
        _required(kw, "channel", sp)
        ch = next((c for c in channels if c.name == kw["channel"]), None)
        if ch is None or ch.mode != "mcmc":
            raise ScenarioError(f"{sp}.channel", f"{kw['channel']!r} is not a channel with a plan")
        if "levels" in o:
            kw["levels"] = _float_list(o["levels"], f"{sp}.levels")
            if len(kw["levels"]) < 2:
                raise ScenarioError(f"{sp}.levels", "need at least two levels")
        ocs.append(OCSpec(**kw))

    return Scenario(channels=channels, seed=seed, wall=wall, calib=calib, mcmc=mcmc, report=report,
                    subsets=tuple(subsets), oc=tuple(ocs))


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"not a valid scenario document: {exc}") from None
    return parse_scenario(doc)


def shipped_scenario(name="masonry_wall.scenario") -> Path:
    return Path(__file__).resolve().parent.parent / "scenarios" / name
