"""End-to-end run: priors, Bayesian stages, CoV summaries and calibration."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..bayes import CoVSummary, ParamChain, cov_summary, predictive_density, sequential_update
from ..calib import (Channel, ChannelSet, aggregate_qr, improved_gamma, improvement_factor, rows_to_csv,
                     scenario_table)
from ..plans import ARModel, oc_curve
from ..priors import hyper_from_prior, q_from_cov, sample_prior_arrays
from .scenario import ChannelSpec, Scenario, ScenarioError

log = logging.getLogger(__name__)

OUT_ENV = "QCFILTER_OUT"


def derive_seed(seed, *keys) -> int:
    """Child seed for a sub-task; independent of execution order."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, np.uint64)[0])


def output_dir(out=None) -> Path:
    return Path(out or os.environ.get(OUT_ENV) or "qcfilter-out")


class RunError(RuntimeError):
    pass


@dataclass
class ChannelResult:
    name: str
    n_i: float
    mode: str
    v: list
    v_upper: list
    summaries: list = field(default_factory=list)

    @property
    def controlled(self) -> bool:
        return len(self.v) > 1


@dataclass
class RunReport:
    channels: list
    q_r: list
    delta_q_r: list
    r: list
    gamma: list
    table: list
    provenance: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _chain_summary(chain: ParamChain, measure: str):
    s = cov_summary(chain)
    v = s.predictive_v if measure == "predictive" else s.mean_v
    return s, v


def _run_mcmc_channel(scn: Scenario, idx: int, ch: ChannelSpec, out: Path | None):
    prior = hyper_from_prior(ch.prior.mean, ch.prior.v0, ch.prior.n)
    seed = derive_seed(scn.seed, idx)
    mu, q = sample_prior_arrays(prior, scn.report.prior_draws, derive_seed(seed, 0))
    chains = [ParamChain.from_points(mu, q)]
    stages = [st.build() for st in ch.stages]
    try:
        chains += sequential_update(prior, stages, replace(scn.mcmc, seed=seed))
    except Exception as exc:
        raise RunError(f"channel {ch.name!r}: {exc}") from exc
    summaries, vs = [], []
    for k, chain in enumerate(chains):
        s, v = _chain_summary(chain, scn.report.cov_measure)
        summaries.append(s)
        vs.append(v)
        if out is not None:
            _write_predictive(chain, out / "predictive" / f"{ch.name}_stage{k}.csv", scn.report.density_points)
            if scn.report.write_chains and k > 0:
                _write(out / "chains" / f"{ch.name}_stage{k}.csv", chain.to_csv())
    return ChannelResult(ch.name, scn.homogeneity(ch), "mcmc", vs, [s.ci75[1] for s in summaries], summaries)


def _write_predictive(chain, path, points):
    lo = np.quantile(chain.mu - 6 * chain.q, 0.001)
    hi = np.quantile(chain.mu + 6 * chain.q, 0.999)
    grid = np.exp(np.linspace(lo, hi, points))
    _write(path, predictive_density(chain, grid).to_csv())


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def channel_results(scn: Scenario, out: Path | None = None) -> list[ChannelResult]:
    results = []
    for idx, ch in enumerate(scn.channels):
        if ch.mode == "fixed":
            results.append(ChannelResult(ch.name, scn.homogeneity(ch), "fixed", list(ch.v_fixed),
                                         list(ch.v_upper or ch.v_fixed)))
        else:
            log.info("channel %s: %d stage(s)", ch.name, len(ch.stages))
            results.append(_run_mcmc_channel(scn, idx, ch, out))
    return results


def _channel_set(results, upper=False) -> ChannelSet:
    chans = []
    for res in results:
        v = res.v_upper if upper else res.v
        chans.append(Channel(res.name, res.n_i, v[0], tuple(v[1:]) if len(v) > 1 else None))
    return ChannelSet(tuple(chans))


def calibrate(scn: Scenario, results: list[ChannelResult]) -> RunReport:
    """Per-stage summary (Q_R, r, gamma) and subset rows from channel CoVs."""
    cfg = scn.calib
    cs = _channel_set(results)
    stages = range(scn.n_stages + 1)
    q_r = [aggregate_qr(cs, k) for k in stages]
    dq = [q_r[0] - q for q in q_r[1:]]
    r = [improvement_factor(q_r[0], q, cfg) for q in q_r[1:]]
    gamma = [improved_gamma(cfg, x) for x in r]
    subsets = [(s.name, list(s.channels), s.stage) for s in scn.subsets]
    col1 = scenario_table(cs, subsets, cfg)
    col2 = scenario_table(_channel_set(results, upper=True), subsets, cfg)
    table = [{"name": a.name, "q_in": a.q_in, "q_out": a.q_out, "r": a.r, "gamma": a.gamma,
              "q_in_upper": b.q_in, "q_out_upper": b.q_out, "r_upper": b.r, "gamma_upper": b.gamma}
             for a, b in zip(col1, col2)]
    chans = []
    for res in results:
        entry = {"name": res.name, "n": res.n_i, "mode": res.mode, "v": res.v, "v_upper": res.v_upper}
        if res.summaries:
            entry["summaries"] = [asdict(s) for s in res.summaries]
        chans.append(entry)
    provenance = {"seed": scn.seed, "config_hash": scn.config_hash(), "version": __version__,
                  "cov_measure": scn.report.cov_measure}
    return RunReport(chans, q_r, dq, r, gamma, table, provenance)


def run(scn: Scenario, out_dir=None, seed=None) -> RunReport:
    """Run the scenario and write CSVs, ``report.txt`` and ``report.json`` to ``out_dir``."""
    from .report import render_text

    if seed is not None:
        scn = scn.with_seed(seed)
    out = output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = channel_results(scn, out)
    report = calibrate(scn, results)
    for oc in scn.oc:
        emit_oc(scn, oc.channel, out)
    _write(out / "v_trajectory.csv", _trajectory_csv(results))
    _write(out / "stages.csv", _stages_csv(report))
    _write(out / "scenarios.csv", _table_csv(report))
    _write(out / "scenario_used.json", json.dumps(scn.to_dict(), indent=2, sort_keys=True) + "\n")
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", render_text(report, scn))
    return report


def _trajectory_csv(results) -> str:
    lines = ["channel,stage,v,v_upper,mean_v,median_v,ci75_lo,ci75_hi,predictive_v"]
    for res in results:
        for k, v in enumerate(res.v):
            if res.summaries:
                s: CoVSummary = res.summaries[k]
                extra = [s.mean_v, s.median_v, s.ci75[0], s.ci75[1], s.predictive_v]
            else:
                extra = [""] * 5
            lines.append(",".join([res.name, str(k), repr(float(v)), repr(float(res.v_upper[k]))]
                                  + [x if x == "" else repr(float(x)) for x in extra]))
    return "\n".join(lines) + "\n"


def _stages_csv(report: RunReport) -> str:
    lines = ["stage,q_r,delta_q_r,r,gamma"]
    lines.append(f"0,{report.q_r[0]!r},0.0,1.0,")
    for k, (q, dq, r, g) in enumerate(zip(report.q_r[1:], report.delta_q_r, report.r, report.gamma), 1):
        lines.append(f"{k},{q!r},{dq!r},{r!r},{g!r}")
    return "\n".join(lines) + "\n"


def _table_csv(report: RunReport) -> str:
    keys = ["name", "q_in", "q_out", "r", "gamma", "q_in_upper", "q_out_upper", "r_upper", "gamma_upper"]
    lines = [",".join(keys)]
    for row in report.table:
        name = row["name"]
        name = f'"{name}"' if "," in name else name
        lines.append(",".join([name] + [repr(float(row[k])) for k in keys[1:]]))
    return "\n".join(lines) + "\n"


def fixed_scenario(scn: Scenario, report: RunReport) -> Scenario:
    """Scenario whose channels are pinned to the CoVs a previous run produced."""
    chans = []
    for spec, res in zip(scn.channels, report.channels):
        chans.append(ChannelSpec(spec.name, spec.homogeneity, "fixed",
                                 v_fixed=tuple(res["v"]), v_upper=tuple(res["v_upper"])))
    return replace(scn, channels=tuple(chans))


def emit_oc(scn: Scenario, channel: str, out_dir):
    """Write paired OC curves (independent and AR(2) samples) for a channel's first plan."""
    spec = next((o for o in scn.oc if o.channel == channel), None)
    ch = scn.channel(channel)
    if ch.mode != "mcmc":
        raise ScenarioError("oc", f"channel {channel!r} has no acceptance plan")
    if spec is None:
        from .scenario import OCSpec
        spec = OCSpec(channel)
    plan, ar = ch.stages[0].build()
    ar = ar or ARModel()
    seed = derive_seed(scn.seed, [c.name for c in scn.channels].index(channel), 99)
    q = float(q_from_cov(spec.fixed_cov))
    indep = oc_curve(plan, spec.levels, fixed=q, n_sim=spec.n_sim, seed=seed)
    auto = oc_curve(plan, spec.levels, fixed=q, ar=ar, n_sim=spec.n_sim, seed=seed)
    out = Path(out_dir)
    _write(out / f"oc_{channel}_independent.csv", indep.to_csv())
    _write(out / f"oc_{channel}_ar2.csv", auto.to_csv())
    return indep, auto
