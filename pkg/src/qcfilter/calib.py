"""Improvement factors and recalibrated partial safety factors.

Resistance variability is aggregated in log space,
``Q_R**2 = sum(n_i**2 * Q_i**2)``, and partial factors follow
``gamma = b * exp((alpha_R * beta - k) * Q_R)``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .priors import DomainError

INCOMING = 0


@dataclass(frozen=True)
class CalibrationConfig:
    alpha_r: float = 0.8
    beta_t: float = 3.8
    k_fractile: float = 1.645
    bias_b: float = 1.0
    gamma_base: float = 1.5

    def __post_init__(self):
        for name in ("alpha_r", "beta_t", "k_fractile", "bias_b", "gamma_base"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.alpha_r > 1:
            raise DomainError("alpha_r must lie in (0, 1]")

    @property
    def coefficient(self) -> float:
        """``alpha_R * beta - k``; 1.395 with the defaults."""
        return self.alpha_r * self.beta_t - self.k_fractile


def q_of_v(v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError("coefficient of variation must be positive")
    out = np.sqrt(np.log1p(v * v))
    return out if out.ndim else float(out)


def v_of_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise DomainError("log-space standard deviation must be positive")
    out = np.sqrt(np.expm1(q * q))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Channel:
    """One input of the resistance model.

    ``v_out[k]`` is the CoV after QC stage ``k + 1``; ``None`` means the
    channel is never controlled.
    """

    name: str
    n_i: float
    v_in: float
    v_out: tuple | None = None

    def __post_init__(self):
        if not self.v_in > 0:
            raise DomainError(f"channel {self.name!r}: v_in must be positive")
        if self.v_out is not None:
            object.__setattr__(self, "v_out", tuple(float(v) for v in self.v_out))
            seq = (self.v_in,) + self.v_out
            if any(b > a for a, b in zip(seq, seq[1:])):
                warnings.warn(f"channel {self.name!r}: outgoing CoV increases across stages", stacklevel=2)

    @property
    def controlled(self) -> bool:
        return self.v_out is not None

    def v_at(self, stage: int) -> float:
        """CoV at ``stage`` (0 = incoming). Uncontrolled channels keep ``v_in``."""
        if stage == INCOMING or self.v_out is None:
            return self.v_in
        if stage > len(self.v_out):
            raise DomainError(f"channel {self.name!r} has no CoV for stage {stage}")
        return self.v_out[stage - 1]


@dataclass(frozen=True)
class ChannelSet:
    channels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise DomainError("a channel set needs at least one channel")
        names = [c.name for c in self.channels]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise DomainError(f"duplicate channel names: {sorted(dupes)}")

    def __getitem__(self, name) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(f"unknown channel {name!r}")

    @property
    def names(self):
        return [c.name for c in self.channels]

    @property
    def n_stages(self) -> int:
        return max((len(c.v_out) for c in self.channels if c.v_out), default=0)

    def restrict(self, controlled, stage) -> "ChannelSet":
        """Copy in which only ``controlled`` channels keep their outgoing CoVs, up to ``stage``."""
        for name in controlled:
            self[name]
        chans = []
        for c in self.channels:
            if c.name in controlled and c.v_out is not None:
                chans.append(Channel(c.name, c.n_i, c.v_in, c.v_out[:stage]))
            else:
                chans.append(Channel(c.name, c.n_i, c.v_in, None))
        return ChannelSet(tuple(chans))


def aggregate_qr(channels: ChannelSet, stage: int = INCOMING) -> float:
    """Aggregated log-space standard deviation of the resistance at ``stage``."""
    terms = sorted((c.n_i * q_of_v(c.v_at(stage))) ** 2 for c in channels.channels)
    return math.sqrt(math.fsum(terms))


def improvement_factor(q_in: float, q_out: float, cfg: CalibrationConfig = CalibrationConfig()) -> float:
    if q_in < 0 or q_out < 0:
        raise DomainError("log-space deviations must be non-negative")
    return math.exp(cfg.coefficient * (q_in - q_out))


def improvement_factor_v(v_in: float, v_out: float, cfg: CalibrationConfig = CalibrationConfig()) -> float:
    """Single-parameter form acting on CoVs directly (only close to the Q-form for small V)."""
    return math.exp(cfg.coefficient * (v_in - v_out))


def partial_safety_factor(q_r: float, cfg: CalibrationConfig = CalibrationConfig()) -> float:
    if q_r < 0:
        raise DomainError("q_r must be non-negative")
    return cfg.bias_b * math.exp(cfg.coefficient * q_r)


def improved_gamma(cfg: CalibrationConfig, r: float) -> float:
    """Baseline partial factor divided by the improvement factor (``r < 1`` degrades)."""
    return cfg.gamma_base / r


@dataclass(frozen=True)
class ScenarioRow:
    name: str
    q_in: float
    q_out: float
    r: float
    gamma: float


def scenario_table(channels: ChannelSet, subsets, cfg: CalibrationConfig = CalibrationConfig()) -> list[ScenarioRow]:
    """Rows of ``(name, r, gamma)`` for subsets of controlled channels.

    ``subsets`` holds ``(name, controlled_channel_names, stage)`` triples; channels
    outside a subset keep their incoming CoV.
    """
    q_in = aggregate_qr(channels, INCOMING)
    rows = []
    for name, controlled, stage in subsets:
        for ch in controlled:
            try:
                channels[ch]
            except KeyError:
                raise DomainError(f"row {name!r}: unknown channel {ch!r}") from None
        q_out = aggregate_qr(channels.restrict(controlled, stage), stage)
        r = improvement_factor(q_in, q_out, cfg)
        rows.append(ScenarioRow(name, q_in, q_out, r, improved_gamma(cfg, r)))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "q_in", "q_out", "r", "gamma"])
    for row in rows:
        w.writerow([row.name] + [repr(float(v)) for v in (row.q_in, row.q_out, row.r, row.gamma)])
    return buf.getvalue()


def rows_to_text(rows, r_digits=2, gamma_digits=2) -> str:
    width = max([len("Quality control task")] + [len(r.name) for r in rows])
    lines = [f"{'Quality control task':<{width}}  {'r':>6}  {'gamma_M':>8}"]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append(f"{row.name:<{width}}  {row.r:>6.{r_digits}f}  {row.gamma:>8.{gamma_digits}f}")
    return "\n".join(lines) + "\n"
