"""Advancing rates, pipeline TCO roll-ups and shared vs local input generation costs."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

from .errors import InvalidArgument

SIG = "SIG"
LIG = "LIG"

INITIAL_TARGET = (100.0, 500.0)
CAUGHT_UP_TARGET = 1.0


def advancing_rate(data_days: float, wall_days: float) -> float:
    if not wall_days > 0:
        raise InvalidArgument("wall_days must be > 0")
    return data_days / wall_days


def initial_training_in_target(rate: float) -> bool:
    return INITIAL_TARGET[0] <= rate <= INITIAL_TARGET[1]


def geomean(values) -> float:
    values = list(values)
    if not values:
        raise InvalidArgument("geomean of an empty list")
    if any(not v > 0 for v in values):
        raise InvalidArgument("geomean needs positive values")
    return math.exp(math.fsum(math.log(v) for v in values) / len(values))


@dataclass(frozen=True)
class TcoParams:
    """Cost units per resource unit over the amortization horizon."""

    tpu_chip: float = 1.0
    cpu_core: float = 0.02
    ram_gib: float = 0.002
    tray: float = 0.0
    power_provisioning: float = 0.0
    power_delivery: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0 or not math.isfinite(v):
                raise InvalidArgument(f"{k} must be a finite value >= 0")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Footprint:
    cpu_cores: float = 0.0
    ram_gib: float = 0.0
    trays: float = 0.0
    power_kw: float = 0.0

    def cost(self, p: TcoParams):
        return p.horizon * (self.cpu_cores * p.cpu_core + self.ram_gib * p.ram_gib + self.trays * p.tray
                            + self.power_kw * (p.power_provisioning + p.power_delivery))

    def scaled(self, k):
        return Footprint(self.cpu_cores * k, self.ram_gib * k, self.trays * k, self.power_kw * k)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class ResourceProfile:
    """One model's training pipeline resources under both input-generation modes.

    ``sig_pool`` is the whole shared pool's footprint; each model pays
    ``1/sharing_models`` of it.
    """

    name: str
    tpu_chips: float = 0.0
    tpu_power_kw: float = 0.0
    lig_readers: Footprint = field(default_factory=Footprint)
    sig_readers: Footprint = field(default_factory=Footprint)
    ps: Footprint = field(default_factory=Footprint)
    sig_pool: Footprint = field(default_factory=Footprint)
    sharing_models: int = 1

    def __post_init__(self):
        if self.tpu_chips < 0 or self.tpu_power_kw < 0:
            raise InvalidArgument("resource counts must be >= 0")
        if self.sharing_models < 1:
            raise InvalidArgument("sharing_models must be >= 1")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("lig_readers", "sig_readers", "ps", "sig_pool"):
            if k in d:
                d[k] = Footprint.from_dict(d[k])
        return cls(**d)


@dataclass(frozen=True)
class PipelineCost:
    tpu_cost: float
    reader_cost: float
    ps_cost: float
    sig_share_cost: float

    @property
    def total(self):
        return self.tpu_cost + self.reader_cost + self.ps_cost + self.sig_share_cost


def pipeline_tco(res: ResourceProfile, params: TcoParams, mode: str) -> PipelineCost:
    if mode not in (SIG, LIG):
        raise InvalidArgument(f"mode must be SIG or LIG, got {mode!r}")
    tpu = params.horizon * (res.tpu_chips * params.tpu_chip
                            + res.tpu_power_kw * (params.power_provisioning + params.power_delivery))
    ps = res.ps.cost(params)
    if mode == LIG:
        return PipelineCost(tpu, res.lig_readers.cost(params), ps, 0.0)
    return PipelineCost(tpu, res.sig_readers.cost(params), ps, res.sig_pool.cost(params) / res.sharing_models)


@dataclass(frozen=True)
class Comparison:
    names: tuple
    sig: tuple
    lig: tuple
    reductions: tuple
    geomean_reduction: float


def compare_sig_lig(models, params: TcoParams) -> Comparison:
    models = list(models)
    if not models:
        raise InvalidArgument("need at least one model")
    sig = tuple(pipeline_tco(m, params, SIG) for m in models)
    lig = tuple(pipeline_tco(m, params, LIG) for m in models)
    ratios = []
    for m, s, l in zip(models, sig, lig):
        if not l.total > 0:
            raise InvalidArgument(f"model {m.name!r} has zero LIG cost")
        ratios.append(s.total / l.total)
    return Comparison(tuple(m.name for m in models), sig, lig, tuple(1.0 - r for r in ratios), 1.0 - geomean(ratios))


def sig_pool_share(models, params: TcoParams) -> float:
    """Shared-pool cost relative to the combined SIG-mode cost of the sharing models."""
    pool = sum(pipeline_tco(m, params, SIG).sig_share_cost for m in models)
    total = sum(pipeline_tco(m, params, SIG).total for m in models)
    return pool / total if total else 0.0


COST_COLUMNS = ("model", "sig_total", "lig_total", "reduction", "sig_reader", "lig_reader", "sig_share")


def cost_rows(cmp: Comparison):
    rows = []
    for n, s, l, r in zip(cmp.names, cmp.sig, cmp.lig, cmp.reductions):
        rows.append({"model": n, "sig_total": s.total, "lig_total": l.total, "reduction": r,
                     "sig_reader": s.reader_cost, "lig_reader": l.reader_cost, "sig_share": s.sig_share_cost})
    return rows


def write_cost_csv(cmp: Comparison, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COST_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in cost_rows(cmp):
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
