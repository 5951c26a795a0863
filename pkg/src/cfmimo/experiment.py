"""Multi-drop experiments: per-user SE samples, empirical CDFs and result files."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import estimation_statistics
from .power_control import (SolverError, build_socp, equal_power_allocation, maxmin_power,
                            transmitted_power)
from .precoder import FPZF, SCHEMES, SMRT
from .scenario import ConfigError, SystemConfig, generate_drop
from .spectral_efficiency import (prelog_factor, se_from_sinr, sinr_fpzf_closed_form,
                                  sinr_monte_carlo)

log = logging.getLogger(__name__)

MAXMIN, EQUAL = "maxmin", "equal"
POWER_POLICIES = (MAXMIN, EQUAL)
PERCENTILES = {"p5": 0.05, "p50": 0.5}   # 95%-likely and median

SAMPLES_FILE = "samples.csv"
CDF_FILE = "cdf.csv"
SUMMARY_FILE = "summary.csv"
DROPS_FILE = "drops.csv"
MANIFEST_FILE = "manifest.json"
PLOT_FILE = "cdf.png"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines an experiment's output.

    ``power`` applies to fpZF only; the MRT baselines always use equal power
    and are labelled accordingly.  ``workers`` changes speed, never results.
    """

    config: SystemConfig
    seed: int
    n_drops: int = 50
    schemes: tuple = SCHEMES
    power: str = MAXMIN
    n_mc_blocks: int = 1000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(dict.fromkeys(self.schemes)))
        self.validate()

    def validate(self):
        if self.n_drops < 1:
            raise ConfigError("need at least one drop")
        if not self.schemes:
            raise ConfigError("need at least one scheme")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
        if self.power not in POWER_POLICIES:
            raise ConfigError(f"power policy must be one of {POWER_POLICIES}")
        if self.n_mc_blocks < 2:
            raise ConfigError("need at least two Monte Carlo blocks")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if FPZF in self.schemes:
            self.config.require_fpzf()

    def label(self, scheme: str) -> str:
        return f"{scheme}-{self.power if scheme == FPZF else EQUAL}"

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "seed": self.seed, "n_drops": self.n_drops,
                "schemes": list(self.schemes), "power": self.power,
                "n_mc_blocks": self.n_mc_blocks}

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentSpec":
        data = dict(data)
        data["config"] = SystemConfig.from_dict(data["config"])
        data["schemes"] = tuple(data["schemes"])
        data.update(overrides)
        return cls(**data)


@dataclass
class CdfTable:
    samples: np.ndarray                      # sorted
    values: np.ndarray                       # distinct sample values
    cdf: np.ndarray                          # midpoint CDF at ``values``
    cdf_upper: np.ndarray                    # right-continuous CDF at ``values``
    percentiles: dict = field(default_factory=dict)

    def __call__(self, x):
        s = self.samples
        below = np.searchsorted(s, x, side="left")
        upto = np.searchsorted(s, x, side="right")
        return (below + upto) / (2.0 * len(s))

    def percentile(self, p: float) -> float:
        return percentile(self.samples, p)


def percentile(sorted_samples: np.ndarray, p: float) -> float:
    """Value at 1-based index ``ceil(p n)`` of the sorted samples."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    n = len(sorted_samples)
    idx = min(max(math.ceil(p * n), 1), n)
    return float(sorted_samples[idx - 1])


def compute_cdf(samples) -> CdfTable:
    """Empirical CDF with the midpoint convention ``(#<x + #<=x) / 2n``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("cannot build a CDF from no samples")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples must be finite")
    values, counts = np.unique(s, return_counts=True)
    upto = np.cumsum(counts)
    below = upto - counts
    n = s.size
    table = CdfTable(samples=s, values=values, cdf=(below + upto) / (2.0 * n),
                     cdf_upper=upto / n)
    table.percentiles = {name: percentile(s, p) for name, p in PERCENTILES.items()}
    return table


@dataclass
class DropRecord:
    drop: int
    scheme: str                 # label, e.g. "fpzf-maxmin"
    status: str                 # "ok" or "excluded"
    sinr: np.ndarray | None = None
    se: np.ndarray | None = None
    nu_star: float | None = None
    power_ratio: float | None = None   # max_l transmitted / P_max
    reason: str = ""


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list
    tables: dict

    @property
    def exclusions(self) -> list:
        return [r for r in self.records if r.status != "ok"]


def drop_seed(seed: int, drop: int) -> np.random.SeedSequence:
    """Counter-based per-drop seed; independent of execution order."""
    return np.random.SeedSequence(seed, spawn_key=(drop,))


def run_drop(spec: ExperimentSpec, drop: int) -> list:
    """All schemes on one drop.  Solver failures become exclusion records."""
    cfg = spec.config
    scen_ss, mc_ss = drop_seed(spec.seed, drop).spawn(2)
    scenario = generate_drop(cfg, scen_ss)
    stats = estimation_statistics(scenario.beta, cfg.p_ul, scenario.pilots, cfg.tau_p)
    p_max = np.full(cfg.L, cfg.p_max_dl)
    mc_seeds = dict(zip(SCHEMES, mc_ss.spawn(len(SCHEMES))))
    out = []
    for scheme in spec.schemes:
        label = spec.label(scheme)
        try:
            nu_star = None
            if scheme == FPZF:
                if spec.power == MAXMIN:
                    inst = build_socp(stats, scenario.beta, scenario.pilots, cfg.M, cfg.tau_p, p_max)
                    sol = maxmin_power(inst)
                    rho, nu_star = sol.rho, sol.nu_star
                else:
                    rho = equal_power_allocation(p_max, cfg.L, cfg.K)
                sinr = sinr_fpzf_closed_form(stats, scenario.beta, rho, scenario.pilots,
                                             cfg.M, cfg.tau_p)
            else:
                M = 1 if scheme == SMRT else cfg.M
                rho = equal_power_allocation(p_max, cfg.L, cfg.K)
                sinr = sinr_monte_carlo(scheme, scenario, stats, rho, spec.n_mc_blocks,
                                        seed=mc_seeds[scheme], M=M).sinr
        except (SolverError, np.linalg.LinAlgError) as exc:
            log.warning("drop %d excluded for %s: %s", drop, label, exc)
            out.append(DropRecord(drop=drop, scheme=label, status="excluded", reason=str(exc)))
            continue
        ratio = float(np.max(transmitted_power(rho) / p_max))
        if ratio > 1 + 1e-9:
            raise AssertionError(f"drop {drop} {label}: AP power budget exceeded ({ratio})")
        report = se_from_sinr(sinr, cfg.xi_dl, cfg.tau_p, cfg.tau_c, scheme=label)
        out.append(DropRecord(drop=drop, scheme=label, status="ok", sinr=report.sinr,
                              se=report.se, nu_star=nu_star, power_ratio=ratio))
    return out


def _run_drop_args(args):
    return run_drop(*args)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every drop (optionally in worker processes) and pool per scheme."""
    spec.validate()
    jobs = [(spec, d) for d in range(spec.n_drops)]
    if spec.workers > 1 and spec.n_drops > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            per_drop = list(pool.map(_run_drop_args, jobs))
    else:
        per_drop = [_run_drop_args(j) for j in jobs]
    records = sorted((r for recs in per_drop for r in recs),
                     key=lambda r: (spec.schemes.index(r.scheme.split("-")[0]), r.drop))
    tables = {}
    for scheme in spec.schemes:
        label = spec.label(scheme)
        se = [r.se for r in records if r.scheme == label and r.status == "ok"]
        if se:
            tables[label] = compute_cdf(np.concatenate(se))
        else:
            log.error("every drop excluded for %s", label)
    n_ex = sum(r.status != "ok" for r in records)
    if n_ex:
        log.warning("%d (drop, scheme) pairs excluded", n_ex)
    return ExperimentResult(spec=spec, records=records, tables=tables)


def _fmt(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def manifest(spec: ExperimentSpec) -> dict:
    return {
        "experiment": spec.to_dict(),
        "prelog": prelog_factor(spec.config.xi_dl, spec.config.tau_p, spec.config.tau_c),
        "labels": {s: spec.label(s) for s in spec.schemes},
        "versions": {"cfmimo": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }


def emit_results(result: ExperimentResult, out_dir, plot: bool = False) -> dict:
    """Write samples, CDF points, percentile summary, per-drop audit and manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    spec = result.spec
    paths = {name: out / name for name in
             (SAMPLES_FILE, CDF_FILE, SUMMARY_FILE, DROPS_FILE, MANIFEST_FILE)}

    sample_rows = []
    for r in result.records:
        if r.status == "ok":
            sample_rows += [(r.drop, k, r.scheme, _fmt(r.sinr[k]), _fmt(r.se[k]))
                            for k in range(len(r.se))]
    _write_csv(paths[SAMPLES_FILE], ("drop", "ue", "scheme", "sinr", "se"), sample_rows)

    cdf_rows = []
    for label, t in result.tables.items():
        cdf_rows += [(label, _fmt(v), _fmt(c), _fmt(u))
                     for v, c, u in zip(t.values, t.cdf, t.cdf_upper)]
    _write_csv(paths[CDF_FILE], ("scheme", "se", "cdf", "cdf_upper"), cdf_rows)

    summary_rows = []
    for scheme in spec.schemes:
        label = spec.label(scheme)
        excluded = sum(1 for r in result.exclusions if r.scheme == label)
        t = result.tables.get(label)
        summary_rows.append((label, 0 if t is None else len(t.samples),
                             _fmt(None if t is None else t.percentiles["p5"]),
                             _fmt(None if t is None else t.percentiles["p50"]), excluded))
    _write_csv(paths[SUMMARY_FILE],
               ("scheme", "n_samples", "se_95_likely", "se_median", "excluded_drops"),
               summary_rows)

    drop_rows = [(r.drop, r.scheme, r.status,
                  _fmt(None if r.sinr is None else r.sinr.min()), _fmt(r.nu_star),
                  _fmt(r.power_ratio), r.reason) for r in result.records]
    _write_csv(paths[DROPS_FILE],
               ("drop", "scheme", "status", "min_sinr", "nu_star", "max_power_ratio", "reason"),
               drop_rows)

    info = manifest(spec)
    info["exclusions"] = [{"drop": r.drop, "scheme": r.scheme, "reason": r.reason}
                          for r in result.exclusions]
    try:
        paths[MANIFEST_FILE].write_text(json.dumps(info, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {paths[MANIFEST_FILE]}: {exc}") from exc

    if plot:
        paths[PLOT_FILE] = out / PLOT_FILE
        plot_cdfs(result.tables, paths[PLOT_FILE])
    return paths


def plot_cdfs(tables: dict, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, t in tables.items():
        ax.step(t.values, t.cdf_upper, where="post", label=label)
    ax.set_xlabel("per-user downlink SE [bit/s/Hz]")
    ax.set_ylabel("CDF")
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def load_manifest(path, **overrides) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        info = json.load(fh)
    return ExperimentSpec.from_dict(info["experiment"], **overrides)
