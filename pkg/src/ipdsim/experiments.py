"""Experiment grids and replication drivers.

* :func:`replicate_fig3` -- Spi thresholds over bandwidth x interaural delay.
* :func:`correlation_discrimination` -- d' between interaural correlations.
* :func:`group_delay_study` -- thresholds for maskers with a pure group delay.
* :func:`trahiotis_check` -- 1.5-ms group delay in 50- and 400-Hz maskers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .binaural import BinauralParams, ModelParams, decision_variables
from .observer import ConditionResult, StaircaseConfig, child_seed, run_condition
from .stimgen import (Condition, Correlated, Delayed, NoiseSpec, TonePhase,
                      Uncorrelated, as_generator, make_interval)

BANDWIDTHS_HZ = (25.0, 50.0, 100.0, 150.0, 200.0, 1000.0)
DELAYS_MS = (0.0, 2.0, 4.0, 8.0)
UNCORR = "uncorr"
GROUP_DELAYS_MS = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.8)
GROUP_DELAY_SIGMA_IPD = 0.45
CHAINS = ((0.0, 0.8, 1.0), (0.0, 0.5, 0.9, 1.0))


@dataclass(frozen=True)
class Reference:
    value: float
    citation: str


REFERENCE_DATA: Dict[str, Reference] = {
    "bmld_tau0_db": Reference(14.8, "measured BMLD at zero delay, mean over bandwidths"),
    "bmld_tau8_broadband_db": Reference(2.0, "measured BMLD at 8-ms delay, bandwidths >= 100 Hz"),
    "bmld_tau8_bw25_db": Reference(6.3, "measured BMLD at 8-ms delay, 25-Hz band"),
    "bmld_tau8_bw50_db": Reference(4.7, "measured BMLD at 8-ms delay, 50-Hz band"),
    "fig3_rmse_db": Reference(1.35, "fitted model vs. measured Spi medians"),
    "sem_max_db": Reference(0.6, "largest SEM of simulated thresholds, 100 runs"),
    "sigma_ipd_rad": Reference(0.3, "fitted IPD jitter"),
    "sigma_d": Reference(0.4, "fitted detector noise"),
    "group_delay_sigma_ipd_rad": Reference(0.45, "IPD jitter for the short group-delay stimuli"),
    "group_delay_slope_broadband_db_per_ms": Reference(3.0, "upper bound of the reported broadband slope"),
    "group_delay_slope_50hz_db_per_ms": Reference(2.0, "reported slope for the 50-Hz masker"),
    "trahiotis_50hz_db": Reference(2.0, "predicted increase, 1.5-ms group delay, 50-Hz masker"),
    "trahiotis_400hz_db": Reference(4.0, "predicted increase, 1.5-ms group delay, 400-Hz masker"),
}


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------


def mode_label(mode) -> str:
    if isinstance(mode, Delayed):
        return f"delay_ms={mode.tau * 1e3:g}"
    if isinstance(mode, Uncorrelated):
        return "uncorrelated"
    if isinstance(mode, Correlated):
        return f"rho={mode.rho:g};group_delay_ms={mode.group_delay_s * 1e3:g}"
    raise TypeError(f"unknown interaural mode {mode!r}")


def delay_key(mode):
    """Reference-table key of a main-grid mode: delay in ms or ``"uncorr"``."""
    if isinstance(mode, Uncorrelated):
        return UNCORR
    if isinstance(mode, Delayed):
        return round(mode.tau * 1e3, 6)
    raise ValueError(f"{mode!r} is not a main-grid mode")


def grid_condition(bandwidth, delay_ms=None, tone_phase=TonePhase.SPi, **noise_kw):
    """Main-grid condition; ``delay_ms=None`` means interaurally uncorrelated."""
    mode = Uncorrelated() if delay_ms is None else Delayed(delay_ms * 1e-3)
    noise = NoiseSpec(bandwidth=bandwidth, interaural_mode=mode, **noise_kw)
    dpart = "Nu" if delay_ms is None else f"tau{delay_ms:g}ms"
    return Condition(noise, tone_phase, f"BW{bandwidth:g}_{dpart}_{TonePhase(tone_phase).value}")


def main_grid() -> List[Condition]:
    """The 30 modelled Spi conditions (diotic S0 conditions are not modelled)."""
    return [grid_condition(bw, d)
            for bw in BANDWIDTHS_HZ for d in list(DELAYS_MS) + [None]]


def group_delay_condition(bandwidth, group_delay_ms, rho=1.0):
    mode = Correlated(rho, group_delay_ms * 1e-3)
    return Condition(NoiseSpec(bandwidth=bandwidth, interaural_mode=mode),
                     TonePhase.SPi, f"BW{bandwidth:g}_gd{group_delay_ms:g}ms_SPi")


def condition_seed(master_seed, index) -> np.random.SeedSequence:
    """Seed of the ``index``-th condition of an experiment (counter-based spawn)."""
    return child_seed(master_seed, index)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def summarize(results: Iterable[ConditionResult]) -> List[dict]:
    rows = []
    for r in results:
        if r.n_runs == 0:
            raise ValueError("empty result")
        rows.append({
            "label": r.condition.label,
            "bandwidth_hz": r.condition.noise.bandwidth,
            "interaural_mode": mode_label(r.condition.noise.interaural_mode),
            "tone_phase": r.condition.tone_phase.value,
            "n_runs": r.n_runs,
            "mean_db": r.mean,
            "median_db": r.median,
            "iqr_db": r.iqr,
            "sd_db": r.sd,
            "sem_db": r.sem,
        })
    if not rows:
        raise ValueError("nothing to summarize")
    return rows


def rmse(a, b) -> float:
    """Root-mean-square difference of two aligned tables.

    Mappings are aligned by key and must share the same keys; sequences must
    have equal length.
    """
    if isinstance(a, Mapping) or isinstance(b, Mapping):
        if not (isinstance(a, Mapping) and isinstance(b, Mapping)):
            raise TypeError("cannot align a mapping with a sequence")
        if set(a) != set(b):
            raise ValueError(f"tables misaligned: {sorted(map(str, set(a) ^ set(b)))}")
        keys = list(a)
        a = [a[k] for k in keys]
        b = [b[k] for k in keys]
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("tables misaligned")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


@dataclass
class Fig3Result:
    results: List[ConditionResult]
    rmse_db: Optional[float] = None

    def table(self) -> Dict[Tuple[float, object], ConditionResult]:
        return {(r.condition.noise.bandwidth, delay_key(r.condition.noise.interaural_mode)): r
                for r in self.results}

    def threshold(self, bandwidth, delay_ms=None):
        key = UNCORR if delay_ms is None else float(delay_ms)
        return self.table()[(float(bandwidth), key)].mean


def _run_one(args):
    return run_condition(*args)


def run_conditions(conditions: Sequence[Condition], model: ModelParams,
                   config: StaircaseConfig, n_runs: int, seed, progress=None,
                   workers: int = 1):
    """Run every condition with its own derived seed.

    ``workers > 1`` spreads conditions over processes; results are the same
    because no two conditions share a random stream.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = [(cond, model, config, n_runs, condition_seed(seed, k))
            for k, cond in enumerate(conditions)]
    results = []
    if workers == 1 or len(jobs) < 2:
        stream = map(_run_one, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=min(workers, len(jobs)))
        stream = pool.map(_run_one, jobs)
    try:
        for res in stream:
            results.append(res)
            if progress is not None:
                progress(res)
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def replicate_fig3(model: ModelParams = ModelParams(),
                   config: StaircaseConfig = StaircaseConfig(), n_runs: int = 100,
                   seed=0, reference: Optional[Mapping] = None,
                   conditions: Optional[Sequence[Condition]] = None,
                   progress=None, workers: int = 1) -> Fig3Result:
    """Thresholds over the main grid; RMSE of means against ``reference`` medians if given."""
    conditions = main_grid() if conditions is None else conditions
    out = Fig3Result(run_conditions(conditions, model, config, n_runs, seed, progress,
                                    workers))
    if reference is not None:
        table = out.table()
        common = {k: table[k].mean for k in reference if k in table}
        if not common:
            raise ValueError("reference table shares no condition with the grid")
        out.rmse_db = rmse(common, {k: reference[k] for k in common})
    return out


def simulate_decision_variables(noise: NoiseSpec, n_intervals: int,
                                model: ModelParams = ModelParams(), seed=0,
                                batch_size: int = 128) -> np.ndarray:
    """D for ``n_intervals`` independent noise-only intervals."""
    rng = as_generator(seed)
    fs = model.sample_rate
    out = []
    for lo in range(0, n_intervals, batch_size):
        left, right, jitter, det = [], [], [], []
        for _ in range(min(batch_size, n_intervals - lo)):
            stim = make_interval(noise, None, rng, fs)
            left.append(stim.left)
            right.append(stim.right)
            jitter.append(rng.standard_normal(len(stim)))
            det.append(rng.standard_normal())
        out.append(decision_variables(np.array(left), np.array(right),
                                      np.array(jitter), np.array(det), model))
    return np.concatenate(out)


def dprime(d1, d2) -> float:
    """|mean difference| over the RMS of the two standard deviations."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    pooled = (d1.var(ddof=1) + d2.var(ddof=1)) / 2
    if not pooled > 0:
        raise ValueError("degenerate decision-variable distributions (zero variance)")
    return float(abs(d1.mean() - d2.mean()) / math.sqrt(pooled))


@dataclass
class CorrelationResult:
    dprimes: Dict[Tuple[float, float], float]
    samples: Dict[float, np.ndarray] = field(repr=False, default_factory=dict)

    def dprime(self, rho1, rho2):
        if (rho1, rho2) in self.dprimes:
            return self.dprimes[(rho1, rho2)]
        return self.dprimes[(rho2, rho1)]

    def chain(self, rhos: Sequence[float]) -> float:
        """Sum of adjacent-pair d' along ``rhos``, e.g. (0, 0.8, 1) -> d'(0, 1)."""
        return sum(self.dprime(a, b) for a, b in zip(rhos, rhos[1:]))


def chain_pairs(chains=CHAINS):
    pairs = []
    for ch in chains:
        for p in zip(ch, ch[1:]):
            if p not in pairs:
                pairs.append(p)
    return pairs


def correlation_discrimination(model: ModelParams = ModelParams(),
                               rho_pairs: Optional[Sequence[Tuple[float, float]]] = None,
                               trials_per_point: int = 2000, seed=0,
                               noise: NoiseSpec = NoiseSpec(bandwidth=1000.0)) -> CorrelationResult:
    """d' between noise-only D distributions at pairs of interaural correlation."""
    pairs = list(rho_pairs) if rho_pairs is not None else chain_pairs()
    rhos = sorted({r for p in pairs for r in p})
    for r in rhos:
        if not -1 <= r <= 1:
            raise ValueError(f"rho {r} outside [-1, 1]")
    samples = {}
    for k, r in enumerate(rhos):
        spec = replace(noise, interaural_mode=Correlated(r, 0.0))
        samples[r] = simulate_decision_variables(spec, trials_per_point, model,
                                                 condition_seed(seed, k))
    return CorrelationResult({p: dprime(samples[p[0]], samples[p[1]]) for p in pairs},
                             samples)


@dataclass
class GroupDelayResult:
    bandwidth: float
    delays_ms: Tuple[float, ...]
    results: List[ConditionResult]

    @property
    def thresholds(self):
        return np.array([r.mean for r in self.results])

    @property
    def relative(self):
        """Thresholds re the zero-delay condition."""
        ref = self.thresholds[self.delays_ms.index(0.0)]
        return self.thresholds - ref

    @property
    def slope_db_per_ms(self):
        """Least-squares slope of the relative thresholds over the delay grid."""
        return float(np.polyfit(self.delays_ms, self.relative, 1)[0])


def group_delay_study(model: Optional[ModelParams] = None,
                      delays_ms: Sequence[float] = GROUP_DELAYS_MS,
                      bandwidth: float = 1000.0, n_runs: int = 100,
                      config: StaircaseConfig = StaircaseConfig(), seed=0,
                      progress=None, workers: int = 1) -> GroupDelayResult:
    """Spi thresholds for pure-group-delay maskers.

    The default model uses an IPD jitter of 0.45 rad.
    """
    if model is None:
        model = ModelParams(binaural=BinauralParams(sigma_ipd=GROUP_DELAY_SIGMA_IPD))
    delays = tuple(float(d) for d in delays_ms)
    if any(d < 0 for d in delays):
        raise ValueError("group delays must be non-negative")
    if 0.0 not in delays:
        delays = (0.0,) + delays
    conds = [group_delay_condition(bandwidth, d) for d in delays]
    return GroupDelayResult(bandwidth, delays,
                            run_conditions(conds, model, config, n_runs, seed, progress,
                                           workers))


@dataclass
class TrahiotisResult:
    group_delay_ms: float
    results: Dict[float, Tuple[ConditionResult, ConditionResult]]

    def increase(self, bandwidth) -> float:
        ref, delayed = self.results[bandwidth]
        return delayed.mean - ref.mean


def trahiotis_check(model: ModelParams = ModelParams(), n_runs: int = 100,
                    group_delay_ms: float = 1.5, bandwidths=(50.0, 400.0),
                    config: StaircaseConfig = StaircaseConfig(), seed=0,
                    progress=None, workers: int = 1) -> TrahiotisResult:
    """Threshold increase caused by a pure group delay, re N0Spi, per masker bandwidth."""
    conds = []
    for bw in bandwidths:
        conds += [group_delay_condition(bw, 0.0), group_delay_condition(bw, group_delay_ms)]
    res = run_conditions(conds, model, config, n_runs, seed, progress, workers)
    return TrahiotisResult(group_delay_ms,
                           {bw: (res[2 * k], res[2 * k + 1]) for k, bw in enumerate(bandwidths)})


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

RESULT_COLUMNS = ["label", "bandwidth_hz", "interaural_mode", "tone_phase", "n_runs",
                  "mean_db", "median_db", "sd_db", "sem_db"]


def write_results_csv(path, results: Iterable[ConditionResult]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, RESULT_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in summarize(results):
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                             for k, v in row.items()})


def read_reference_csv(path) -> Dict[Tuple[float, object], float]:
    """Digitized medians keyed by ``(bandwidth_hz, delay_ms | "uncorr")``."""
    table = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"bandwidth_hz", "delay_ms_or_uncorr", "median_threshold_db"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"reference CSV needs columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            raw = row["delay_ms_or_uncorr"].strip().lower()
            try:
                key = UNCORR if raw.startswith("u") else round(float(raw), 6)
                table[(float(row["bandwidth_hz"]), key)] = float(row["median_threshold_db"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return table


def write_plot_data(path, rows: Iterable[Tuple[float, float, str]]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "series"])
        for x, y, series in rows:
            writer.writerow([f"{x:.6g}", f"{y:.6f}", series])


def fig3_plot_rows(fig3: Fig3Result):
    """(delay, threshold, bandwidth) rows; uncorrelated noise plotted at x = inf."""
    rows = []
    for r in fig3.results:
        key = delay_key(r.condition.noise.interaural_mode)
        x = math.inf if key == UNCORR else key
        rows.append((x, r.mean, f"BW{r.condition.noise.bandwidth:g}"))
    return rows
