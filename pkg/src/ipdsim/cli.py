"""Command-line front end.

Usage::

    ipdsim fig3 --out results/fig3 --runs 100 --seed 1
    ipdsim group_delay --config my.cfg
    ipdsim stimulus_export --set bandwidth=100 --set delay_ms=0

Config files hold one ``key = value`` per line; ``#`` starts a comment.
Every key has a default (the published model parameters); unknown keys
are rejected.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import __version__
from .binaural import BinauralParams, ModelParams
from .coherence import effective_gamma, rect_gamma
from .experiments import (BANDWIDTHS_HZ, CHAINS, GROUP_DELAY_SIGMA_IPD, GROUP_DELAYS_MS,
                          chain_pairs, condition_seed, correlation_discrimination,
                          fig3_plot_rows, grid_condition, group_delay_study,
                          main_grid, read_reference_csv, replicate_fig3,
                          trahiotis_check, write_plot_data, write_results_csv)
from .observer import (StaircaseConfig, run_condition, track_seeds, write_trial_log)
from .periphery import PeripheryParams
from .stimgen import TonePhase, make_interval, write_wav

log = logging.getLogger("ipdsim")

EXPERIMENTS = ("fig3", "correlation", "group_delay", "trahiotis", "coherence",
               "staircase_demo", "stimulus_export")


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _delay(text):
    text = text.strip().lower()
    return None if text.startswith("u") else float(text)


def _optional_str(text):
    return text or None


@dataclass
class RunConfig:
    experiment: str = ""
    n_runs: int = 100
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "results"
    reference_csv: Optional[str] = None
    periphery: PeripheryParams = field(default_factory=PeripheryParams)
    binaural: BinauralParams = field(default_factory=BinauralParams)
    staircase: StaircaseConfig = field(default_factory=StaircaseConfig)
    # experiment-specific knobs
    bandwidth: float = 100.0
    delay_ms: Optional[float] = 0.0
    tone_level_db: float = 65.0
    tone_phase: str = "SPi"
    trials_per_point: int = 2000
    group_delays_ms: Tuple[float, ...] = GROUP_DELAYS_MS
    group_delay_bandwidths: Tuple[float, ...] = (1000.0, 50.0)
    coherence_bandwidths: Tuple[float, ...] = BANDWIDTHS_HZ
    lags_ms: Tuple[float, ...] = (0.0, 2.0, 4.0, 8.0)
    # keys set explicitly (config file, flags); used for experiment defaults
    explicit: frozenset = frozenset()

    def model(self) -> ModelParams:
        return ModelParams(self.periphery, self.binaural)


_TOP_KEYS = {
    "experiment": str, "n_runs": int, "master_seed": int, "workers": int,
    "output_dir": str,
    "reference_csv": _optional_str, "bandwidth": float, "delay_ms": _delay,
    "tone_level_db": float, "tone_phase": str, "trials_per_point": int,
    "group_delays_ms": _floats, "group_delay_bandwidths": _floats,
    "coherence_bandwidths": _floats, "lags_ms": _floats,
}
_STAIRCASE_SKIP = {"step_schedule"}


def _section_keys(cls, skip=()):
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        out[f.name] = int if f.type in ("int", int) else float
    return out


_SECTIONS = {
    "periphery": (PeripheryParams, _section_keys(PeripheryParams)),
    "binaural": (BinauralParams, _section_keys(BinauralParams)),
    "staircase": (StaircaseConfig, _section_keys(StaircaseConfig, _STAIRCASE_SKIP)),
}


def known_keys():
    keys = dict(_TOP_KEYS)
    for _, (_, sec) in _SECTIONS.items():
        keys.update(sec)
    return keys


def _parse_pairs(text, origin="<config>"):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key, value, lineno))
    return pairs


def build_config(pairs, origin="<config>") -> RunConfig:
    """Turn ``(key, value, lineno)`` triples into a validated :class:`RunConfig`."""
    keys = known_keys()
    top: Dict[str, object] = {}
    sections: Dict[str, Dict[str, object]] = {name: {} for name in _SECTIONS}
    for key, value, lineno in pairs:
        where = f"{origin}:{lineno}" if lineno else origin
        if key not in keys:
            raise ConfigError(f"{where}: unknown key {key!r}")
        try:
            if key in _TOP_KEYS:
                top[key] = _TOP_KEYS[key](value)
            else:
                name = next(n for n, (_, sec) in _SECTIONS.items() if key in sec)
                cls, sec = _SECTIONS[name]
                converted = sec[key](value)
                if sec[key] is float and not math.isfinite(converted):
                    raise ValueError("must be finite")
                # range check of this key alone so the error can name it
                if name != "staircase":
                    cls(**{key: converted})
                sections[name][key] = converted
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from None

    if not top.get("experiment"):
        raise ConfigError(f"{origin}: missing experiment name")
    if top["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"{origin}: unknown experiment {top['experiment']!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    for key in ("n_runs", "trials_per_point", "workers"):
        if key in top and top[key] < 1:
            raise ConfigError(f"{origin}: {key!r} must be >= 1")
    if "tone_phase" in top:
        try:
            TonePhase(top["tone_phase"])
        except ValueError:
            raise ConfigError(f"{origin}: tone_phase must be S0 or SPi") from None
    try:
        built = {name: cls(**sections[name]) for name, (cls, _) in _SECTIONS.items()}
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    explicit = frozenset(k for k, _, _ in pairs)
    return RunConfig(**top, **built, explicit=explicit)


def parse_config(text, origin="<config>", overrides=()) -> RunConfig:
    """Strict ``key = value`` parse; ``overrides`` are extra pairs applied last."""
    pairs = _parse_pairs(text, origin)
    pairs += [(k, v, 0) for k, v in overrides]
    return build_config(pairs, origin)


def config_text(cfg: RunConfig) -> str:
    """Fully resolved config in the same ``key = value`` format."""
    lines = [f"experiment = {cfg.experiment}", f"n_runs = {cfg.n_runs}",
             f"master_seed = {cfg.master_seed}", f"workers = {cfg.workers}",
             f"output_dir = {cfg.output_dir}"]
    if cfg.reference_csv:
        lines.append(f"reference_csv = {cfg.reference_csv}")
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        for key in _SECTIONS[name][1]:
            lines.append(f"{key} = {getattr(obj, key)!r}")
    for key in ("bandwidth", "tone_level_db", "tone_phase", "trials_per_point"):
        lines.append(f"{key} = {getattr(cfg, key)}")
    lines.append("delay_ms = " + ("uncorr" if cfg.delay_ms is None else repr(cfg.delay_ms)))
    for key in ("group_delays_ms", "group_delay_bandwidths", "coherence_bandwidths", "lags_ms"):
        lines.append(f"{key} = " + ",".join(repr(v) for v in getattr(cfg, key)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _seed_record(seq):
    return {"entropy": seq.entropy, "spawn_key": list(seq.spawn_key)}


def _progress(quiet):
    if quiet:
        return None

    def report(result):
        log.info("%-28s mean %6.2f dB  sem %4.2f dB", result.condition.label,
                 result.mean, result.sem)
    return report


def _run_fig3(cfg, out, manifest, quiet):
    reference = read_reference_csv(cfg.reference_csv) if cfg.reference_csv else None
    res = replicate_fig3(cfg.model(), cfg.staircase, cfg.n_runs, cfg.master_seed,
                         reference, progress=_progress(quiet), workers=cfg.workers)
    write_results_csv(os.path.join(out, "results.csv"), res.results)
    write_plot_data(os.path.join(out, "plot_fig3.csv"), fig3_plot_rows(res))
    manifest["conditions"] = [
        {"label": r.condition.label, "seed": _seed_record(condition_seed(cfg.master_seed, k))}
        for k, r in enumerate(res.results)]
    if res.rmse_db is not None:
        manifest["rmse_db"] = round(res.rmse_db, 6)
    return ["results.csv", "plot_fig3.csv"]


def _run_correlation(cfg, out, manifest, quiet):
    res = correlation_discrimination(cfg.model(), chain_pairs(), cfg.trials_per_point,
                                     cfg.master_seed)
    with open(os.path.join(out, "dprime.csv"), "w") as fh:
        fh.write("rho1,rho2,dprime\n")
        for (a, b), d in res.dprimes.items():
            fh.write(f"{a:g},{b:g},{d:.6f}\n")
    rows = [(ch[0], res.chain(ch), "chain_" + "-".join(f"{r:g}" for r in ch))
            for ch in CHAINS]
    write_plot_data(os.path.join(out, "plot_correlation.csv"), rows)
    manifest["rho_seeds"] = {f"{r:g}": _seed_record(condition_seed(cfg.master_seed, k))
                             for k, r in enumerate(sorted(res.samples))}
    return ["dprime.csv", "plot_correlation.csv"]


def _run_group_delay(cfg, out, manifest, quiet):
    binaural = cfg.binaural
    if "sigma_ipd" not in cfg.explicit:
        binaural = dataclasses.replace(binaural, sigma_ipd=GROUP_DELAY_SIGMA_IPD)
    model = ModelParams(cfg.periphery, binaural)
    results, rows, slopes, seeds = [], [], {}, {}
    for k, bw in enumerate(cfg.group_delay_bandwidths):
        seed = condition_seed(cfg.master_seed, k)
        study = group_delay_study(model, cfg.group_delays_ms, bw, cfg.n_runs,
                                  cfg.staircase, seed, progress=_progress(quiet),
                                  workers=cfg.workers)
        results += study.results
        rows += [(d, rel, f"BW{bw:g}") for d, rel in zip(study.delays_ms, study.relative)]
        slopes[f"{bw:g}"] = round(study.slope_db_per_ms, 6)
        seeds[f"{bw:g}"] = _seed_record(seed)
    write_results_csv(os.path.join(out, "results.csv"), results)
    write_plot_data(os.path.join(out, "plot_group_delay.csv"), rows)
    manifest["sigma_ipd_used"] = binaural.sigma_ipd
    manifest["slope_db_per_ms"] = slopes
    manifest["bandwidth_seeds"] = seeds
    return ["results.csv", "plot_group_delay.csv"]


def _run_trahiotis(cfg, out, manifest, quiet):
    res = trahiotis_check(cfg.model(), cfg.n_runs, config=cfg.staircase,
                          seed=cfg.master_seed, progress=_progress(quiet),
                          workers=cfg.workers)
    flat = [r for pair in res.results.values() for r in pair]
    write_results_csv(os.path.join(out, "results.csv"), flat)
    rows = [(bw, res.increase(bw), "increase_re_N0Spi") for bw in res.results]
    write_plot_data(os.path.join(out, "plot_trahiotis.csv"), rows)
    manifest["increase_db"] = {f"{bw:g}": round(res.increase(bw), 6) for bw in res.results}
    return ["results.csv", "plot_trahiotis.csv"]


def _run_coherence(cfg, out, manifest, quiet):
    lags = np.array(cfg.lags_ms) * 1e-3
    files = []
    for bw in cfg.coherence_bandwidths:
        noise = grid_condition(bw, 0.0).noise
        stim = rect_gamma(bw, noise.center_freq, lags)
        eff = effective_gamma(noise, cfg.periphery, lags)
        for kind, gamma in (("stimulus", stim), ("effective", eff)):
            name = f"coherence_{kind}_BW{bw:g}.csv"
            gamma.write_csv(os.path.join(out, name))
            files.append(name)
    return files


def _run_staircase_demo(cfg, out, manifest, quiet):
    cond = grid_condition(cfg.bandwidth, cfg.delay_ms, cfg.tone_phase)
    res = run_condition(cond, cfg.model(), cfg.staircase, cfg.n_runs, cfg.master_seed)
    write_results_csv(os.path.join(out, "results.csv"), [res])
    files = ["results.csv"]
    for k, est in enumerate(res.estimates):
        name = f"track_{k:03d}.csv"
        write_trial_log(os.path.join(out, name), est)
        files.append(name)
    manifest["track_seeds"] = [_seed_record(s) for s in track_seeds(cfg.master_seed, cfg.n_runs)]
    return files


def _run_stimulus_export(cfg, out, manifest, quiet):
    cond = grid_condition(cfg.bandwidth, cfg.delay_ms, cfg.tone_phase)
    stim = make_interval(cond.noise, cond.tone(cfg.tone_level_db),
                         np.random.default_rng(cfg.master_seed))
    name = f"{cond.label}_{cfg.tone_level_db:g}dB.wav"
    write_wav(os.path.join(out, name), stim)
    return [name]


_RUNNERS = {
    "fig3": _run_fig3,
    "correlation": _run_correlation,
    "group_delay": _run_group_delay,
    "trahiotis": _run_trahiotis,
    "coherence": _run_coherence,
    "staircase_demo": _run_staircase_demo,
    "stimulus_export": _run_stimulus_export,
}


def run(cfg: RunConfig, quiet=False) -> int:
    """Execute ``cfg.experiment``, writing every artifact into ``cfg.output_dir``."""
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    manifest = {
        "package_version": __version__,
        "experiment": cfg.experiment,
        "master_seed": cfg.master_seed,
        "seed_derivation": "numpy SeedSequence(master_seed, spawn_key=(condition_index, track_index))",
        "config": config_text(cfg).splitlines(),
    }
    files = _RUNNERS[cfg.experiment](cfg, out, manifest, quiet)
    manifest["outputs"] = files
    with open(os.path.join(out, "resolved.cfg"), "w") as fh:
        fh.write(config_text(cfg))
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _help_epilog():
    lines = ["config keys and defaults:"]
    cfg = RunConfig()
    for key in _TOP_KEYS:
        lines.append(f"  {key} = {getattr(cfg, key)}")
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        for key in _SECTIONS[name][1]:
            lines.append(f"  {key} = {getattr(obj, key)}")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ipdsim", description="IPD-fluctuation binaural detection model simulations",
        epilog=_help_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    parser.add_argument("--runs", type=int, help="tracks per condition (overrides n_runs)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    text, origin = "", "<cli>"
    if args.config:
        origin = args.config
        with open(args.config) as fh:
            text = fh.read()
    overrides = [("experiment", args.experiment)]
    for item in args.set:
        if "=" not in item:
            print(f"ipdsim: error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        overrides.append(tuple(s.strip() for s in item.split("=", 1)))
    if args.out is not None:
        overrides.append(("output_dir", args.out))
    if args.seed is not None:
        overrides.append(("master_seed", str(args.seed)))
    if args.runs is not None:
        overrides.append(("n_runs", str(args.runs)))
    try:
        cfg = parse_config(text, origin, overrides)
        return run(cfg, quiet=args.quiet)
    except Exception as exc:  # report every module error as a diagnostic
        print(f"ipdsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
