"""Command-line pipeline: simulate, analyze, compare-stats, interp, per.

Every command writes CSV or MNCT outputs plus a JSON sidecar recording the
inputs, the configuration hash and the seed, so a run can be replayed.
Exit codes: 0 success, 2 validation error, 3 format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, chstats, dpsinterp, mnct, synth
from .errors import FormatError, NumericalError, ValidationError
from .linksim import PhyConfig, load_phy_config
from .linksim import sim as linksim
from .params import PRESETS as SCATTERER_PRESETS
from .scenario import fixture_path, load_scenario

log = logging.getLogger("mnvchan")

EXIT_OK, EXIT_VALIDATION, EXIT_FORMAT, EXIT_NUMERICAL = 0, 2, 3, 4
STAT_QUANTITIES = ("path_loss_db", "rms_delay_ns", "rms_doppler_hz")


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def config_hash(config: dict) -> str:
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_sidecar(out_path, command: str, config: dict, seed=None, inputs=()) -> Path:
    """Write ``<out>.json`` describing how ``out`` was produced."""
    side = Path(str(out_path) + ".json")
    doc = {
        "command": command,
        "version": __version__,
        "config": _jsonable(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "inputs": {str(p): _file_hash(p) for p in inputs},
    }
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return side


def resolve_scenario_path(ref) -> Path:
    """A scenario path, or the name of a bundled fixture."""
    p = Path(ref)
    if p.exists():
        return p
    fx = fixture_path(str(ref))
    if fx.exists():
        return fx
    raise ValidationError(f"no scenario file or fixture named {ref!r}")


def parse_links(text, nodes) -> list:
    """``"1-3,2-3"`` to ``[(1, 3), (2, 3)]``; ``None`` means every node pair."""
    if not text:
        return list(itertools.combinations(sorted(nodes), 2))
    out = []
    for part in str(text).split(","):
        try:
            a, b = (int(v) for v in part.strip().split("-"))
        except ValueError as exc:
            raise ValidationError(f"bad link {part!r}, expected a-b") from exc
        out.append((a, b))
    return out


def parse_link(text):
    return parse_links(text, ())[0] if text else None


# ---------------------------------------------------------------------------
# Commands (pure functions of files, flags and seed)
# ---------------------------------------------------------------------------


def cmd_simulate(scenario, out, duration: float, seeds=(0,), links=None, preset: str = "paper_table2",
                 scatterer_preset: str | None = None, t0: float | None = None,
                 noise_floor_db: float | None = None) -> list:
    """Synthesize one MNCT file per seed and return their paths.

    ``out`` is a file path for a single seed, otherwise a directory that
    receives ``<scenario>_seed<k>.mnct``.
    """
    if preset not in synth.PRESETS:
        raise ValidationError(f"unknown sounder preset {preset!r}")
    path = resolve_scenario_path(scenario)
    scn = load_scenario(path)
    if scatterer_preset is not None:
        if scatterer_preset not in SCATTERER_PRESETS:
            raise ValidationError(f"unknown scatterer preset {scatterer_preset!r}")
        scn = dataclasses.replace(scn, scatterer_params=dict(SCATTERER_PRESETS[scatterer_preset]))
    config = synth.PRESETS[preset]
    if noise_floor_db is not None:
        config = dataclasses.replace(config, noise_floor_db=noise_floor_db)
    lks = parse_links(links, scn.nodes) if not isinstance(links, list) else links
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("no seeds given")
    out = Path(out)
    single = len(seeds) == 1 and out.suffix == ".mnct"
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in seeds:
        tensor = synth.synthesize(scn, lks, duration, config, seed=seed, t0=t0)
        target = out if single else out / f"{scn.name or path.stem}_seed{seed}.mnct"
        mnct.write_tensor(target, tensor)
        cfg = {"scenario": str(path), "links": lks, "duration": duration, "t0": tensor.meta["t0"],
               "sounder": config, "scatterer_preset": scatterer_preset}
        write_sidecar(target, "simulate", cfg, seed, inputs=[path])
        log.info("wrote %s (T=%d)", target, tensor.T)
        written.append(target)
    return written


def cmd_analyze(tensor_path, out, link=None, M: int | None = None, t0: float = 0.0):
    """Region statistics of one link to CSV; returns the stats."""
    tensor = mnct.read_tensor(tensor_path)
    tensor.meta.setdefault("t0", t0)
    lk = tuple(link) if link is not None else tuple(tensor.links[0])
    config = chstats.StatsConfig.for_tensor(tensor, M)
    stats = chstats.analyze(tensor, lk, config)
    chstats.write_stats_csv(out, stats)
    write_sidecar(out, "analyze", {"link": lk, "stats": config}, None, inputs=[tensor_path])
    return stats


def offset_cdf(offsets):
    """Sorted finite offsets and their empirical CDF values."""
    x = np.sort(np.asarray(offsets, dtype=float))
    x = x[np.isfinite(x)]
    return x, np.arange(1, len(x) + 1) / max(len(x), 1)


def compare_stats(ref: dict, sims: list) -> dict:
    """Per quantity: ``|mean over sims - ref|`` per region and the 80th-percentile offset."""
    if not sims:
        raise ValidationError("no simulated statistics given")
    k_ref = np.asarray(ref["k"])
    for i, s in enumerate(sims):
        if len(s["k"]) != len(k_ref) or np.any(np.asarray(s["k"]) != k_ref):
            raise ValidationError(f"simulated file {i} covers regions {_krange(s['k'])}, reference {_krange(k_ref)}")
    out = {}
    for q in STAT_QUANTITIES:
        stack = np.stack([np.asarray(s[q], dtype=float) for s in sims])
        with np.errstate(invalid="ignore"):
            mean = stack.mean(axis=0)
        off = np.abs(mean - np.asarray(ref[q], dtype=float))
        x, F = offset_cdf(off)
        p80 = float(np.percentile(x, 80)) if len(x) else float("nan")
        out[q] = {"offsets": off, "x": x, "cdf": F, "p80": p80}
    return out


def _krange(k):
    k = np.asarray(k)
    return f"[{int(k.min())}, {int(k.max())}]" if k.size else "[]"


def cmd_compare_stats(ref_csv, sim_csvs, out) -> dict:
    ref = chstats.read_stats_csv(ref_csv)
    sims = [chstats.read_stats_csv(p) for p in sim_csvs]
    res = compare_stats(ref, sims)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "offset", "cdf"])
        for q in STAT_QUANTITIES:
            for x, F in zip(res[q]["x"], res[q]["cdf"]):
                w.writerow([q, repr(float(x)), repr(float(F))])
    write_sidecar(out, "compare-stats", {"p80": {q: res[q]["p80"] for q in STAT_QUANTITIES}}, None,
                  inputs=[ref_csv, *sim_csvs])
    return res


def cmd_interp(tensor_path, out, preset: str = "desk", links=None):
    """Resample a sounding tensor onto an emulation grid preset."""
    tensor = mnct.read_tensor(tensor_path)
    plan = dpsinterp.preset_plan(preset)
    basis = dpsinterp.preset_basis(preset, tensor.f_c, plan)
    result = dpsinterp.interpolate_tensor(tensor, plan, basis, links=links)
    mnct.write_tensor(out, result)
    cfg = {"preset": preset, "plan": plan.to_dict(), "D_t": basis.D_t, "D_f": basis.D_f,
           "band": dataclasses.asdict(basis.band)}
    write_sidecar(out, "interp", cfg, None, inputs=[tensor_path])
    return result


def cmd_per(tensor_paths, out, modulation="QPSK", rate="1/2", seed: int = 0, link=None, ref_csv=None,
            snr_db=None, tx_power_dbm: float = 0.0, phy_config=None):
    """PER per window for one tensor, or the min/mean/max envelope over several.

    Returns ``(series, time_in_envelope_percent or None)``.
    """
    tensor_paths = list(tensor_paths)
    if not tensor_paths:
        raise ValidationError("no tensors given")
    if phy_config is not None:
        phy = load_phy_config(phy_config)
    else:
        phy = PhyConfig(modulation=modulation, rate=rate, snr_db=snr_db, tx_power_dbm=tx_power_dbm)
    runs = [linksim.run_link(mnct.read_tensor(p), phy, seed + i, link) for i, p in enumerate(tensor_paths)]
    series = runs[0] if len(runs) == 1 else linksim.envelope(runs)
    linksim.write_per_csv(out, series)
    pct = None
    if ref_csv is not None:
        if series.per_min is None:
            raise ValidationError("time-in-envelope needs an ensemble of at least two tensors")
        ref = linksim.read_per_csv(ref_csv)
        if ref.K != series.K:
            raise ValidationError(f"reference has {ref.K} windows, ensemble {series.K}")
        pct = linksim.time_in_envelope(ref.per, series.per_min, series.per_max)
    cfg = {"phy": phy, "link": link, "time_in_envelope_percent": pct}
    inputs = tensor_paths + ([ref_csv] if ref_csv is not None else [])
    write_sidecar(out, "per", cfg, seed, inputs=inputs)
    return series, pct


# ---------------------------------------------------------------------------
# argparse front end
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnvchan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize channel tensors from a scenario")
    s.add_argument("scenario", help="scenario YAML or bundled fixture name")
    s.add_argument("--duration", type=float, required=True, help="seconds")
    s.add_argument("--links", help="comma-separated a-b pairs (default: all)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=1, help="ensemble size: seeds seed .. seed+N-1")
    s.add_argument("--preset", default="paper_table2", help="sounder preset")
    s.add_argument("--scatterer-preset", default=None, help="override the scenario's scatterer preset")
    s.add_argument("--t0", type=float, default=None)
    s.add_argument("--noise-floor-db", type=float, default=None)
    s.add_argument("--out", required=True, help=".mnct file (one seed) or output directory")

    a = sub.add_parser("analyze", help="stationarity-region statistics to CSV")
    a.add_argument("tensor")
    a.add_argument("--link")
    a.add_argument("--M", type=int, default=None, help="snapshots per region (default T_stat / T_sys)")
    a.add_argument("--out", required=True)

    c = sub.add_parser("compare-stats", help="offset CDFs of mean simulated vs reference statistics")
    c.add_argument("reference")
    c.add_argument("simulated", nargs="+")
    c.add_argument("--out", required=True)

    i = sub.add_parser("interp", help="DPS interpolation onto an emulation grid")
    i.add_argument("tensor")
    i.add_argument("--preset", default="desk", choices=sorted(dpsinterp.GRID_PRESETS))
    i.add_argument("--links")
    i.add_argument("--out", required=True)

    r = sub.add_parser("per", help="packet error rate per window")
    r.add_argument("tensors", nargs="+")
    r.add_argument("--modulation", default="QPSK", choices=["QPSK", "64QAM"])
    r.add_argument("--rate", default="1/2", choices=["1/2", "3/4"])
    r.add_argument("--link")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--snr-db", type=float, default=None)
    r.add_argument("--tx-power-dbm", type=float, default=0.0)
    r.add_argument("--phy-config", help="YAML PhyConfig overrides (replaces the flags above)")
    r.add_argument("--reference", help="PER CSV to score against the ensemble envelope")
    r.add_argument("--out", required=True)
    return p


def run(args) -> int:
    if args.command == "simulate":
        paths = cmd_simulate(args.scenario, args.out, args.duration, range(args.seed, args.seed + args.seeds),
                             args.links, args.preset, args.scatterer_preset, args.t0, args.noise_floor_db)
        for path in paths:
            print(path)
    elif args.command == "analyze":
        stats = cmd_analyze(args.tensor, args.out, parse_link(args.link), args.M)
        print(f"{stats.K} regions -> {args.out}")
    elif args.command == "compare-stats":
        res = cmd_compare_stats(args.reference, args.simulated, args.out)
        for q in STAT_QUANTITIES:
            print(f"{q}: 80th percentile offset {res[q]['p80']:.6g}")
    elif args.command == "interp":
        links = parse_links(args.links, ()) if args.links else None
        res = cmd_interp(args.tensor, args.out, args.preset, links)
        print(f"T={res.T} Q={res.Q} -> {args.out}")
    elif args.command == "per":
        series, pct = cmd_per(args.tensors, args.out, args.modulation, args.rate, args.seed,
                              parse_link(args.link), args.reference, args.snr_db, args.tx_power_dbm,
                              args.phy_config)
        print(f"{series.K} windows, mean PER {float(np.mean(series.per)):.4g}")
        if pct is not None:
            print(f"time in envelope: {pct:.1f}%")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"cannot read or write: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
