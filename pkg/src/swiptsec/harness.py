"""Experiment orchestration: config files, sweeps, Monte-Carlo trials, CSV output.

A single TOML file declares the system, geometry, sweep axis, scheme/algorithm
grid and trial count.  Within a trial every scheme sees the same channel draw
(paired comparison); the per-trial channel seed depends only on the master
seed and the trial index, never on the scheme list.  All dBm values are
converted to Watts here and nowhere else.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .baselines import RunRecord, SchemeSpec, run_scheme
from .bcd import BcdConfig
from .channel import DelayProfile, Geometry, build_channel_set
from .lowcx import LowcxConfig
from .sysmodel import SystemParams

CSV_COLUMNS = ["scheme", "algorithm", "sweep_var", "sweep_value", "trial",
               "secrecy_rate_clamped", "secrecy_rate_unclamped", "iters",
               "res_c1", "res_c2", "res_c5", "tightness", "runtime_ms", "seed"]

SWEEPABLE = ("p_tx_dbm", "p_reflect_dbm", "eh_target_dbm", "exponent_ab")


class ConfigError(ValueError):
    """Configuration file failed validation."""


def dbm_to_watt(x: float) -> float:
    return 10.0 ** (x / 10.0) * 1e-3


def watt_to_dbm(x: float) -> float:
    return 10.0 * math.log10(x / 1e-3)


@dataclass
class ExperimentConfig:
    params: SystemParams = field(default_factory=SystemParams)
    geometry: Geometry = field(default_factory=Geometry)
    profile: str = "etu"
    sample_rate: float = 30.72e6
    sweep_var: str = "p_tx_dbm"
    sweep_values: tuple = (34.0,)
    runs: tuple = (SchemeSpec("active", "bcd"),)
    trials: int = 100
    seed: int = 0
    out_dir: str | None = None
    bcd: BcdConfig = field(default_factory=BcdConfig)
    lowcx: LowcxConfig = field(default_factory=LowcxConfig)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _system_from_doc(doc: dict) -> SystemParams:
    sec = dict(doc.get("system", {}))
    kw = {}
    for name in ("n_sub", "n_tx", "n_rx", "n_eve", "n_elem", "n_streams"):
        if name in sec:
            kw[name] = int(sec.pop(name))
    for name, key in (("noise_irs", "noise_irs_dbm"), ("noise_ant", "noise_ant_dbm"),
                      ("noise_sp", "noise_sp_dbm"), ("noise_eve", "noise_eve_dbm"),
                      ("p_tx", "p_tx_dbm"), ("p_reflect", "p_reflect_dbm")):
        if key in sec:
            kw[name] = dbm_to_watt(float(sec.pop(key)))
    if "eh_target_w" in sec and "eh_target_dbm" in sec:
        raise ConfigError("system: give eh_target_dbm or eh_target_w, not both")
    if "eh_target_dbm" in sec:
        kw["eh_target"] = dbm_to_watt(float(sec.pop("eh_target_dbm")))
    if "eh_target_w" in sec:
        kw["eh_target"] = float(sec.pop("eh_target_w"))
    if "eh_xi" in sec:
        # Table value is per mW; stored per Watt
        kw["eh_xi"] = float(sec.pop("eh_xi")) * 1e3
    if "eh_nu" in sec:
        kw["eh_nu"] = float(sec.pop("eh_nu"))
    if "eh_sat_mw" in sec:
        kw["eh_sat"] = float(sec.pop("eh_sat_mw")) * 1e-3
    if "eh_act_mw" in sec:
        kw["eh_act"] = float(sec.pop("eh_act_mw")) * 1e-3
    if sec:
        raise ConfigError(f"system: unknown keys {sorted(sec)}")
    try:
        return SystemParams(**kw)
    except ValueError as err:
        raise ConfigError(f"system: {err}") from None


def _geometry_from_doc(doc: dict) -> Geometry:
    sec = dict(doc.get("geometry", {}))
    kw = {}
    for name in ("alice", "irs", "bob", "eve"):
        if name in sec:
            val = sec.pop(name)
            _require(isinstance(val, (list, tuple)) and len(val) == 2,
                     f"geometry.{name} must be a 2-element position")
            kw[name] = (float(val[0]), float(val[1]))
    for name in ("exponent_ab", "exponent_ai", "exponent_ib", "exponent_ae", "exponent_ie",
                 "ref_distance"):
        if name in sec:
            kw[name] = float(sec.pop(name))
    if "carrier_mhz" in sec:
        kw["wavelength"] = 299792458.0 / (float(sec.pop("carrier_mhz")) * 1e6)
    if sec:
        raise ConfigError(f"geometry: unknown keys {sorted(sec)}")
    try:
        return Geometry(**kw)
    except ValueError as err:
        raise ConfigError(f"geometry: {err}") from None


def load_config(path) -> ExperimentConfig:
    """Parse and validate the experiment file; missing keys take the defaults."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: invalid TOML: {err}") from None

    params = _system_from_doc(doc)
    geometry = _geometry_from_doc(doc)

    chan = dict(doc.get("channel", {}))
    profile = str(chan.pop("profile", "etu"))
    _require(profile in ("etu", "single"), "channel.profile must be 'etu' or 'single'")
    sample_rate = float(chan.pop("sample_rate_mhz", 30.72)) * 1e6
    if chan:
        raise ConfigError(f"channel: unknown keys {sorted(chan)}")

    sweep = dict(doc.get("sweep", {}))
    sweep_var = str(sweep.pop("variable", "p_tx_dbm"))
    _require(sweep_var in SWEEPABLE, f"sweep.variable must be one of {SWEEPABLE}")
    if "values" in sweep:
        values = tuple(float(v) for v in sweep.pop("values"))
    elif {"start", "stop", "step"} <= sweep.keys():
        start, stop, step = (float(sweep.pop(k)) for k in ("start", "stop", "step"))
        _require(step > 0, "sweep.step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = tuple(start + i * step for i in range(count))
    else:
        default = {"p_tx_dbm": watt_to_dbm(params.p_tx),
                   "p_reflect_dbm": watt_to_dbm(params.p_reflect),
                   "eh_target_dbm": watt_to_dbm(params.eh_target) if params.eh_target > 0 else 0.0,
                   "exponent_ab": geometry.exponent_ab}[sweep_var]
        values = (default,)
    _require(len(values) >= 1, "sweep must contain at least one point")
    if sweep:
        raise ConfigError(f"sweep: unknown keys {sorted(sweep)}")

    run_rows = doc.get("runs", [{"scheme": "active", "algorithm": "bcd"}])
    runs = []
    for row in run_rows:
        try:
            runs.append(SchemeSpec(str(row.get("scheme", "active")),
                                   str(row.get("algorithm", "bcd"))))
        except ValueError as err:
            raise ConfigError(f"runs: {err}") from None
    _require(len(runs) >= 1, "at least one run row required")

    bcd_sec = dict(doc.get("bcd", {}))
    abl = dict(doc.get("ablation", {}))
    bcd_kw = {}
    for name in ("tol_outer", "max_outer", "tol_ia", "max_ia", "eps_bisect",
                 "tightness_tol", "solver_tol", "init_power_frac", "init_split",
                 "init_align_iters", "init_eh_iters"):
        if name in bcd_sec:
            val = bcd_sec.pop(name)
            bcd_kw[name] = int(val) if name in ("max_outer", "max_ia", "init_align_iters",
                                                "init_eh_iters") else float(val)
    if bcd_sec:
        raise ConfigError(f"bcd: unknown keys {sorted(bcd_sec)}")
    if abl.pop("no_an", False):
        bcd_kw["an_enabled"] = False
    if "fixed_ps" in abl:
        bcd_kw["fixed_split"] = float(abl.pop("fixed_ps"))
    if abl.pop("fixed_irs", False):
        bcd_kw["fixed_reflect"] = True
    if abl:
        raise ConfigError(f"ablation: unknown keys {sorted(abl)}")
    bcd_cfg = BcdConfig(**bcd_kw)

    low_sec = dict(doc.get("lowcx", {}))
    low_kw = {}
    for name in ("tol_ia", "max_ia", "solver_tol", "working_split", "kkt_tol"):
        if name in low_sec:
            val = low_sec.pop(name)
            low_kw[name] = int(val) if name == "max_ia" else float(val)
    if low_sec:
        raise ConfigError(f"lowcx: unknown keys {sorted(low_sec)}")
    lowcx_cfg = LowcxConfig(**low_kw)

    trials = int(doc.get("trials", 100))
    _require(trials >= 1, "trials must be >= 1")
    seed = int(doc.get("seed", 0))
    out_dir = doc.get("out_dir")

    known_top = {"system", "geometry", "channel", "sweep", "runs", "bcd", "lowcx",
                 "ablation", "trials", "seed", "out_dir"}
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    return ExperimentConfig(params=params, geometry=geometry, profile=profile,
                            sample_rate=sample_rate, sweep_var=sweep_var,
                            sweep_values=values, runs=tuple(runs), trials=trials,
                            seed=seed, out_dir=out_dir, bcd=bcd_cfg, lowcx=lowcx_cfg)


def apply_sweep(params: SystemParams, geometry: Geometry, var: str, value: float):
    if var == "p_tx_dbm":
        return replace(params, p_tx=dbm_to_watt(value)), geometry
    if var == "p_reflect_dbm":
        return replace(params, p_reflect=dbm_to_watt(value)), geometry
    if var == "eh_target_dbm":
        return replace(params, eh_target=dbm_to_watt(value)), geometry
    if var == "exponent_ab":
        return params, replace(geometry, exponent_ab=value)
    raise ConfigError(f"unknown sweep variable {var!r}")


def _channel_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, trial]).generate_state(1)[0])


def _init_seed(master: int, trial: int, spec: SchemeSpec) -> int:
    tag = zlib.crc32(spec.label.encode())
    return int(np.random.SeedSequence([master, trial, tag]).generate_state(1)[0])


def _failed_record(spec, sweep_var, sweep_value, trial, seed, status) -> RunRecord:
    nan = float("nan")
    return RunRecord(scheme=spec.scheme, algorithm=spec.algorithm, sweep_var=sweep_var,
                     sweep_value=sweep_value, trial=trial, secrecy_clamped=nan,
                     secrecy_unclamped=nan, optimized_objective=nan, iterations=0,
                     res_c1=nan, res_c2=nan, res_c5=nan, tightness=nan, runtime_ms=0.0,
                     seed=seed, feasible=False, status=status)


def _run_task(args):
    cfg, trial, sweep_value, spec = args
    params, geometry = apply_sweep(cfg.params, cfg.geometry, cfg.sweep_var, sweep_value)
    ch_seed = _channel_seed(cfg.seed, trial)
    init_seed = _init_seed(cfg.seed, trial, spec)
    profile = DelayProfile.etu() if cfg.profile == "etu" else DelayProfile.single_tap()
    try:
        ch = build_channel_set(geometry, profile, params, seed=ch_seed,
                               sample_rate=cfg.sample_rate)
        record = run_scheme(spec, ch, params, cfg.bcd, cfg.lowcx, seed=init_seed,
                            sweep_var=cfg.sweep_var, sweep_value=sweep_value, trial=trial)
    except KeyboardInterrupt:
        raise
    except Exception as err:  # individual failures become failed rows
        return _failed_record(spec, cfg.sweep_var, sweep_value, trial, init_seed,
                              status=f"failed: {type(err).__name__}: {err}")
    return record


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> list[RunRecord]:
    """Execute the full grid; failures yield failed rows, never aborts."""
    tasks = [(cfg, trial, sweep_value, spec)
             for trial in range(cfg.trials)
             for sweep_value in cfg.sweep_values
             for spec in cfg.runs]
    records = []
    if jobs <= 1:
        for i, task in enumerate(tasks):
            records.append(_run_task(task))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, rec in enumerate(pool.map(_run_task, tasks, chunksize=1)):
                records.append(rec)
                if progress:
                    progress(i + 1, len(tasks))
    records.sort(key=lambda r: (r.sweep_var, r.sweep_value, r.scheme, r.algorithm, r.trial))
    return records


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(records, path) -> None:
    """Fixed-schema records file (columns documented in the README)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.scheme, r.algorithm, r.sweep_var, _fmt(float(r.sweep_value)),
                             r.trial, _fmt(float(r.secrecy_clamped)),
                             _fmt(float(r.secrecy_unclamped)), r.iterations,
                             _fmt(float(r.res_c1)), _fmt(float(r.res_c2)),
                             _fmt(float(r.res_c5)), _fmt(float(r.tightness)),
                             _fmt(float(r.runtime_ms)), r.seed])


def read_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rec = dict(row)
            for key in ("sweep_value", "secrecy_rate_clamped", "secrecy_rate_unclamped",
                        "res_c1", "res_c2", "res_c5", "tightness", "runtime_ms"):
                rec[key] = float(row[key])
            rec["trial"] = int(row["trial"])
            rec["iters"] = int(row["iters"])
            rec["seed"] = int(row["seed"])
            out.append(rec)
    return out


def _as_rows(records) -> list[dict]:
    if isinstance(records, (str, Path)):
        return read_csv(records)
    rows = []
    for r in records:
        rows.append({"scheme": r.scheme, "algorithm": r.algorithm, "sweep_var": r.sweep_var,
                     "sweep_value": float(r.sweep_value),
                     "secrecy_rate_clamped": float(r.secrecy_clamped),
                     "secrecy_rate_unclamped": float(r.secrecy_unclamped)})
    return rows


def summarize(records) -> list[dict]:
    """Per (scheme, algorithm, sweep point): mean secrecy rate and mean +- 95% CI.

    Accepts a record list or a records CSV path; failed rows (NaN) are dropped
    and counted separately, so the summary is reproducible from the file alone.
    """
    rows = _as_rows(records)
    groups: dict[tuple, list] = {}
    failed: dict[tuple, int] = {}
    for row in rows:
        key = (row["scheme"], row["algorithm"], row["sweep_var"], row["sweep_value"])
        val = row["secrecy_rate_clamped"]
        if math.isnan(val):
            failed[key] = failed.get(key, 0) + 1
            groups.setdefault(key, [])
        else:
            groups.setdefault(key, []).append(val)
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        n = vals.size
        mean = float(vals.mean()) if n else float("nan")
        if n >= 2:
            ci = 1.96 * float(vals.std(ddof=1)) / math.sqrt(n)
        else:
            ci = float("nan") if n == 0 else 0.0
        out.append({"scheme": key[0], "algorithm": key[1], "sweep_var": key[2],
                    "sweep_value": key[3], "n": n, "failed": failed.get(key, 0),
                    "mean_secrecy": mean, "ci95": ci})
    return out


def write_summary_csv(summary, path) -> None:
    cols = ["scheme", "algorithm", "sweep_var", "sweep_value", "n", "failed",
            "mean_secrecy", "ci95"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in summary:
            writer.writerow([row["scheme"], row["algorithm"], row["sweep_var"],
                             _fmt(float(row["sweep_value"])), row["n"], row["failed"],
                             _fmt(float(row["mean_secrecy"])), _fmt(float(row["ci95"]))])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Monte-Carlo secrecy-rate experiments for the surface-assisted "
                    "SWIPT testbed; writes records.csv and summary.csv")
    parser.add_argument("--config", required=True, help="experiment TOML file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--trials", type=int, default=None, help="override trial count")
    parser.add_argument("--scheme", action="append", default=None,
                        help="restrict to these schemes (repeatable)")
    parser.add_argument("--algorithm", action="append", default=None,
                        help="restrict to these algorithms (repeatable)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--traces", action="store_true",
                        help="also dump per-iteration optimizer traces")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        if args.trials < 1:
            print("config error: trials must be >= 1", file=sys.stderr)
            return 2
        cfg = replace(cfg, trials=args.trials)
    runs = cfg.runs
    if args.scheme:
        runs = tuple(r for r in runs if r.scheme in set(args.scheme))
    if args.algorithm:
        runs = tuple(r for r in runs if r.algorithm in set(args.algorithm))
    if not runs:
        print("config error: no runs left after --scheme/--algorithm filters",
              file=sys.stderr)
        return 2
    cfg = replace(cfg, runs=runs)

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"cannot create output directory: {err}", file=sys.stderr)
        return 1

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} runs", end="", file=sys.stderr, flush=True)

    try:
        records = run_experiment(cfg, jobs=max(args.jobs, 1), progress=progress)
    except KeyboardInterrupt:
        print("\ninterrupted", file=sys.stderr)
        return 1
    if not args.quiet:
        print(file=sys.stderr)

    write_csv(records, out_dir / "records.csv")
    write_summary_csv(summarize(records), out_dir / "summary.csv")
    if args.traces:
        _dump_traces(cfg, out_dir / "traces")
    failed = sum(1 for r in records if math.isnan(r.secrecy_clamped))
    if not args.quiet:
        print(f"wrote {len(records)} records ({failed} failed) to {out_dir}",
              file=sys.stderr)
    return 0


def _dump_traces(cfg: ExperimentConfig, trace_dir: Path) -> None:
    """Re-run the grid's BCD-family cells and save per-iteration traces."""
    from .bcd import run_bcd
    from .baselines import passive_irs_bcd_step, scheme_params

    trace_dir.mkdir(parents=True, exist_ok=True)
    profile = DelayProfile.etu() if cfg.profile == "etu" else DelayProfile.single_tap()
    for trial in range(cfg.trials):
        for sweep_value in cfg.sweep_values:
            params, geometry = apply_sweep(cfg.params, cfg.geometry, cfg.sweep_var,
                                           sweep_value)
            ch = build_channel_set(geometry, profile, params,
                                   seed=_channel_seed(cfg.seed, trial),
                                   sample_rate=cfg.sample_rate)
            for spec in cfg.runs:
                if spec.algorithm not in ("bcd", "rm"):
                    continue
                run_params = scheme_params(spec, params)
                opt_ch = ch.zero_eve() if spec.algorithm == "rm" else ch
                try:
                    res = run_bcd(opt_ch, run_params, cfg.bcd,
                                  _init_seed(cfg.seed, trial, spec),
                                  irs_mode=spec.scheme,
                                  irs_update_fn=passive_irs_bcd_step
                                  if spec.scheme == "passive" else None)
                except Exception:
                    continue
                name = (f"{spec.scheme}_{spec.algorithm}_{cfg.sweep_var}="
                        f"{sweep_value:g}_trial{trial}.csv")
                res.trace.to_csv(trace_dir / name)


if __name__ == "__main__":
    sys.exit(main())
