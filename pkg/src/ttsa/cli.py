"""Command line driver.

Subcommands: simulate (run and record trajectories), diagnose (judge
recorded runs), chain (search for a concatenation of solution arcs),
print-defaults (emit the built-in configuration).

Exit codes: 0 success, 1 failed verdict or failed search, 2 bad
configuration, 3 missing artifact.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import functools
import hashlib
import io
import json
import os
import sys
import zipfile

import numpy as np
import pandas as pd

from . import __version__
from .chains import ChainSearchError, chain_to_json, find_chain
from .config import Config, ConfigError, DEFAULT_CONFIG, load_config
from .diagnostics import (
    boundary_layer_rescaled_drift,
    diagnostics_report,
    tracking_error_trace,
    write_report_json,
    write_trace_csv,
)
from .hybrid_time import HybridSequence, HybridSequenceDomain
from .registry import Instance
from .simulate import JumpRecord, SimRun, run
from .systems import Box

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_FAIL = 1
_EXIT_CONFIG = 2
_EXIT_MISSING = 3

_FLOAT_FMT = "%.17g"


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _traj_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"traj_seed{seed}.csv")


def _states_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"states_seed{seed}.npz")


def _convergence_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"convergence_seed{seed}.csv")


def _report_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"report_seed{seed}.json")


def _arrivals(sim: SimRun) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Arrival-order record minus the initial point.

    Returns (ks, js, is_flow, states); is_flow marks points reached by a
    flow step, the rest were reached by jumps.
    """
    dom = sim.sequence.domain
    idx = list(dom.indices())[1:]
    ks = np.array([k for k, _ in idx], dtype=int)
    js = np.array([j for _, j in idx], dtype=int)
    is_flow = np.array([dom.contains(k - 1, j) for k, j in idx], dtype=bool)
    states = np.stack([sim.sequence.values[kj] for kj in idx])
    return ks, js, is_flow, states


def _write_trajectory_csv(sim: SimRun, path: str) -> None:
    ks, js, is_flow, states = _arrivals(sim)
    dim = states.shape[1]
    ns, nf = sim.dims
    cols: dict[str, object] = {
        "k": ks,
        "j": js,
        "phase": np.where(is_flow, "flow", "jump"),
    }
    for c in range(dim):
        cols[f"x_{c}"] = states[:, c]
    fs = np.full((len(ks), ns), np.nan)
    ff = np.full((len(ks), nf), np.nan)
    fs[is_flow] = sim.fhat_slow[ks[is_flow] - 1]
    ff[is_flow] = sim.fhat_fast[ks[is_flow] - 1]
    for c in range(ns):
        cols[f"fhat_s_{c}"] = fs[:, c]
    for c in range(nf):
        cols[f"fhat_f_{c}"] = ff[:, c]
    frame = pd.DataFrame(cols)
    frame.to_csv(path, index=False, float_format=_FLOAT_FMT, na_rep="",
                 lineterminator="\n")


def _savez_deterministic(path: str, **arrays) -> None:
    """npz with pinned zip timestamps, so identical arrays give
    identical bytes (np.savez stamps the current time into the
    container).
    """
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _write_states_npz(sim: SimRun, path: str) -> None:
    ks, js, is_flow, states = _arrivals(sim)
    dom = sim.sequence.domain
    x0 = sim.sequence.values[(0, 0)]
    jumps = sim.jump_log
    dim = states.shape[1]
    _savez_deterministic(
        path,
        ks=ks, js=js, states=states, x0=x0,
        pre_flow=sim.pre_flow,
        fhat_s=sim.fhat_slow, fhat_f=sim.fhat_fast,
        f_s=sim.f_slow, f_f=sim.f_fast,
        h_s=sim.h_slow, h_f=sim.h_fast,
        jump_steps=np.array([r.step for r in jumps], dtype=int),
        jump_levels=np.array([r.level_before for r in jumps], dtype=int),
        jump_before=(np.stack([r.state_before for r in jumps])
                     if jumps else np.zeros((0, dim))),
        jump_after=(np.stack([r.state_after for r in jumps])
                    if jumps else np.zeros((0, dim))),
        domain_jump_indices=np.array(dom.jump_indices, dtype=int),
        k_end=dom.k_end,
        seed=sim.seed,
        mode=np.array(sim.mode),
    )


def _load_sim(cfg: Config, instance: Instance, seed: int) -> SimRun:
    path = _states_path(cfg.out_dir, seed)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with np.load(path, allow_pickle=False) as data:
        dom = HybridSequenceDomain(tuple(int(k) for k in data["domain_jump_indices"]),
                                   int(data["k_end"]))
        values = {(0, 0): data["x0"]}
        states = data["states"]
        for i, (k, j) in enumerate(zip(data["ks"], data["js"])):
            values[(int(k), int(j))] = states[i]
        jump_log = [
            JumpRecord(step=int(s), level_before=int(l),
                       state_before=data["jump_before"][i],
                       state_after=data["jump_after"][i])
            for i, (s, l) in enumerate(zip(data["jump_steps"], data["jump_levels"]))
        ]
        return SimRun(
            system=instance.system,
            schedule=cfg.build_schedule(),
            sequence=HybridSequence(dom, values),
            pre_flow=data["pre_flow"],
            fhat_slow=data["fhat_s"], fhat_fast=data["fhat_f"],
            f_slow=data["f_s"], f_fast=data["f_f"],
            h_slow=data["h_s"], h_fast=data["h_f"],
            jump_log=jump_log,
            seed=int(data["seed"]),
            mode=str(data["mode"][()]),
        )


def _metric_columns(instance: Instance, states: np.ndarray) -> dict[str, np.ndarray]:
    """dist_to_M and lambda_tracking for a block of full states.

    Quadratic objectives get a closed-form vectorized path; anything
    else falls back to the per-state metric callables.
    """
    obj = instance.objective
    if obj is not None and obj.anchors is not None and instance.params is not None:
        n = obj.dim
        center = np.mean(obj.anchors, axis=0)
        q = states[:, :n]
        p = states[:, n:2 * n]
        tau = states[:, 2 * n]
        xi = states[:, 2 * n + 1:]
        dq = np.linalg.norm(q - center, axis=1)
        dp = np.linalg.norm(p, axis=1)
        band = 2.0 * instance.params.dwell
        dtau = np.maximum(0.0, np.maximum(tau - band, -tau))
        grads = np.mean(q[:, None, :] - obj.anchors[None, :, :], axis=1)
        return {
            "dist_to_M": np.sqrt(dq ** 2 + dp ** 2 + dtau ** 2),
            "lambda_tracking": np.linalg.norm(xi - grads, axis=1),
        }
    out: dict[str, np.ndarray] = {}
    for name in ("dist_to_M", "lambda_tracking"):
        fn = instance.metrics.get(name)
        if fn is None:
            out[name] = np.full(states.shape[0], np.nan)
        else:
            out[name] = np.array([fn(x) for x in states])
    return out


def _write_convergence_csv(sim: SimRun, instance: Instance, path: str) -> None:
    ks, _, is_flow, states = _arrivals(sim)
    flow_states = states[is_flow]
    cols = _metric_columns(instance, flow_states)
    frame = pd.DataFrame({"k": ks[is_flow], **cols})
    frame.to_csv(path, index=False, float_format=_FLOAT_FMT, na_rep="nan",
                 lineterminator="\n")


def _write_manifest(cfg: Config, out_dir: str) -> str:
    """Hash every artifact in the output directory into manifest.json.

    The timestamp field is informational only; it takes no part in the
    recorded hashes, so reruns differ in that one field at most.
    """
    hashes = {}
    for name in sorted(os.listdir(out_dir)):
        if name == "manifest.json":
            continue
        full = os.path.join(out_dir, name)
        if not os.path.isfile(full):
            continue
        digest = hashlib.sha256()
        with open(full, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                digest.update(block)
        hashes[name] = digest.hexdigest()
    manifest = {
        "code_version": __version__,
        "config": cfg.echo(),
        "outputs": hashes,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _simulate_seed(cfg: Config, seed: int) -> tuple[int, int, float | None]:
    """Run one seed and write its artifacts; returns a summary tuple.

    Self-contained so a worker process can rebuild the instance from the
    picklable config; every output path is unique to the seed.
    """
    instance = cfg.build_instance()
    schedule = cfg.build_schedule()
    sim = run(instance.system, schedule, instance.x0, cfg.num_flow_steps,
              slow_oracle=instance.slow_oracle,
              fast_oracle=instance.fast_oracle,
              seed=seed, mode=cfg.mode)
    _write_trajectory_csv(sim, _traj_path(cfg.out_dir, seed))
    _write_states_npz(sim, _states_path(cfg.out_dir, seed))
    _write_convergence_csv(sim, instance, _convergence_path(cfg.out_dir, seed))
    dist_fn = instance.metrics.get("dist_to_M")
    final_dist = float(dist_fn(sim.final_state())) if dist_fn else None
    return len(sim.jump_log), sim.num_flow_steps, final_dist


def cmd_simulate(cfg: Config, quiet: bool) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    if len(cfg.seeds) == 1:
        results = [_simulate_seed(cfg, cfg.seeds[0])]
    else:
        workers = min(len(cfg.seeds), os.cpu_count() or 1)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(functools.partial(_simulate_seed, cfg),
                                    cfg.seeds))
    for seed, (jumps, steps, final_dist) in zip(cfg.seeds, results):
        tail = "" if final_dist is None else f", final dist_to_M {final_dist:.6g}"
        _say(quiet, f"simulate seed {seed}: {steps} flow steps, "
                    f"{jumps} jumps{tail}")
    _write_manifest(cfg, cfg.out_dir)
    _say(quiet, f"wrote {len(cfg.seeds)} run(s) to {cfg.out_dir}")
    return _EXIT_OK


def cmd_diagnose(cfg: Config, quiet: bool) -> int:
    instance = cfg.build_instance()
    all_ok = True
    for seed in cfg.seeds:
        try:
            sim = _load_sim(cfg, instance, seed)
        except FileNotFoundError as exc:
            print(f"missing artifact: {exc.args[0]} (run `ttsa simulate` first)",
                  file=sys.stderr)
            return _EXIT_MISSING
        tracking = instance.tracking if cfg.diag_tracking else None
        report = diagnostics_report(sim, T=cfg.diag_T, tracking=tracking,
                                    graph=cfg.diag_graph,
                                    graph_verdict=cfg.diag_graph_verdict)
        write_report_json(report, _report_path(cfg.out_dir, seed))
        for ts in ("slow", "fast"):
            tr = report[f"closeness_{ts}"]
            write_trace_csv(os.path.join(cfg.out_dir, f"closeness_{ts}_seed{seed}.csv"),
                            "n", "sup", tr["n_grid"], tr["sup"])
        bl = boundary_layer_rescaled_drift(sim)
        write_trace_csv(os.path.join(cfg.out_dir, f"bl_drift_seed{seed}.csv"),
                        "k", "value", range(1, bl.values.size + 1), bl.values)
        if tracking is not None:
            tr = tracking_error_trace(sim, tracking)
            write_trace_csv(os.path.join(cfg.out_dir, f"lambda_seed{seed}.csv"),
                            "k", "value", range(1, tr.values.size + 1), tr.values)
        verdicts = report["verdicts"]
        all_ok = all_ok and verdicts["overall"]
        parts = ", ".join(f"{name} {'ok' if ok else 'FAIL'}"
                          for name, ok in verdicts.items() if name != "overall")
        _say(quiet, f"diagnose seed {seed}: {parts}")
    _write_manifest(cfg, cfg.out_dir)
    _say(quiet, f"overall: {'pass' if all_ok else 'FAIL'}")
    return _EXIT_OK if all_ok else _EXIT_FAIL


def cmd_chain(cfg: Config, quiet: bool) -> int:
    cc = cfg.chain
    instance = cfg.build_instance(cc.system)
    system = instance.system.stacked()
    start = np.asarray(cc.start, dtype=float)
    target = np.asarray(cc.target, dtype=float)
    for key, point in (("start", start), ("target", target)):
        if point.shape[0] != system.dim:
            raise ConfigError(f"key chain.{key}: has {point.shape[0]} "
                              f"coordinates, system {cc.system!r} needs {system.dim}")
        if not (system.in_C(point) or system.in_D(point)):
            raise ConfigError(f"key chain.{key}: point lies outside the flow "
                              "and jump sets")
    box = None
    if cc.internal_lo is not None:
        if len(cc.internal_lo) != system.dim:
            raise ConfigError(f"key chain.internal_lo: has {len(cc.internal_lo)} "
                              f"coordinates, system {cc.system!r} needs {system.dim}")
        box = Box(lo=np.asarray(cc.internal_lo), hi=np.asarray(cc.internal_hi))
        for key, point in (("start", start), ("target", target)):
            if not box.contains(point):
                raise ConfigError(f"key chain.{key}: point lies outside the "
                                  "internal box")
    try:
        chain = find_chain(system, start, target, cc.tau, cc.eps, cc.budget,
                           dt=cc.dt, internal_box=box)
    except ChainSearchError as exc:
        print(f"chain search failed: {exc}", file=sys.stderr)
        return _EXIT_FAIL
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "chain.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(chain_to_json(chain), fh, indent=2, sort_keys=True)
        fh.write("\n")
    dur = sum(leg.hybrid_duration for leg in chain.legs)
    worst = max(chain.gaps) if chain.gaps else 0.0
    _say(quiet, f"chain found: {len(chain.legs)} leg(s), hybrid duration "
                f"{dur:.6g}, worst junction gap {worst:.6g}; wrote {path}")
    return _EXIT_OK


def cmd_print_defaults() -> int:
    sys.stdout.write(DEFAULT_CONFIG)
    return _EXIT_OK


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}, expected "
                                         "comma-separated integers") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttsa",
        description="Two-timescale hybrid stochastic approximation driver.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="INI config file (defaults are built in)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (overrides output.dir)")
    common.add_argument("--seeds", metavar="LIST", type=_parse_seeds,
                        default=None,
                        help="comma-separated seeds (overrides run.seeds)")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress output")

    sub.add_parser("simulate", parents=[common],
                   help="run the configured system and record trajectories")
    sub.add_parser("diagnose", parents=[common],
                   help="compute diagnostics for recorded runs")
    sub.add_parser("chain", parents=[common],
                   help="search for a chain of solution arcs")
    sub.add_parser("print-defaults", help="print the built-in configuration")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "print-defaults":
        return cmd_print_defaults()
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seeds is not None:
            cfg.seeds = args.seeds
        if args.command == "simulate":
            return cmd_simulate(cfg, args.quiet)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.quiet)
        return cmd_chain(cfg, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return _EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
