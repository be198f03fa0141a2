"""Operator command line: validate | simulate | run-task | bench | render |
serve | eval-motion | eval-detection | profile.

Every command writes a RunManifest (command, config, seeds, outputs, wall
time, versions) into the --out directory, atomically. Stdout carries human
summaries; machine-readable output always goes to files. A JSON or TOML
config file supplies defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time as wall_clock
from pathlib import Path

import numpy as np

from . import __version__
from .asset import (CabinetConfig, apply_mobility_sidecar, generate_cabinet,
                    load_sidecar, parse_urdf, serialize_spec)
from .dynamics.scene import Scene, SceneConfig
from .errors import MobilisimError
from .metrics import (average_precision, load_detection_file, load_motion_eval_file,
                      motion_metrics, total_loss)
from .sensors.camera import CameraIntrinsics, render, sample_hemisphere_views
from .sensors.msf import write_frame
from .server import SessionConfig, serve
from .tasks import TaskKind, make_task, policy_for, run_episode


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # tomllib landed in 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _merge(args: argparse.Namespace, config: dict, key: str, default):
    """Flag value if explicitly given, else config-file value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _write_manifest(out_dir: Path, command: str, config: dict, seeds,
                    outputs: list[str], t_start: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "outputs": outputs,
        "wall_time_s": wall_clock.perf_counter() - t_start,
        "versions": {"mobilisim": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    os.replace(tmp, out_dir / "manifest.json")


def _load_asset(args) -> "ArticulationSpec":
    text = Path(args.asset).read_text(encoding="utf-8")
    spec = parse_urdf(text)
    if getattr(args, "sidecar", None):
        side = load_sidecar(Path(args.sidecar).read_text(encoding="utf-8"))
        spec = apply_mobility_sidecar(spec, side)
    return spec


def _scene_for(args, config: dict):
    """Scene from --asset (URDF [+sidecar]) or a procedural cabinet."""
    seed = int(_merge(args, config, "seed", 0))
    dt = float(_merge(args, config, "dt", 1.0 / 500.0))
    scene = Scene(SceneConfig(dt=dt))
    if getattr(args, "asset", None):
        spec = _load_asset(args)
    else:
        spec, _ = generate_cabinet(CabinetConfig(), seed)
    scene.add_articulation(spec)
    return scene, spec, seed


# -- commands ------------------------------------------------------------------

def cmd_validate(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    try:
        spec = _load_asset(args)
    except MobilisimError as exc:
        print(f"INVALID: {type(exc).__name__}: {exc}")
        out.mkdir(parents=True, exist_ok=True)
        (out / "validate.json").write_text(json.dumps(
            {"valid": False, "error": type(exc).__name__, "message": str(exc)}),
            encoding="utf-8")
        _write_manifest(out, "validate", {"asset": args.asset}, [], ["validate.json"], t0)
        return 1
    report = {"valid": True, "name": spec.name, "links": len(spec.links),
              "joints": len(spec.joints), "dof": spec.dof,
              "joint_kinds": {j.name: j.kind.value for j in spec.joints}}
    out.mkdir(parents=True, exist_ok=True)
    (out / "validate.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(f"OK: {spec.name}: {len(spec.links)} links, {len(spec.joints)} joints, "
          f"{spec.dof} dof")
    _write_manifest(out, "validate", {"asset": args.asset,
                                      "sidecar": getattr(args, "sidecar", None)},
                    [], ["validate.json"], t0)
    return 0


def cmd_simulate(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    steps = int(_merge(args, config, "n", 1000))
    scene, spec, seed = _scene_for(args, config)
    name = next(iter(scene.arts))
    log = []
    stride = max(1, steps // 200)
    for i in range(steps):
        scene.step()
        if i % stride == 0 or i == steps - 1:
            st = scene.state(name)
            log.append({"t": scene.time, "q": st.q.tolist(), "qd": st.qd.tolist()})
    out.mkdir(parents=True, exist_ok=True)
    traj = out / "trajectory.jsonl"
    with traj.open("w", encoding="utf-8") as fh:
        for row in log:
            fh.write(json.dumps(row) + "\n")
    (out / "spec.json").write_text(serialize_spec(spec), encoding="utf-8")
    print(f"simulated {steps} steps of {name} (dt={scene.config.dt}); "
          f"final t={scene.time:.3f}s")
    _write_manifest(out, "simulate", {"steps": steps, "dt": scene.config.dt},
                    [seed], ["trajectory.jsonl", "spec.json"], t0)
    return 0


def _run_one_episode(kind_seed) -> dict:
    kind_value, seed = kind_seed
    kind = TaskKind(kind_value)
    task = make_task(kind, seed)
    result = run_episode(task, policy_for(kind))
    return {"seed": seed, "kind": kind.value, "outcome": result.outcome.value,
            "final_fraction": result.final_fraction, "steps": result.steps_used}


def cmd_run_task(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    seed = int(_merge(args, config, "seed", 0))
    row = _run_one_episode((args.kind, seed))
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.jsonl").write_text(json.dumps(row) + "\n", encoding="utf-8")
    print(f"{row['kind']} seed {seed}: {row['outcome']} "
          f"(fraction {row['final_fraction']:.3f}, {row['steps']} steps)")
    _write_manifest(out, "run-task", {"kind": args.kind}, [seed], ["result.jsonl"], t0)
    return 0


def cmd_bench(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    n = int(_merge(args, config, "n", 100))
    workers = int(_merge(args, config, "workers", 1))
    jobs = [(args.kind, seed) for seed in range(n)]
    if workers > 1 and n > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one_episode, jobs))
    else:
        rows = [_run_one_episode(job) for job in jobs]
    successes = sum(r["outcome"] == "success" for r in rows)
    rate = successes / n if n else 0.0
    out.mkdir(parents=True, exist_ok=True)
    with (out / "episodes.jsonl").open("w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    summary = {"kind": args.kind, "episodes": n, "successes": successes,
               "success_rate": rate}
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(f"{args.kind}: {successes}/{n} success ({100 * rate:.1f}%)" if n
          else f"{args.kind}: 0 episodes")
    _write_manifest(out, "bench", {"kind": args.kind, "n": n, "workers": workers},
                    list(range(n)), ["episodes.jsonl", "summary.json"], t0)
    return 0


def cmd_render(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    seed = int(_merge(args, config, "seed", 0))
    views = int(_merge(args, config, "views", 20))
    resolution = int(_merge(args, config, "resolution", 512))
    scene, spec, _ = _scene_for(args, config)
    intr = CameraIntrinsics(width=resolution, height=resolution,
                            cx=resolution / 2.0, cy=resolution / 2.0)
    centers = [scene.link_pose(spec.name, l.name).translation for l in spec.links]
    center = np.mean(np.stack(centers), axis=0)
    extent = max(1e-3, float(np.max(np.abs(np.stack(centers) - center)))) + 0.6
    poses = sample_hemisphere_views(center, 2.0 * extent, views, seed)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    meta = []
    for i, pose in enumerate(poses):
        frame = render(scene, pose, intr)
        name = f"view_{i:03d}.msf"
        (out / name).write_bytes(write_frame(frame))
        outputs.append(name)
        meta.append({"file": name, "pose": pose.to_dict(),
                     "foreground_px": int(np.count_nonzero(frame.segmentation))})
    (out / "views.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    print(f"rendered {views} views at {resolution}x{resolution} -> {out}")
    _write_manifest(out, "render", {"views": views, "resolution": resolution},
                    [seed], outputs + ["views.json"], t0)
    return 0


def cmd_serve(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    seed = int(_merge(args, config, "seed", 0))
    addr = getattr(args, "addr", None)
    kind = TaskKind(args.kind) if getattr(args, "kind", None) else TaskKind.PULL_DRAWER
    task = make_task(kind, seed)
    session = SessionConfig(
        sim_rate=1.0 / task.scene.config.dt,
        state_broadcast_rate=float(_merge(args, config, "broadcast-rate", 50.0)),
        realtime_factor=float(_merge(args, config, "realtime-factor", 1.0)))
    server = serve(task.scene, session, addr)
    print(f"serving {kind.value} task (seed {seed}) on {server.host}:{server.port}")
    _write_manifest(out, "serve", {"kind": kind.value,
                                   "address": f"{server.host}:{server.port}"},
                    [seed], [], t0)
    try:
        while True:
            wall_clock.sleep(0.5)
    except KeyboardInterrupt:
        print("stopping")
        server.stop()
    return 0


def cmd_eval_motion(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    preds, gts = load_motion_eval_file(args.pred)
    total, terms = total_loss(preds, gts)
    report = motion_metrics(preds, gts,
                            max_slider_range=float(_merge(args, config,
                                                          "max-slider-range", 1.0)))
    report["loss_total"] = total
    report["loss_terms"] = terms
    out.mkdir(parents=True, exist_ok=True)
    (out / "motion_report.json").write_text(json.dumps(report, indent=2),
                                            encoding="utf-8")
    print(f"{report['count']} instances: H acc {100 * report['h_acc']:.1f}%, "
          f"S acc {100 * report['s_acc']:.1f}%, loss {total:.4f}")
    _write_manifest(out, "eval-motion", {"pred": args.pred}, [],
                    ["motion_report.json"], t0)
    return 0


def cmd_eval_detection(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    preds = load_detection_file(args.pred, with_scores=True)
    gts = load_detection_file(args.gt, with_scores=False)
    iou = float(_merge(args, config, "iou", 0.5))
    report = average_precision(preds, gts, iou)
    out.mkdir(parents=True, exist_ok=True)
    (out / "detection_report.json").write_text(json.dumps(report, indent=2),
                                               encoding="utf-8")
    print(f"mAP@{iou}: {100 * report['map']:.1f}% over {len(report['ap'])} categories")
    _write_manifest(out, "eval-detection", {"pred": args.pred, "gt": args.gt,
                                            "iou": iou}, [],
                    ["detection_report.json"], t0)
    return 0


def cmd_profile(args, config) -> int:
    t0 = wall_clock.perf_counter()
    out = Path(_merge(args, config, "out", "out"))
    seed = int(_merge(args, config, "seed", 0))
    steps = int(_merge(args, config, "n", 2000))
    resolution = int(_merge(args, config, "resolution", 512))
    task = make_task(TaskKind.PULL_DRAWER, seed)
    scene = task.scene
    for _ in range(50):  # warm caches before timing
        scene.step()
    t_step = wall_clock.perf_counter()
    for _ in range(steps):
        scene.step()
    step_rate = steps / (wall_clock.perf_counter() - t_step)
    intr = CameraIntrinsics(width=resolution, height=resolution,
                            cx=resolution / 2.0, cy=resolution / 2.0)
    from .sensors.camera import look_at
    pose = look_at((2.0, 0.0, 1.0), (0.0, 0.0, 0.5))
    n_renders = 5
    t_render = wall_clock.perf_counter()
    for _ in range(n_renders):
        render(scene, pose, intr)
    render_rate = n_renders / (wall_clock.perf_counter() - t_render)
    print(f"steps/s: {step_rate:.0f}")
    print(f"renders/s ({resolution}x{resolution}): {render_rate:.1f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "profile.json").write_text(json.dumps(
        {"steps_per_s": step_rate, "renders_per_s": render_rate,
         "steps": steps, "resolution": resolution}, indent=2), encoding="utf-8")
    _write_manifest(out, "profile", {"steps": steps, "resolution": resolution},
                    [seed], ["profile.json"], t0)
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobilisim",
        description="Articulated-object simulation: assets, tasks, sensing, "
                    "metrics, and an asynchronous TCP server.")
    parser.add_argument("--config", help="JSON or TOML config file with defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=True, outdir=True):
        if seed:
            p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        if outdir:
            p.add_argument("--out", help="output directory (default ./out)")

    p = sub.add_parser("validate", help="parse and validate an asset file")
    p.add_argument("--asset", required=True, help="URDF file")
    p.add_argument("--sidecar", help="mobility sidecar JSON")
    common(p, seed=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="step a scene and log the trajectory")
    p.add_argument("--asset", help="URDF file (default: procedural cabinet)")
    p.add_argument("--sidecar", help="mobility sidecar JSON")
    p.add_argument("--n", type=int, help="steps to simulate (default 1000)")
    p.add_argument("--dt", type=float, help="step size in seconds (default 1/500)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run-task", help="run one heuristic episode")
    p.add_argument("--kind", choices=["door", "drawer"], required=True)
    common(p)
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("bench", help="run a seed suite and report success rate")
    p.add_argument("--kind", choices=["door", "drawer"], required=True)
    p.add_argument("--n", type=int, help="number of seeds (default 100)")
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    common(p, seed=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="render hemisphere views to MSF dumps")
    p.add_argument("--asset", help="URDF file (default: procedural cabinet)")
    p.add_argument("--sidecar", help="mobility sidecar JSON")
    p.add_argument("--views", type=int, help="number of views (default 20)")
    p.add_argument("--resolution", type=int, help="square image size (default 512)")
    common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="serve a task scene over TCP")
    p.add_argument("--kind", choices=["door", "drawer"], help="task kind (default drawer)")
    p.add_argument("--addr", help="bind address host:port "
                                  "(default $MOBILISIM_ADDR or 127.0.0.1:7511)")
    p.add_argument("--broadcast-rate", type=float, help="STATE frames per sim second")
    p.add_argument("--realtime-factor", type=float, help="sim seconds per wall second")
    common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval-motion", help="score motion predictions (JSONL)")
    p.add_argument("--pred", required=True, help="JSONL of {id, gt, pred}")
    p.add_argument("--max-slider-range", type=float, help="dataset max slider range (m)")
    common(p, seed=False)
    p.set_defaults(func=cmd_eval_motion)

    p = sub.add_parser("eval-detection", help="score detection masks (JSONL)")
    p.add_argument("--pred", required=True, help="JSONL predictions with scores")
    p.add_argument("--gt", required=True, help="JSONL ground-truth masks")
    p.add_argument("--iou", type=float, help="IoU threshold (default 0.5)")
    common(p, seed=False)
    p.set_defaults(func=cmd_eval_detection)

    p = sub.add_parser("profile", help="measure stepping and render rates")
    p.add_argument("--n", type=int, help="steps to time (default 2000)")
    p.add_argument("--resolution", type=int, help="render size (default 512)")
    common(p)
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _load_config_file(args.config)
    try:
        return args.func(args, config)
    except MobilisimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
