"""``softprop`` command line: simulation, fitting, dataset, training, evaluation, grasp demos, bench.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 acceptance-check failure. ``SOFTPROP_OUTPUT_ROOT`` relocates relative output
directories.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (
    ConfigError, ConvergenceError, DatasetError, DivergenceError, DomainError, EstimationError, FitError,
    GeometryError, ModeError, SpecError, TimingError, VisibilityError,
)
from .io import atomic_write_text, write_csv

log = logging.getLogger("softprop")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
ABLATION_MAX_RATIO = 0.6
LOOP_GAP_MIN_FACTOR = 3.0
DDOT_MAX_CHANGE = 0.10
BUDGET_MS = 1000.0 / 330.0


class CheckFailed(Exception):
    """A stated acceptance check did not hold."""


# ------------------------------------------------------------------ manifest
class Manifest:
    def __init__(self, cfg: RunConfig, out: Path, command: str):
        self.out, self.cfg = out, cfg
        self.data = {
            "command": command,
            "config_source": cfg.source,
            "config_sha256": cfg.sha256,
            "toolkit_version": __version__,
            "seed": cfg.seed,
            "stages": [],
            "results": {},
        }

    def stage(self, name, files, seconds, **info):
        self.data["stages"].append(
            {"name": name, "outputs": [str(Path(f).relative_to(self.out)) for f in files], "seconds": round(seconds, 3), **info}
        )

    def write(self):
        for st in self.data["stages"]:
            for f in st["outputs"]:
                if not (self.out / f).exists():
                    raise ConfigError(f"declared output {f} is missing")
        path = self.out / "manifest.json"
        atomic_write_text(path, json.dumps(self.data, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not serialisable: {type(v)}")


# ------------------------------------------------------------------- helpers
def build_network(cfg: RunConfig):
    from .sim.network import ElementNetwork
    from .sim.profiles import calibrate
    from .sim.scaffold import build_scaffold

    nw = cfg.network
    net = ElementNetwork(
        build_scaffold(cfg.scaffold),
        group_scales=nw.get("group_scales"),
        layer_scales=nw.get("layer_scales"),
        contact_stiffness=nw.get("contact_stiffness_N_per_mm", 50.0),
        friction=nw.get("friction", 0.0),
    )
    cal = cfg.calibration
    if cal.get("enabled"):
        calibrate(net, **_calibration_kwargs(cal))
    return net


def _calibration_kwargs(cal: dict) -> dict:
    return dict(
        targets=cal.get("targets_N_per_mm"),
        angle=cal.get("angle_deg", 0.0),
        depth_mm=cal.get("depth_mm", 5.0),
        speed_mm_per_s=cal.get("speed_mm_per_s", 3.0),
        fps=cal.get("fps", 30.0),
        height_fractions=cal.get("height_fractions"),
        spread_weight=cal.get("spread_weight", 1.0),
    )


def build_camera(cfg: RunConfig):
    from .vision import CameraModel

    c = cfg.camera
    return CameraModel.for_resolution(c.get("width", 640), c.get("height", 360), noise=c.get("pixel_noise_sigma"), fps=c.get("fps", 330.0))


def dataset_protocols(cfg: RunConfig):
    """Train and test protocol lists plus one scripted cyclic protocol for the loop-area check."""
    from .sim.dataset import random_protocols, scripted_loop_protocol

    d = cfg.dataset
    n_tr, n_te = d.get("train_protocols", 28), d.get("test_protocols", 14)
    kw = dict(fps=d.get("fps", 330.0))
    for k in ("depth_mm", "speed_mm_per_s", "slow_speed_mm_per_s", "heights"):
        if k in d:
            kw[k] = tuple(d[k])
    for k in ("slow_fraction", "max_cycles"):
        if k in d:
            kw[k] = d[k]
    protos = random_protocols(n_tr + n_te, seed=d.get("protocol_seed", cfg.seed + 1), **kw)
    splits = ["train"] * n_tr + ["test"] * n_te
    if n_te:
        protos.append(scripted_loop_protocol(fps=kw["fps"]))
        splits.append("loop")
    return protos, splits


def _write_json(path: Path, obj) -> Path:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


# ------------------------------------------------------------------ commands
def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    from .sim.protocols import run_protocol, write_trajectory_csv

    man = Manifest(cfg, out, "simulate")
    if cfg.protocols:
        net = build_network(cfg)
    for name, proto in cfg.protocols:
        t0 = time.perf_counter()
        traj, nodes = out / f"{name}.csv", out / f"{name}_nodes.csv"
        frames = run_protocol(net, proto)
        write_trajectory_csv(traj, frames, nodes)
        man.stage(name, [traj, nodes], time.perf_counter() - t0, frames=len(frames))
        log.info("%s: %d frames", name, len(frames))
    man.write()
    return EXIT_OK


def cmd_fit_prony(cfg: RunConfig, out: Path, args) -> int:
    from .viscoelastic import fit_prony, read_curve_csv, save_prony_json

    t0 = time.perf_counter()
    samples = read_curve_csv(args.curve, args.mode)
    p = fit_prony(samples, args.branches)
    dest = Path(args.output) if args.output else out / "prony.json"
    save_prony_json(dest, p)
    print(json.dumps({"mode": p.mode.value, "instantaneous": p.instantaneous, "equilibrium": p.equilibrium, "residual_rms": p.residual_rms}))
    if not args.output:
        man = Manifest(cfg, out, "fit-prony")
        man.stage("fit_prony", [dest], time.perf_counter() - t0)
        man.write()
    return EXIT_OK


def cmd_profile(cfg: RunConfig, out: Path, args) -> int:
    from .sim.profiles import compute_stiffness_profile, is_nonincreasing, is_u_shaped
    from .sim.protocols import FACE_ANGLES, adaptive_profile

    man = Manifest(cfg, out, "profile")
    net = build_network(cfg)
    cal = cfg.calibration
    t0 = time.perf_counter()
    table = compute_stiffness_profile(
        net, depth_mm=cal.get("depth_mm", 5.0), speed_mm_per_s=cal.get("speed_mm_per_s", 3.0),
        fps=cal.get("fps", 30.0), height_fractions=cal.get("height_fractions"),
    )
    stiff = out / "stiffness.csv"
    write_csv(stiff, ["angle_deg", *table.heights], [[a, *row] for a, row in zip(table.angles, table.k)], kind="stiffness")
    man.stage("stiffness", [stiff], time.perf_counter() - t0)
    t0 = time.perf_counter()
    rows, kappa = [], {}
    for face in FACE_ANGLES:
        prof = adaptive_profile(net, face)
        kappa[face] = prof.kappa
        for j, loc in enumerate(prof.locations):
            rows.append([face, loc, prof.location_mm[j], prof.kappa[j], prof.l_prime[j], prof.d_max[j], prof.d_tip[j], prof.face_length])
    ad = out / "adaptive.csv"
    write_csv(ad, ["face", "location", "arc_mm", "kappa", "l_prime_mm", "D_max_mm", "D_tip_mm", "L_mm"], rows, kind="adaptive")
    man.stage("adaptive", [ad], time.perf_counter() - t0)
    k = table.k
    man.data["results"] = {
        "alpha0_u_shape": is_u_shaped(k[0]),
        "alpha1_nonincreasing": is_nonincreasing(k[1]),
        "alpha2_nonincreasing": is_nonincreasing(k[2]),
        "kappa_ratio_L1": float(kappa["primary"][0] / kappa["secondary"][0]),
    }
    man.write()
    print(json.dumps(man.data["results"]))
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out: Path, args) -> int:
    from .sim.profiles import calibrate

    man = Manifest(cfg, out, "calibrate")
    cfg.calibration["enabled"] = False
    net = build_network(cfg)
    t0 = time.perf_counter()
    res = calibrate(net, **_calibration_kwargs(cfg.calibration))
    dest = _write_json(out / "calibration.json", {
        "layer_scales": {str(k): v for k, v in res.layer_scales.items()},
        "achieved_N_per_mm": res.achieved,
        "targets_N_per_mm": res.targets,
        "max_rel_error": res.max_rel_error,
        "iterations": res.iterations,
    })
    man.stage("calibrate", [dest], time.perf_counter() - t0)
    man.write()
    print(json.dumps({"layer_scales": res.layer_scales, "achieved": res.achieved}))
    return EXIT_OK


def _gen_dataset(cfg: RunConfig, out: Path, man: Manifest) -> Path:
    from .learning.dataset import write_dataset_csv
    from .sim.dataset import gen_dataset

    t0 = time.perf_counter()
    protos, splits = dataset_protocols(cfg)
    net = build_network(cfg)
    ds = gen_dataset(
        net, protos, build_camera(cfg), seed=cfg.seed, splits=splits, with_nodes=cfg.dataset.get("with_nodes", False),
        delta_t=cfg.dataset.get("delta_t_s", 0.015), workers=cfg.dataset.get("workers", 1),
        max_records_per_protocol=cfg.dataset.get("max_records_per_protocol"),
    )
    path = out / "dataset.csv"
    write_dataset_csv(path, ds)
    counts = {s: int(np.sum(ds.split == s)) for s in ("train", "test", "loop")}
    man.stage("gen_dataset", [path], time.perf_counter() - t0, records=counts)
    return path


def cmd_gen_dataset(cfg: RunConfig, out: Path, args) -> int:
    man = Manifest(cfg, out, "gen-dataset")
    _gen_dataset(cfg, out, man)
    man.write()
    return EXIT_OK


def _load_dataset(path):
    from .learning.dataset import read_dataset_csv

    p = Path(path)
    if not p.exists():
        raise ConfigError(f"dataset {path} does not exist", key="dataset")
    ds = read_dataset_csv(p)
    ds.validate()
    return ds


def _train(cfg: RunConfig, ds, kind: str, feature_set: str, dest: Path):
    from .learning.models import train_kinesthesia, train_wrench

    tr, te = ds.select("train"), ds.select("test")
    hidden = cfg.models
    if kind == "kinesthesia":
        model, res = train_kinesthesia(tr, cfg.train, te, tuple(hidden.get("kinesthesia_hidden", (150, 200, 150))))
    else:
        model, res = train_wrench(tr, feature_set, cfg.train, te, tuple(hidden.get("wrench_hidden", (1000, 100, 50))))
    model.save(dest)
    return model, res


def cmd_train(cfg: RunConfig, out: Path, args) -> int:
    man = Manifest(cfg, out, "train")
    ds = _load_dataset(args.dataset)
    t0 = time.perf_counter()
    tag = "kinesthesia" if args.kind == "kinesthesia" else f"wrench_{args.feature_set}"
    dest = Path(args.output) if args.output else out / f"model_{tag}.json"
    _, res = _train(cfg, ds, args.kind, args.feature_set, dest)
    if not args.output:
        man.stage("train", [dest], time.perf_counter() - t0, best_epoch=res.best_epoch, train_loss=res.train_loss, test_loss=res.test_loss)
        man.write()
    return EXIT_OK


def _evaluate_models(ds, models):
    from .learning.metrics import evaluate
    from .learning.models import positional_error

    te, loop = ds.select("test"), ds.select("loop")
    if len(te) == 0:
        raise DatasetError("evaluation split is empty")
    report = {}
    for name, m in models.items():
        if m.kind == "kinesthesia":
            if te.nodes is None:
                raise DatasetError("kinesthesia evaluation needs node labels")
            err = positional_error(m.predict(te.D), te.nodes)
            report[name] = {"mean_positional_error_mm": float(err.mean()), "max_positional_error_mm": float(err.max())}
            continue
        lp = (loop.probe_mm, loop.features(m.feature_set), loop.wrench) if len(loop) else None
        report[name] = evaluate(m.predict, te.features(m.feature_set), te.wrench, loop=lp, latency_repeats=50).to_dict()
        report[name]["feature_set"] = m.feature_set
    return report


def ablation_checks(report: dict) -> dict:
    """The three feature-ablation checks on a report holding D, D+Dd and D+Dd+Ddd wrench models."""
    by_fs = {v["feature_set"]: v for v in report.values() if "feature_set" in v}
    if not {"D", "D+Dd"} <= set(by_fs):
        return {}
    mae_d, mae_dd = by_fs["D"]["force_mae"], by_fs["D+Dd"]["force_mae"]
    out = {"mae_ratio": mae_dd / mae_d, "mae_ratio_ok": mae_dd <= ABLATION_MAX_RATIO * mae_d}
    gd, gdd = by_fs["D"].get("loop_area_gap"), by_fs["D+Dd"].get("loop_area_gap")
    if gd is not None and gdd is not None:
        out["loop_gap_factor"] = gd / gdd if gdd > 0 else float("inf")
        out["loop_gap_ok"] = out["loop_gap_factor"] >= LOOP_GAP_MIN_FACTOR
    if "D+Dd+Ddd" in by_fs:
        ch = abs(by_fs["D+Dd+Ddd"]["force_mae"] / mae_dd - 1)
        out["ddot_change"] = ch
        out["ddot_change_ok"] = ch <= DDOT_MAX_CHANGE
    return out


def _print_table(report: dict):
    print(f"{'model':<22}{'Fx':>8}{'Fy':>8}{'Fz':>8}{'Tx':>9}{'Ty':>9}{'Tz':>9}{'F mean':>9}")
    for name, r in report.items():
        if "mae" not in r:
            print(f"{name:<22}positional error {r['mean_positional_error_mm']:.3f} mm")
            continue
        m = r["mae"]
        print(f"{name:<22}" + "".join(f"{v:>8.3f}" for v in m[:3]) + "".join(f"{v:>9.4f}" for v in m[3:]) + f"{r['force_mae']:>9.3f}")


def cmd_eval(cfg: RunConfig, out: Path, args) -> int:
    from .learning.models import TrainedModel

    man = Manifest(cfg, out, "eval")
    ds = _load_dataset(args.dataset)
    t0 = time.perf_counter()
    models = {}
    for path in args.model:
        if not Path(path).exists():
            raise ConfigError(f"model {path} does not exist", key="model")
        models[Path(path).stem] = TrainedModel.load(path)
    report = _evaluate_models(ds, models)
    checks = ablation_checks(report)
    dest = _write_json(out / "metrics.json", {"models": report, "ablation": checks})
    man.stage("eval", [dest], time.perf_counter() - t0)
    man.data["results"] = checks
    man.write()
    _print_table(report)
    if checks:
        print(json.dumps(checks))
    if args.check and checks and not all(v for k, v in checks.items() if k.endswith("_ok")):
        raise CheckFailed("feature ablation checks failed")
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig, out: Path, args) -> int:
    man = Manifest(cfg, out, "pipeline")
    ds = _load_dataset(_gen_dataset(cfg, out, man))
    models = {}
    for fs in cfg.models.get("feature_sets", ["D", "D+Dd", "D+Dd+Ddd"]):
        t0 = time.perf_counter()
        dest = out / f"model_wrench_{fs}.json"
        models[dest.stem], res = _train(cfg, ds, "wrench", fs, dest)
        man.stage(f"train_{fs}", [dest], time.perf_counter() - t0, best_epoch=res.best_epoch)
    if ds.nodes is not None:
        t0 = time.perf_counter()
        dest = out / "model_kinesthesia.json"
        models[dest.stem], res = _train(cfg, ds, "kinesthesia", "D", dest)
        man.stage("train_kinesthesia", [dest], time.perf_counter() - t0, best_epoch=res.best_epoch)
    t0 = time.perf_counter()
    report = _evaluate_models(ds, models)
    checks = ablation_checks(report)
    dest = _write_json(out / "metrics.json", {"models": report, "ablation": checks})
    man.stage("eval", [dest], time.perf_counter() - t0)
    man.data["results"] = checks
    man.write()
    _print_table(report)
    print(json.dumps(checks))
    if args.check and not all(v for k, v in checks.items() if k.endswith("_ok")):
        raise CheckFailed("feature ablation checks failed")
    return EXIT_OK


def cmd_grasp_demo(cfg: RunConfig, out: Path, args) -> int:
    from .grasp import Disturbance, FrictionConeController, GraspScenario, WrenchSource, run_competitive_grasp, simulate_lift, write_timeline_csv

    man = Manifest(cfg, out, "grasp-demo")
    g = cfg.grasp
    t0 = time.perf_counter()
    try:
        sc = GraspScenario.from_dict({"seed": cfg.seed, **(g.get("scenario") or {})})
    except TypeError as e:
        raise ConfigError(str(e), key="grasp.scenario") from None
    res = simulate_lift(sc)
    tl = out / "timeline.csv"
    write_timeline_csv(tl, res)
    man.stage("lift", [tl], time.perf_counter() - t0)
    t0 = time.perf_counter()
    try:
        ctrl = FrictionConeController(**(g.get("controller") or {}))
        dist = [Disturbance(**d) for d in g.get("disturbances", [])]
    except TypeError as e:
        raise ConfigError(str(e), key="grasp.controller") from None
    trace = run_competitive_grasp(
        ctrl, gravity_N=g.get("gravity_N", 3.0), mu_true=g.get("mu_true", 0.3), disturbances=dist,
        duration_s=g.get("duration_s", 15.0), source=WrenchSource(g.get("noise_N", 0.0), cfg.seed),
    )
    cone = out / "cone_control.csv"
    write_csv(cone, ["t_s", "Fg", "Fs", "ratio", "squeeze_mm", "commanded_Fg", "alarm"],
              np.column_stack([trace.t, trace.Fg, trace.Fs, trace.ratio, trace.squeeze_mm, trace.commanded_Fg, trace.alarm]), kind="cone_control")
    man.stage("cone_control", [cone], time.perf_counter() - t0)
    man.data["results"] = {
        "outcome": res.outcome, "t1_s": res.t1, "t2_s": res.t2, "t3_s": res.t3, "mu_hat": res.mu_hat,
        "slip_time_predicted_s": res.slip_time_predicted, "slip_time_sim_s": res.slip_time_sim,
        "cone_inside_fraction": trace.inside_cone_fraction(ctrl.mu_safe),
        "max_commanded_Fg_N": float(trace.commanded_Fg.max()),
    }
    man.write()
    print(json.dumps(man.data["results"], default=_jsonable))
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, out: Path, args) -> int:
    from .grasp import ContourWorld, arc_contour, contour_follow, reconstruction_error, wall_contour, write_reconstruction_csv

    man = Manifest(cfg, out, "reconstruct")
    r = cfg.reconstruct
    kind = r.get("world", "arc")
    if kind == "arc":
        contour = arc_contour(r.get("radius_mm", 50.0), r.get("sweep_deg", 90.0))
    elif kind == "wall":
        contour = wall_contour(r.get("length_mm", 80.0))
    else:
        raise ConfigError(f"unknown world {kind!r}", key="reconstruct.world")
    world = ContourWorld(
        contour, tuple(r.get("force_band_N", (3.0, 4.0))), slide_step_mm=r.get("slide_step_mm", 0.1),
        noise_N=r.get("noise_N", 0.02), seed=cfg.seed,
    )
    t0 = time.perf_counter()
    rec = contour_follow(world)
    pts, trace = out / "reconstruction.csv", out / "force_trace.csv"
    write_reconstruction_csv(pts, rec, trace)
    man.stage("reconstruct", [pts, trace], time.perf_counter() - t0)
    man.data["results"] = {"hausdorff_mm": reconstruction_error(world, rec), "band_fraction": rec.band_fraction(world.force_band)}
    man.write()
    print(json.dumps(man.data["results"]))
    return EXIT_OK


def bench_latency(wrench_model=None, kin_model=None, repeats: int = 300, seed: int = 0) -> dict:
    """Single-sample latencies (median ms) and the per-frame pose -> features -> wrench step."""
    from .learning.metrics import inference_latency_ms
    from .learning.models import KINESTHESIA_HIDDEN, WRENCH_HIDDEN, TrainedModel
    from .learning.mlp import MLPModel
    from .learning.normalizer import Normalizer
    from .vision import CameraModel, MarkerSpec, PoseTracker, StreamingFeatures, project_marker

    rng = np.random.default_rng(seed)

    def stand_in(sizes, fs, kind):
        X, Y = rng.normal(size=(16, sizes[0])), rng.normal(size=(16, sizes[-1]))
        return TrainedModel(MLPModel.initialized(sizes, seed), Normalizer.fit(X, Y), fs, seed, kind)

    wm = wrench_model or stand_in([12, *WRENCH_HIDDEN, 6], "D+Dd", "wrench")
    km = kin_model or stand_in([6, *KINESTHESIA_HIDDEN, 78], "D", "kinesthesia")
    n_in = wm.mlp.layer_sizes[0]
    x = rng.normal(size=n_in)
    cam, spec = CameraModel.for_resolution(640, 360), MarkerSpec()
    tracker, feats = PoseTracker(cam, spec), StreamingFeatures()
    centre = np.array([0.0, 0.0, 44.7])
    frames = [project_marker(cam, spec, np.eye(3), centre + rng.normal(0, 0.5, 3), rng) for _ in range(repeats)]
    step_ms = []
    for c in frames:
        t0 = time.perf_counter()
        D = tracker.update(c)[0].D
        f = feats.push(D)
        wm.predict(f[:n_in])
        step_ms.append(1e3 * (time.perf_counter() - t0))
    return {
        "wrench_ms": inference_latency_ms(wm.predict, x, repeats),
        "kinesthesia_ms": inference_latency_ms(km.predict, rng.normal(size=6), repeats),
        "pipeline_ms": float(np.median(step_ms)),
        "pipeline_p95_ms": float(np.percentile(step_ms, 95)),
        "budget_ms": BUDGET_MS,
        "trained_models": wrench_model is not None,
    }


def cmd_bench(cfg: RunConfig, out: Path, args) -> int:
    from .learning.models import TrainedModel

    man = Manifest(cfg, out, "bench")
    t0 = time.perf_counter()
    wm = TrainedModel.load(args.wrench_model) if args.wrench_model else None
    km = TrainedModel.load(args.kinesthesia_model) if args.kinesthesia_model else None
    rep = bench_latency(wm, km)
    rep["wrench_ok"] = rep["wrench_ms"] <= 1.0
    rep["kinesthesia_ok"] = rep["kinesthesia_ms"] <= 1.0
    rep["pipeline_ok"] = rep["pipeline_ms"] <= BUDGET_MS
    dest = _write_json(out / "bench.json", rep)
    man.stage("bench", [dest], time.perf_counter() - t0)
    man.data["results"] = {k: v for k, v in rep.items() if k.endswith("_ok")}
    man.write()
    print(json.dumps(rep))
    if not (rep["wrench_ok"] and rep["kinesthesia_ok"] and rep["pipeline_ok"]):
        raise CheckFailed("latency budget exceeded")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-prony": cmd_fit_prony,
    "profile": cmd_profile,
    "calibrate": cmd_calibrate,
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
    "grasp-demo": cmd_grasp_demo,
    "reconstruct": cmd_reconstruct,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softprop", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"softprop {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML run configuration (default: packaged default)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        return p

    add("simulate", "run the configured load protocols and export trajectories")
    p = add("fit-prony", "fit a Prony series to a curve CSV")
    p.add_argument("--curve", required=True)
    p.add_argument("--mode", choices=["relaxation", "creep"], default="relaxation")
    p.add_argument("--branches", type=int, default=3)
    p.add_argument("--output", help="model JSON path")
    add("profile", "stiffness table and adaptive factor of the configured network")
    add("calibrate", "fit layer-band multipliers to the stiffness targets")
    add("gen-dataset", "simulate the configured protocol set and write the dataset CSV")
    p = add("train", "train a wrench or kinesthesia model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=["wrench", "kinesthesia"], default="wrench")
    p.add_argument("--feature-set", choices=["D", "D+Dd", "D+Dd+Ddd"], default="D+Dd")
    p.add_argument("--output", help="model JSON path")
    p = add("eval", "evaluate models on the test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--check", action="store_true", help="exit 4 when the feature ablation checks fail")
    p = add("pipeline", "dataset, three wrench models, kinesthesia model, evaluation")
    p.add_argument("--check", action="store_true", help="exit 4 when the feature ablation checks fail")
    add("grasp-demo", "lift scenario timeline and friction-cone control trace")
    add("reconstruct", "contour following and reconstruction")
    p = add("bench", "inference latency report")
    p.add_argument("--wrench-model")
    p.add_argument("--kinesthesia-model")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = cfg.output_path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except (ConfigError, SpecError, ModeError, DatasetError, FitError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DivergenceError, GeometryError, EstimationError, TimingError, VisibilityError, DomainError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
