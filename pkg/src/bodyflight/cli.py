"""``bodyflight`` command line.

Every subcommand writes its results plus a ``manifest.json`` into ``--out``.
Failures print one JSON line on stderr and exit with:

====  ==========================================
code  meaning
====  ==========================================
0     success
1     unexpected failure
2     usage error (unknown flag, bad arguments)
3     input file or directory not found
4     schema or validation error in an input
5     numerical failure (divergence, no steady state, unstable loop)
====  ==========================================
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3, 4, 5
CONFIG_ENV = "BODYFLIGHT_CONFIG_DIR"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file() and f.name != MANIFEST:
                    out[str(f)] = _sha256(f)
        elif p.is_file():
            out[str(p)] = _sha256(p)
    return out


def _config_path(args):
    if getattr(args, "config", None):
        return Path(args.config)
    env = os.environ.get(CONFIG_ENV)
    if env and (Path(env) / "body.json").is_file():
        return Path(env) / "body.json"
    return None


def _load_config(args):
    from .body import load_body_config

    path = _config_path(args)
    if path is not None and not path.is_file():
        raise FileNotFoundError(f"body config {path} not found")
    return load_body_config(path)


def _config_hash(config):
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(path, kind="file"):
    p = Path(path)
    ok = p.is_dir() if kind == "dir" else p.is_file()
    if not ok:
        raise FileNotFoundError(f"{kind} {p} not found")
    return p


def _parse_int_set(text):
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError(f"empty index list {text!r}")
    return out


def _parse_floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(args):
    from .freqresp import DEFAULT_GRID

    if args.omega:
        return np.array(_parse_floats(args.omega))
    if args.grid:
        lo, hi, n = _parse_floats(args.grid)
        return np.logspace(np.log10(lo), np.log10(hi), int(n))
    return DEFAULT_GRID


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


# ---------------------------------------------------------------------------
# plants and pose sources


def _pattern_plant(args, config):
    """Plant named by ``--plant``: an embedded LTI plant or the body driven by a component."""
    from .freqresp import PatternPlant, embedded_plant

    name = args.plant
    if name.startswith("lti:"):
        return embedded_plant(name)
    if name == "skydiver":
        from .pca import load_decomposition, mask_component

        if not args.dec or args.component is None:
            raise UsageError("--plant skydiver needs --dec and --component")
        dec = load_decomposition(_require(args.dec, "dir"))
        pattern = dec.component(args.component)
        if getattr(args, "engage", None):
            pattern = mask_component(pattern, _parse_int_set(args.engage), renormalize=True)
        return PatternPlant.skydiver(config, dec.neutral_pose, pattern)
    if name.startswith("surrogate:"):
        from .control import SurrogateYawPlant
        from .freqresp import PatternMap

        plant, main, neg, pos = SurrogateYawPlant.agile_pair(int(name.split(":", 1)[1]))
        which = {"main": main, "neg": neg, "pos": pos}[getattr(args, "pattern", None) or "main"]
        return PatternPlant(plant, PatternMap(plant.neutral, which), plant.neutral, name=name)
    raise UsageError(f"unknown plant {name!r}")


def _source(args, config):
    from .freefall import ConstantPose, SinePattern, StepPattern
    from .body import standard_neutral_pose

    if args.recorded:
        from .freefall import Recorded
        from .motion import read_motion_csv

        ds = read_motion_csv(_require(args.recorded), config=config)
        return Recorded(ds), [args.recorded]
    if args.dec:
        from .pca import MaskedPattern, Reconstruction, load_decomposition

        dec = load_decomposition(_require(args.dec, "dir"))
        if args.pattern == "reconstruct":
            return Reconstruction(dec, args.n), [args.dec]
        if args.component is None:
            raise UsageError(f"--pattern {args.pattern} needs --component")
        if args.pattern == "sine":
            return SinePattern.from_decomposition(dec, args.component, args.amplitude, args.frequency), [args.dec]
        if args.pattern == "step":
            return StepPattern(dec.neutral_pose, dec.component(args.component), args.amplitude), [args.dec]
        if args.pattern == "masked":
            if not args.engage:
                raise UsageError("--pattern masked needs --engage")
            return MaskedPattern(dec, args.component, _parse_int_set(args.engage)), [args.dec]
    return ConstantPose(standard_neutral_pose()), []


# ---------------------------------------------------------------------------
# subcommands; each returns (input paths, extra manifest fields)


def cmd_ingest(args, out):
    from .motion import read_motion_csv, write_motion_csv

    config = _load_config(args)
    ds = read_motion_csv(_require(args.input), config=config)
    write_motion_csv(out / "motion.csv", ds)
    _write_json(out / "summary.json", {"samples": len(ds), "sample_rate_hz": ds.sample_rate,
                                       "duration_s": ds.duration})
    print(f"{len(ds)} samples at {ds.sample_rate:g} Hz -> {out / 'motion.csv'}")
    return [args.input], {"config_hash": _config_hash(config)}


def cmd_pca(args, out):
    from .motion import read_motion_csv
    from .pca import decompose_dataset, save_decomposition

    ds = read_motion_csv(_require(args.input))
    dec = decompose_dataset(ds)
    save_decomposition(dec, out)
    dom = dec.dominant(args.threshold)
    print(f"{len(dom)} dominant components above {args.threshold:g}: {dom}")
    return [args.input], {}


def cmd_simulate(args, out):
    from .freefall import initial_state, simulate, trim_state

    config = _load_config(args)
    source, inputs = _source(args, config)
    init = trim_state(config, source.pose(0.0)) if args.init == "trim" else initial_state()
    traj = simulate(source, args.duration, dt=args.dt, init=init, config=config)
    traj.to_csv(out / "trajectory.csv", include_pose=args.echo_pose)
    print(f"{len(traj)} states -> {out / 'trajectory.csv'}")
    return inputs, {"config_hash": _config_hash(config)}


def cmd_similarity(args, out):
    from .freefall import initial_state
    from .metrics import similarity_sweep, write_sweep_csv
    from .pca import load_decomposition

    config = _load_config(args)
    dec = load_decomposition(_require(args.dec, "dir"))
    init = None if args.init == "trim" else initial_state()
    entries = similarity_sweep(dec, config, n_values=_parse_int_set(args.n), duration=args.duration,
                               dt=args.dt, init=init, workers=args.threads)
    write_sweep_csv(out / "sweep.csv", entries)
    for e in entries:
        print(f"n={e.n:2d} err={e.err_n:.6g} sim={e.sim_n:.6f}")
    return [args.dec], {"config_hash": _config_hash(config)}


def cmd_freqresp(args, out):
    from .freqresp import frequency_response, write_bode_csv, write_bode_svg

    config = _load_config(args)
    plant = _pattern_plant(args, config)
    fr = frequency_response(plant, args.amplitude, _grid(args), args.cycles, workers=args.threads)
    write_bode_csv(out / "bode.csv", fr)
    if args.svg:
        write_bode_svg(out / "bode.svg", fr, title=args.plant)
    if fr.errors:
        _write_json(out / "errors.json", {str(fr.omega[k]): msg for k, msg in fr.errors.items()})
    for w, g, p in zip(fr.omega, fr.gain, fr.phase_deg):
        print(f"omega={w:.6g} gain={g:.6g} phase={p:.3f}")
    inputs = [args.dec] if args.dec else []
    return inputs, {"config_hash": _config_hash(config)}


def cmd_margins(args, out):
    from .freqresp import frequency_response, margins, read_bode_csv, step_response, write_margins_json

    config = _load_config(args)
    inputs = []
    minimum_phase = None
    if args.bode:
        fr = read_bode_csv(_require(args.bode))
        inputs.append(args.bode)
    else:
        if not args.plant:
            raise UsageError("margins needs --bode or --plant")
        plant = _pattern_plant(args, config)
        fr = frequency_response(plant, args.amplitude, _grid(args), args.cycles, workers=args.threads)
        if args.step_check:
            minimum_phase = not step_response(plant, args.amplitude, args.step_duration).features.nonminimum_phase
    report = margins(fr, args.k_p, minimum_phase)
    write_margins_json(out / "margins.json", report)
    print(json.dumps(report.to_dict()))
    return inputs, {}


def cmd_step(args, out):
    from .freqresp import step_response

    config = _load_config(args)
    plant = _pattern_plant(args, config)
    res = step_response(plant, args.amplitude, args.duration)
    if res.trajectory is not None:
        res.trajectory.to_csv(out / "trajectory.csv")
    with open(out / "step.csv", "w") as fh:
        fh.write("t_s,output\n")
        for t, y in zip(res.time, res.output):
            fh.write(f"{t!r},{float(y)!r}\n")
    f = res.features
    feats = {"initial_sign": f.initial_sign, "steady_value": f.steady_value,
             "rise_time_s": None if np.isnan(f.rise_time) else f.rise_time,
             "nonminimum_phase": f.nonminimum_phase}
    _write_json(out / "features.json", feats)
    print(json.dumps(feats))
    return [args.dec] if args.dec else [], {"config_hash": _config_hash(config)}


def _resolve_combination(spec_data, args, surrogate_patterns=None):
    from .control import _combination_from_dict, combination_from_components
    from .pca import load_decomposition

    comb = dict(spec_data.get("combination") or {"type": "single", "pattern": "main"})
    if surrogate_patterns is not None:
        for key, val in list(comb.items()):
            if isinstance(val, str) and val in surrogate_patterns:
                comb[key] = surrogate_patterns[val].tolist()
    if any(isinstance(comb.get(k), int) for k in ("pattern", "main", "neg", "pos", "neg_aux", "pos_aux")):
        if not args.dec:
            raise UsageError("component indices in the combination need --dec")
        comb = combination_from_components(comb, load_decomposition(_require(args.dec, "dir")))
    return _combination_from_dict(comb)


def cmd_track(args, out):
    from .control import SkydiverDynamics, SurrogateYawPlant, controller_from_dict, track
    from .body import standard_neutral_pose

    config = _load_config(args)
    spec_path = _require(args.spec)
    try:
        data = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{spec_path}: invalid JSON ({exc})") from None
    data_no_comb = {k: v for k, v in data.items() if k != "combination"}
    controller, _, limits = controller_from_dict(data_no_comb)
    if args.plant.startswith("surrogate:"):
        plant, main, neg, pos = SurrogateYawPlant.agile_pair(int(args.plant.split(":", 1)[1]))
        combination = _resolve_combination(data, args, {"main": main, "neg": neg, "pos": pos})
        neutral = plant.neutral
    elif args.plant == "skydiver":
        plant = SkydiverDynamics(config)
        combination = _resolve_combination(data, args)
        neutral = standard_neutral_pose()
        if args.dec:
            from .pca import load_decomposition

            neutral = load_decomposition(args.dec).neutral_pose
    else:
        raise UsageError(f"track supports --plant skydiver or surrogate:SEED, not {args.plant!r}")
    res = track(controller, combination, limits, plant, args.duration, neutral=neutral)
    _write_json(out / "report.json", res.report.to_dict())
    if hasattr(res.trajectory, "to_csv"):
        res.trajectory.to_csv(out / "trajectory.csv")
    else:
        with open(out / "yaw.csv", "w") as fh:
            fh.write("t_s,yaw_rate,reference\n")
            for t, y, r in zip(res.trajectory.time, res.trajectory.yaw_rate, res.reference):
                fh.write(f"{t!r},{float(y)!r},{float(r)!r}\n")
    print(res.report.to_json())
    return [args.spec] + ([args.dec] if args.dec else []), {"config_hash": _config_hash(config)}


def cmd_synergy_sweep(args, out):
    from .control import SkydiverDynamics, SurrogateYawPlant, SynergyFamily, synergy_sweep
    from .freqresp import write_bode_csv
    from .pca import load_decomposition

    config = _load_config(args)
    idx = _parse_int_set(args.components)
    if len(idx) != 4:
        raise UsageError("--components takes neg,neg_aux,pos,pos_aux")
    if args.plant == "skydiver":
        dec = load_decomposition(_require(args.dec, "dir")) if args.dec else None
        if dec is None:
            raise UsageError("synergy-sweep on the skydiver needs --dec")
        family = SynergyFamily(*(dec.component(i) for i in idx))
        dynamics, neutral = SkydiverDynamics(config), dec.neutral_pose
    elif args.plant.startswith("surrogate:"):
        plant, main, neg, pos = SurrogateYawPlant.agile_pair(int(args.plant.split(":", 1)[1]))
        rng = np.random.default_rng(int(args.plant.split(":", 1)[1]) + 1)
        aux = rng.standard_normal((len(neg), 2))
        aux /= np.linalg.norm(aux, axis=0)
        family = SynergyFamily(neg, aux[:, 0], pos, aux[:, 1])
        dynamics, neutral = plant, plant.neutral
    else:
        raise UsageError(f"synergy-sweep supports --plant skydiver or surrogate:SEED, not {args.plant!r}")
    ks = _parse_floats(args.k)
    responses = synergy_sweep(family, ks, args.amplitude, dynamics, neutral, _grid(args), args.cycles,
                              workers=args.threads)
    for k, fr in zip(ks, responses):
        write_bode_csv(out / f"bode_k{k:g}.csv", fr)
        print(f"k={k:g}: gain at lowest omega {fr.gain[0]:.6g}")
    return [args.dec] if args.dec else [], {"config_hash": _config_hash(config)}


def cmd_calibrate(args, out):
    from .body import save_body_config
    from .freefall import calibrate_drag, terminal_speed

    config = _load_config(args)
    fitted, c = calibrate_drag(config, target=args.target)
    save_body_config(fitted, out / "body.json")
    _write_json(out / "calibration.json", {"c_drag_max": c, "target_speed_m_s": args.target,
                                           "trimmed_speed_m_s": terminal_speed(fitted)})
    print(f"c_drag_max={c!r}")
    src = _config_path(args)
    return [str(src)] if src else [], {"config_hash": _config_hash(fitted)}


def cmd_verify(args, out):
    manifest_path = _require(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    argv = list(manifest["argv"])
    original_out = Path(manifest["out"])
    with tempfile.TemporaryDirectory() as tmp:
        i = argv.index("--out")
        argv[i + 1] = tmp
        code = main(argv)
        if code != EXIT_OK:
            raise RuntimeError(f"replay exited with code {code}")
        replay = json.loads((Path(tmp) / MANIFEST).read_text())
    diffs = []
    for name, digest in manifest["outputs"].items():
        got = replay["outputs"].get(name)
        if got != digest:
            diffs.append(name)
    for name in set(replay["outputs"]) - set(manifest["outputs"]):
        diffs.append(name)
    result = {"manifest": str(manifest_path), "original_out": str(original_out), "identical": not diffs,
              "differing": sorted(diffs)}
    _write_json(out / "verify.json", result)
    print(json.dumps(result))
    if diffs:
        raise MismatchError(f"outputs differ: {sorted(diffs)}")
    return [str(manifest_path)], {}


class MismatchError(Exception):
    pass


# ---------------------------------------------------------------------------
# parser


def _add_plant_args(p, default_plant=None):
    p.add_argument("--plant", default=default_plant, help="lti:first-order | lti:integrator | lti:second-order | lti:saturating | "
                        "skydiver | surrogate:SEED")
    p.add_argument("--dec", help="decomposition directory (for --plant skydiver)")
    p.add_argument("--component", type=int, help="1-based movement component")
    p.add_argument("--engage", help="DOF subset, e.g. 1-6,12 (masks the component)")
    p.add_argument("--pattern", choices=["main", "neg", "pos"], help="surrogate pattern to drive")
    p.add_argument("--amplitude", type=float, default=1.0, help="excitation amplitude [rad]")


def _add_grid_args(p):
    p.add_argument("--omega", help="comma-separated frequencies [rad/s]")
    p.add_argument("--grid", help="lo,hi,count for a log-spaced grid [rad/s]")
    p.add_argument("--cycles", type=int, default=10)


def build_parser():
    parser = _Parser(prog="bodyflight", description="Free-fall body-flight workbench.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help=f"body config JSON (default: ${CONFIG_ENV}/body.json or bundled)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
        p.set_defaults(func=fn)
        return p

    p = command("ingest", cmd_ingest, "validate a motion CSV and write it as Euler angles")
    p.add_argument("--input", required=True)

    p = command("pca", cmd_pca, "decompose a motion CSV into movement components")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.2, help="dominance threshold")

    p = command("simulate", cmd_simulate, "simulate a pose source and write the trajectory")
    p.add_argument("--recorded", help="motion CSV to replay")
    p.add_argument("--dec", "--from-dec", dest="dec", help="decomposition directory")
    p.add_argument("--pattern", choices=["reconstruct", "sine", "step", "masked"], default="reconstruct")
    p.add_argument("--n", type=int, default=None, help="components used for reconstruction")
    p.add_argument("--component", type=int)
    p.add_argument("--engage", help="DOF subset for --pattern masked")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--frequency", type=float, default=1.0, help="[Hz]")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1.0 / 240.0)
    p.add_argument("--init", choices=["default", "trim"], default="default")
    p.add_argument("--echo-pose", action="store_true", help="append pose columns")

    p = command("similarity", cmd_similarity, "score partial reconstructions against the full one")
    p.add_argument("--dec", required=True)
    p.add_argument("--n", default="1-45", help="component counts, e.g. 1-9 or 1,3,45")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--dt", type=float, default=1.0 / 240.0)
    p.add_argument("--init", choices=["default", "trim"], default="default")

    p = command("freqresp", cmd_freqresp, "estimate gain and phase by sinusoidal excitation")
    _add_plant_args(p, "lti:first-order")
    _add_grid_args(p)
    p.add_argument("--svg", action="store_true", help="also write bode.svg")

    p = command("margins", cmd_margins, "gain and phase margins of a proportional loop")
    p.add_argument("--bode", help="Bode CSV to analyse")
    _add_plant_args(p, None)
    _add_grid_args(p)
    p.add_argument("--k-p", dest="k_p", type=float, default=1.0)
    p.add_argument("--step-check", action="store_true", help="flag non-minimum phase from a step run")
    p.add_argument("--step-duration", type=float, default=10.0)

    p = command("step", cmd_step, "step response and its features")
    _add_plant_args(p, "lti:first-order")
    p.add_argument("--duration", type=float, default=10.0)

    p = command("track", cmd_track, "closed-loop tracking from a controller spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--plant", default="skydiver", help="skydiver | surrogate:SEED")
    p.add_argument("--dec")
    p.add_argument("--duration", type=float, default=20.0)

    p = command("synergy-sweep", cmd_synergy_sweep, "frequency responses across the synergy parameter k")
    p.add_argument("--plant", default="skydiver", help="skydiver | surrogate:SEED")
    p.add_argument("--dec")
    p.add_argument("--components", default="2,4,3,6", help="neg,neg_aux,pos,pos_aux")
    p.add_argument("--k", default="0,0.4,0.8", help="comma-separated k values")
    p.add_argument("--amplitude", type=float, default=1.0)
    _add_grid_args(p)

    p = command("calibrate", cmd_calibrate, "fit c_drag_max to the target terminal speed")
    p.add_argument("--target", type=float, default=60.0, help="[m/s]")

    p = command("verify", cmd_verify, "replay a manifest and compare outputs")
    p.add_argument("--manifest", required=True)
    return parser


def _classify(exc):
    from .body import ConfigError
    from .control import ClosedLoopUnstable
    from .freefall import SimulationDivergence
    from .freqresp import SteadyStateError
    from .metrics import UndefinedSimilarity
    from .pca import DecompositionError

    if isinstance(exc, UsageError):
        return EXIT_USAGE, "usage"
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING, "missing-file"
    if isinstance(exc, (SimulationDivergence, SteadyStateError, ClosedLoopUnstable, DecompositionError,
                        UndefinedSimilarity, FloatingPointError)):
        return EXIT_NUMERIC, "numerical"
    if isinstance(exc, (ConfigError, ValueError, KeyError, IndexError, json.JSONDecodeError)):
        return EXIT_INVALID, "invalid-input"
    if isinstance(exc, MismatchError):
        return EXIT_OTHER, "mismatch"
    return EXIT_OTHER, "error"


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "exit_code": EXIT_USAGE, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    if args.threads < 1:
        print(json.dumps({"error": "usage", "exit_code": EXIT_USAGE, "message": "--threads must be >= 1"}),
              file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs, extra = args.func(args, out)
    except Exception as exc:  # mapped onto the documented exit codes
        code, kind = _classify(exc)
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(json.dumps({"error": kind, "exit_code": code, "message": msg}), file=sys.stderr)
        return code
    outputs = {f.name: _sha256(f) for f in sorted(out.iterdir()) if f.is_file() and f.name != MANIFEST}
    manifest = {
        "command": args.command,
        "argv": argv,
        "out": str(out),
        "inputs": _hash_inputs(inputs),
        "config_hash": extra.get("config_hash"),
        "seed": extra.get("seed"),
        "tool_version": __version__,
        "started": started,
        "finished": time.time(),
        "outputs": outputs,
    }
    _write_json(out / MANIFEST, manifest)
    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
