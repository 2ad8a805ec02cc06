"""Command-line entry point: ``python -m flatcap <command> ...``.

Commands
--------
approx   inner approximation of the flat input set plus box baselines
sim      one closed-loop run
compare  flat and PWA controllers on the same scenario

Every command writes into ``--out-dir`` and leaves a ``manifest.json``
recording the command line, resolved configuration, input hashes and
outputs. ``FLATCAP_SEED`` in the environment overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from flatcap import __version__
from flatcap.errors import FallbackRateExceeded, FlatcapError
from flatcap.flatmap import DEFAULT_LIMITS, ConstraintParams
from flatcap.geomhull import MERGE_TOL, Polytope

log = logging.getLogger("flatcap")

# Vertex and inequality counts reported for the N0 = 2 set in the literature.
REFERENCE_COUNTS_N0_2 = (28, 20)

PLOT_STUB = '''"""Plot a closed-loop log written by ``flatcap sim``. Needs matplotlib."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
with open(path) as fh:
    rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
head, data = rows[0], rows[1:]
col = {{name: i for i, name in enumerate(head)}}
t = [float(r[col["t"]]) for r in data]
fig, axes = plt.subplots(3, 1, sharex=True)
for ax, a in zip(axes, "xyz"):
    ax.plot(t, [float(r[col[a]]) for r in data], label=a)
    ax.plot(t, [float(r[col[a + "_ref"]]) for r in data], "--", label=a + " ref")
    ax.legend(loc="upper right")
axes[-1].set_xlabel("t [s]")
plt.show()
'''


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path, data) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_manifest(out_dir, argv, config: dict, inputs: list, outputs: list) -> Path:
    manifest = {
        "command": ["flatcap", *argv],
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs if p},
        "outputs": sorted(os.path.relpath(o, out_dir) for o in outputs),
        "version": __version__,
    }
    path = Path(out_dir) / "manifest.json"
    write_json_atomic(path, manifest)
    return path


def _params(args) -> ConstraintParams:
    return ConstraintParams.from_json(args.params) if args.params else DEFAULT_LIMITS


def _seed(args) -> int:
    env = os.environ.get("FLATCAP_SEED")
    return int(env) if env not in (None, "") else args.seed


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# -- approx ---------------------------------------------------------------


def cmd_approx(args, argv) -> int:
    from flatcap.approx import ApproxConfig, algorithm1, build_Bv, build_Pv

    p = _params(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ApproxConfig(n0=args.n0, merge_tol=args.merge_tol, seed=_seed(args))
    res = algorithm1(cfg, p)
    pv, bv = build_Pv(p), build_Bv(p)

    files = {
        "sv_hrep": out / "sv_hrep.csv",
        "sv_vrep": out / "sv_vrep.csv",
        "pv_hrep": out / "pv_hrep.csv",
        "bv_hrep": out / "bv_hrep.csv",
        "summary": out / "summary.json",
    }
    res.polytope.write_hrep(files["sv_hrep"])
    res.polytope.write_vrep(files["sv_vrep"])
    pv.write_hrep(files["pv_hrep"])
    bv.write_hrep(files["bv_hrep"])

    summary = res.summary()
    summary["table"] = {
        "S_v": {"volume": res.volume, "n_vertices": res.n_vertices, "n_inequalities": res.n_inequalities},
        "P_v": {"volume": pv.volume(), "n_vertices": pv.n_vertices, "n_inequalities": pv.n_inequalities},
        "B_v": {"volume": bv.volume(), "n_vertices": bv.n_vertices, "n_inequalities": bv.n_inequalities},
    }
    if args.n0 == 2 and (res.n_vertices, res.n_inequalities) != REFERENCE_COUNTS_N0_2:
        summary["deviation_note"] = (
            f"hull has {res.n_vertices} vertices and {res.n_inequalities} inequalities "
            f"(reference {REFERENCE_COUNTS_N0_2[0]}/{REFERENCE_COUNTS_N0_2[1]}); counts depend on where "
            "the local solver places each zonotope"
        )
        log.warning(summary["deviation_note"])
    write_json_atomic(files["summary"], _to_jsonable(summary))
    config = {"n0": args.n0, "merge_tol": args.merge_tol, "seed": cfg.seed, "params": p.to_dict()}
    write_manifest(out, argv, config, [args.params], files.values())
    print(
        f"S_v: volume {res.volume:.4f}, {res.n_vertices} vertices, {res.n_inequalities} inequalities; "
        f"P_v {pv.volume():.4f}; B_v {bv.volume():.4f}"
    )
    return 0


# -- sim / compare --------------------------------------------------------


def _sim_config(args, controller: str):
    from flatcap.mpc import MpcConfig
    from flatcap.simulator import SimConfig

    scenario = args.ref if args.ref == "hover" else f"ref{args.ref}"
    mpc = MpcConfig.from_json(args.config) if getattr(args, "config", None) else None
    return SimConfig(
        scenario=scenario,
        controller=controller,
        duration=args.duration,
        t_s=args.ts,
        n_p=args.np,
        noise_sigma=args.noise,
        seed=_seed(args),
        n_l=args.nl,
        mpc=mpc,
    )


def _load_sv(args, p) -> Polytope | None:
    if args.sv:
        return Polytope.from_hrep_csv(args.sv)
    from flatcap.simulator import default_sv

    return default_sv(2, p)


def _write_plot_stub(out: Path, csv_name: str) -> Path:
    path = out / f"plot_{Path(csv_name).stem}.py"
    path.write_text(PLOT_STUB.format(csv=csv_name))
    return path


def cmd_sim(args, argv) -> int:
    from flatcap.simulator import run_closed_loop

    p = _params(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _sim_config(args, args.controller)
    s_v = _load_sv(args, p) if cfg.controller == "fb" else None
    try:
        lg = run_closed_loop(cfg, s_v, p=p)
    except FallbackRateExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    paths = lg.write(out)
    paths["plot"] = str(_write_plot_stub(out, Path(paths["csv"]).name))
    write_manifest(out, argv, cfg.to_dict() | {"params": p.to_dict()}, [args.sv, args.config, args.params], paths.values())
    s = lg.summary()
    print(f"{cfg.name}: RMS {s['rms']['total']:.5f} m, {s['n_violations']} input violations, {s['n_fallbacks']} fallbacks")
    return 0


def cmd_compare(args, argv) -> int:
    from flatcap.simulator import compare

    p = _params(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_fb, cfg_pwa = _sim_config(args, "fb"), _sim_config(args, "pwa")
    try:
        report, logs = compare(cfg_fb, cfg_pwa, _load_sv(args, p), p)
    except FallbackRateExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    outputs = []
    for lg in logs.values():
        paths = lg.write(out)
        outputs += list(paths.values())
        outputs.append(str(_write_plot_stub(out, Path(paths["csv"]).name)))
    rpath = out / f"compare_{cfg_fb.scenario}_{cfg_fb.seed}.json"
    write_json_atomic(rpath, _to_jsonable(report))
    outputs.append(str(rpath))
    config = {"fb": cfg_fb.to_dict(), "pwa": cfg_pwa.to_dict(), "params": p.to_dict()}
    write_manifest(out, argv, config, [args.sv, args.config, args.params], outputs)
    for name, entry in report["runs"].items():
        s = entry["summary"]
        line = f"{name}: RMS {s['rms']['total']:.5f} m, violations {s['n_violations']}, mean solve {entry['timing']['mean_solve_time'] * 1e3:.2f} ms"
        if "oscillation" in entry:
            line += f", settled peak-to-peak {entry['oscillation']['mean']:.5f} m"
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatcap", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("approx", help="inner approximation of the flat input set")
    pa.add_argument("--n0", type=int, default=2, help="number of schedule intervals")
    pa.add_argument("--params", help="JSON with g, t_max, phi_max, theta_max")
    pa.add_argument("--out-dir", default=".")
    pa.add_argument("--merge-tol", type=float, default=MERGE_TOL)
    pa.add_argument("--seed", type=int, default=0)
    pa.set_defaults(func=cmd_approx)

    def sim_args(sp):
        sp.add_argument("--ref", choices=["1", "2", "3", "4", "hover"], default="3")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--noise", type=float, default=0.0, help="acceleration noise std [m/s^2]")
        sp.add_argument("--ts", type=float, help="sampling time override [s]")
        sp.add_argument("--np", type=int, help="horizon override")
        sp.add_argument("--nl", type=int, default=50, help="number of PWA models")
        sp.add_argument("--duration", type=float)
        sp.add_argument("--sv", help="S_v H-rep CSV (default: computed with N0 = 2)")
        sp.add_argument("--config", help="controller JSON (Q_diag, R_diag, n_p, t_s)")
        sp.add_argument("--params", help="JSON with g, t_max, phi_max, theta_max")
        sp.add_argument("--out-dir", default=".")

    ps = sub.add_parser("sim", help="one closed-loop run")
    sim_args(ps)
    ps.add_argument("--controller", choices=["fb", "pwa"], default="fb")
    ps.set_defaults(func=cmd_sim)

    pc = sub.add_parser("compare", help="flat vs PWA controller on one scenario")
    sim_args(pc)
    pc.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except FlatcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
