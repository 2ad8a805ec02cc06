"""Closed-loop simulation of the position loop.

The plant is the exact discrete double integrator driven by the true
acceleration ``h_psi(u)`` (plus optional additive noise), held constant over
each sampling interval. Under the flat controller with noise off, the plant
therefore reproduces the prediction model to round-off.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from flatcap.errors import FallbackRateExceeded
from flatcap.flatmap import DEFAULT_LIMITS, ConstraintParams, in_U, inverse_map
from flatcap.geomhull import Polytope
from flatcap.mpc import CONTROLLER_GAINS, FlatMPC, MpcConfig, PwaMPC, discretize, pwa_linearize
from flatcap.trajectories import DEFAULT_DURATION, ReferenceTrajectory, generate

log = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "SimLog",
    "step_plant",
    "run_closed_loop",
    "compare",
    "default_sv",
    "oscillation_metric",
    "default_mpc_config",
]

CSV_SCHEMA = "# flatcap-csv v1"
HOVER_OFFSET = (0.3, -0.2, 0.4)


@dataclass
class SimConfig:
    """One closed-loop run.

    ``t_s`` and ``n_p`` default to the scenario's gains; ``mpc`` replaces
    the gains altogether. ``x0_offset`` shifts the initial position away
    from the first reference sample.
    """

    scenario: str = "ref3"
    controller: str = "fb"
    duration: float | None = None
    t_s: float | None = None
    n_p: int | None = None
    psi: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    n_l: int = 50
    x0_offset: tuple | None = None
    fallback_limit: float = 0.1
    mpc: MpcConfig | None = None

    def __post_init__(self):
        if isinstance(self.scenario, int):
            self.scenario = f"ref{self.scenario}"
        self.controller = self.controller.lower()
        if self.controller not in ("fb", "pwa"):
            raise ValueError("controller must be 'fb' or 'pwa'")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.x0_offset is None and self.scenario == "hover":
            self.x0_offset = HOVER_OFFSET

    @property
    def name(self) -> str:
        return f"{self.scenario}_{self.controller}_{self.seed}"

    def resolved_mpc(self) -> MpcConfig:
        cfg = self.mpc or default_mpc_config(self.scenario, self.controller)
        changes = {}
        if self.t_s is not None:
            changes["t_s"] = self.t_s
        if self.n_p is not None:
            changes["n_p"] = self.n_p
        return cfg.replace(**changes) if changes else cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mpc"] = self.resolved_mpc().to_dict()
        d["x0_offset"] = None if self.x0_offset is None else list(self.x0_offset)
        return d


def default_mpc_config(scenario: str, controller: str) -> MpcConfig:
    """Table gains for ``ref1..ref4``; the hover scenario borrows ref3's."""
    num = 3 if scenario == "hover" else int(str(scenario).removeprefix("ref"))
    return CONTROLLER_GAINS[num][controller]


@lru_cache(maxsize=4)
def default_sv(n0: int = 2, p: ConstraintParams = DEFAULT_LIMITS) -> Polytope:
    """``S_v`` from the approximation pipeline (computed once per process)."""
    from flatcap.approx import ApproxConfig, algorithm1

    return algorithm1(ApproxConfig(n0=n0), p).polytope


def step_plant(xi, u, psi: float = 0.0, t_s: float = 0.1, noise=None, p: ConstraintParams = DEFAULT_LIMITS) -> np.ndarray:
    """``A xi + B (h_psi(u) + noise)``; ``noise`` is an acceleration sample or ``None``."""
    m = discretize(t_s)
    a = inverse_map(u, psi, p)
    if noise is not None:
        a = a + noise
    return m.A @ np.asarray(xi, dtype=float) + m.B @ a


@dataclass
class SimLog:
    """Per-step record of a run. ``xi`` and ``xi_ref`` have one more row
    than the input arrays (the final state)."""

    config: dict
    t: np.ndarray
    xi: np.ndarray
    xi_ref: np.ndarray
    u: np.ndarray
    v: np.ndarray  # planned flat input (flat controller), NaN otherwise
    accel: np.ndarray  # h_psi(u) applied to the plant, noise excluded
    kkt: np.ndarray
    iterations: np.ndarray
    solve_time: np.ndarray
    fallback: np.ndarray
    violation: np.ndarray
    pred_error: np.ndarray
    anchor: np.ndarray
    step_times: np.ndarray | None = None
    notes: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.u)

    @property
    def position_error(self) -> np.ndarray:
        return self.xi[:, :3] - self.xi_ref[:, :3]

    def rms(self, after: float = 0.0) -> dict:
        """RMS position error per axis and total, over samples with ``t >= after``."""
        e = self.position_error[self.t >= after - 1e-12]
        if len(e) == 0:
            return {"x": float("nan"), "y": float("nan"), "z": float("nan"), "total": float("nan")}
        per_axis = np.sqrt(np.mean(e**2, axis=0))
        total = float(np.sqrt(np.mean(np.sum(e**2, axis=1))))
        return {"x": float(per_axis[0]), "y": float(per_axis[1]), "z": float(per_axis[2]), "total": total}

    def summary(self) -> dict:
        """Deterministic figures (no wall-clock data)."""
        return {
            "name": self.config.get("name"),
            "n_steps": self.n_steps,
            "rms": self.rms(),
            "rms_after_5s": self.rms(5.0),
            "final_error": float(np.linalg.norm(self.position_error[-1])),
            "max_abs_u": np.max(np.abs(self.u), axis=0).tolist(),
            "n_violations": int(self.violation.sum()),
            "n_fallbacks": int(self.fallback.sum()),
            "max_kkt_residual": float(np.nanmax(self.kkt)) if np.isfinite(self.kkt).any() else None,
            "max_prediction_error": float(np.nanmax(self.pred_error)),
            "notes": list(self.notes),
        }

    def timing(self) -> dict:
        return {
            "mean_solve_time": float(np.mean(self.solve_time)),
            "max_solve_time": float(np.max(self.solve_time)),
            "total_solve_time": float(np.sum(self.solve_time)),
        }

    # -- export -------------------------------------------------------------
    def write(self, out_dir, stem: str | None = None) -> dict:
        """Write ``{stem}.csv``, ``{stem}.json`` and ``{stem}_timing.csv``.

        The first two depend only on the configuration and seed; wall-clock
        times go to the separate timing file.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.config.get("name", "run")
        paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json", "timing": out / f"{stem}_timing.csv"}
        header = (
            ["k", "t"]
            + [f"{a}" for a in ("x", "y", "z", "vx", "vy", "vz")]
            + [f"{a}_ref" for a in ("x", "y", "z", "vx", "vy", "vz")]
            + ["T", "phi", "theta", "v1", "v2", "v3", "kkt", "iterations", "fallback", "violation", "pred_error", "anchor"]
        )
        with open(paths["csv"], "w", newline="") as fh:
            fh.write(CSV_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.n_steps + 1):
                last = k == self.n_steps
                row = [k, repr(float(self.t[k]))]
                row += [repr(float(x)) for x in self.xi[k]]
                row += [repr(float(x)) for x in self.xi_ref[k]]
                if last:
                    row += [""] * 12
                else:
                    row += [repr(float(x)) for x in self.u[k]]
                    row += [repr(float(x)) for x in self.v[k]]
                    row += [
                        repr(float(self.kkt[k])),
                        int(self.iterations[k]),
                        int(self.fallback[k]),
                        int(self.violation[k]),
                        repr(float(self.pred_error[k])),
                        int(self.anchor[k]),
                    ]
                w.writerow(row)
        paths["json"].write_text(json.dumps({"config": self.config, "summary": self.summary()}, indent=2, sort_keys=True))
        with open(paths["timing"], "w", newline="") as fh:
            fh.write(CSV_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(["k", "solve_time_s"])
            for k, s in enumerate(self.solve_time):
                w.writerow([k, repr(float(s))])
        return {k: str(v) for k, v in paths.items()}


def _initial_state(ref: ReferenceTrajectory, cfg: SimConfig) -> np.ndarray:
    xi0 = ref.xi[0].copy()
    if cfg.x0_offset is not None:
        xi0[:3] += np.asarray(cfg.x0_offset, dtype=float)
    return xi0


def run_closed_loop(
    cfg: SimConfig,
    s_v: Polytope | None = None,
    ref: ReferenceTrajectory | None = None,
    p: ConstraintParams = DEFAULT_LIMITS,
) -> SimLog:
    """Reference, controller, input map and plant in a loop.

    Parameters
    ----------
    cfg : SimConfig
    s_v : Polytope, optional
        Flat input set for the flat controller; defaults to :func:`default_sv`.
    ref : ReferenceTrajectory, optional
        Overrides the scenario's generated reference.

    Raises
    ------
    FallbackRateExceeded
        The controller fell back on more than ``cfg.fallback_limit`` of the
        steps.
    """
    mcfg = cfg.resolved_mpc()
    t_s = mcfg.t_s
    duration = cfg.duration
    if duration is None and cfg.scenario != "hover":
        duration = DEFAULT_DURATION[int(cfg.scenario.removeprefix("ref"))]
    if ref is None:
        ref = generate(cfg.scenario, t_s, duration, p, cfg.psi)
    if abs(ref.t_s - t_s) > 1e-12:
        raise ValueError("reference sampling differs from the controller's t_s")

    if cfg.controller == "fb":
        ctrl = FlatMPC(mcfg, s_v if s_v is not None else default_sv(2, p), cfg.psi, p)
    else:
        ctrl = PwaMPC(mcfg, pwa_linearize(ref, cfg.n_l, t_s, cfg.psi, p), p)
    model = discretize(t_s)
    rng = np.random.default_rng(cfg.seed)

    n = ref.n - 1
    xi = np.zeros((n + 1, 6))
    xi[0] = _initial_state(ref, cfg)
    u = np.zeros((n, 3))
    v = np.full((n, 3), np.nan)
    accel = np.zeros((n, 3))
    kkt = np.zeros(n)
    iters = np.zeros(n, dtype=int)
    times = np.zeros(n)
    fb = np.zeros(n, dtype=bool)
    pred_err = np.zeros(n)
    anchor = np.full(n, -1, dtype=int)
    limit = cfg.fallback_limit * n

    for k in range(n):
        xr, vr, ur = ref.window(k, mcfg.n_p)
        if cfg.controller == "fb":
            u[k], v[k], st = ctrl.step(xi[k], xr, vr)
        else:
            u[k], st = ctrl.step(xi[k], xr, ur)
            anchor[k] = st.anchor
        kkt[k], iters[k], times[k], fb[k] = st.kkt_residual, st.iterations, st.solve_time, st.fallback
        if fb.sum() > limit:
            raise FallbackRateExceeded(
                f"{cfg.name}: fallback used on {int(fb.sum())} of {k + 1} steps (limit {cfg.fallback_limit:.0%} of {n})"
            )
        accel[k] = inverse_map(u[k], cfg.psi, p)
        noise = rng.normal(0.0, cfg.noise_sigma, 3) if cfg.noise_sigma > 0 else np.zeros(3)
        xi[k + 1] = model.A @ xi[k] + model.B @ (accel[k] + noise)
        pred_err[k] = float(np.max(np.abs(xi[k + 1] - st.predicted[0])))

    violation = ~in_U(u, p, tol=1e-9)
    config = cfg.to_dict()
    config["name"] = cfg.name
    notes = []
    if fb.any():
        notes.append(f"fallback used on {int(fb.sum())} steps")
    return SimLog(config, ref.t.copy(), xi, ref.xi.copy(), u, v, accel, kkt, iters, times, fb, violation, pred_err, anchor, ref.step_times, notes)


def oscillation_metric(log: SimLog, settle_fraction: float = 0.5) -> np.ndarray:
    """Peak-to-peak position error in the settled part of each hold.

    For every set-point hold ``[t_i, t_{i+1})`` the first ``settle_fraction``
    is treated as the step transient and skipped; over the rest, the
    per-axis peak-to-peak of the tracking error is taken and its largest
    axis value reported. Returns one number per hold.
    """
    if log.step_times is None:
        raise ValueError("oscillation metric needs a step reference")
    edges = np.r_[log.step_times, log.t[-1] + 1e-9]
    e = log.position_error
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        start = a + settle_fraction * (b - a)
        mask = (log.t >= start - 1e-9) & (log.t < b - 1e-9)
        if mask.sum() < 2:
            continue
        seg = e[mask]
        out.append(float(np.max(seg.max(axis=0) - seg.min(axis=0))))
    return np.array(out)


def compare(cfg_a: SimConfig, cfg_b: SimConfig, s_v: Polytope | None = None, p: ConstraintParams = DEFAULT_LIMITS) -> tuple[dict, dict]:
    """Run two configurations on the same scenario and tabulate them.

    Returns
    -------
    report : dict
        Per-run summary and timing; step references add the oscillation
        metric.
    logs : dict
        The :class:`SimLog` of each run, keyed like ``report["runs"]``.
    """
    if cfg_a.scenario != cfg_b.scenario:
        raise ValueError("comparison needs the same scenario")
    logs = {}
    for cfg in (cfg_a, cfg_b):
        key = cfg.name if cfg_a.name != cfg_b.name else f"{cfg.name}_{len(logs)}"
        logs[key] = run_closed_loop(cfg, s_v, p=p)
    report = {"scenario": cfg_a.scenario, "runs": {}}
    for key, lg in logs.items():
        entry = {"summary": lg.summary(), "timing": lg.timing()}
        if lg.step_times is not None:
            osc = oscillation_metric(lg)
            entry["oscillation"] = {"per_hold": osc.tolist(), "mean": float(osc.mean())}
        report["runs"][key] = entry
    return report, logs
