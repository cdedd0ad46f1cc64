"""Experiment drivers behind the ``simulate`` command.

CSV columns are fixed per task:

* quench: ``t,energy,norm,entropy_mid,projection_error``
* lightcone: ``t,r,signal`` with ``r`` the 0-based site index; the kick is
  applied at site ``N // 2``

Every CSV starts with a ``#`` provenance line carrying the config digest and
the package version. Floats are written with ``repr`` so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from . import __version__
from .config import ExperimentConfig, GroundConfig
from .errors import ConfigError
from .integrators import IntegratorConfig, Truncation, dmrg1_sweep, dmrg2_sweep, evolve
from .krylov import KrylovConfig
from .mpo import SIGMA_X, SIGMA_Y, Mpo, mpo_expectation, xy_nn_mpo, xy_power_law_mpo
from .mps import (
    MpsState, apply_local, canonicalize, dumps_state, entanglement_entropy, loads_state,
    local_profile, product_mps, random_mps,
)
from .oracle import bond_residuals, projection_error
from .verify import run_all

log = logging.getLogger(__name__)

QUENCH_COLUMNS = ("t", "energy", "norm", "entropy_mid", "projection_error")
LIGHTCONE_COLUMNS = ("t", "r", "signal")


def build_model(cfg: ExperimentConfig, alpha: float) -> Mpo:
    m = cfg.model
    if m.type == "xy_nn":
        return xy_nn_mpo(m.N, m.J)
    return xy_power_law_mpo(m.N, m.J, alpha, m.fit_tol)


def kick_operator() -> np.ndarray:
    """``exp(i pi sigma^y / 4)``."""
    return scipy.linalg.expm(0.25j * np.pi * SIGMA_Y)


def _fmt(x) -> str:
    return repr(float(x))


def _provenance(cfg: ExperimentConfig, **extra) -> str:
    tags = " ".join(f"{k}={v}" for k, v in extra.items())
    return f"# config_sha256={cfg.digest} version={__version__} task={cfg.task} {tags}".rstrip() + "\n"


def _write_csv(path: Path, header: str, columns, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header)
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _suffix(cfg: ExperimentConfig, alpha: float) -> str:
    if cfg.model.type == "xy_nn":
        return ""
    return f"_alpha{alpha:g}"


# -- ground state ------------------------------------------------------------------

@dataclass
class GroundResult:
    state: MpsState
    energy: float
    sweeps: int
    sweeps_performed: int
    converged: bool


def find_ground(h: Mpo, g: GroundConfig, seed: int = 0, initial: MpsState | None = None,
                krylov: KrylovConfig | None = None) -> GroundResult:
    """Two-site sweeps to grow the bonds, then one-site sweeps, until ``|dE| < g.tol``.

    Local eigensolves start loose and tighten with the energy change of the
    previous sweep, down to ``krylov.tol``. ``sweeps`` counts the sweeps that
    still changed the energy by at least ``g.tol``, so restarting from a
    converged state reports zero.
    """
    krylov = krylov or KrylovConfig(tol=1e-12, max_dim=40)
    state = initial if initial is not None else random_mps(h.n_sites, h.phys_dims[0], g.initial_bond_dim, seed)
    state = canonicalize(state, "right")
    energy = mpo_expectation(state, h)
    trunc = Truncation(g.epsilon, g.d_max)
    sweeps = performed = 0
    converged = False
    delta = np.inf
    for scheme, budget in (("dmrg2", g.two_site_sweeps), ("dmrg1", g.max_sweeps)):
        sweep_fn = dmrg2_sweep if scheme == "dmrg2" else dmrg1_sweep
        converged = False
        for _ in range(budget):
            if performed >= g.max_sweeps:
                break
            local_tol = max(krylov.tol, min(1e-6, 1e-3 * delta))
            cfg = IntegratorConfig(dt=1.0, scheme=scheme, krylov=replace(krylov, tol=local_tol),
                                   truncation=trunc if scheme == "dmrg2" else None)
            state, new = sweep_fn(state, h, cfg)
            performed += 1
            delta = abs(new - energy)
            energy = new
            log.info("sweep %d (%s): E=%.14f dE=%.3e", performed, scheme, energy, delta)
            if delta < g.tol and local_tol <= krylov.tol:
                converged = True
                break
            if delta >= g.tol:
                sweeps += 1
    return GroundResult(state, float(energy), sweeps, performed, converged)


def run_ground(cfg: ExperimentConfig, alpha: float, out_dir: Path) -> dict:
    h = build_model(cfg, alpha)
    initial = None
    if cfg.ground.checkpoint and Path(cfg.ground.checkpoint).exists():
        initial = loads_state(Path(cfg.ground.checkpoint).read_text())
        if initial.n_sites != h.n_sites:
            raise ConfigError("checkpoint length does not match model.N")
    krylov = cfg.integrator.krylov if cfg.integrator else None
    res = find_ground(h, cfg.ground, cfg.seed, initial, krylov)
    report = {
        "E": res.energy,
        "sweeps": res.sweeps,
        "sweeps_performed": res.sweeps_performed,
        "max_bond": max(res.state.bond_dims),
        "projection_error": projection_error(res.state, h),
        "max_bond_residual": max(bond_residuals(res.state, h), default=0.0),
        "status": "converged" if res.converged else "not_converged",
        "alpha": alpha if cfg.model.type == "xy_power_law" else None,
        "config_sha256": cfg.digest,
        "version": __version__,
    }
    stem = f"{cfg.prefix}ground{_suffix(cfg, alpha)}"
    (out_dir / f"{stem}.mps").write_text(dumps_state(res.state))
    (out_dir / f"{stem}.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


# -- quench ------------------------------------------------------------------------

def initial_state(cfg: ExperimentConfig, n_sites: int) -> MpsState:
    init = cfg.initial_state
    kind = init["type"]
    up, down = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    if kind == "neel":
        return product_mps([up if n % 2 == 0 else down for n in range(n_sites)])
    if kind == "up":
        return product_mps([up] * n_sites)
    if kind == "x_polarized":
        return product_mps([np.array([1.0, 1.0])] * n_sites)
    if kind == "random":
        return random_mps(n_sites, 2, init["bond_dim"], cfg.seed)
    state = loads_state(Path(init["path"]).read_text())
    if state.n_sites != n_sites:
        raise ConfigError("initial_state checkpoint length does not match model.N")
    return state


def run_quench(cfg: ExperimentConfig, alpha: float, out_dir: Path) -> Path:
    h = build_model(cfg, alpha)
    state = canonicalize(initial_state(cfg, h.n_sites), "right")
    mid = h.n_sites // 2
    callbacks = {
        "entropy_mid": lambda s: entanglement_entropy(s, mid),
        "projection_error": lambda s: projection_error(s, h),
    }
    _, traj = evolve(state, h, cfg.total_time, cfg.integrator, callbacks, cfg.stride)
    rows = [
        (_fmt(p.t), _fmt(p.report.energy), _fmt(p.report.norm),
         _fmt(p.observables["entropy_mid"]), _fmt(p.observables["projection_error"]))
        for p in traj
    ]
    path = out_dir / f"{cfg.prefix}quench{_suffix(cfg, alpha)}.csv"
    _write_csv(path, _provenance(cfg, alpha=f"{alpha:g}"), QUENCH_COLUMNS, rows)
    return path


# -- light cone ----------------------------------------------------------------------

def lightcone_signal(ground: MpsState, h: Mpo, total_time: float, integ: IntegratorConfig,
                     stride: int = 1, center: int | None = None):
    """``|<sigma^x_r>_kicked - <sigma^x_r>_plain|`` on the sampled times.

    Returns ``(times, signal)`` with ``signal`` of shape ``(len(times), N)``.
    """
    center = h.n_sites // 2 if center is None else center
    kicked = apply_local(ground, kick_operator(), center)
    callbacks = {"sx": lambda s: local_profile(s, SIGMA_X).real}
    _, plain = evolve(ground, h, total_time, integ, callbacks, stride)
    _, kick = evolve(kicked, h, total_time, integ, callbacks, stride)
    times = np.array([p.t for p in plain])
    signal = np.array([np.abs(a.observables["sx"] - b.observables["sx"]) for a, b in zip(kick, plain)])
    return times, signal


def run_lightcone(cfg: ExperimentConfig, alpha: float, out_dir: Path) -> Path:
    h = build_model(cfg, alpha)
    ground = find_ground(h, cfg.ground, cfg.seed, krylov=cfg.integrator.krylov).state
    times, signal = lightcone_signal(ground, h, cfg.total_time, cfg.integrator, cfg.stride)
    rows = [
        (_fmt(t), str(r), _fmt(signal[k, r]))
        for k, t in enumerate(times)
        for r in range(h.n_sites)
    ]
    path = out_dir / f"{cfg.prefix}lightcone{_suffix(cfg, alpha)}.csv"
    _write_csv(path, _provenance(cfg, alpha=f"{alpha:g}"), LIGHTCONE_COLUMNS, rows)
    return path


# -- verify --------------------------------------------------------------------------

def run_verify(cfg: ExperimentConfig, out_dir: Path) -> list[dict]:
    results = run_all(cfg.verify["instances"], cfg.seed, float(cfg.verify["tol"]))
    report = [r.as_dict() for r in results]
    (out_dir / f"{cfg.prefix}verify.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def run_task(cfg: ExperimentConfig, alpha: float | None, out_dir: str | Path):
    """Run one task for one coupling exponent; the unit fanned out by ``--jobs``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.task == "verify":
        return run_verify(cfg, out_dir)
    runner = {"ground": run_ground, "quench": run_quench, "lightcone": run_lightcone}[cfg.task]
    return runner(cfg, alpha, out_dir)
