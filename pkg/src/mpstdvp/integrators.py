"""Projector-splitting TDVP integrators and DMRG as their infinite-step limit.

The one-site and two-site sweeps are each written once. A ``mode`` switch
decides what happens at a center block: exponentiate (real or imaginary time)
or replace the block by the lowest eigenvector of its effective Hamiltonian
(DMRG), in which case the backward bond/site evolution is skipped.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .environments import EnvironmentStack, build_blocks
from .errors import ConfigError, NumericalFailure
from .krylov import KrylovConfig, expm_apply, ground_state
from .mpo import Mpo, mpo_expectation
from .mps import MpsState, canonicalize, shift_center
from .tensor_core import qr_positive, svd_truncate

log = logging.getLogger(__name__)

SCHEMES = ("one_site", "two_site", "dmrg1", "dmrg2")
MODES = ("real", "imaginary")


@dataclass(frozen=True)
class Truncation:
    epsilon: float = 0.0
    d_max: int | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("truncation epsilon must be non-negative")
        if self.d_max is not None and self.d_max < 1:
            raise ConfigError("truncation d_max must be positive")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    mode: str = "real"
    scheme: str = "one_site"
    order: int = 2
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    truncation: Truncation | None = None
    skip_backward_in_imaginary: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.order not in (2, 4):
            raise ConfigError("order must be 2 or 4")
        two_site = self.scheme in ("two_site", "dmrg2")
        if two_site and self.truncation is None:
            raise ConfigError(f"scheme {self.scheme!r} requires truncation settings")
        if not two_site and self.truncation is not None:
            raise ConfigError(f"scheme {self.scheme!r} does not truncate; drop the truncation settings")


@dataclass
class StepReport:
    energy: float
    norm: float
    max_bond: int
    truncation_weight: float = 0.0
    krylov_warnings: int = 0
    projection_error: float | None = None

    def merge(self, later: "StepReport") -> "StepReport":
        return StepReport(
            energy=later.energy,
            norm=later.norm,
            max_bond=max(self.max_bond, later.max_bond),
            truncation_weight=self.truncation_weight + later.truncation_weight,
            krylov_warnings=self.krylov_warnings + later.krylov_warnings,
            projection_error=later.projection_error,
        )


class _Sweep:
    """Mutable working copy of a right-canonical state plus its environments."""

    def __init__(self, state: MpsState, h: Mpo, cfg: IntegratorConfig, dt: float, action: str):
        if state.center is None and state.bond is None:
            state = canonicalize(state, "right")
        elif state.center != 0:
            state = shift_center(state, 0)
        self.tensors = list(state.tensors)
        self.n_sites = len(self.tensors)
        self.h = h
        self.cfg = cfg
        self.kcfg = cfg.krylov
        self.action = action  # 'real', 'imaginary' or 'ground'
        self.dt = dt
        self.stack = EnvironmentStack(h, self.n_sites)
        build_blocks(self.stack, self.tensors, 0, 1)
        self.warnings = 0
        self.truncation_weight = 0.0
        self.energy = math.nan
        self.max_bond = max(t.shape[2] for t in self.tensors)
        self.skip_backward = action == "ground" or (
            action == "imaginary" and cfg.skip_backward_in_imaginary
        )
        # exponent prefactor: exp(z * H * tau)
        self.z = -1j if action == "real" else -1.0

    # -- local updates ---------------------------------------------------

    def forward(self, matvec, x, tau):
        """Evolve a center block forward by ``tau`` (or solve for the ground state)."""
        if self.action == "ground":
            res = ground_state(matvec, x, self.kcfg)
            if not res.converged:
                self.warnings += 1
            self.energy = res.value
            return res.vector
        return self._exp(matvec, x, self.z * tau)

    def backward(self, matvec, x, tau):
        """Evolve a bond/site block backward by ``tau``; a no-op in the DMRG limit."""
        if self.skip_backward:
            return x
        return self._exp(matvec, x, -self.z * tau)

    def _exp(self, matvec, x, z):
        res = expm_apply(matvec, x, z, self.kcfg, normalize=self.action == "imaginary")
        if not res.converged:
            self.warnings += 1
        return res.vector

    def energy_at(self, n):
        ac = self.tensors[n]
        hx = self.stack.h1_matvec(n, ac)
        return float(np.vdot(ac, hx).real / np.vdot(ac, ac).real)

    def result(self):
        return MpsState(self.tensors, center=0)

    def report(self):
        norm = float(np.linalg.norm(self.tensors[0]))
        energy = self.energy_at(0)
        if not np.isfinite(energy) or not np.isfinite(norm):
            raise NumericalFailure(f"non-finite energy/norm after step (E={energy}, norm={norm})")
        return StepReport(
            energy=energy,
            norm=norm,
            max_bond=max(self.max_bond, max(t.shape[2] for t in self.tensors)),
            truncation_weight=self.truncation_weight,
            krylov_warnings=self.warnings,
        )

    # -- one-site sweep ----------------------------------------------------

    def one_site(self):
        ts, st, half = self.tensors, self.stack, 0.5 * self.dt
        last = self.n_sites - 1
        for n in range(last):
            ts[n] = self.forward(st.h1(n), ts[n], half)
            dl, d, dr = ts[n].shape
            q, c = qr_positive(ts[n].reshape(dl * d, dr), "left")
            ts[n] = q.reshape(dl, d, -1)
            st.refresh(n, "left", ts[n])
            c = self.backward(st.k0(n + 1), c, half)
            ts[n + 1] = np.tensordot(c, ts[n + 1], axes=(1, 0))
        ts[last] = self.forward(st.h1(last), ts[last], self.dt)
        for n in range(last - 1, -1, -1):
            dl, d, dr = ts[n + 1].shape
            q, c = qr_positive(ts[n + 1].reshape(dl, d * dr), "right")
            ts[n + 1] = q.reshape(-1, d, dr)
            st.refresh(n + 1, "right", ts[n + 1])
            c = self.backward(st.k0(n + 1), c, half)
            ts[n] = np.tensordot(ts[n], c, axes=(2, 0))
            ts[n] = self.forward(st.h1(n), ts[n], half)

    # -- two-site sweep ----------------------------------------------------

    def _split(self, theta, fold):
        dl, d1, d2, dr = theta.shape
        tr = self.cfg.truncation
        res = svd_truncate(theta.reshape(dl * d1, d2 * dr), tr.epsilon, tr.d_max)
        self.truncation_weight += res.discarded_weight
        k = res.s.size
        self.max_bond = max(self.max_bond, k)
        if fold == "right":
            left = res.u.reshape(dl, d1, k)
            right = (res.s[:, None] * res.vh).reshape(k, d2, dr)
        else:
            left = (res.u * res.s[None, :]).reshape(dl, d1, k)
            right = res.vh.reshape(k, d2, dr)
        return left, right

    def two_site(self):
        ts, st, half = self.tensors, self.stack, 0.5 * self.dt
        last = self.n_sites - 2
        for n in range(last):
            theta = np.tensordot(ts[n], ts[n + 1], axes=(2, 0))
            theta = self.forward(st.h2(n), theta, half)
            ts[n], ts[n + 1] = self._split(theta, "right")
            st.refresh(n, "left", ts[n])
            ts[n + 1] = self.backward(st.h1(n + 1), ts[n + 1], half)
        theta = np.tensordot(ts[last], ts[last + 1], axes=(2, 0))
        theta = self.forward(st.h2(last), theta, self.dt)
        ts[last], ts[last + 1] = self._split(theta, "left")
        st.refresh(last + 1, "right", ts[last + 1])
        for n in range(last - 1, -1, -1):
            ts[n + 1] = self.backward(st.h1(n + 1), ts[n + 1], half)
            theta = np.tensordot(ts[n], ts[n + 1], axes=(2, 0))
            theta = self.forward(st.h2(n), theta, half)
            ts[n], ts[n + 1] = self._split(theta, "left")
            st.refresh(n + 1, "right", ts[n + 1])


def _finish_single_site(sw: _Sweep):
    # N = 1: the effective Hamiltonian is the full Hamiltonian
    sw.tensors[0] = sw.forward(sw.stack.h1(0), sw.tensors[0], sw.dt)


def _run(state, h, cfg, dt, action, two_site):
    if two_site and state.n_sites < 2:
        raise ValueError("two-site schemes need at least two sites")
    sw = _Sweep(state, h, cfg, dt, action)
    if sw.n_sites == 1:
        _finish_single_site(sw)
    elif two_site:
        sw.two_site()
    else:
        sw.one_site()
    return sw.result(), sw.report()


def tdvp1_symmetric_step(state: MpsState, h: Mpo, cfg: IntegratorConfig, dt: float | None = None):
    """One symmetric 1-site step (left-to-right half step, full step at the last site, mirror).

    ``dt`` overrides ``cfg.dt`` and may be negative. Returns the new
    right-canonical state and a :class:`StepReport`.
    """
    return _run(state, h, cfg, cfg.dt if dt is None else dt, cfg.mode, two_site=False)


def tdvp2_symmetric_step(state: MpsState, h: Mpo, cfg: IntegratorConfig, dt: float | None = None):
    """One symmetric 2-site step with SVD truncation after every two-site update."""
    if cfg.truncation is None:
        raise ConfigError("two-site step requires truncation settings")
    return _run(state, h, cfg, cfg.dt if dt is None else dt, cfg.mode, two_site=True)


def dmrg1_sweep(state: MpsState, h: Mpo, cfg: IntegratorConfig):
    """Full back-and-forth 1-site DMRG sweep; returns ``(state, energy)``."""
    new, rep = _run(state, h, cfg, cfg.dt, "ground", two_site=False)
    return new, rep.energy


def dmrg2_sweep(state: MpsState, h: Mpo, cfg: IntegratorConfig):
    """Full back-and-forth 2-site DMRG sweep with truncation; returns ``(state, energy)``."""
    if cfg.truncation is None:
        raise ConfigError("dmrg2 requires truncation settings")
    new, rep = _run(state, h, cfg, cfg.dt, "ground", two_site=True)
    return new, rep.energy


# -- composition --------------------------------------------------------------

TRIPLE_JUMP = (
    1.0 / (2.0 - 2.0 ** (1.0 / 3.0)),
    1.0 - 2.0 / (2.0 - 2.0 ** (1.0 / 3.0)),
    1.0 / (2.0 - 2.0 ** (1.0 / 3.0)),
)


def compose_order4(step: Callable) -> Callable:
    """Triple-jump composition of a symmetric second-order step into a fourth-order one."""

    def composed(state, h, cfg, dt=None):
        dt = cfg.dt if dt is None else dt
        report = None
        for gamma in TRIPLE_JUMP:
            state, rep = step(state, h, cfg, gamma * dt)
            report = rep if report is None else report.merge(rep)
        return state, report

    composed.__name__ = f"{getattr(step, '__name__', 'step')}_order4"
    return composed


def step_function(cfg: IntegratorConfig) -> Callable:
    """The one-step map selected by ``cfg.scheme`` and ``cfg.order``."""
    if cfg.scheme == "one_site":
        base = tdvp1_symmetric_step
    elif cfg.scheme == "two_site":
        base = tdvp2_symmetric_step
    else:
        raise ConfigError(f"scheme {cfg.scheme!r} is not a time-stepping scheme")
    return compose_order4(base) if cfg.order == 4 else base


@dataclass
class TrajectoryPoint:
    t: float
    report: StepReport
    observables: dict


def evolve(state: MpsState, h: Mpo, total_time: float, cfg: IntegratorConfig,
           callbacks: dict[str, Callable[[MpsState], object]] | None = None, stride: int = 1):
    """Step ``state`` to ``total_time`` with fixed ``cfg.dt``.

    Observables in ``callbacks`` are evaluated at ``t = 0`` and every
    ``stride`` steps (and at the final time). Returns ``(final_state, trajectory)``.
    """
    callbacks = callbacks or {}
    if total_time < 0:
        raise ValueError("total_time must be non-negative")
    steps_f = total_time / cfg.dt
    steps = int(round(steps_f))
    if abs(steps - steps_f) > 1e-9 * max(1.0, steps_f):
        warnings.warn(f"T={total_time} is not a multiple of dt={cfg.dt}; using {steps} steps",
                      RuntimeWarning, stacklevel=2)
    if state.center != 0:
        state = canonicalize(state, "right")
    step = step_function(cfg)

    def observe(s):
        return {name: fn(s) for name, fn in callbacks.items()}

    nrm = float(np.linalg.norm(state.tensors[0]))
    rep0 = StepReport(energy=mpo_expectation(state, h) / nrm ** 2, norm=nrm, max_bond=max(state.bond_dims))
    trajectory = [TrajectoryPoint(0.0, rep0, observe(state))]
    for k in range(1, steps + 1):
        state, rep = step(state, h, cfg)
        if not (np.isfinite(rep.energy) and np.isfinite(rep.norm)):
            raise NumericalFailure(f"non-finite energy at step {k}")
        if k % stride == 0 or k == steps:
            trajectory.append(TrajectoryPoint(k * cfg.dt, rep, observe(state)))
    return state, trajectory


def imaginary_config(cfg: IntegratorConfig, **changes) -> IntegratorConfig:
    return replace(cfg, mode="imaginary", **changes)
