"""Robust design for bounded CSI errors and uncertain target directions.

User channels are only known up to a ball ``||h_k - h_hat_k|| <= u_k``; the
worst-case SINR constraint over the ball becomes one LMI per user through the
S-procedure.  Each eavesdropper direction is only known up to an interval,
so its leakage constraint is replicated over a discretized angle set and the
desired mainlobe is widened to cover the interval.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import conic
from .conic import ConicProblem, SolverSettings
from .errors import ContractError
from .radar import BeampatternSpec, add_common_constraints, add_radar_objective
from .scenario import Scenario
from .sdr import (DesignResult, SecurityThresholds, _solve_checked, add_eve_rows,
                  recover_from_relaxed)


@dataclasses.dataclass(frozen=True)
class CsiUncertainty:
    """Estimated user channels ``h_hat_k`` (rows, 1-D each) and error radii ``u_k``."""

    estimated_channels: np.ndarray   # K x M, row k is h_hat_k (not conjugated)
    radii: tuple[float, ...]

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.estimated_channels, dtype=complex))
        radii = tuple(float(u) for u in self.radii)
        if len(radii) != h.shape[0]:
            raise ContractError("one radius per user is required")
        if any(not (0.0 <= u < np.inf) for u in radii):
            raise ContractError("radii must be finite and nonnegative")
        object.__setattr__(self, "estimated_channels", h)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def from_scenario(cls, scenario: Scenario, radii) -> "CsiUncertainty":
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (scenario.num_users,))
        h = np.stack([scenario.user_channel(k) for k in range(scenario.num_users)])
        return cls(h, tuple(radii))

    @classmethod
    def relative(cls, scenario: Scenario, fraction: float) -> "CsiUncertainty":
        """Radius ``u_k = fraction * ||h_hat_k||`` for every user."""
        norms = np.linalg.norm(scenario.channel, axis=1)
        return cls.from_scenario(scenario, fraction * norms)


@dataclasses.dataclass(frozen=True)
class AngularUncertaintySet:
    """Per-target discrete direction sets covering ``[theta_q - d, theta_q + d]``."""

    angles_deg: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        sets = tuple(tuple(float(a) for a in s) for s in self.angles_deg)
        if any(len(s) == 0 for s in sets):
            raise ContractError("every angular uncertainty set must be nonempty")
        object.__setattr__(self, "angles_deg", sets)

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.angles_deg]


def angular_uncertainty_sets(scenario: Scenario, step_deg: float | None = None) -> AngularUncertaintySet:
    """Discretize each target's interval at ``step_deg`` (default: grid resolution), endpoints included."""
    step = scenario.config.grid_resolution if step_deg is None else step_deg
    sets = []
    for tgt in scenario.targets:
        d = tgt.angle_uncertainty_deg
        n = int(np.floor(d / step + 1e-9))
        offs = step * np.arange(-n, n + 1)
        if d - n * step > 1e-9:
            offs = np.concatenate([[-d], offs, [d]])
        angles = np.clip(tgt.angle_deg + offs, -90.0 + 1e-9, 90.0 - 1e-9)
        sets.append(tuple(np.round(angles, 12)))
    return AngularUncertaintySet(tuple(sets))


def widened_spec(spec: BeampatternSpec, scenario: Scenario) -> BeampatternSpec:
    """Mainlobe widened by ``2 * max(angle uncertainty)`` so every possible target position is covered."""
    extra = 2.0 * max((t.angle_uncertainty_deg for t in scenario.targets), default=0.0)
    return spec.widened(extra) if extra > 0 else spec


def build_p4(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds,
             csi_unc: CsiUncertainty, ang_unc: AngularUncertaintySet | None = None) -> ConicProblem:
    """Relaxed robust program: S-procedure LMIs per user, Eve rows over every uncertain direction."""
    cfg = scenario.config
    K, M = scenario.num_users, cfg.M
    if csi_unc.estimated_channels.shape != (K, M):
        raise ContractError("CSI uncertainty does not match the scenario dimensions")
    if ang_unc is None:
        ang_unc = angular_uncertainty_sets(scenario)
    if len(ang_unc.angles_deg) != scenario.num_targets:
        raise ContractError("one angular set per target is required")

    prob = ConicProblem("robust")
    R = prob.hermitian("R", M)
    Rks = [prob.hermitian(f"R_{k + 1}", M) for k in range(K)]
    alpha = prob.scalar("alpha")
    add_common_constraints(prob, R, alpha, cfg)
    R_com = conic.sum_exprs(Rks)
    for Rk in Rks:
        prob.add_psd(Rk, tag="psd_Rk")
    prob.add_psd(R - R_com, tag="psd_Rrad")

    if thresholds.users_active:
        factor = 1.0 + 1.0 / thresholds.gamma_c
        sigma2 = cfg.noise_var_lu
        for k, Rk in enumerate(Rks):
            h = csi_unc.estimated_channels[k]
            u = csi_unc.radii[k]
            S = Rk * factor - R
            if u == 0.0:
                prob.add_nonneg(S.quad(h) - sigma2, tag="sinr_lu")
                continue
            t = prob.scalar(f"t_{k + 1}")
            prob.add_nonneg(t, tag="t")
            Sh = S.matvec(h)
            corner = S.quad(h) - t * (u * u) - sigma2
            block = conic.bmat([[S + conic.eye_times(t, M), Sh], [Sh.H, corner]])
            prob.add_psd(block, tag="lmi")

    add_eve_rows(prob, R, R_com, scenario, thresholds, angles_per_target=ang_unc.angles_deg)
    add_radar_objective(prob, R, alpha, widened_spec(spec, scenario), cfg)
    return prob


def solve_robust(scenario: Scenario, spec: BeampatternSpec, thresholds: SecurityThresholds,
                 csi_unc: CsiUncertainty, ang_unc: AngularUncertaintySet | None = None,
                 settings: SolverSettings | None = None) -> DesignResult:
    """Robust secure design; recovery uses the same rank-one formula as the SDR designer."""
    if ang_unc is None:
        ang_unc = angular_uncertainty_sets(scenario)
    prob = build_p4(scenario, spec, thresholds, csi_unc, ang_unc)
    sol = _solve_checked(prob, "robust", settings)
    est = scenario.__class__(scenario.config, np.conj(csi_unc.estimated_channels), scenario.targets)
    res = recover_from_relaxed(est, widened_spec(spec, scenario), thresholds, sol, "robust")
    res.metadata.update(
        csi_radii=list(csi_unc.radii),
        angle_set_sizes=ang_unc.sizes,
        beam_width_deg=widened_spec(spec, scenario).beam_width_deg,
    )
    return res
