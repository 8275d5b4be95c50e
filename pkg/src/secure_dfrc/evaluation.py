"""Performance metrics, frame-level validation and Monte-Carlo sweeps."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
from typing import Sequence

import numpy as np

from .errors import ContractError, DfrcError, InfeasibleDesign, SweepError
from .radar import BeampatternSpec, beampattern_grid, radar_only_design
from .scenario import (Scenario, SystemConfig, Target, generate_channel, steering_matrix,
                       synthesize_frame)
from .sdr import DesignResult, SecurityThresholds, solve_sdr

DESIGNERS = ("sdr", "zf", "robust")
SWEEP_AXES = ("gamma_c_db", "gamma_e_db", "csi_fraction")
SWEEP_METRICS = ("mse", "sum_rate", "secrecy_rate", "min_user_sinr_db", "max_eve_sinr_db", "objective")


def _db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


@dataclasses.dataclass
class MetricsReport:
    user_sinr: np.ndarray
    user_sinr_db: np.ndarray
    eve_sinr: np.ndarray
    eve_sinr_db: np.ndarray
    sum_rate: float
    secrecy_rate: float
    beampattern_mse: float
    feasible: bool = True

    def as_dict(self) -> dict:
        return {
            "user_sinr": self.user_sinr.tolist(),
            "user_sinr_db": self.user_sinr_db.tolist(),
            "eve_sinr": self.eve_sinr.tolist(),
            "eve_sinr_db": self.eve_sinr_db.tolist(),
            "sum_rate": self.sum_rate,
            "secrecy_rate": self.secrecy_rate,
            "beampattern_mse": self.beampattern_mse,
            "feasible": self.feasible,
        }


def _sinr_from_precoders(Wc: np.ndarray, Wr: np.ndarray, H: np.ndarray, noise: float) -> np.ndarray:
    # H rows are h_k^H, so G[k, i] = h_k^H w_i
    G = H @ Wc
    sig = np.abs(np.diag(G)) ** 2
    interf = np.sum(np.abs(G) ** 2, axis=1) - sig + np.sum(np.abs(H @ Wr) ** 2, axis=1)
    return sig / (interf + noise)


def user_sinr(result: DesignResult, scenario: Scenario) -> np.ndarray:
    """Per-user SINR with the other users' streams and the whole radar signal as interference."""
    pre = result.precoders
    return _sinr_from_precoders(pre.comm, pre.radar, scenario.channel, scenario.config.noise_var_lu)


def eve_sinr(result: DesignResult, scenario: Scenario, angles_per_target=None) -> np.ndarray:
    """Eavesdropper SINR under the worst case where every user stream counts as signal.

    With ``angles_per_target`` the maximum over each target's angle set is
    returned instead of the value at the nominal direction.
    """
    cfg = scenario.config
    Wc, Wr = result.precoders.comm, result.precoders.radar
    out = []
    for q, tgt in enumerate(scenario.targets):
        angles = [tgt.angle_deg] if angles_per_target is None else angles_per_target[q]
        A = steering_matrix(cfg, angles)
        b2 = abs(tgt.path_loss) ** 2
        com = np.sum(np.abs(A.conj().T @ Wc) ** 2, axis=1)
        rad = np.sum(np.abs(A.conj().T @ Wr) ** 2, axis=1)
        out.append(float(np.max(b2 * com / (b2 * rad + cfg.noise_var_eve))))
    return np.array(out)


def sum_rate(user_sinrs) -> float:
    return float(np.sum(np.log2(1.0 + np.asarray(user_sinrs, dtype=float))))


def secrecy_rate(user_sinrs, eve_sinrs) -> float:
    """``max(0, min_k log2(1 + g_k) - max_q log2(1 + g~_q))``; no Eve means no leakage."""
    worst_user = float(np.min(np.log2(1.0 + np.asarray(user_sinrs, dtype=float))))
    eve = np.asarray(eve_sinrs, dtype=float)
    best_eve = float(np.max(np.log2(1.0 + eve))) if eve.size else 0.0
    return max(0.0, worst_user - best_eve)


def beampattern_mse(R_hat: np.ndarray, R_star: np.ndarray, config: SystemConfig) -> float:
    """Mean squared difference of the two beampatterns over the config grid."""
    d = beampattern_grid(R_hat, config) - beampattern_grid(R_star, config)
    return float(np.mean(d ** 2))


def evaluate(result: DesignResult, scenario: Scenario, reference_cov: np.ndarray | None = None,
             angles_per_target=None) -> MetricsReport:
    """All metrics of one design; ``beampattern_mse`` is NaN without a radar-only reference."""
    g = user_sinr(result, scenario)
    ge = eve_sinr(result, scenario, angles_per_target)
    mse = math.nan if reference_cov is None else beampattern_mse(result.covariance, reference_cov,
                                                                  scenario.config)
    return MetricsReport(g, _db(g), ge, _db(ge), sum_rate(g), secrecy_rate(g, ge), mse)


@dataclasses.dataclass
class ValidationReport:
    num_symbols: int
    empirical_covariance: np.ndarray
    covariance_error: float            # Frobenius norm of the difference
    empirical_user_sinr: np.ndarray
    analytic_user_sinr: np.ndarray

    @property
    def sinr_error_db(self) -> np.ndarray:
        return np.abs(_db(self.empirical_user_sinr) - _db(self.analytic_user_sinr))


def empirical_validate(result: DesignResult, scenario: Scenario, N: int, seed: int,
                       radar_mode: str = "exact-orthogonal") -> ValidationReport:
    """Compare sample statistics of a synthesized frame with the analytic design values.

    The received signal at user ``k`` is split by symbol stream: the part
    carried by its own stream is signal, everything else (other users and the
    radar streams) is interference; receiver noise enters at its nominal
    variance since it is independent of the transmit frame.
    """
    frame = synthesize_frame(result.precoders, N, seed, radar_mode)
    X = frame.transmit_signal
    C_emp = X @ X.conj().T / N
    H = scenario.channel
    Wc = result.precoders.comm
    Y = H @ X
    K = H.shape[0]
    own = (H @ Wc)[np.arange(K), np.arange(K)][:, None] * frame.comm_symbols
    sig = np.mean(np.abs(own) ** 2, axis=1)
    interf = np.mean(np.abs(Y - own) ** 2, axis=1)
    emp = sig / (interf + scenario.config.noise_var_lu)
    ana = user_sinr(result, scenario)
    err = float(np.linalg.norm(C_emp - result.covariance))
    return ValidationReport(N, C_emp, err, emp, ana)


# ---------------------------------------------------------------- sweeps

@dataclasses.dataclass(frozen=True)
class ScenarioTemplate:
    """Recipe for one random trial: ``K`` Rayleigh users and ``Q`` targets drawn in ``angle_range_deg``."""

    config: SystemConfig = dataclasses.field(default_factory=SystemConfig)
    num_users: int = 2
    num_targets: int = 1
    angle_range_deg: tuple[float, float] = (-60.0, 60.0)
    path_loss: complex = 1.0
    angle_uncertainty_deg: float = 0.0
    beam_width_deg: float = 10.0
    weight: float = 1.0

    def __post_init__(self):
        if not 1 <= self.num_users <= self.config.M:
            raise ContractError("need 1 <= num_users <= num_antennas")
        if self.num_targets < 1:
            raise ContractError("at least one target is required")
        lo, hi = self.angle_range_deg
        if not -90 < lo <= hi < 90:
            raise ContractError("angle range must lie inside (-90, 90)")

    def draw(self, trial_seed: int) -> tuple[Scenario, BeampatternSpec]:
        rng = np.random.default_rng([trial_seed, 1])
        H = generate_channel(self.num_users, self.config.M, trial_seed)
        lo, hi = self.angle_range_deg
        angles = np.sort(rng.uniform(lo, hi, self.num_targets))
        targets = tuple(Target(float(a), self.path_loss, self.angle_uncertainty_deg) for a in angles)
        spec = BeampatternSpec(tuple(float(a) for a in angles), self.beam_width_deg, self.weight)
        return Scenario(self.config, H, targets), spec


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """Which threshold to sweep, over which values, with which designers.

    ``gamma_c_db`` / ``gamma_e_db`` are the fixed values of the axes not being
    swept; ``csi_fraction`` is the CSI error radius relative to ``||h_k||``
    used by the robust designer.
    """

    axis: str
    values: tuple[float, ...]
    designers: tuple[str, ...] = ("sdr",)
    gamma_c_db: float = 10.0
    gamma_e_db: float = 0.0
    csi_fraction: float = 0.0
    paired: bool = True

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ContractError(f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        object.__setattr__(self, "values", tuple(float(v) for v in np.atleast_1d(self.values)))
        object.__setattr__(self, "designers", tuple(self.designers))
        if not self.values:
            raise ContractError("sweep needs at least one value")
        bad = [d for d in self.designers if d not in DESIGNERS]
        if bad or not self.designers:
            raise ContractError(f"unknown designers {bad}; expected a subset of {DESIGNERS}")

    def point(self, value: float) -> tuple[SecurityThresholds, float]:
        gc, ge, frac = self.gamma_c_db, self.gamma_e_db, self.csi_fraction
        if self.axis == "gamma_c_db":
            gc = value
        elif self.axis == "gamma_e_db":
            ge = value
        else:
            frac = value
        return SecurityThresholds.from_db(gc, ge), frac


@dataclasses.dataclass
class SweepResult:
    axis: str
    values: np.ndarray
    designers: tuple[str, ...]
    trials: int
    seed: int
    trial_seeds: list[int]
    means: dict[str, dict[str, np.ndarray]]       # designer -> metric -> per point
    stderr: dict[str, dict[str, np.ndarray]]
    infeasible_rate: dict[str, np.ndarray]        # designer -> per point
    used_trials: dict[str, np.ndarray]            # designer -> per point


def run_design(designer: str, scenario: Scenario, spec: BeampatternSpec,
               thresholds: SecurityThresholds, csi_fraction: float = 0.0) -> DesignResult:
    """Dispatch by designer name."""
    if designer == "sdr":
        return solve_sdr(scenario, spec, thresholds)
    if designer == "zf":
        from .zf import solve_zf
        return solve_zf(scenario, spec, thresholds)
    if designer == "robust":
        from .robust import CsiUncertainty, solve_robust
        return solve_robust(scenario, spec, thresholds, CsiUncertainty.relative(scenario, csi_fraction))
    raise ContractError(f"unknown designer {designer!r}")


def _run_trial(template: ScenarioTemplate, sweep: SweepSpec, trial_seed: int):
    """Metrics per (designer, point) for one trial, ``None`` where the design failed."""
    scenario, spec = template.draw(trial_seed)
    R_star = radar_only_design(spec, template.config).covariance
    out = {}
    for d in sweep.designers:
        row = []
        for v in sweep.values:
            th, frac = sweep.point(v)
            try:
                res = run_design(d, scenario, spec, th, frac)
            except InfeasibleDesign:
                row.append(None)
                continue
            except DfrcError:
                # numerical trouble counts as a failed (excluded) trial as well
                row.append(None)
                continue
            m = evaluate(res, scenario, R_star)
            row.append({
                "mse": m.beampattern_mse,
                "sum_rate": m.sum_rate,
                "secrecy_rate": m.secrecy_rate,
                "min_user_sinr_db": float(np.min(m.user_sinr_db)),
                "max_eve_sinr_db": float(np.max(m.eve_sinr_db)),
                "objective": res.objective,
            })
        out[d] = row
    return out


def trial_seeds(seed: int, trials: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1, dtype=np.uint32)[0]) for s in ss.spawn(trials)]


def run_sweep(template: ScenarioTemplate, sweep: SweepSpec, trials: int, seed: int,
              workers: int | None = None) -> SweepResult:
    """Monte-Carlo sweep with fresh channels and target angles per trial.

    Every trial is evaluated at every sweep point with the same draw.  With
    ``sweep.paired`` a trial enters the means only if all designers succeeded
    at all points, so per-point curves compare identical trial sets; the
    per-point failure rate is reported either way.  Results are reduced in
    trial order, so they do not depend on ``workers``.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    seeds = trial_seeds(seed, trials)
    if workers and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_run_trial, [template] * trials, [sweep] * trials, seeds))
    else:
        rows = [_run_trial(template, sweep, s) for s in seeds]

    P = len(sweep.values)
    ok_all = [all(m is not None for d in sweep.designers for m in r[d]) for r in rows]
    means, stderr, fail_rate, used = {}, {}, {}, {}
    for d in sweep.designers:
        means[d], stderr[d] = {}, {}
        fail_rate[d] = np.array([np.mean([r[d][p] is None for r in rows]) for p in range(P)])
        keep = []
        for p in range(P):
            if sweep.paired:
                keep.append([r[d][p] for r, ok in zip(rows, ok_all) if ok])
            else:
                keep.append([r[d][p] for r in rows if r[d][p] is not None])
        used[d] = np.array([len(k) for k in keep])
        if np.any(used[d] == 0):
            raise SweepError(f"{d}: no usable trial at some sweep point "
                             f"(failure rates {fail_rate[d].tolist()})")
        for name in SWEEP_METRICS:
            vals = [np.array([m[name] for m in k]) for k in keep]
            means[d][name] = np.array([v.mean() for v in vals])
            stderr[d][name] = np.array([v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
                                        for v in vals])
    return SweepResult(sweep.axis, np.array(sweep.values), sweep.designers, trials, seed, seeds,
                       means, stderr, fail_rate, used)


def sweep_table(result: SweepResult) -> tuple[list[str], list[list[float]]]:
    """Flat header and rows (one per sweep point) for CSV output."""
    header = [result.axis]
    for d in result.designers:
        for name in SWEEP_METRICS:
            header += [f"{d}_{name}_mean", f"{d}_{name}_se"]
        header += [f"{d}_infeasible_rate", f"{d}_trials_used"]
    rows = []
    for p, v in enumerate(result.values):
        row = [float(v)]
        for d in result.designers:
            for name in SWEEP_METRICS:
                row += [float(result.means[d][name][p]), float(result.stderr[d][name][p])]
            row += [float(result.infeasible_rate[d][p]), float(result.used_trials[d][p])]
        rows.append(row)
    return header, rows


def gamma_sweep_values(lo: float, hi: float, step: float) -> Sequence[float]:
    n = int(round((hi - lo) / step))
    return tuple(float(lo + i * step) for i in range(n + 1))
