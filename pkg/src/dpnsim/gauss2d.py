"""2-D random-walk tracking with an accurate Gaussian sensor.

The object starts at a known position and moves by isotropic Gaussian steps
of scale ``q``; each slice yields an observation of the position with noise
scale ``r``.  Both axes are independent, so the reversed conditionals and the
Kalman oracle are scalar recursions applied per axis.  Particle weights are
densities and are carried in log space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .samplers import ER, ERSOF, LW, SOF, resample
from .seeding import make_rng

TRACK_ALGORITHMS = (LW, ER, SOF, ERSOF)
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Gauss2dModel:
    transition_std: float = 1.0
    sensor_std: float = 0.05
    initial_position: tuple[float, float] = (0.0, 0.0)
    disc_radius: float = 10.0

    def __post_init__(self):
        if not (self.transition_std > 0 and self.sensor_std > 0):
            raise ValueError("transition_std and sensor_std must be positive")


@dataclass(frozen=True)
class GaussianReversal:
    """E_t | x_{t-1} ~ N(x_{t-1}, predictive_var) and
    X_t | x_{t-1}, e_t ~ N(x_{t-1} + gain * (e_t - x_{t-1}), reversed_var), per axis."""

    predictive_var: float
    gain: float
    reversed_var: float

    def reversed_mean(self, x_prev, e):
        return np.asarray(x_prev) + self.gain * (np.asarray(e) - np.asarray(x_prev))


def gaussian_reversed_conditionals(model: Gauss2dModel) -> GaussianReversal:
    q2, r2 = model.transition_std**2, model.sensor_std**2
    return GaussianReversal(q2 + r2, q2 / (q2 + r2), q2 * r2 / (q2 + r2))


def simulate_truth_2d(model: Gauss2dModel, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Positions and observations for slices 0..T, each a (T + 1, 2) array."""
    if T < 0:
        raise ValueError("T must be >= 0")
    steps = rng.normal(0.0, model.transition_std, size=(T, 2))
    positions = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)]) + np.asarray(model.initial_position)
    observations = positions + rng.normal(0.0, model.sensor_std, size=(T + 1, 2))
    return positions, observations


def _log_normal(x: np.ndarray, mean: np.ndarray, var: float) -> np.ndarray:
    """Log density of an isotropic 2-D normal, summed over the last axis."""
    return -0.5 * (((x - mean) ** 2).sum(axis=-1) / var + 2 * (np.log(var) + _LOG_2PI))


def _normalize(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def _ess(w: np.ndarray) -> float:
    return float(w.sum() ** 2 / (w**2).sum())


@dataclass
class Track2d:
    means: np.ndarray
    ess: np.ndarray
    snapshots: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def particle_track_2d(
    algorithm: str,
    model: Gauss2dModel,
    observations: np.ndarray,
    n: int,
    seed: int,
    keep_snapshots: bool = False,
) -> Track2d:
    """Weighted posterior mean and effective sample size per slice.

    Slice 0 starts every particle at the known initial position.  ESS is
    computed from the weights in force when the slice's estimate is formed
    (for ERSOF, the resampling weights P(e_t | x_{t-1})).
    """
    algorithm = algorithm.upper()
    if algorithm not in TRACK_ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if n < 1:
        raise ValueError("need at least one particle")
    q, r = model.transition_std, model.sensor_std
    rev = gaussian_reversed_conditionals(model)
    obs = np.asarray(observations, dtype=float)
    x = np.tile(np.asarray(model.initial_position, dtype=float), (n, 1))
    log_w = _log_normal(obs[0], x, r * r)
    means = [x.mean(axis=0)]
    ess = [_ess(_normalize(log_w))]
    snapshots = [(x.copy(), _normalize(log_w))] if keep_snapshots else []
    if algorithm in (SOF, ERSOF):
        log_w = np.zeros(n)

    for t in range(1, len(obs)):
        rng = make_rng(seed, t)
        z = obs[t]
        if algorithm == LW:
            x = x + rng.normal(0.0, q, size=x.shape)
            log_w = log_w + _log_normal(z, x, r * r)
            w = _normalize(log_w)
        elif algorithm == ER:
            log_w = log_w + _log_normal(z, x, rev.predictive_var)
            x = rev.reversed_mean(x, z) + rng.normal(0.0, np.sqrt(rev.reversed_var), size=x.shape)
            w = _normalize(log_w)
        elif algorithm == SOF:
            x = x + rng.normal(0.0, q, size=x.shape)
            w = _normalize(_log_normal(z, x, r * r))
        else:
            w = _normalize(_log_normal(z, x, rev.predictive_var))
        ess.append(_ess(w))
        if algorithm == ERSOF:
            x = x[resample(w, n, rng)]
            x = rev.reversed_mean(x, z) + rng.normal(0.0, np.sqrt(rev.reversed_var), size=x.shape)
            w = np.full(n, 1.0 / n)
        means.append(w @ x)
        if keep_snapshots:
            snapshots.append((x.copy(), w.copy()))
        if algorithm == SOF:
            x = x[resample(w, n, rng)]
    return Track2d(np.array(means), np.array(ess), snapshots)


def kalman_oracle(model: Gauss2dModel, observations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior means (T + 1, 2) and per-axis variances (T + 1,).

    Slice 0 is the known start (variance 0); later slices predict then update.
    """
    q2, r2 = model.transition_std**2, model.sensor_std**2
    obs = np.asarray(observations, dtype=float)
    m = np.asarray(model.initial_position, dtype=float).copy()
    v = 0.0
    means, variances = [m.copy()], [v]
    for z in obs[1:]:
        v_pred = v + q2
        k = v_pred / (v_pred + r2)
        m = m + k * (z - m)
        v = (1.0 - k) * v_pred
        means.append(m.copy())
        variances.append(v)
    return np.array(means), np.array(variances)


TRACK_HEADER = ["t", "true_x", "true_y", "obs_x", "obs_y", "est_x", "est_y", "kalman_x", "kalman_y", "ess"]


def write_track_csv(fh, positions, observations, track: Track2d, kalman_means) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACK_HEADER)
    for t in range(len(observations)):
        values = [*positions[t], *observations[t], *track.means[t], *kalman_means[t], track.ess[t]]
        writer.writerow([t] + [format(float(v), ".9g") for v in values])


def write_snapshots_csv(fh, track: Track2d) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "particle", "x", "y", "weight"])
    for t, (x, w) in enumerate(track.snapshots):
        for i in range(len(w)):
            writer.writerow([t, i, format(x[i, 0], ".9g"), format(x[i, 1], ".9g"), format(w[i], ".9g")])
