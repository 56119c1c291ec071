"""Narrowband per-bin DOA demo: steering models, scenes, and grid search.

Each frequency bin is one dataset of the multi-set model: the bin's
mixing matrix holds the steering vectors of the far-field sources, and
inter-bin source dependence makes the bins jointly separable.  After the
grid decomposition recovers per-bin steering estimates, directions are
read off by a coarse-to-fine grid search on the array manifold.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError

__all__ = [
    "DoaScene",
    "direction_vector",
    "steering_vector",
    "steering_matrix",
    "l_shaped_array",
    "circular_array",
    "estimate_directions",
]

SPEED_OF_LIGHT = 299792458.0


@dataclass
class DoaScene:
    """Array geometry, source directions, and frequency bins of the demo.

    ``sensors`` holds Cartesian coordinates (meters) as a ``3 x N`` array;
    ``sources`` lists ``(azimuth, elevation)`` pairs in degrees; ``bins``
    lists the carrier frequency of every processed bin (Hz).
    """

    sensors: np.ndarray
    sources: list
    bins: list
    c: float = SPEED_OF_LIGHT
    q_samples: int = 400

    def __post_init__(self):
        self.sensors = np.asarray(self.sensors, dtype=float)
        if self.sensors.ndim != 2 or self.sensors.shape[0] != 3:
            raise DimensionError("sensors must be a 3 x N coordinate array")
        if self.sensors.shape[1] < 2:
            raise DimensionError("need at least two sensors")
        if any(f <= 0 for f in self.bins):
            raise DimensionError("bin frequencies must be positive")

    @property
    def n_sensors(self):
        return self.sensors.shape[1]


def direction_vector(theta_deg, phi_deg):
    """Unit propagation direction for azimuth/elevation in degrees."""
    theta = np.deg2rad(theta_deg)
    phi = np.deg2rad(phi_deg)
    return np.array(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]
    )


def steering_vector(scene, f, theta_deg, phi_deg):
    """Array response at frequency ``f`` for one direction.

    Entry ``n`` is ``exp(-2j*pi * f * <k_n, p(theta, phi)> / c)`` with
    ``k_n`` the sensor coordinates.
    """
    delays = scene.sensors.T @ direction_vector(theta_deg, phi_deg)
    return np.exp(-2j * np.pi * f / scene.c * delays)


def steering_matrix(scene, f):
    """Steering vectors of all scene sources at frequency ``f`` (columns)."""
    return np.column_stack(
        [steering_vector(scene, f, th, ph) for th, ph in scene.sources]
    )


def l_shaped_array(n_per_arm, spacing):
    """L-shaped array in the xy-plane: origin plus two orthogonal arms."""
    coords = [np.zeros(3)]
    for k in range(1, n_per_arm + 1):
        coords.append(np.array([k * spacing, 0.0, 0.0]))
    for k in range(1, n_per_arm + 1):
        coords.append(np.array([0.0, k * spacing, 0.0]))
    return np.column_stack(coords)


def circular_array(n_sensors, radius):
    """Uniform circular array of ``n_sensors`` in the xy-plane."""
    angles = 2.0 * np.pi * np.arange(n_sensors) / n_sensors
    return np.vstack(
        [radius * np.cos(angles), radius * np.sin(angles), np.zeros(n_sensors)]
    )


def _score_grid(scene, steering_sets, thetas, phis):
    """Sum over bins of the normalized correlation with the manifold."""
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    dirs = np.stack(
        [
            np.cos(np.deg2rad(tt)) * np.sin(np.deg2rad(pp)),
            np.sin(np.deg2rad(tt)) * np.sin(np.deg2rad(pp)),
            np.cos(np.deg2rad(pp)),
        ],
        axis=0,
    ).reshape(3, -1)
    delays = scene.sensors.T @ dirs  # (N, G)
    score = np.zeros(delays.shape[1])
    for f_idx, f in enumerate(scene.bins):
        manifold = np.exp(-2j * np.pi * f / scene.c * delays)
        a_hat = steering_sets[f_idx]
        norm_sq = np.sum(np.abs(a_hat) ** 2)
        if norm_sq == 0:
            continue
        score += np.abs(a_hat.conj() @ manifold) ** 2 / norm_sq
    return score.reshape(len(thetas), len(phis))


def _search_component(scene, steering_sets, coarse_step=1.0, final_step=0.05):
    """Coarse 1-degree grid search refined locally down to ``final_step``."""
    thetas = np.arange(0.0, 180.0 + 1e-9, coarse_step)
    phis = np.arange(0.0, 90.0 + 1e-9, coarse_step)
    score = _score_grid(scene, steering_sets, thetas, phis)
    it, ip = np.unravel_index(np.argmax(score), score.shape)
    best_t, best_p = thetas[it], phis[ip]
    step = coarse_step
    while step > final_step:
        step = max(step / 5.0, final_step)
        thetas = np.clip(np.arange(best_t - 5 * step, best_t + 5 * step + 1e-9, step), 0.0, 180.0)
        phis = np.clip(np.arange(best_p - 5 * step, best_p + 5 * step + 1e-9, step), 0.0, 90.0)
        score = _score_grid(scene, steering_sets, thetas, phis)
        it, ip = np.unravel_index(np.argmax(score), score.shape)
        best_t, best_p = thetas[it], phis[ip]
    return best_t, best_p


def estimate_directions(scene, mixing_estimates, final_step=0.05):
    """Per-component direction estimates from per-bin steering estimates.

    ``mixing_estimates`` maps bin index to an ``N x R`` matrix whose
    ``r``-th columns across bins describe one source.  For each component
    the direction maximizing the summed normalized manifold correlation is
    located on a 1-degree grid and refined to ``final_step`` degrees; grid
    ties resolve to the smallest angles.

    Returns a list of ``(theta, phi)`` tuples and, when the scene lists
    true sources, the assignment-matched per-source angle errors.
    """
    n_comp = next(iter(mixing_estimates.values())).shape[1]
    estimates = []
    for comp in range(n_comp):
        sets = {
            f_idx: mixing_estimates[f_idx][:, comp]
            for f_idx in range(len(scene.bins))
        }
        estimates.append(_search_component(scene, sets, final_step=final_step))
    errors = None
    if scene.sources:
        truth = np.asarray(scene.sources, dtype=float)
        est = np.asarray(estimates, dtype=float)
        cost = np.linalg.norm(truth[:, None, :] - est[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        errors = [
            (
                float(abs(truth[i, 0] - est[j, 0])),
                float(abs(truth[i, 1] - est[j, 1])),
            )
            for i, j in zip(rows, cols)
        ]
    return estimates, errors
