"""Constant-velocity Kalman filter over ``(u, v, gamma, h)`` and their rates.

Noise standard deviations scale with the box height ``h``: position terms use
``std_weight_position`` and velocity terms ``std_weight_velocity``. The aspect
ratio ``gamma = h / w`` gets small fixed deviations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TrackError

NDIM = 4
CHI2_95_4DOF = 9.4877


class NumericalError(TrackError):
    pass


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, float).reshape(2 * NDIM)
        P = np.array(self.covariance, float).reshape(2 * NDIM, 2 * NDIM)
        m.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", P)


@dataclass(frozen=True)
class KalmanFilter:
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    std_aspect: float = 1e-2
    std_aspect_velocity: float = 1e-5
    dt: float = 1.0

    @property
    def transition(self) -> np.ndarray:
        F = np.eye(2 * NDIM)
        F[:NDIM, NDIM:] = self.dt * np.eye(NDIM)
        return F

    @property
    def measurement(self) -> np.ndarray:
        return np.eye(NDIM, 2 * NDIM)

    def initiate(self, observation) -> KalmanState:
        z = np.asarray(observation, float)
        h = z[3]
        pos = self.std_weight_position * h
        vel = self.std_weight_velocity * h
        std = np.array([2 * pos, 2 * pos, self.std_aspect, 2 * pos,
                        10 * vel, 10 * vel, self.std_aspect_velocity, 10 * vel])
        mean = np.concatenate([z, np.zeros(NDIM)])
        return KalmanState(mean, np.diag(std ** 2))

    def process_noise(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        pos = self.std_weight_position * h
        vel = self.std_weight_velocity * h
        std = np.array([pos, pos, self.std_aspect, pos, vel, vel, self.std_aspect_velocity, vel])
        return np.diag(std ** 2)

    def measurement_noise(self, mean: np.ndarray) -> np.ndarray:
        pos = self.std_weight_position * mean[3]
        return np.diag(np.array([pos, pos, 10 * self.std_aspect, pos]) ** 2)

    def predict(self, s: KalmanState) -> KalmanState:
        F = self.transition
        mean = F @ s.mean
        cov = F @ s.covariance @ F.T + self.process_noise(s.mean)
        return KalmanState(mean, 0.5 * (cov + cov.T))

    def project(self, s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the predicted measurement (noise included)."""
        H = self.measurement
        S = H @ s.covariance @ H.T + self.measurement_noise(s.mean)
        return H @ s.mean, 0.5 * (S + S.T)

    def update(self, s: KalmanState, observation) -> KalmanState:
        z = np.asarray(observation, float)
        if not np.all(np.isfinite(z)):
            raise NumericalError("non-finite observation")
        H = self.measurement
        mu, S = self.project(s)
        try:
            cho = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("innovation covariance is not positive definite") from exc
        PHt = s.covariance @ H.T
        # K = P H^T S^-1, via two triangular solves
        gain = np.linalg.solve(cho.T, np.linalg.solve(cho, PHt.T)).T
        mean = s.mean + gain @ (z - mu)
        cov = s.covariance - gain @ S @ gain.T
        return KalmanState(mean, 0.5 * (cov + cov.T))

    def mahalanobis(self, s: KalmanState, observations) -> np.ndarray:
        """Squared Mahalanobis distance of each observation row to the projected state."""
        mu, S = self.project(s)
        return squared_mahalanobis(mu, S, observations)


def squared_mahalanobis(mu, cov, observations) -> np.ndarray:
    obs = np.atleast_2d(np.asarray(observations, float))
    try:
        cho = np.linalg.cholesky(np.asarray(cov, float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance is not positive definite") from exc
    d = obs - np.asarray(mu, float)
    z = np.linalg.solve(cho, d.T)
    out = np.sum(z * z, axis=0)
    return out if np.ndim(observations) > 1 else float(out[0])
