"""Shared numerical kernels: RK4, planar yaw unwrapping, Gaussian-mask
interpolation and labelled random streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class RolloutAborted(RuntimeError):
    """Raised when an integration produces non-finite values."""


def rk4_step(derivative: Callable[[np.ndarray], np.ndarray], s, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of an autonomous field."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = np.asarray(s, dtype=float)
    k1 = np.asarray(derivative(s), dtype=float)
    k2 = np.asarray(derivative(s + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(derivative(s + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(derivative(s + dt * k3), dtype=float)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))
            and np.all(np.isfinite(k3)) and np.all(np.isfinite(k4))
            and np.all(np.isfinite(out))):
        raise RolloutAborted("non-finite derivative during RK4 step")
    return out


def linear_rk4_propagator(A: np.ndarray, dt: float) -> np.ndarray:
    """Matrix M with rk4_step(lambda s: A @ s, s, dt) == M @ s (up to rounding).

    Used by long CPG rollouts where calling back into Python per stage is
    the bottleneck.
    """
    h = dt * np.asarray(A, dtype=float)
    eye = np.eye(h.shape[0])
    h2 = h @ h
    return eye + h + h2 / 2.0 + h2 @ h / 6.0 + h2 @ h2 / 24.0


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic z-y-x Euler triple, radians."""

    phi_x: float = 0.0
    phi_y: float = 0.0
    phi_z: float = 0.0


def rotation_zyx(angles: EulerAngles) -> np.ndarray:
    """R = Rz(phi_z) @ Ry(phi_y) @ Rx(phi_x)."""
    cx, sx = math.cos(angles.phi_x), math.sin(angles.phi_x)
    cy, sy = math.cos(angles.phi_y), math.sin(angles.phi_y)
    cz, sz = math.cos(angles.phi_z), math.sin(angles.phi_z)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


_DEGENERATE_NORM = 1e-9


def _half_open_angle(delta: float) -> float:
    # atan2 may return -pi for a negative-zero determinant; the contract is (-pi, pi]
    return math.pi if delta <= -math.pi else delta


def unwrap_z_checked(phi_t: EulerAngles, phi_prev: EulerAngles) -> tuple[float, bool]:
    """Relative planar yaw between two orientations, plus a degeneracy flag.

    The flag is set (and 0 returned) when either body x-axis projects onto
    the ground plane with norm below 1e-9.
    """
    r_prev = rotation_zyx(phi_prev)[:2, 0]
    r_t = rotation_zyx(phi_t)[:2, 0]
    if np.hypot(*r_prev) < _DEGENERATE_NORM or np.hypot(*r_t) < _DEGENERATE_NORM:
        return 0.0, True
    dot = r_prev[0] * r_t[0] + r_prev[1] * r_t[1]
    det = r_prev[0] * r_t[1] - r_prev[1] * r_t[0]
    return _half_open_angle(math.atan2(det, dot)), False


def unwrap_z(phi_t: EulerAngles, phi_prev: EulerAngles) -> float:
    return unwrap_z_checked(phi_t, phi_prev)[0]


def unwrap_planar(headings) -> np.ndarray:
    """Vectorised yaw deltas between consecutive planar headings.

    Same construction as ``unwrap_z`` with phi_x = phi_y = 0, so the body
    x-axis projection is (cos z, sin z) and never degenerate.
    """
    h = np.asarray(headings, dtype=float)
    c, s = np.cos(h), np.sin(h)
    dot = c[:-1] * c[1:] + s[:-1] * s[1:]
    det = c[:-1] * s[1:] - s[:-1] * c[1:]
    delta = np.arctan2(det, dot)
    return np.where(delta <= -np.pi, np.pi, delta)


def gaussian_landscape_checked(points, query, sigma_p: float = 0.1) -> tuple[float, bool]:
    """Gaussian-mask weighted average of point values at ``query``.

    ``points`` is an (n, 3) array-like of (x, y, value). Returns the
    interpolated value and an extrapolation flag; when every mask weight
    underflows below 1e-300 the nearest point's value is returned instead.
    """
    if not sigma_p > 0:
        raise ValueError("sigma_p must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    qx, qy = float(query[0]), float(query[1])
    if not (np.all(np.isfinite(pts)) and math.isfinite(qx) and math.isfinite(qy)):
        raise ValueError("non-finite coordinates")
    d2 = (qx - pts[:, 0]) ** 2 + (qy - pts[:, 1]) ** 2
    weights = np.exp(-d2 / (2.0 * sigma_p**2)) / (2.0 * math.pi * sigma_p**2)
    if np.all(weights < 1e-300):
        return float(pts[np.argmin(d2), 2]), True
    return float(np.sum(weights * pts[:, 2]) / np.sum(weights)), False


def gaussian_landscape(points, query, sigma_p: float = 0.1) -> float:
    return gaussian_landscape_checked(points, query, sigma_p)[0]


def landscape_grid(points, xs: Sequence[float], ys: Sequence[float], sigma_p: float = 0.1) -> np.ndarray:
    """Dense (len(ys), len(xs)) grid of interpolated values, for contour plots."""
    return np.array([[gaussian_landscape(points, (x, y), sigma_p) for x in xs] for y in ys])


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Deterministic generator keyed on (seed, label).

    The label is hashed with SHA-256 so streams do not depend on Python's
    per-process string hashing.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *_label_words(label)]))


def derive_seed(seed: int, label: str) -> int:
    """Integer child seed; handy when a seed has to cross a process boundary."""
    return int(rng_stream(seed, label).integers(0, 2**63 - 1))
