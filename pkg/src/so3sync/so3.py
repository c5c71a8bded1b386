"""Operators and maps on the rotation group.

Rotation matrices are (3, 3) float64 arrays, vectors are (3,) float64
arrays. Every function is pure; tolerances default to the module
constants below and can be overridden per call where it matters.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DegenerateMatrix, NonSkewInput, NonUnitAxis

# Orthogonality budget on R^T R - I (Frobenius) for inputs that claim
# to be rotation matrices.
ORTHO_TOL = 1e-9

# Skewness budget on S + S^T (Frobenius) for vex().
SKEW_TOL = 1e-9

# Unit-norm budget for rotation axes.
UNIT_AXIS_TOL = 1e-12

# Largest Frobenius distance project_to_so3 will bridge silently.
PROJECT_MAX_DIST = 0.5

_EYE3 = np.eye(3)


def _as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be (3, 3), got {a.shape}")
    return a


def _as_vector(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must be (3,), got {a.shape}")
    return a


def hat(v):
    """Maps a 3-vector to the skew-symmetric matrix with hat(v) @ w = v x w."""
    v = _as_vector(v)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def vex(s, tol=SKEW_TOL):
    """Inverse of hat. Raises NonSkewInput if s is not skew within tol."""
    s = _as_matrix(s)
    defect = np.linalg.norm(s + s.T)
    if defect > tol:
        raise NonSkewInput(f"matrix is not skew-symmetric: |S + S^T|_F = {defect:.3e}")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def psi(a):
    """Skew projection of a matrix, returned as a 3-vector.

    psi(A) = vex((A - A^T) / 2). Antisymmetrizing any matrix makes the
    skewness check redundant, so none is applied.
    """
    a = _as_matrix(a)
    return 0.5 * np.array([a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]])


def e_matrix(a):
    """Returns E(A) = (tr(A) I - A^T) / 2.

    For symmetric A the eigenvectors of E(A) are those of A and the
    eigenvalue attached to axis v is (tr(A) - lambda_v(A)) / 2, which is
    what makes weighted trace terms quadratic in the rotation axis:
    tr(A (I - R(theta, u))) = 2 (1 - cos theta) u^T E(A) u.
    """
    a = _as_matrix(a)
    return 0.5 * (np.trace(a) * _EYE3 - a.T)


def check_unit_axis(axis, tol=UNIT_AXIS_TOL):
    """Returns the axis as an array, raising NonUnitAxis if not unit length."""
    u = _as_vector(axis, "axis")
    err = abs(np.dot(u, u) - 1.0)
    if err > 2.0 * tol + tol * tol:
        raise NonUnitAxis(f"axis norm differs from 1 by {math.sqrt(1 + err) - 1:.3e}")
    return u


def rot_axis_angle(angle, axis, tol=UNIT_AXIS_TOL):
    """Rodrigues formula: R = I + sin(t) hat(u) + (1 - cos(t)) hat(u)^2."""
    u = check_unit_axis(axis, tol)
    k = hat(u)
    return _EYE3 + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def check_rotation(r, tol=ORTHO_TOL, name="matrix"):
    """Returns r as an array, raising ValueError if not a rotation within tol."""
    r = _as_matrix(r, name)
    defect = np.linalg.norm(r.T @ r - _EYE3)
    if defect > tol:
        raise ValueError(f"{name} is not orthogonal: |R^T R - I|_F = {defect:.3e}")
    if np.linalg.det(r) < 0.0:
        raise ValueError(f"{name} has negative determinant")
    return r


@dataclasses.dataclass(frozen=True)
class AxisAngle:
    """A rotation as (angle, unit axis).

    Attributes:
        angle: rotation angle in radians, in [0, pi] when produced by
            log_so3 but unrestricted on construction.
        axis: (3,) unit vector.
    """

    angle: float
    axis: np.ndarray

    def __post_init__(self):
        u = check_unit_axis(self.axis).copy()
        u.flags.writeable = False
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "axis", u)

    def matrix(self):
        """The rotation matrix of this axis-angle pair."""
        return rot_axis_angle(self.angle, self.axis)


def _fix_axis_sign(u):
    # Convention for the ambiguous angle-pi axis: first component larger
    # than 1e-9 in magnitude is made positive.
    for c in u:
        if abs(c) > 1e-9:
            return u if c > 0.0 else -u
    return u


def log_so3(r, tol=ORTHO_TOL):
    """Principal logarithm of a rotation matrix as an AxisAngle.

    The angle is recovered from atan2(|psi(R)|, (tr(R) - 1) / 2), which
    stays first-order accurate at both ends of [0, pi]. Near pi the axis
    is read from the symmetric part instead of psi(R): there
    (R + R^T) / 2 = I + (1 - cos t)(u u^T - I), so u u^T is exactly
    ((R + R^T) / 2 - cos(t) I) / (1 - cos t) and the largest diagonal
    entry gives a well-conditioned square root.

    Returns:
        AxisAngle with angle in [0, pi]. The identity maps to angle 0
        with axis e1; at angle pi the axis sign follows _fix_axis_sign.
    """
    r = check_rotation(r, tol)
    w = psi(r)  # sin(angle) * axis
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(r) - 1.0)
    angle = math.atan2(s, c)
    if angle < 1e-15:
        return AxisAngle(0.0, np.array([1.0, 0.0, 0.0]))
    if c > -0.9 or s >= 1e-4:
        return AxisAngle(angle, w / s)
    # Near pi: 1 - c is ~2, so the division below is safe.
    p = ((r + r.T) * 0.5 - c * _EYE3) / (1.0 - c)
    i = int(np.argmax(np.diag(p)))
    u = p[:, i] / math.sqrt(max(p[i, i], 1e-300))
    u = u / np.linalg.norm(u)
    if s > 1e-9:
        # sin(angle) still resolves the sign; keep u aligned with psi(R).
        if np.dot(u, w) < 0.0:
            u = -u
    else:
        u = _fix_axis_sign(u)
    return AxisAngle(angle, u)


def attitude_norm(r):
    """Rotation-angle metric |R|_I = sqrt(tr(I - R)) / 2 = |sin(angle/2)|.

    Takes values in [0, 1], reaching 1 exactly at angle pi. The trace
    argument is clamped at zero against round-off no larger than 1e-12;
    anything more negative means the input was not a rotation.
    """
    r = _as_matrix(r)
    t = 3.0 - np.trace(r)
    if t < 0.0:
        if t < -1e-12:
            raise ValueError(f"tr(I - R) = {t:.3e} < 0: not a rotation matrix")
        t = 0.0
    return 0.5 * math.sqrt(t)


def project_to_so3(m, max_dist=PROJECT_MAX_DIST):
    """Nearest rotation matrix in the Frobenius sense, via the polar factor.

    Args:
        m: (3, 3) matrix, expected to be a slightly drifted rotation.
        max_dist: largest |m - R|_F accepted before the input is
            declared unsalvageable.

    Raises:
        DegenerateMatrix: non-finite input, non-positive determinant, or
            distance to the projection beyond max_dist.
    """
    m = _as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise DegenerateMatrix("matrix has non-finite entries")
    if np.linalg.det(m) <= 0.0:
        raise DegenerateMatrix("matrix determinant is not positive")
    u, sig, vt = np.linalg.svd(m)
    q = u @ vt
    if np.linalg.det(q) < 0.0:
        q = (u * np.array([1.0, 1.0, -1.0])) @ vt
    dist = math.sqrt(float(np.sum((sig - 1.0) ** 2)))
    if dist > max_dist:
        raise DegenerateMatrix(
            f"input is {dist:.3e} from the rotation group (budget {max_dist:.3e})"
        )
    return q


def random_rotation(rng):
    """Rotation matrix drawn from the uniform (Haar) distribution."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def random_axis(rng):
    """Unit vector drawn uniformly from the sphere."""
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n
