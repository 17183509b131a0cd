"""Modified Rodrigues Parameter (MRP) attitude algebra.

All functions broadcast over leading dimensions: a vector argument has shape
``(..., 3)`` and a matrix result has shape ``(..., 3, 3)``.  This lets the
simulator evaluate a whole batch of Monte-Carlo samples at once.

``rotation_o_to_b(sigma)`` maps orbit-frame components to body-frame
components, ``v_b = R @ v_o``.
"""

from __future__ import annotations

import numpy as np

#: Largest MRP norm accepted at construction (principal angle 4*atan(3)).
MRP_NORM_LIMIT = 3.0
MAX_PRINCIPAL_ANGLE = 4.0 * np.arctan(MRP_NORM_LIMIT)

_I3 = np.eye(3)


class MrpRangeError(ValueError):
    """Raised when an attitude cannot be represented within the MRP norm limit."""


def check_mrp(sigma) -> np.ndarray:
    """Validate and return ``sigma`` as a float array of MRPs."""
    s = np.asarray(sigma, dtype=float)
    if s.shape[-1:] != (3,):
        raise ValueError(f"MRP must have trailing dimension 3, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise MrpRangeError("MRP has non-finite components")
    norm = np.linalg.norm(s, axis=-1)
    if np.any(norm > MRP_NORM_LIMIT):
        raise MrpRangeError(
            f"MRP norm {float(np.max(norm)):.6g} exceeds limit {MRP_NORM_LIMIT}"
        )
    return s


def dot(a, b) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def cross(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def matvec(m, v) -> np.ndarray:
    return np.matmul(m, np.asarray(v, dtype=float)[..., None])[..., 0]


def matmul(a, b) -> np.ndarray:
    return np.matmul(a, b)


def transpose(m) -> np.ndarray:
    return np.swapaxes(m, -1, -2)


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    x, y, w = v[..., 0], v[..., 1], v[..., 2]
    out = np.zeros(v.shape + (3,))
    out[..., 0, 1], out[..., 0, 2] = -w, y
    out[..., 1, 0], out[..., 1, 2] = w, -x
    out[..., 2, 0], out[..., 2, 1] = -y, x
    return out


def mrp_from_principal(axis, angle) -> np.ndarray:
    """MRP for a rotation of ``angle`` radians about the unit vector ``axis``.

    Raises
    ------
    ValueError
        If ``axis`` is not a unit vector (tolerance 1e-9).
    MrpRangeError
        If ``|angle|`` is at or beyond ``4*atan(3)``.
    """
    e = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    if np.any(np.abs(np.linalg.norm(e, axis=-1) - 1.0) > 1e-9):
        raise ValueError("principal axis must be a unit vector")
    if np.any(np.abs(angle) >= MAX_PRINCIPAL_ANGLE):
        raise MrpRangeError(
            f"principal angle must satisfy |angle| < {MAX_PRINCIPAL_ANGLE:.6f} rad"
        )
    return e * np.tan(angle / 4.0)[..., None]


def principal_angle(sigma) -> np.ndarray:
    """Principal rotation angle ``4*atan(|sigma|)`` in radians."""
    return 4.0 * np.arctan(np.linalg.norm(sigma, axis=-1))


def principal_from_mrp(sigma) -> tuple[np.ndarray, np.ndarray]:
    """Decompose MRPs into ``(axis, angle)``; the axis is ``e1`` for a null rotation."""
    s = np.asarray(sigma, dtype=float)
    norm = np.linalg.norm(s, axis=-1)
    safe = np.where(norm > 0.0, norm, 1.0)
    axis = np.where((norm > 0.0)[..., None], s / safe[..., None], np.array([1.0, 0.0, 0.0]))
    return axis, 4.0 * np.arctan(norm)


def kinematic_matrix(sigma) -> np.ndarray:
    """``T(sigma) = 1/4 [(1 - s.s) I + 2[s x] + 2 s s^T]``, so that ``sigma_dot = T w``."""
    s = np.asarray(sigma, dtype=float)
    ss = dot(s, s)[..., None, None]
    return 0.25 * ((1.0 - ss) * _I3 + 2.0 * skew(s) + 2.0 * s[..., :, None] * s[..., None, :])


def kinematic_matrix_inverse(sigma) -> np.ndarray:
    """Closed-form inverse ``16 / (1 + s.s)^2 * T(sigma)^T``."""
    s = np.asarray(sigma, dtype=float)
    ss = dot(s, s)[..., None, None]
    return 16.0 / (1.0 + ss) ** 2 * transpose(kinematic_matrix(s))


def kinematic_matrix_rate(sigma, sigma_dot) -> np.ndarray:
    """Time derivative of ``T(sigma)`` along ``sigma_dot`` (T is quadratic in sigma)."""
    s = np.asarray(sigma, dtype=float)
    sd = np.asarray(sigma_dot, dtype=float)
    sds = dot(s, sd)[..., None, None]
    outer = s[..., :, None] * sd[..., None, :] + sd[..., :, None] * s[..., None, :]
    return 0.25 * (-2.0 * sds * _I3 + 2.0 * skew(sd) + 2.0 * outer)


def rotation_o_to_b(sigma) -> np.ndarray:
    """Direction cosine matrix of the MRP attitude (orbit -> body components)."""
    s = np.asarray(sigma, dtype=float)
    ss = dot(s, s)[..., None, None]
    # [s x]^2 = s s^T - (s.s) I
    sk2 = s[..., :, None] * s[..., None, :] - ss * _I3
    return _I3 + (8.0 * sk2 - 4.0 * (1.0 - ss) * skew(s)) / (1.0 + ss) ** 2


def mrp_compose(sigma_a, sigma_b) -> np.ndarray:
    """MRP of rotation ``a`` followed by rotation ``b``: ``R(result) = R(b) R(a)``.

    Raises
    ------
    MrpRangeError
        When the composite rotation approaches 360 deg and the result leaves
        the representable range.
    """
    a = np.asarray(sigma_a, dtype=float)
    b = np.asarray(sigma_b, dtype=float)
    aa = dot(a, a)
    bb = dot(b, b)
    den = 1.0 + aa * bb - 2.0 * dot(a, b)
    if np.any(np.abs(den) < 1e-12):
        raise MrpRangeError("composite rotation is at the 360 deg MRP singularity")
    num = (1.0 - aa)[..., None] * b + (1.0 - bb)[..., None] * a - 2.0 * cross(b, a)
    out = num / den[..., None]
    if np.any(np.linalg.norm(out, axis=-1) > MRP_NORM_LIMIT):
        raise MrpRangeError("composite rotation exceeds the MRP norm limit")
    return out


def attitude_error_angle(sigma_a, sigma_b) -> np.ndarray:
    """Principal angle in ``[0, pi]`` of the rotation between two attitudes.

    Evaluated as ``atan2(sin, cos)`` from the relative DCM, which equals
    ``acos((tr(Ra Rb^T) - 1)/2)`` but keeps full precision near zero.
    """
    rel = matmul(rotation_o_to_b(sigma_a), transpose(rotation_o_to_b(sigma_b)))
    cos_t = 0.5 * (np.trace(rel, axis1=-2, axis2=-1) - 1.0)
    axial = np.stack(
        [
            rel[..., 2, 1] - rel[..., 1, 2],
            rel[..., 0, 2] - rel[..., 2, 0],
            rel[..., 1, 0] - rel[..., 0, 1],
        ],
        axis=-1,
    )
    sin_t = 0.5 * np.linalg.norm(axial, axis=-1)
    return np.arctan2(sin_t, np.clip(cos_t, -1.0, 1.0))
