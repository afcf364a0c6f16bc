"""Inertial-parameter composition for a multi-body spacecraft + cargo stack.

A stack is a list of rigid bodies, each described by its mass, the position
of its own center of mass relative to a shared reference origin, and its
inertia tensor about its own center of mass (expressed in the shared frame
orientation).  Composition produces the total mass, the stack center of
mass, and the inertia tensor about that center via the Steiner shift.
Deployment events remove one body and recompose the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotFoundError, ValidationError

_TRIANGLE_RTOL = 1e-9


def _as_vector3(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if v.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    return v


def _as_tensor3(value, name: str) -> np.ndarray:
    t = np.asarray(value, dtype=float)
    if t.shape != (3, 3):
        raise ValidationError(f"{name} must be a 3x3 tensor, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValidationError(f"{name} contains non-finite entries")
    return t


@dataclass(frozen=True)
class BodySpec:
    """One rigid body in the stack.

    ``position`` locates the body's own center of mass relative to the shared
    reference origin.  ``inertia_cm`` is taken about that center, in the shared
    frame orientation unless ``rotation`` (body-to-shared direction cosine
    matrix) is given.
    """

    mass: float
    position: np.ndarray
    inertia_cm: np.ndarray
    label: str
    rotation: np.ndarray | None = None

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValidationError(f"body {self.label!r}: mass must be > 0, got {self.mass}")
        object.__setattr__(self, "position", _as_vector3(self.position, "position"))
        tensor = _as_tensor3(self.inertia_cm, "inertia_cm")
        scale = max(np.abs(tensor).max(), 1.0)
        if not np.allclose(tensor, tensor.T, atol=1e-9 * scale):
            raise ValidationError(f"body {self.label!r}: inertia_cm is not symmetric")
        eigvals = np.linalg.eigvalsh(tensor)
        if eigvals[0] < -1e-9 * scale:
            raise ValidationError(f"body {self.label!r}: inertia_cm is not positive semi-definite")
        d = np.diag(tensor)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            if d[i] > d[j] + d[k] + _TRIANGLE_RTOL * scale:
                raise ValidationError(
                    f"body {self.label!r}: diagonal moments violate the triangle "
                    f"inequality ({d[i]} > {d[j]} + {d[k]})"
                )
        object.__setattr__(self, "inertia_cm", tensor)
        if self.rotation is not None:
            rot = _as_tensor3(self.rotation, "rotation")
            if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
                raise ValidationError(f"body {self.label!r}: rotation is not orthonormal")
            object.__setattr__(self, "rotation", rot)

    def inertia_in_shared_frame(self) -> np.ndarray:
        """Inertia about the body CM expressed in the shared frame orientation."""
        if self.rotation is None:
            return self.inertia_cm
        return self.rotation @ self.inertia_cm @ self.rotation.T


@dataclass(frozen=True)
class InertialParams:
    """Composed inertial parameters of a stack.

    ``cm`` is relative to the same reference origin the bodies used;
    ``inertia`` is about the composed center of mass.
    """

    total_mass: float
    cm: np.ndarray
    inertia: np.ndarray
    label: str = ""
    min_eigenvalue: float = field(init=False, compare=False, default=0.0)

    def __post_init__(self):
        if self.total_mass <= 0.0:
            raise ValidationError(f"total_mass must be > 0, got {self.total_mass}")
        object.__setattr__(self, "cm", _as_vector3(self.cm, "cm"))
        tensor = _as_tensor3(self.inertia, "inertia")
        scale = max(np.abs(tensor).max(), 1.0)
        if not np.allclose(tensor, tensor.T, atol=1e-9 * scale):
            raise ValidationError("inertia tensor is not symmetric")
        object.__setattr__(self, "inertia", tensor)
        object.__setattr__(self, "min_eigenvalue", float(np.linalg.eigvalsh(tensor)[0]))

    def is_singular(self, rtol: float = 1e-12) -> bool:
        """True when the tensor cannot be inverted reliably."""
        scale = np.abs(self.inertia).max()
        return scale == 0.0 or self.min_eigenvalue <= rtol * scale


def center_of_mass(bodies: list[BodySpec]) -> np.ndarray:
    """Mass-weighted mean position of the stack."""
    if not bodies:
        raise DomainError("center_of_mass of an empty stack is undefined")
    masses = np.array([b.mass for b in bodies])
    positions = np.stack([b.position for b in bodies])
    return masses @ positions / masses.sum()


def parallel_axis_shift(inertia_cm: np.ndarray, mass: float, offset: np.ndarray) -> np.ndarray:
    """Shift an inertia tensor from the body CM to a point at ``offset`` from it.

    Returns ``I + m * ((R . R) * eye(3) - outer(R, R))``; the shift term is the
    point-mass tensor of the body mass placed at the offset.
    """
    if mass <= 0.0:
        raise ValidationError(f"mass must be > 0, got {mass}")
    inertia_cm = _as_tensor3(inertia_cm, "inertia_cm")
    offset = _as_vector3(offset, "offset")
    shift = mass * (np.dot(offset, offset) * np.eye(3) - np.outer(offset, offset))
    return inertia_cm + shift


def compose(bodies: list[BodySpec], label: str = "") -> InertialParams:
    """Compose total mass, center of mass, and inertia tensor of a stack.

    Each body's CM-referenced tensor is shifted to the stack center of mass
    and summed.
    """
    cm = center_of_mass(bodies)
    total = sum(b.mass for b in bodies)
    inertia = np.zeros((3, 3))
    for b in bodies:
        inertia += parallel_axis_shift(b.inertia_in_shared_frame(), b.mass, b.position - cm)
    inertia = 0.5 * (inertia + inertia.T)  # scrub accumulation asymmetry
    return InertialParams(total_mass=total, cm=cm, inertia=inertia, label=label)


def deploy_payload(bodies: list[BodySpec], label: str) -> tuple[list[BodySpec], InertialParams]:
    """Remove the body with the given label and recompose the remainder."""
    matches = [i for i, b in enumerate(bodies) if b.label == label]
    if not matches:
        known = ", ".join(b.label for b in bodies)
        raise NotFoundError(f"no body labelled {label!r} in stack ({known})")
    if len(bodies) == 1:
        raise DomainError("deploying the last body would leave an empty stack")
    remaining = [b for i, b in enumerate(bodies) if i != matches[0]]
    return remaining, compose(remaining)


def box_inertia(mass: float, dims) -> np.ndarray:
    """Inertia tensor of a uniform-density box about its CM.

    ``dims`` are the full edge lengths (x, y, z).  Used to build crude cargo
    and bus tensors when only outer dimensions are known.
    """
    if mass <= 0.0:
        raise ValidationError(f"mass must be > 0, got {mass}")
    lx, ly, lz = (float(d) for d in dims)
    if min(lx, ly, lz) < 0.0:
        raise ValidationError("box dimensions must be non-negative")
    return mass / 12.0 * np.diag([ly * ly + lz * lz, lx * lx + lz * lz, lx * lx + ly * ly])
