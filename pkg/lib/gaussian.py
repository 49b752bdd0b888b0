"""
Closed-form phase-space Gaussian integrals with linear phases.

    G = ∫∫ dx dv ψ(x, v) f⁰(x - v·b + y_shift, v + u_shift) e^{i(α·x + β·v)}

where ψ is either the standard Gaussian density in (x, v) or identically one,
and f⁰ is a Gaussian-mixture datum. Every axis reduces to a 2×2 Gaussian
integral ∫ exp(-½zᵀMz + Jᵀz + c) dz = 2π/√det M · exp(c + ½JᵀM⁻¹J), evaluated
with complex J. All arguments broadcast over leading batch axes.
"""

import numpy as np

from .models import InitialDatum


def phase_space_integral(
    f: InitialDatum,
    base_time,
    y_shift,
    u_shift,
    alpha,
    beta,
    with_test: bool,
) -> np.ndarray:
    """
    Args:
        base_time: (...,) free-flight time b multiplying v in the position argument
        y_shift, u_shift: (..., d) offsets of the datum arguments
        alpha, beta: (..., d) real phase coefficients for x and v
        with_test: include the standard Gaussian weight ψ(x, v)

    Returns:
        complex array of shape (...,)
    """
    b = np.asarray(base_time, dtype=float)[..., None]
    oy = np.asarray(y_shift, dtype=float)
    ou = np.asarray(u_shift, dtype=float)
    a_x = np.asarray(alpha, dtype=float)
    a_v = np.asarray(beta, dtype=float)
    psi = 1.0 if with_test else 0.0

    total = 0.0j
    for comp in f.components:
        sx2 = np.asarray(comp.x_width) ** 2
        sv2 = np.asarray(comp.v_width) ** 2
        m = np.asarray(comp.x_center) - oy
        n = np.asarray(comp.v_center) - ou

        m11 = psi + 1.0 / sx2
        m12 = -b / sx2
        m22 = psi + b * b / sx2 + 1.0 / sv2
        det = m11 * m22 - m12 * m12

        j1 = m / sx2 + 1j * a_x
        j2 = -b * m / sx2 + n / sv2 + 1j * a_v
        quad = (m22 * j1 * j1 - 2.0 * m12 * j1 * j2 + m11 * j2 * j2) / det

        const = -0.5 * (m * m / sx2 + n * n / sv2) - np.log(2.0 * np.pi * np.sqrt(sx2 * sv2))
        if with_test:
            const = const - np.log(2.0 * np.pi)

        per_axis = np.exp(const + 0.5 * quad) * (2.0 * np.pi) / np.sqrt(det)
        total = total + comp.weight * np.prod(per_axis, axis=-1)
    return np.asarray(total, dtype=complex)


def free_test_integral(f: InitialDatum, t: float) -> float:
    """∫∫ ψ(x, v) f⁰(x - vt, v) dx dv: the free term tested against ψ."""
    zeros = np.zeros(f.dimension)
    value = phase_space_integral(f, t, zeros, zeros, zeros, zeros, with_test=True)
    return float(np.real(value))
