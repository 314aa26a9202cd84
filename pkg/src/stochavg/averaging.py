"""Non-resonant torus averaging and the derived action-equation coefficients.

Averaging a scalar f over the torus means integrating f(Phi_{-w} a) over
w in [0,2pi)^n; for a vector field the k-th component carries an extra
phase e^{i w_k}, and for the diffusion matrix the (k,l) entry carries
e^{i(w_k - w_l)}.  On polynomials the integrals are exact: a monomial
v^alpha conj(v)^beta survives averaging against e^{i d.w} iff
alpha - beta = d, which gives the symbolic backend.  The quadrature backend
is the tensor-product rectangle rule, spectrally exact on trigonometric
polynomials below the grid's Nyquist order, so the two backends must agree
to rounding on polynomial inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPSDError
from .poly import Polynomial, as_poly

DEFAULT_GRID = 64

# eigenvalue dust in (-FAIL_TOL, 0) is clamped to zero before square-rooting;
# anything below -FAIL_TOL is a genuine PSD violation
FAIL_TOL = 1e-6


def rotate(w, v):
    """Apply the torus rotation (e^{i w_1} v_1, ..., e^{i w_n} v_n)."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=complex)
    if w.shape[-1] != v.shape[-1]:
        raise ValueError(f"angle/state dimension mismatch: {w.shape[-1]} vs {v.shape[-1]}")
    return np.exp(1j * w) * v


def canonical_angles(w):
    """Wrap angles to the canonical cube [0, 2pi)^n."""
    return np.mod(np.asarray(w, dtype=float), 2.0 * np.pi)


def actions_of(v):
    """Action coordinates I_k = |v_k|^2 / 2 of a complex state array."""
    v = np.asarray(v, dtype=complex)
    return 0.5 * (v.real**2 + v.imag**2)


def _torus_grid(n, grid_per_dim):
    if grid_per_dim < 2:
        raise ValueError("quadrature grid must have at least 2 nodes per dimension")
    w = 2.0 * np.pi * np.arange(grid_per_dim) / grid_per_dim
    mesh = np.meshgrid(*([w] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _angle_samples(n, method, grid_per_dim, mc_samples, seed):
    if method == "quadrature":
        return _torus_grid(n, grid_per_dim)
    if method == "montecarlo":
        rng = np.random.default_rng(seed)
        return rng.random((mc_samples, n)) * 2.0 * np.pi
    raise ValueError(f"unknown averaging method {method!r}")


def average_with_phase(field, shift, a, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                       mc_samples=4096, seed=0):
    """Average ``e^{i shift.w} field(Phi_{-w} a)`` over the torus.

    ``shift`` is an integer vector; the symbolic backend keeps exactly the
    monomials with alpha - beta = shift.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if method == "symbolic":
        p = as_poly(field, n)
        return complex(p.keep_resonant(shift).evaluate(a))
    angles = _angle_samples(n, method, grid_per_dim, mc_samples, seed)
    states = np.exp(-1j * angles) * a
    if isinstance(field, Polynomial):
        vals = field.evaluate(states)
    else:
        vals = np.asarray(field.evaluate(states), dtype=complex)
    shift = np.asarray(shift, dtype=float)
    if np.any(shift):
        vals = vals * np.exp(1j * (angles @ shift))
    return complex(vals.mean())


def average_function(f, a, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                     mc_samples=4096, seed=0):
    """Torus average of a scalar function at the point ``a``."""
    a = np.asarray(a, dtype=complex)
    return average_with_phase(f, (0,) * a.shape[-1], a, method,
                              grid_per_dim=grid_per_dim, mc_samples=mc_samples, seed=seed)


def average_field(P, a, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                  mc_samples=4096, seed=0):
    """Torus average of a vector field; component k carries the phase e^{i w_k}."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if len(P) != n:
        raise ValueError(f"field needs {n} components, got {len(P)}")
    out = np.empty(n, dtype=complex)
    for k in range(n):
        shift = tuple(1 if j == k else 0 for j in range(n))
        out[k] = average_with_phase(P[k], shift, a, method,
                                    grid_per_dim=grid_per_dim,
                                    mc_samples=mc_samples, seed=seed)
    return out


def averaged_field_polys(P, n):
    """Symbolic averaged field: component k keeps monomials with alpha-beta = e_k."""
    polys = []
    for k in range(n):
        shift = tuple(1 if j == k else 0 for j in range(n))
        polys.append(as_poly(P[k], n).keep_resonant(shift))
    return tuple(polys)


def averaged_diffusion_polys(psi_polys):
    """Symbolic form of the averaged diffusion matrix A(a).

    Entry (k,l) is the resonant part (shift e_k - e_l) of
    sum_j Psi_kj * conj(Psi_lj).
    """
    n = len(psi_polys)
    n1 = len(psi_polys[0])
    out = []
    for k in range(n):
        row = []
        for l in range(n):
            acc = Polynomial.zero(psi_polys[0][0].n)
            for j in range(n1):
                acc = acc + psi_polys[k][j] * psi_polys[l][j].conj()
            shift = tuple((1 if m == k else 0) - (1 if m == l else 0) for m in range(n))
            row.append(acc.keep_resonant(shift))
        out.append(tuple(row))
    return tuple(out)


def averaged_diffusion(psi, a, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                       mc_samples=4096, seed=0):
    """Averaged diffusion matrix A(a); Hermitian PSD up to rounding.

    For constant dispersion this reduces to diag{sum_j |Psi_kj|^2}: the
    off-diagonal phases integrate to zero.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if len(psi) != n:
        raise ValueError(f"dispersion needs {n} rows, got {len(psi)}")
    psi_polys = tuple(tuple(as_poly(e, n) for e in row) for row in psi)
    if method == "symbolic":
        entries = averaged_diffusion_polys(psi_polys)
        A = np.array([[p.evaluate(a) for p in row] for row in entries], dtype=complex)
        return 0.5 * (A + A.conj().T)
    angles = _angle_samples(n, method, grid_per_dim, mc_samples, seed)
    states = np.exp(-1j * angles) * a
    vals = np.empty((angles.shape[0], n, len(psi_polys[0])), dtype=complex)
    for k, row in enumerate(psi_polys):
        for l, p in enumerate(row):
            vals[:, k, l] = p.evaluate(states)
    rotated = np.exp(1j * angles)[:, :, None] * vals
    A = np.einsum("gkl,gml->km", rotated, rotated.conj()) / angles.shape[0]
    return 0.5 * (A + A.conj().T)


# ---------------------------------------------------------------------------
# Hermitian PSD square roots
# ---------------------------------------------------------------------------


def hermitian_deviation(A):
    A = np.asarray(A)
    return float(np.abs(A - np.conj(A.T)).max()) if A.size else 0.0


def min_eigenvalue(A):
    return float(np.linalg.eigvalsh(np.asarray(A)).min())


def principal_sqrt(A, return_clamp_count=False):
    """Principal square root of a Hermitian PSD matrix via eigendecomposition.

    Eigenvalue dust in (-1e-6, 0) is clamped to zero; a minimum eigenvalue
    below -1e-6 raises NotPSDError.  The result B is Hermitian with B >= 0 and
    ||B^2 - A||_max <= 1e-9 (1 + ||A||_max).
    """
    real_input = not np.iscomplexobj(np.asarray(A))
    A = np.asarray(A, dtype=complex)
    scale = 1.0 + (np.abs(A).max() if A.size else 0.0)
    dev = hermitian_deviation(A)
    if dev > 1e-8 * scale:
        raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
    H = 0.5 * (A + np.conj(A.T))
    eigvals, eigvecs = np.linalg.eigh(H)
    if eigvals.min() < -FAIL_TOL:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {eigvals.min():.3e}")
    clamped = int((eigvals < 0).sum())
    eigvals = np.clip(eigvals, 0.0, None)
    B = (eigvecs * np.sqrt(eigvals)) @ np.conj(eigvecs.T)
    B = 0.5 * (B + np.conj(B.T))
    if real_input:
        B = B.real
    if return_clamp_count:
        return B, clamped
    return B


def principal_sqrt_batched(A):
    """Principal square roots over a batch (..., n, n); dust clamped quietly.

    Used inside integrators where A comes from averaged polynomials and is
    Hermitian by construction.
    """
    eigvals, eigvecs = np.linalg.eigh(A)
    if eigvals.min() < -FAIL_TOL:
        raise NotPSDError(f"batched matrix not PSD: min eigenvalue {eigvals.min():.3e}")
    eigvals = np.clip(eigvals, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", eigvecs, np.sqrt(eigvals), np.conj(eigvecs))


# ---------------------------------------------------------------------------
# averaged action-equation coefficients F(I), S(I), K(I)
# ---------------------------------------------------------------------------


class ActionPolynomial:
    """Real polynomial in the action variables, sum_k c_k prod_j (2 I_j)^{e_kj}.

    This is what the angle average of a resonant (alpha = beta) monomial set
    evaluates to; coefficients are the real parts of the complex monomial
    coefficients (the imaginary parts are the angle averages of rotational
    null terms and drop exactly).
    """

    __slots__ = ("n", "coeffs", "expos")

    def __init__(self, n, coeffs, expos):
        self.n = n
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.expos = np.asarray(expos, dtype=int).reshape(len(self.coeffs), n)

    @classmethod
    def from_resonant_poly(cls, p):
        """Build from a polynomial whose monomials all satisfy alpha = beta."""
        coeffs, expos = [], []
        for (a, b), c in p.sorted_terms():
            if a != b:
                raise ValueError("polynomial has non-resonant monomials")
            coeffs.append(float(np.real(c)))
            expos.append(a)
        if not coeffs:
            coeffs, expos = [0.0], [(0,) * p.n]
        return cls(p.n, coeffs, expos)

    def evaluate(self, actions):
        """Evaluate at actions of shape (..., n); broadcasts over leading axes."""
        x = 2.0 * np.asarray(actions, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=float)
        maxe = self.expos.max(axis=0) if len(self.coeffs) else np.zeros(self.n, int)
        powers = []
        for j in range(self.n):
            col = [np.ones(x.shape[:-1])]
            for _ in range(int(maxe[j])):
                col.append(col[-1] * x[..., j])
            powers.append(col)
        for c, e in zip(self.coeffs, self.expos):
            t = c
            for j in range(self.n):
                if e[j]:
                    t = t * powers[j][e[j]]
            out = out + t
        return out


def action_drift_polys(spec):
    """Symbolic F(I): angle average of v_k . P_k(v) + sum_l |Psi_kl(v)|^2.

    The k-th component is the real part of the alpha = beta monomials of
    v_k * conj(P_k) + sum_l Psi_kl * conj(Psi_kl), read as a polynomial in I.
    Hamiltonian drift parts contribute nothing here: their resonant monomials
    are purely imaginary multiples of |v|^2 powers.
    """
    n = spec.n
    out = []
    for k in range(n):
        q = Polynomial.var(k + 1, n) * spec.drift_polys[k].conj()
        for l in range(spec.n1):
            q = q + spec.psi_polys[k][l] * spec.psi_polys[k][l].conj()
        zero = (0,) * n
        out.append(ActionPolynomial.from_resonant_poly(q.keep_resonant(zero)))
    return tuple(out)


def action_diffusion_polys(spec):
    """Symbolic S(I): angle average of the real matrix with entries
    sum_l (v_k conj(Psi_kl)) . (v_j conj(Psi_jl))."""
    n = spec.n
    out = []
    for k in range(n):
        row = []
        for j in range(n):
            q = Polynomial.zero(n)
            for l in range(spec.n1):
                q = q + (
                    Polynomial.var(k + 1, n)
                    * spec.psi_polys[k][l].conj()
                    * Polynomial.conjvar(j + 1, n)
                    * spec.psi_polys[j][l]
                )
            zero = (0,) * n
            row.append(ActionPolynomial.from_resonant_poly(q.keep_resonant(zero)))
        out.append(tuple(row))
    return tuple(out)


def _angle_states(actions, angles):
    """States v_k = sqrt(2 I_k) e^{i phi_k} on the sampled angle grid."""
    amp = np.sqrt(2.0 * np.asarray(actions, dtype=float))
    return amp * np.exp(1j * angles)


def action_drift_F(spec, actions, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                   mc_samples=4096, seed=0):
    """Averaged action drift F(I); real n-vector, continuous up to I = 0."""
    actions = np.asarray(actions, dtype=float)
    if (actions < 0).any():
        raise ValueError("actions must be nonnegative")
    n = spec.n
    if method == "symbolic":
        return np.array([p.evaluate(actions) for p in action_drift_polys(spec)])
    angles = _angle_samples(n, method, grid_per_dim, mc_samples, seed)
    v = _angle_states(actions, angles)
    psi = spec.psi_at(v)
    out = np.empty(n, dtype=float)
    for k in range(n):
        pk = spec.drift_polys[k].evaluate(v)
        integrand = (v[:, k] * np.conj(pk)).real + (np.abs(psi[:, k, :]) ** 2).sum(axis=1)
        out[k] = integrand.mean()
    return out


def action_diffusion_SK(spec, actions, method="symbolic", *, grid_per_dim=DEFAULT_GRID,
                        mc_samples=4096, seed=0):
    """Averaged action diffusion S(I) and its principal square root K(I).

    For constant dispersion, S = diag{2 I_k b_k^2} with b_k^2 = sum_l
    |Psi_kl|^2, so K = diag{b_k sqrt(2 I_k)}.
    """
    actions = np.asarray(actions, dtype=float)
    if (actions < 0).any():
        raise ValueError("actions must be nonnegative")
    n = spec.n
    if method == "symbolic":
        entries = action_diffusion_polys(spec)
        S = np.array([[entries[k][j].evaluate(actions) for j in range(n)] for k in range(n)])
    else:
        angles = _angle_samples(n, method, grid_per_dim, mc_samples, seed)
        v = _angle_states(actions, angles)
        psi = spec.psi_at(v)
        w = v[:, :, None] * np.conj(psi)  # (g, n, n1): v_k conj(Psi_kl)
        S = np.einsum("gkl,gjl->kj", w, np.conj(w)).real / angles.shape[0]
    S = 0.5 * (S + S.T)
    K = principal_sqrt(S)
    return S, K


def constant_psi_b(spec):
    """Per-mode noise amplitudes b_k = sqrt(sum_l |Psi_kl|^2) for constant Psi."""
    mat = spec.psi_constant_matrix()
    return np.sqrt((np.abs(mat) ** 2).sum(axis=1))
