import numpy as np
import pytest

from stochavg import (
    NotPSDError,
    acceptance_system,
    action_diffusion_SK,
    action_drift_F,
    average_field,
    average_function,
    averaged_diffusion,
    parse_field_expr,
    principal_sqrt,
    rotate,
)
from stochavg.averaging import (
    actions_of,
    averaged_field_polys,
    canonical_angles,
)
from stochavg.model import Frequencies, SystemSpec
from stochavg.poly import from_expr

QUAD = dict(method="quadrature", grid_per_dim=32)


def expr(text, n):
    return parse_field_expr(text, n)


def rand_state(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def make_spec(n, p1, psi, h=None, psi_kind="smooth"):
    return SystemSpec(
        freqs=Frequencies(tuple(float(k) for k in range(1, n + 1))),
        epsilon=0.5,
        p1=tuple(expr(t, n) for t in p1),
        psi=tuple(tuple(expr(t, n) for t in row) for row in psi),
        h=expr(h, n) if h else None,
        psi_kind=psi_kind,
    )


# -- rotation ----------------------------------------------------------------

def test_rotate_identity_and_half_turn():
    v = np.array([1 + 2j, -3j])
    np.testing.assert_array_equal(rotate(np.zeros(2), v), v)
    np.testing.assert_allclose(rotate(np.array([np.pi]), np.array([1 + 0j])), [-1], atol=1e-15)
    np.testing.assert_allclose(
        rotate(np.array([np.pi / 2, np.pi]), np.array([1 + 0j, 1j])),
        [1j, -1j], atol=1e-15)


def test_rotate_dimension_mismatch():
    with pytest.raises(ValueError):
        rotate(np.zeros(3), np.ones(2, dtype=complex))


def test_rotate_preserves_moduli():
    rng = np.random.default_rng(0)
    v = rand_state(rng, 4)
    w = rng.random(4) * 7
    np.testing.assert_allclose(np.abs(rotate(w, v)), np.abs(v), rtol=1e-15)


def test_canonical_angles():
    np.testing.assert_allclose(canonical_angles([-np.pi, 5 * np.pi]),
                               [np.pi, np.pi], atol=1e-12)


# -- scalar and field averages ------------------------------------------------

def test_average_function_rotation_invariant_scalar():
    a = np.array([1.5 - 0.5j, 0.2 + 1j])
    f = expr("abs2(v1)", 2)
    assert average_function(f, a) == pytest.approx(abs(a[0]) ** 2)
    assert average_function(expr("v1", 2), a) == pytest.approx(0.0, abs=1e-15)


def test_average_function_cross_term_dies():
    a = np.array([1 + 0j, 1 + 0j])
    assert average_function(expr("v1*cv2", 2), a) == pytest.approx(0.0, abs=1e-15)
    # quadrature oracle agrees
    q = average_function(expr("v1*cv2", 2), a, **QUAD)
    assert abs(q) <= 1e-12


def test_average_field_selection_rule():
    a = np.array([0.7 + 0.3j, -1.1 + 0.2j])
    p = [expr("v1", 2), expr("0", 2)]
    np.testing.assert_allclose(average_field(p, a), [a[0], 0])
    p = [expr("v2", 2), expr("0", 2)]
    np.testing.assert_allclose(average_field(p, a), [0, 0], atol=1e-15)
    p = [expr("abs2(v2)*v1", 2), expr("0", 2)]
    np.testing.assert_allclose(average_field(p, a), [abs(a[1]) ** 2 * a[0], 0])
    p = [expr("v1^2*cv2", 2), expr("0", 2)]
    got = average_field(p, a)
    np.testing.assert_allclose(got, [0, 0], atol=1e-15)
    quad = average_field(p, a, **QUAD)
    np.testing.assert_allclose(quad, [0, 0], atol=1e-12)


def test_average_equivariance_under_rotation():
    # <<P>>(Phi_w a) = Phi_w <<P>>(a)
    rng = np.random.default_rng(5)
    a = rand_state(rng, 2)
    w = rng.random(2) * 2 * np.pi
    p = [expr("-v1 + 0.5*v2 + i*v1*abs2(v2)", 2), expr("v1*v2*cv1", 2)]
    lhs = average_field(p, rotate(w, a))
    rhs = rotate(w, average_field(p, a))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    # scalar invariance
    f = expr("abs2(v1)*abs2(v2) + v1*cv1", 2)
    assert average_function(f, rotate(w, a)) == pytest.approx(average_function(f, a), abs=1e-12)


# -- averaged diffusion --------------------------------------------------------

def test_averaged_diffusion_constant_diagonal():
    psi = [["1", "0"], ["0", "2"]]
    a = np.array([0.4 + 0.1j, 1.0 - 2.0j])
    A = averaged_diffusion([[expr(t, 2) for t in row] for row in psi], a)
    np.testing.assert_allclose(A, np.diag([1.0, 4.0]), atol=1e-12)
    Aq = averaged_diffusion([[expr(t, 2) for t in row] for row in psi], a,
                            method="quadrature", grid_per_dim=64)
    np.testing.assert_allclose(Aq, np.diag([1.0, 4.0]), atol=1e-9)
    np.testing.assert_allclose(principal_sqrt(A), np.diag([1.0, 2.0]), atol=1e-12)


def test_averaged_diffusion_identity_preserved():
    psi = [[expr("1", 2), expr("0", 2)], [expr("0", 2), expr("1", 2)]]
    rng = np.random.default_rng(9)
    for _ in range(3):
        a = rand_state(rng, 2)
        np.testing.assert_allclose(averaged_diffusion(psi, a), np.eye(2), atol=1e-14)


def test_averaged_diffusion_shear():
    # Psi(v) = [[1, v1],[0,1]] averages to diag(1 + |a1|^2, 1)
    psi = [[expr("1", 2), expr("v1", 2)], [expr("0", 2), expr("1", 2)]]
    rng = np.random.default_rng(2)
    a = rand_state(rng, 2)
    A = averaged_diffusion(psi, a)
    expected = np.diag([1 + abs(a[0]) ** 2, 1.0])
    np.testing.assert_allclose(A, expected, atol=1e-12)
    Aq = averaged_diffusion(psi, a, **QUAD)
    np.testing.assert_allclose(Aq, expected, atol=1e-10)
    assert abs(Aq[0, 1]) <= 1e-10


def test_averaged_diffusion_hermitian_psd_at_random_points():
    psi = [[expr("1 + 0.3*v2", 2), expr("v1", 2)],
           [expr("cv1*v2", 2), expr("1", 2)]]
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rand_state(rng, 2)
        A = averaged_diffusion(psi, a)
        np.testing.assert_allclose(A, A.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(A).min() >= -1e-9


# -- principal square root -----------------------------------------------------

def test_principal_sqrt_2x2_closed_form():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    B = principal_sqrt(A)
    s = np.sqrt(3.0)
    expected = 0.5 * np.array([[s + 1, s - 1], [s - 1, s + 1]])
    np.testing.assert_allclose(B, expected, atol=1e-12)
    np.testing.assert_allclose(B @ B, A, atol=1e-12)
    assert np.linalg.eigvalsh(B).min() >= 0


def test_principal_sqrt_idempotence():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    B = X @ X.conj().T
    B = principal_sqrt(B)  # Hermitian PSD
    again = principal_sqrt(B @ B)
    np.testing.assert_allclose(again, B, atol=1e-8)


def test_principal_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        principal_sqrt(np.diag([1.0, -0.5]))


def test_principal_sqrt_clamps_dust():
    B, clamped = principal_sqrt(np.diag([1.0, -1e-10]), return_clamp_count=True)
    assert clamped == 1
    np.testing.assert_allclose(B, np.diag([1.0, 0.0]), atol=1e-12)


def test_principal_sqrt_rejects_nonhermitian():
    with pytest.raises(ValueError):
        principal_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))


# -- action drift and diffusion -------------------------------------------------

def test_action_drift_ou_closed_form():
    spec = make_spec(1, ["-v1"], [["1"]], psi_kind="constant")
    for I in ([0.0], [0.5], [2.0]):
        np.testing.assert_allclose(action_drift_F(spec, I), [1.0 - 2.0 * I[0]], atol=1e-12)


def test_action_drift_zero_system():
    spec = make_spec(2, ["0", "0"], [["0", "0"], ["0", "0"]])
    np.testing.assert_allclose(action_drift_F(spec, [0.3, 0.7]), [0.0, 0.0], atol=1e-15)


def test_action_drift_hamiltonian_term_contributes_nothing():
    # P1 = i v1 |v2|^2 is a hamiltonian field component; F must vanish
    spec = make_spec(2, ["i*v1*abs2(v2)", "0"], [["0", "0"], ["0", "0"]])
    I = np.array([0.4, 1.1])
    np.testing.assert_allclose(action_drift_F(spec, I), [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(
        action_drift_F(spec, I, method="quadrature", grid_per_dim=32),
        [0.0, 0.0], atol=1e-10)


def test_action_diffusion_constant_closed_form():
    spec = make_spec(2, ["0", "0"], [["1", "0"], ["0", "2"]], psi_kind="constant")
    S, K = action_diffusion_SK(spec, [0.5, 2.0])
    np.testing.assert_allclose(S, np.diag([2 * 0.5 * 1, 2 * 2.0 * 4]), atol=1e-12)
    np.testing.assert_allclose(K, np.diag([1.0, 4.0]), atol=1e-12)


def test_action_diffusion_zero_actions():
    spec = make_spec(2, ["0", "0"], [["1", "v1"], ["0", "1"]])
    S, K = action_diffusion_SK(spec, [0.0, 0.0])
    np.testing.assert_allclose(S, 0.0, atol=1e-14)
    np.testing.assert_allclose(K, 0.0, atol=1e-14)


def test_action_diffusion_shear_psd_and_quadrature():
    spec = make_spec(2, ["0", "0"], [["1", "v1"], ["0", "1"]])
    I = np.array([0.5, 0.5])
    S, K = action_diffusion_SK(spec, I)
    Sq, _ = action_diffusion_SK(spec, I, method="quadrature", grid_per_dim=32)
    np.testing.assert_allclose(S, Sq, atol=1e-10)
    np.testing.assert_allclose(S, S.T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() >= -1e-9
    np.testing.assert_allclose(K @ K, S, atol=1e-9)


# -- backend equivalence on random polynomial inputs ----------------------------

def test_backend_equivalence_random_polynomials():
    rng = np.random.default_rng(123)
    for trial in range(10):
        n = int(rng.integers(1, 4))
        p = random_poly(rng, n, degree=4)
        a = rand_state(rng, n)
        sym = average_function(p, a)
        grid = 2 * 4 + 2
        quad = average_function(p, a, method="quadrature", grid_per_dim=grid)
        assert abs(sym - quad) <= 1e-10 * (1 + abs(sym))


def random_poly(rng, n, degree):
    terms = []
    text = []
    for _ in range(4):
        alpha = rng.integers(0, degree // 2 + 1, n)
        beta = rng.integers(0, degree // 2 + 1, n)
        while alpha.sum() + beta.sum() > degree:
            if alpha.sum() >= beta.sum():
                alpha[np.argmax(alpha)] -= 1
            else:
                beta[np.argmax(beta)] -= 1
        c = rng.standard_normal() + 1j * rng.standard_normal()
        bits = [f"({c.real!r} + {c.imag!r}*i)"]
        for j in range(n):
            if alpha[j]:
                bits.append(f"v{j+1}^{alpha[j]}")
            if beta[j]:
                bits.append(f"cv{j+1}^{beta[j]}")
        text.append("*".join(bits))
    return from_expr(parse_field_expr(" + ".join(text), n), n)


def test_montecarlo_mode_cross_check():
    a = np.array([1.0 + 0.5j, -0.3 + 0.2j])
    f = parse_field_expr("abs2(v1)*abs2(v2) + v1*cv1", 2)
    sym = average_function(f, a)
    mc = average_function(f, a, method="montecarlo", mc_samples=20000, seed=0)
    assert abs(sym - mc) < 0.05 * (1 + abs(sym))


def test_actions_of_matches_definition():
    v = np.array([3 + 4j, 1 - 1j])
    np.testing.assert_allclose(actions_of(v), [12.5, 1.0])


def test_averaged_field_polys_match_pointwise_averaging():
    spec = acceptance_system()
    polys = averaged_field_polys(spec.drift_polys, 2)
    rng = np.random.default_rng(77)
    for _ in range(4):
        a = rand_state(rng, 2)
        direct = average_field(spec.drift_polys, a)
        via_polys = np.array([p.evaluate(a) for p in polys])
        np.testing.assert_allclose(via_polys, direct, rtol=1e-12, atol=1e-12)
