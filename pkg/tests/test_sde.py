import numpy as np
import pytest

from stochavg import (
    NonFiniteError,
    StepTooLargeError,
    acceptance_system,
    ito_action_consistency,
    moment_diagnostic,
    ou_system_1d,
    parse_field_expr,
    simulate_action_sde,
    simulate_cutoff_effective,
    simulate_effective,
    simulate_perturbed,
)
from stochavg.model import Frequencies, SystemSpec
from stochavg.sde import NoisePath, ito_refinement_study

V0_1 = np.array([1.0 + 0.0j])


def make_spec(n, p1, psi, h=None, psi_kind="constant", epsilon=0.2):
    return SystemSpec(
        freqs=Frequencies(tuple(float(k) for k in range(1, n + 1))),
        epsilon=epsilon,
        p1=tuple(parse_field_expr(t, n) for t in p1),
        psi=tuple(tuple(parse_field_expr(t, n) for t in row) for row in psi),
        h=parse_field_expr(h, n) if h else None,
        psi_kind=psi_kind,
    )


# -- noise streams -------------------------------------------------------------

def test_noise_reproducible_from_lineage():
    a = NoisePath(42, 3, 0, 0.01).complex_increments(100, 2)
    b = NoisePath(42, 3, 0, 0.01).complex_increments(100, 2)
    np.testing.assert_array_equal(a, b)
    c = NoisePath(42, 4, 0, 0.01).complex_increments(100, 2)
    assert not np.array_equal(a, c)


def test_noise_variance_normalization():
    # E|dbeta|^2 = 2 dtau per complex increment
    dtau = 0.01
    z = NoisePath(0, 0, 0, dtau).complex_increments(200_000, 1)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(2 * dtau, rel=0.02)


# -- perturbed system -----------------------------------------------------------

def test_perturbed_rejects_large_step():
    spec = ou_system_1d(epsilon=0.1)
    with pytest.raises(StepTooLargeError):
        simulate_perturbed(spec, V0_1, T=1.0, dtau=0.1, n_paths=2, seed=0)


def test_perturbed_pure_rotation_keeps_a_constant():
    spec = make_spec(1, ["0"], [["0"]])
    ens = simulate_perturbed(spec, V0_1, T=1.0, dtau=0.01, n_paths=3, seed=0)
    np.testing.assert_allclose(ens.a.values, 1.0 + 0.0j, atol=1e-12)
    # actions constant for every epsilon when P = 0, Psi = 0
    for eps in (1.0, 0.31, 0.05):
        spec2 = make_spec(1, ["0"], [["0"]], epsilon=eps)
        e2 = simulate_perturbed(spec2, V0_1, T=0.5, dtau=min(0.01, eps / 5), n_paths=2, seed=1)
        np.testing.assert_allclose(e2.actions().values, 0.5, atol=1e-12)


def test_perturbed_linear_decay():
    spec = make_spec(1, ["-v1"], [["0"]])
    ens = simulate_perturbed(spec, V0_1, T=1.0, dtau=1e-4, n_paths=1, seed=0)
    final = np.abs(ens.a.values[0, -1, 0])
    assert final == pytest.approx(np.exp(-1.0), abs=1e-3)


def test_perturbed_action_mean_growth_under_noise():
    # P = 0, Psi = identity: E I(tau) = I(0) + tau, exactly in expectation
    spec = make_spec(1, ["0"], [["1"]])
    ens = simulate_perturbed(spec, V0_1, T=1.0, dtau=0.01, n_paths=4000, seed=12,
                             record_times=[1.0])
    I = ens.actions().at_time(1.0)[:, 0]
    se = I.std() / np.sqrt(I.size)
    assert abs(I.mean() - 1.5) <= 3 * se


def test_perturbed_modulus_identity():
    spec = acceptance_system(epsilon=0.2)
    ens = simulate_perturbed(spec, np.array([1 + 0j, 1 + 0j]), T=0.5, dtau=1e-3,
                             n_paths=8, seed=5)
    gap = np.abs(np.abs(ens.a.values) - np.abs(ens.v.values))
    assert gap.max() <= 4 * np.finfo(float).eps * np.abs(ens.v.values).max()
    # actions are read off v, so the two ensembles share actions exactly
    np.testing.assert_array_equal(ens.actions().values, ens.v.actions().values)


def test_perturbed_seed_determinism_across_threads():
    spec = acceptance_system(epsilon=0.2)
    v0 = np.array([1 + 0j, 1 + 0j])
    one = simulate_perturbed(spec, v0, T=0.3, dtau=1e-3, n_paths=64, seed=9)
    two = simulate_perturbed(spec, v0, T=0.3, dtau=1e-3, n_paths=64, seed=9, threads=4)
    np.testing.assert_array_equal(one.v.values, two.v.values)


def test_perturbed_nonfinite_reports_path_index():
    # strongly repulsive cubic drift blows up quickly
    spec = make_spec(1, ["abs2(v1)*v1*100", "0"][:1], [["0"]])
    with pytest.raises(NonFiniteError) as err:
        simulate_perturbed(spec, np.array([10.0 + 0j]), T=1.0, dtau=0.01,
                           n_paths=2, seed=0)
    assert err.value.path_index is not None


# -- effective equation -----------------------------------------------------------

def test_effective_deterministic_decay():
    spec = make_spec(1, ["-v1"], [["0"]])
    ens = simulate_effective(spec, "full", V0_1, T=1.0, dtau=1e-4, n_paths=1, seed=0)
    assert abs(ens.values[0, -1, 0]) == pytest.approx(np.exp(-1.0), abs=2e-4)


def test_effective_ou_stationary_action_mean():
    spec = ou_system_1d()
    ens = simulate_effective(spec, "full", V0_1, T=10.0, dtau=1e-3, n_paths=4000,
                             seed=7, record_times=[10.0])
    I = ens.actions().at_time(10.0)[:, 0]
    se = I.std() / np.sqrt(I.size)
    assert abs(I.mean() - 0.5) <= 3 * se


def test_effective_full_vs_modified_identical_when_no_hamiltonian():
    spec = make_spec(2, ["-v1", "-v2"], [["1", "0"], ["0", "1"]])
    a = simulate_effective(spec, "full", np.array([1 + 0j, 1j]), T=0.5, dtau=1e-3,
                           n_paths=16, seed=3)
    b = simulate_effective(spec, "modified", np.array([1 + 0j, 1j]), T=0.5, dtau=1e-3,
                           n_paths=16, seed=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_effective_state_dependent_dispersion():
    # Psi(v) = [[1, v1],[0,1]], P = -v: A(a) = diag(1 + |a1|^2, 1), so the
    # averaged noise feeds mode 1 at exactly the dissipation rate:
    # dE|a1|^2 = 2 dtau  ->  E I_1(tau) = I_1(0) + tau.  Mode 2 is a plain
    # OU mode started at its stationary mean, E I_2 = 1/2 throughout.
    spec = make_spec(2, ["-v1", "-v2"], [["1", "v1"], ["0", "1"]],
                     psi_kind="smooth")
    v0 = np.array([1.0 + 0j, 1.0 + 0j])
    ens = simulate_effective(spec, "full", v0, T=1.0, dtau=1e-3, n_paths=3000,
                             seed=21, record_times=[1.0])
    I = ens.actions().at_time(1.0)
    se = I.std(axis=0) / np.sqrt(I.shape[0])
    assert abs(I[:, 0].mean() - 1.5) <= 3 * se[0] + 2e-3
    assert abs(I[:, 1].mean() - 0.5) <= 3 * se[1] + 2e-3


def test_action_sde_state_dependent_dispersion():
    # same system through the action equation: F = (1, 1 - 2 I_2),
    # S = diag(2 I_1 (1 + 2 I_1), 2 I_2); E I_1(tau) = I_1(0) + tau and
    # E I_2 = 1/2 throughout
    spec = make_spec(2, ["-v1", "-v2"], [["1", "v1"], ["0", "1"]],
                     psi_kind="smooth")
    ens = simulate_action_sde(spec, np.array([0.5, 0.5]), T=1.0, dtau=1e-3,
                              n_paths=3000, seed=22, record_times=[1.0])
    I = ens.at_time(1.0)
    se = I.std(axis=0) / np.sqrt(I.shape[0])
    assert abs(I[:, 0].mean() - 1.5) <= 3 * se[0] + 2e-3
    assert abs(I[:, 1].mean() - 0.5) <= 3 * se[1] + 2e-3


# -- action equation ---------------------------------------------------------------

def test_action_sde_ou_stationary_mean():
    spec = ou_system_1d()
    ens = simulate_action_sde(spec, np.array([1.0]), T=10.0, dtau=1e-3, n_paths=4000,
                              seed=11, record_times=[10.0])
    I = ens.at_time(10.0)[:, 0]
    se = I.std() / np.sqrt(I.size)
    assert abs(I.mean() - 0.5) <= 3 * se


def test_action_sde_deterministic_decay():
    spec = make_spec(1, ["-v1"], [["0"]])
    ens = simulate_action_sde(spec, np.array([1.0]), T=1.0, dtau=1e-4, n_paths=1, seed=0)
    assert ens.values[0, -1, 0] == pytest.approx(np.exp(-2.0), abs=5e-4)


def test_action_sde_zero_start_linear_growth():
    # I0 = 0, P = 0, constant Psi: E I_k(tau) = b_k^2 tau
    spec = make_spec(1, ["0"], [["1"]])
    ens = simulate_action_sde(spec, np.array([0.0]), T=1.0, dtau=1e-3, n_paths=4000,
                              seed=2, record_times=[1.0])
    I = ens.at_time(1.0)[:, 0]
    se = I.std() / np.sqrt(I.size)
    assert abs(I.mean() - 1.0) <= 3 * se
    assert (ens.values >= 0).all()
    assert ens.extras["clamp_counts"].sum() > 0  # boundary is actually visited


# -- pathwise action consistency -----------------------------------------------------

def test_ito_consistency_deterministic():
    # noise-free gap of the left-endpoint rule is sum_m I_m dtau^2
    # = dtau * integral 2 I^2 ~ 2.2e-5 at dtau = 1e-4; it scales like dtau
    spec = make_spec(1, ["-v1"], [["0"]])
    rep = ito_action_consistency(spec, V0_1, T=1.0, dtau=1e-4, seed=0)
    assert rep.sup_error <= 5e-5
    finer = ito_action_consistency(spec, V0_1, T=1.0, dtau=1e-5, seed=0)
    assert finer.sup_error <= 5e-6


def test_ito_consistency_strong_half_order():
    spec = acceptance_system(epsilon=0.2)
    v0 = np.array([1 + 0j, 1 + 0j])
    errs = ito_refinement_study(spec, v0, T=1.0, dtaus=[4e-3, 2e-3, 1e-3],
                                seeds=range(16))
    ratios = errs[:, :-1] / errs[:, 1:]
    med = np.median(ratios, axis=0)
    assert (med >= 1.2).all() and (med <= 1.7).all()


def test_ito_consistency_monotone_refinement():
    spec = acceptance_system(epsilon=0.2)
    v0 = np.array([1 + 0j, 1 + 0j])
    errs = ito_refinement_study(spec, v0, T=1.0, dtaus=[1e-2, 1e-3, 1e-4],
                                seeds=range(8))
    med = np.median(errs, axis=0)
    assert med[0] > med[1] > med[2]


# -- cutoff variant --------------------------------------------------------------------

def test_cutoff_never_triggering_matches_effective_bitwise():
    spec = ou_system_1d()
    plain = simulate_effective(spec, "full", V0_1, T=1.0, dtau=1e-3, n_paths=32, seed=4)
    cut = simulate_cutoff_effective(spec, "full", V0_1, T=1.0, dtau=1e-3, n_paths=32,
                                    seed=4, R=1e9)
    np.testing.assert_array_equal(plain.values, cut.paths.values)
    assert (cut.tau_R == plain.times[-1]).all()


def test_cutoff_requires_room_above_v0():
    spec = ou_system_1d()
    with pytest.raises(ValueError):
        simulate_cutoff_effective(spec, "full", V0_1, T=1.0, dtau=1e-3, n_paths=2,
                                  seed=0, R=0.5)


def test_cutoff_trivial_continuation_variance():
    # R barely above |v0|^2: stops almost immediately; post-stop increments
    # are plain complex Wiener steps with per-component variance 2 dtau
    spec = ou_system_1d()
    dtau = 1e-3
    cut = simulate_cutoff_effective(spec, "full", V0_1, T=0.5, dtau=dtau,
                                    n_paths=4000, seed=8, R=1.0 + 1e-6)
    assert np.median(cut.tau_R) <= 0.05
    vals = cut.paths.values[:, :, 0]
    times = cut.paths.times
    post = times[None, :-1] >= cut.tau_R[:, None]
    inc = np.diff(vals, axis=1)[post]
    assert inc.size > 100_000
    var = np.mean(np.abs(inc) ** 2)
    se = np.std(np.abs(inc) ** 2) / np.sqrt(inc.size)
    assert abs(var - 2 * dtau) <= 4 * se


def test_cutoff_deterministic_decay_never_triggers():
    spec = make_spec(1, ["-v1"], [["0"]])
    cut = simulate_cutoff_effective(spec, "full", V0_1, T=1.0, dtau=1e-3, n_paths=1,
                                    seed=0, R=4.0)
    assert cut.tau_R[0] == pytest.approx(1.0)
    assert abs(cut.paths.values[0, -1, 0]) == pytest.approx(np.exp(-1.0), abs=1e-3)


# -- moment diagnostic -------------------------------------------------------------------

def test_moment_diagnostic_finite_and_stable():
    spec = acceptance_system(epsilon=0.2)
    rep = moment_diagnostic(spec, np.array([1 + 0j, 1 + 0j]), T=2.0, dtau=2e-3,
                            n_paths=1000, seed=3, record_times=[0.5, 1.0, 1.5, 2.0])
    assert rep.order == 5
    assert np.isfinite(rep.sup_moment)
    assert 0.5 <= rep.doubling_ratio <= 2.0
