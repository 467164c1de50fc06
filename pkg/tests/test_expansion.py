import math

import numpy as np
import pytest

from washboard.model import ModelParams, PeriodicPotential
from washboard.basis import HermiteFourierField, TruncationSpec, apply_lower
from washboard.expansion import (EquilibriumPoissonSolver, build_chain,
                                 diffusion_coefficients, partial_sum_D,
                                 partial_sum_U, series_radius_estimate,
                                 solve_equilibrium_poisson, velocity_coefficient)
from washboard.transport import SolverError, solve_transport


def _params(gamma=1.0, beta=5.0, v0=1.0, period=1.0):
    return ModelParams(gamma=gamma, beta=beta, force=0.0,
                       potential=PeriodicPotential.cosine(v0, period))


def _free(gamma=1.0, beta=1.0, period=2 * np.pi):
    return ModelParams(gamma=gamma, beta=beta, force=0.0,
                       potential=PeriodicPotential(period=period))


def _reflect(field: HermiteFourierField) -> HermiteFourierField:
    """(q, p) -> (-q, -p): level n picks (-1)^n on cosines, -(-1)^n on sines."""
    c = field.coeffs.copy()
    M = field.n_fourier
    for n in range(c.shape[0]):
        sign = (-1.0) ** n
        c[n, : M + 1] *= sign
        c[n, M + 1 :] *= -sign
    return field.with_coeffs(c)


@pytest.fixture(scope="module")
def chain151():
    """Workhorse chain at gamma=1, V0=1, beta=5, L=1, order 9."""
    return build_chain(_params(), TruncationSpec(120, 24), 9)


# ---------------------------------------------------------------------------
# Single Poisson solves
# ---------------------------------------------------------------------------

def test_poisson_free_particle_momentum():
    params = _free(gamma=2.0, beta=1.0)
    trunc = TruncationSpec(20, 1)
    rhs = HermiteFourierField.momentum(20, 1, 2 * np.pi, 1.0)
    psi = solve_equilibrium_poisson(rhs, False, params, trunc)
    # -L0 (p/gamma) = p for the free particle
    assert psi.coeffs[1, 0] == pytest.approx(0.5, rel=1e-12)
    mask = np.ones_like(psi.coeffs, bool)
    mask[1, 0] = False
    assert np.abs(psi.coeffs[mask]).max() < 1e-12


def test_poisson_zero_rhs():
    params = _params(beta=2.0)
    rhs = HermiteFourierField.zeros(16, 8, 1.0, 2.0)
    psi = solve_equilibrium_poisson(rhs, False, params, TruncationSpec(16, 8))
    assert np.abs(psi.coeffs).max() < 1e-14


def test_poisson_solvability_guard():
    params = _params(beta=2.0)
    rhs = HermiteFourierField.constant(1.0, 16, 8, 1.0, 2.0)
    with pytest.raises(SolverError):
        solve_equilibrium_poisson(rhs, False, params, TruncationSpec(16, 8))


def _flip_p(field: HermiteFourierField) -> HermiteFourierField:
    """p -> -p: level n picks (-1)^n."""
    signs = (-1.0) ** np.arange(field.coeffs.shape[0])
    return field.with_coeffs(signs[:, None] * field.coeffs)


def _flip_q(field: HermiteFourierField) -> HermiteFourierField:
    """q -> -q: sine components negate."""
    c = field.coeffs.copy()
    c[:, field.n_fourier + 1 :] *= -1.0
    return field.with_coeffs(c)


def _solvable_rhs(params, trunc):
    c = np.zeros((trunc.n_hermite + 1, 2 * trunc.n_fourier + 1))
    c[1, 1] = 0.4
    c[2, 9] = -0.3
    c[3, 0] = 0.7
    rhs = HermiteFourierField(c, params.potential.period, params.beta)
    solver = EquilibriumPoissonSolver(params, trunc, adjoint=False)
    c[0, 0] -= solver.mean(rhs)
    return HermiteFourierField(c, params.potential.period, params.beta)


def test_adjoint_solve_is_momentum_flip_conjugate():
    # the adjoint equals p -> -p conjugation of the direct solve (any V)
    params = _params(beta=2.0, v0=0.8)
    trunc = TruncationSpec(24, 8)
    rhs = _solvable_rhs(params, trunc)
    psi_adj = solve_equilibrium_poisson(rhs, True, params, trunc)
    psi_ref = _flip_p(solve_equilibrium_poisson(_flip_p(rhs), False, params, trunc))
    assert psi_adj.coeffs == pytest.approx(psi_ref.coeffs, abs=1e-11)


def test_adjoint_solve_is_q_flip_conjugate_for_symmetric_v():
    # with V(q) = V(-q), flipping q alone also conjugates to the adjoint,
    # so flipping the adjoint flag twice returns the reflected solution
    params = _params(beta=2.0, v0=0.8)
    trunc = TruncationSpec(24, 8)
    rhs = _solvable_rhs(params, trunc)
    psi_adj = solve_equilibrium_poisson(rhs, True, params, trunc)
    psi_ref = _flip_q(solve_equilibrium_poisson(_flip_q(rhs), False, params, trunc))
    assert psi_adj.coeffs == pytest.approx(psi_ref.coeffs, abs=1e-11)


# ---------------------------------------------------------------------------
# Chain construction
# ---------------------------------------------------------------------------

def test_chain_free_particle():
    chain = build_chain(_free(gamma=2.0, beta=1.0), TruncationSpec(24, 1), 3)
    # f1 = beta p / gamma -> level-1 coefficient sqrt(beta)/gamma
    assert chain.fs[1].coeffs[1, 0] == pytest.approx(0.5, rel=1e-11)
    assert velocity_coefficient(chain, 1) == pytest.approx(0.5, rel=1e-11)
    # phi_0 = p / gamma
    assert chain.phis[0].coeffs[1, 0] == pytest.approx(0.5, rel=1e-11)
    # higher orders vanish identically for V = 0
    assert abs(chain.v[2]) < 1e-12
    assert abs(chain.v[3]) < 1e-12


def test_chain_side_conditions(chain151):
    chain = chain151
    one = HermiteFourierField.constant(1.0, 120, 24, 1.0, 5.0)
    # <f_j, 1> = 0, <f_0, 1> = 1
    assert chain.inner(chain.fs[0], one) == pytest.approx(1.0, abs=1e-13)
    for j in range(1, chain.order + 1):
        assert abs(chain.inner(chain.fs[j], one)) < 1e-10
    # <phi_j, 1> = -sum_r <f_r, phi_{j-r}>
    for j in range(len(chain.phis)):
        lhs = chain.inner(chain.phis[j], one)
        rhs = -sum(chain.inner(chain.fs[r], chain.phis[j - r])
                   for r in range(1, j + 1))
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_chain_solve_quality(chain151):
    d = chain151.diagnostics
    assert max(abs(v) for v in d["lambda"].values()) < 1e-10
    assert max(d["residual"].values()) < 1e-8
    assert max(d["solvability"].values()) < 1e-7


def test_chain_f1_parity(chain151):
    # symmetric potential: f_1 has odd reflection parity
    f1 = chain151.fs[1]
    ref = _reflect(f1)
    assert ref.coeffs == pytest.approx(-f1.coeffs, abs=1e-10 * np.abs(f1.coeffs).max())


def test_chain_requires_zero_force():
    params = _params().with_force(0.3)
    with pytest.raises(ValueError):
        build_chain(params, TruncationSpec(16, 8), 2)


# ---------------------------------------------------------------------------
# Velocity coefficients
# ---------------------------------------------------------------------------

def test_velocity_even_orders_vanish(chain151):
    v = chain151.v
    for even in (2, 4, 6, 8):
        assert abs(v[even]) <= 1e-8 * abs(v[1])


def test_velocity_forms_agree(chain151):
    for j in range(1, 10):
        velocity_coefficient(chain151, j)   # raises on >1e-6 disagreement
    with pytest.raises(ValueError):
        velocity_coefficient(chain151, 10)


def test_einstein_identity_vs_transport(chain151):
    res = solve_transport(_params(), TruncationSpec(120, 24))
    d0 = chain151.v[1] / 5.0
    assert abs(res.d_primary - d0) <= 1e-6 * abs(res.d_primary)


# ---------------------------------------------------------------------------
# Sigma / Xi tables and the two D series
# ---------------------------------------------------------------------------

def test_sigma11_free_particle():
    chain = build_chain(_free(), TruncationSpec(24, 1), 3)
    table = diffusion_coefficients(chain)
    # int p phi0 f1 rho is an odd Gaussian moment
    assert abs(table.sigma[0, 0]) < 1e-12


def test_tables_parity(chain151):
    table = diffusion_coefficients(chain151)
    scale = max(abs(table.v[1]) / 5.0, np.abs(table.sigma).max())
    for odd in (1, 3, 5, 7):
        assert abs(table.sigma_column_sum(odd)) <= 1e-8 * scale
        assert abs(table.xi_column_sum(odd)) <= 1e-8 * scale


def test_consistency_identity(chain151):
    # (l+1) V_{l+1}/beta + sum Xi = V_{l+1}/beta + sum Sigma, each l
    table = diffusion_coefficients(chain151)
    beta = 5.0
    base = abs(table.v[1]) / beta
    for ell in range(1, 9):
        lhs = (ell + 1) * table.v[ell + 1] / beta + table.xi_column_sum(ell)
        rhs = table.v[ell + 1] / beta + table.sigma_column_sum(ell)
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs), base)


def test_shift_identity(chain151):
    # <a- phi_0, f_k> = <a- phi_m, f_{k-m}> for 0 <= m <= k
    chain = chain151
    for k in range(0, 5):
        ref = chain.inner(apply_lower(chain.phis[0]), chain.fs[k])
        for m in range(0, k + 1):
            val = chain.inner(apply_lower(chain.phis[m]), chain.fs[k - m])
            assert abs(val - ref) <= 1e-7


def test_phi_solvability_equals_velocity(chain151):
    chain = chain151
    one = HermiteFourierField.constant(1.0, 120, 24, 1.0, 5.0)
    for j in range(1, len(chain.phis)):
        mean_lowered = chain.inner(apply_lower(chain.phis[j - 1]), one)
        assert abs(mean_lowered - chain.v[j]) <= 1e-7


def test_partial_sum_u(chain151):
    assert partial_sum_U(chain151, 0.0, 9) == 0.0
    chain = build_chain(_free(gamma=2.0, beta=1.0), TruncationSpec(24, 1), 3)
    assert partial_sum_U(chain, 0.8, 1) == pytest.approx(0.4, rel=1e-11)
    assert partial_sum_U(chain, 0.8, 3) == pytest.approx(0.4, rel=1e-10)
    with pytest.raises(ValueError):
        partial_sum_U(chain151, 0.5, 10)


def test_partial_sums_track_spectral(chain151):
    for F in (0.1, 0.3, 0.5):
        res = solve_transport(_params().with_force(F), TruncationSpec(120, 24))
        ps = partial_sum_U(chain151, F, 9)
        assert abs(ps - res.drift) <= 3e-4 * abs(res.drift) + 1e-12


def test_partial_sum_d_modes(chain151):
    table = diffusion_coefficients(chain151)
    d0 = table.v[1] / 5.0
    assert partial_sum_D(table, 0.0, 8, "full") == pytest.approx(d0, rel=1e-12)
    assert partial_sum_D(table, 0.0, 8, "naive_einstein") == pytest.approx(d0, rel=1e-12)
    with pytest.raises(ValueError):
        partial_sum_D(table, 0.1, 9)
    with pytest.raises(ValueError):
        partial_sum_D(table, 0.1, 2, "bogus")


def test_second_order_d_matches_direct_integrals(chain151):
    # F^2 truncation of the full series against its defining integrals
    chain = chain151
    table = diffusion_coefficients(chain)
    grid = chain.grid
    beta = 5.0
    pvals = grid.p[:, None] * np.ones((1, grid.q.size))
    i1 = grid.integrate(pvals * grid.values(chain.phis[0]) * grid.values(chain.fs[1]))
    i2a = grid.integrate(pvals * grid.values(chain.phis[1]) * grid.values(chain.fs[1]))
    i2b = grid.integrate(pvals * grid.values(chain.phis[0]) * grid.values(chain.fs[2]))
    for F in (0.2, 0.7):
        direct = (chain.v[1] / beta
                  + F * (chain.v[2] / beta + i1)
                  + F ** 2 * (chain.v[3] / beta + i2a + i2b))
        assert partial_sum_D(table, F, 2, "full") == pytest.approx(direct, rel=1e-10)


def test_naive_full_gap_is_xi_series(chain151):
    table = diffusion_coefficients(chain151)
    F = 0.5
    gap = partial_sum_D(table, F, 8, "full") - partial_sum_D(table, F, 8, "naive_einstein")
    xi_series = sum(F ** ell * table.xi_column_sum(ell) for ell in range(1, 9))
    assert gap == pytest.approx(xi_series, rel=1e-10)
    assert gap != 0.0


def test_series_radius_estimate(chain151):
    v = chain151.v
    expect = abs(v[7] / v[9]) ** 0.5
    assert series_radius_estimate(v) == pytest.approx(expect, rel=1e-12)
    assert series_radius_estimate(np.array([0.0, 1.0])) == np.inf


def test_expansion_table_rows(chain151):
    table = diffusion_coefficients(chain151)
    rows = table.rows()
    assert len(rows) == 9
    assert set(rows[0]) == {"ell", "V_ell", "D_ell_full", "D_ell_naive",
                            "sum_Sigma", "sum_Xi"}
    assert rows[0]["D_ell_full"] == pytest.approx(table.v[1] / 5.0)
