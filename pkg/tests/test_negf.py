import numpy as np
import pytest

from pfnegf.config import parse_config, reference_config
from pfnegf.grid import TimeGrid
from pfnegf.model import Model
from pfnegf.negf import (
    DysonReport,
    KernelEngine,
    advanced_from_retarded,
    approx_split,
    compute_g0,
    convergence_study,
    dyson_solution,
    fit_convergence_order,
    irreducible_sigma,
    restrict_to_sample,
)
from pfnegf.volterra import flat_max_abs, identity_volterra


def noninteracting_reference():
    cfg = reference_config()
    cfg["sample"]["xi"] = 0.0
    return parse_config(cfg)


@pytest.fixture(scope="module")
def ref_engine_xi0():
    run = noninteracting_reference()
    return KernelEngine(run.model, run.thermal, TimeGrid(run.horizon, 40))


class TestFreeKernel:
    def test_equal_time_blocks(self, reference_run):
        g0 = compute_g0(reference_run.model.h_biased, TimeGrid(2.0, 10))
        mem = g0.memory_kernel()
        for k in range(11):
            np.testing.assert_allclose(mem[k, k], -1j * np.eye(6), atol=0)

    def test_dimer_cosine(self, dimer_dict):
        # closed 2x2 form: <s0|exp(-i t h)|s0> = cos(tau t) for h = [[0,tau],[tau,0]]
        run = parse_config(dimer_dict)
        tau = 0.7
        grid = TimeGrid(3.0, 30)
        g0 = compute_g0(run.model.h_biased, grid)
        mem = restrict_to_sample(g0, 1).memory_kernel()
        for k in range(grid.n_nodes):
            assert mem[k, 0, 0, 0] == pytest.approx(-1j * np.cos(tau * grid.nodes[k]), abs=1e-12)

    def test_restriction_matches_full(self, reference_run):
        grid = TimeGrid(2.0, 10)
        g0 = compute_g0(reference_run.model.h_biased, grid)
        sub = restrict_to_sample(g0, 2)
        np.testing.assert_array_equal(sub.memory_kernel(), g0.memory_kernel()[:, :, :2, :2])

    def test_volterra_constant_is_unitary_bound(self, reference_run):
        g0 = compute_g0(reference_run.model.h_biased, TimeGrid(2.0, 10))
        assert g0.volterra_constant() <= 1.0 + 1e-12


class TestInteractingKernel:
    def test_noninteracting_reduction(self, ref_engine_xi0):
        diff = np.max(
            np.abs(ref_engine_xi0.gxi.memory_kernel() - ref_engine_xi0.g0.memory_kernel())
        )
        assert diff <= 1e-9

    def test_equal_time_normalization(self, ref_engine_25):
        mem = ref_engine_25.gxi.memory_kernel()
        for k in range(ref_engine_25.grid.n_nodes):
            np.testing.assert_allclose(mem[k, k], -1j * np.eye(6), atol=1e-10)

    def test_volterra_constant_bound(self, ref_engine_25):
        assert ref_engine_25.gxi.volterra_constant() <= 2.0 + 1e-10

    def test_memory_only(self, ref_engine_25):
        assert not ref_engine_25.gxi.has_instantaneous()


class TestSelfEnergy:
    def test_noninteracting_self_energy_vanishes(self, ref_engine_xi0):
        sigma_tilde = ref_engine_xi0.sigma_tilde
        assert np.max(np.abs(sigma_tilde.memory_kernel())) == 0.0
        assert np.max(np.abs(sigma_tilde.instantaneous())) == 0.0
        assert np.max(np.abs(ref_engine_xi0.f_map.memory_kernel())) == 0.0

    def test_lead_support_exact(self, ref_engine_25):
        ns = ref_engine_25.model.num_sample
        for op in (ref_engine_25.sigma_tilde,):
            mem, inst = op.memory_kernel(), op.instantaneous()
            assert np.max(np.abs(mem[:, :, ns:, :])) == 0.0
            assert np.max(np.abs(mem[:, :, :, ns:])) == 0.0
            assert np.max(np.abs(inst[:, ns:, :])) == 0.0
            assert np.max(np.abs(inst[:, :, ns:])) == 0.0

    def test_irreducible_support(self, ref_engine_25):
        ns = ref_engine_25.model.num_sample
        sigma = ref_engine_25.sigma
        mask = np.ones((6, 6), dtype=bool)
        mask[:ns, :ns] = False
        assert np.max(np.abs(sigma.memory_kernel()[..., mask])) <= 1e-12
        assert np.max(np.abs(sigma.instantaneous()[:, mask])) <= 1e-12

    def test_instantaneous_part_inherited(self, ref_engine_25):
        np.testing.assert_array_equal(
            ref_engine_25.sigma.instantaneous(), ref_engine_25.sigma_tilde.instantaneous()
        )

    def test_zero_self_energy_passthrough(self, ref_engine_25):
        g0 = ref_engine_25.g0
        zero = ref_engine_25.sigma_tilde.scale(0.0)
        sigma = irreducible_sigma(g0, zero)
        assert flat_max_abs(sigma.flat) == 0.0

    def test_f_map_lead_rows_vanish(self, ref_engine_25):
        ns = ref_engine_25.model.num_sample
        mem = ref_engine_25.f_map.memory_kernel()
        assert np.max(np.abs(mem[:, :, ns:, :])) == 0.0


class TestDysonIdentities:
    def test_exact_algebra_identities(self, ref_engine_25):
        g0, sigma = ref_engine_25.g0, ref_engine_25.sigma
        g_alg = ref_engine_25.g_alg
        residual = flat_max_abs(g_alg.flat - g0.flat - (g0 @ sigma @ g_alg).flat)
        assert residual <= 1e-11
        residual_resolvent = flat_max_abs(dyson_solution(g0, sigma).flat - g_alg.flat)
        assert residual_resolvent <= 1e-11

    def test_exact_identities_grid_independent(self, ref_engine_25, ref_engine_50):
        for engine in (ref_engine_25, ref_engine_50):
            report = engine.verify()
            assert report.residual("irreducible_dyson") <= 1e-11
            assert report.residual("resolvent_dyson") <= 1e-11

    def test_noninteracting_all_checks_pass(self, ref_engine_xi0):
        report = ref_engine_xi0.verify()
        assert report.passed
        for name in ("reducible_dyson", "fmap_factorization", "fmap_dyson"):
            assert report.residual(name) <= 1e-9

    def test_quadrature_convergence_order(self, trimer_run):
        study = convergence_study(
            trimer_run.model, trimer_run.thermal, trimer_run.horizon, [16, 32, 64]
        )
        for name, order in study["summary"]["fitted_orders"].items():
            assert order >= 1.8, name

    def test_sample_restricted_residual_tracks_full(self, ref_engine_25):
        report = ref_engine_25.verify()
        assert report.residual("sample_restricted_dyson") <= (
            report.residual("irreducible_dyson") + 1e-12
        )

    def test_report_round_trip(self, ref_engine_25):
        report = ref_engine_25.verify(model_hash="cafe")
        clone = DysonReport.from_json(report.to_json())
        assert clone == report
        assert clone.to_json() == report.to_json()

    def test_fit_convergence_order_on_synthetic_data(self):
        deltas = [0.1, 0.05, 0.025]
        residuals = [d**2 for d in deltas]
        assert fit_convergence_order(deltas, residuals) == pytest.approx(2.0, abs=1e-12)


class TestAdvancedKernel:
    def test_equal_time_sign_flip(self, ref_engine_25):
        adv = advanced_from_retarded(ref_engine_25.gxi)
        for k in range(ref_engine_25.grid.n_nodes):
            np.testing.assert_allclose(adv[k, k], 1j * np.eye(6), atol=1e-10)

    def test_noninteracting_oracle(self, ref_engine_xi0):
        adv = advanced_from_retarded(ref_engine_xi0.g0)
        h = ref_engine_xi0.model.h_biased
        lam, v = np.linalg.eigh(h)
        grid = ref_engine_xi0.grid
        for k in range(0, grid.n_nodes, 7):
            for l in range(k, grid.n_nodes, 5):
                phase = np.exp(1j * (grid.nodes[k] - grid.nodes[l]) * lam)
                oracle = 1j * (v * phase[None, :]) @ np.conj(v.T)
                np.testing.assert_allclose(adv[k, l], oracle, atol=1e-12)

    def test_pairing_consistency(self, ref_engine_25):
        # the pairing property of the correlator grid fixes the advanced
        # kernel as the blockwise adjoint of the acausally-extended kernel
        adv = advanced_from_retarded(ref_engine_25.gxi)
        extended = -1j * ref_engine_25.ladder_grid.values.transpose(2, 3, 0, 1)
        grid = ref_engine_25.grid
        worst = 0.0
        for k in range(grid.n_nodes):
            for l in range(k, grid.n_nodes):
                worst = max(worst, np.max(np.abs(adv[k, l] - np.conj(extended[k, l].T))))
        assert worst <= 1e-10


class TestApproxSplit:
    def test_exact_self_energy_reproduces_solution(self, ref_engine_25):
        g_app, residual = approx_split(
            ref_engine_25.sigma, ref_engine_25.sigma, ref_engine_25.g0, ref_engine_25.g_alg
        )
        assert residual <= 1e-11
        assert flat_max_abs(g_app.flat - ref_engine_25.g_alg.flat) <= 1e-11

    def test_zero_approximation_reduces_to_free(self, ref_engine_25):
        zero = ref_engine_25.sigma.scale(0.0)
        g_app, residual = approx_split(
            ref_engine_25.sigma, zero, ref_engine_25.g0, ref_engine_25.g_alg
        )
        assert residual <= 1e-11
        assert flat_max_abs(g_app.flat - ref_engine_25.g0.flat) <= 1e-12


class TestOrderingInvariance:
    def test_reversed_sign_order_kernels_agree(self, trimer_run):
        base = trimer_run.model
        reversed_model = Model(
            one_particle=base.one_particle,
            interaction=base.interaction,
            sign_order=tuple(reversed(range(base.num_sites))),
        )
        grid = TimeGrid(1.5, 10)
        eng_a = KernelEngine(base, trimer_run.thermal, grid)
        eng_b = KernelEngine(reversed_model, trimer_run.thermal, grid)
        assert np.max(np.abs(eng_a.gxi.memory_kernel() - eng_b.gxi.memory_kernel())) <= 1e-10
        assert (
            np.max(np.abs(eng_a.sigma_tilde.memory_kernel() - eng_b.sigma_tilde.memory_kernel()))
            <= 1e-10
        )
        assert (
            np.max(np.abs(eng_a.sigma_tilde.instantaneous() - eng_b.sigma_tilde.instantaneous()))
            <= 1e-10
        )


class TestIdentityOperator:
    def test_identity_composition_neutral_on_kernels(self, ref_engine_25):
        ident = identity_volterra(ref_engine_25.grid, 6)
        np.testing.assert_array_equal((ident @ ref_engine_25.g0).flat, ref_engine_25.g0.flat)
