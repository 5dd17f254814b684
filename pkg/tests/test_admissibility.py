import math

import numpy as np
import pytest

from admlab.admissibility import (
    NormBracket,
    c_adm_norm,
    input_map,
    input_norm,
    output_map,
    output_norm,
    semivariation_chain_check,
    reevaluate_witness,
    semivariation,
    variation,
    windowed_output_norm,
    zero_class_classify,
    _sign_exhaustive,
)
from admlab.errors import InvalidInputError
from admlab.grid import GridFunction, StepFunction
from admlab.measures import BorelMeasure, BVFunction, conv_reflect, derivative_measure
from admlab.semigroups import (
    ObservationOperator,
    bounded_control,
    matrix_model,
    random_nilpotent_model,
    shift_right_l1,
)


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def scalar_model():
    return matrix_model(np.zeros((1, 1)))


def unit_control(S, lam=1.0):
    return bounded_control(S, np.ones(S.dim) if S.kind == "matrix" else np.ones(S.n), lam=lam)


class TestInputMap:
    def test_scalar_integrator(self):
        S = scalar_model()
        B = bounded_control(S, np.array([1.0]))
        for tau in (0.25, 1.0):
            u = StepFunction(np.array([0.0, tau]), np.array([1.0]))
            assert input_map(B, u, tau, S)[0] == pytest.approx(tau, abs=1e-12)

    def test_zero_input(self, rng):
        S = shift_right_l1(128)
        B = bounded_control(S, rng.standard_normal(128))
        u = StepFunction(np.array([0.0, 0.5]), np.array([0.0]))
        assert np.all(input_map(B, u, 0.5, S) == 0.0)

    def test_shift_rep_vs_direct_quadrature(self, rng):
        # resolvent-representation formula against the defining integral
        n = 512
        S = shift_right_l1(n)
        b = rng.standard_normal(n)
        B = bounded_control(S, b, lam=1.0)
        tau = 0.5
        u = StepFunction(np.array([0.0, tau]), np.array([1.0]))
        phi = input_map(B, u, tau, S)
        direct = S.orbit_integral(tau, b)
        assert np.max(np.abs(phi - direct)) < 1e-8

    def test_misaligned_input_rejected(self, rng):
        S = shift_right_l1(64)
        B = bounded_control(S, rng.standard_normal(64))
        u = StepFunction(np.array([0.0, 1.0 / 3.0, 0.5]), np.array([1.0, -1.0]))
        with pytest.raises(InvalidInputError):
            input_map(B, u, 0.5, S)


class TestOutputMap:
    def test_scalar_constant(self):
        S = scalar_model()
        C = ObservationOperator(kind="matrix_row", row=[1.0])
        out = output_map(C, np.array([1.0]), 0.5, S, n_out=32)
        assert np.allclose(out.values, 1.0)

    def test_sifting(self, rng):
        n = 256
        S = shift_right_l1(n)
        f = rng.standard_normal(n)
        a = 0.75
        C = ObservationOperator(kind="measure", mu=BorelMeasure(atoms=[[a, 1.0]]))
        out = output_map(C, f, 1.0, S)
        grid = GridFunction(0.0, 1.0, f)
        s = out.midpoints()
        assert np.allclose(out.values, np.where(s <= a, grid.evaluate(a - s), 0.0))

    def test_agrees_with_conv_reflect(self, rng):
        # two independent code paths for the same convolution identity
        n = 256
        S = shift_right_l1(n)
        for _ in range(5):
            mids = (np.arange(128) + 0.5) / 128
            c = BVFunction(jumps=[[float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.3, 1.0))]],
                           ac_density=GridFunction(0, 1, np.sin(2 * np.pi * mids)))
            mu = derivative_measure(c)
            f = rng.standard_normal(n)
            C = ObservationOperator(kind="measure", mu=mu)
            tau = float(rng.choice([0.25, 0.5, 1.0]))
            lhs = output_map(C, f, tau, S)
            rhs = conv_reflect(GridFunction(0, 1, f), mu, tau)
            assert np.max(np.abs(lhs.values - rhs.values)) < 1e-8


class TestInputNorm:
    def test_trivial_model_all_p(self):
        S = scalar_model()
        B = bounded_control(S, np.array([1.0]))
        tau = 0.3
        for p, expect in ((math.inf, tau), (1.0, 1.0), (2.0, math.sqrt(tau))):
            br = input_norm(B, p, tau, S, rng=np.random.default_rng(0))
            assert br.lower <= expect + 1e-9
            assert br.upper >= expect - 1e-9
            assert br.width <= 1e-6
            assert br.converged

    def test_bracket_on_100_random_models(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            S = random_nilpotent_model(4, rng)
            b = rng.standard_normal(4)
            B = bounded_control(S, b)
            p = [1.0, 2.0, math.inf][seed % 3]
            br = input_norm(B, p, 0.5, S, rng=rng, max_resolution=16, restarts=2)
            assert br.lower <= br.upper + 1e-12
            assert br.lower >= 0.0

    def test_shift_upper_below_kernel_majorant(self, rng):
        # p = infty upper bound <= int_0^tau ||T(s) b||_1 ds (left-Riemann oracle)
        n = 256
        S = shift_right_l1(n)
        b = rng.standard_normal(n)
        B = bounded_control(S, b)
        tau = 0.5
        br = input_norm(B, math.inf, tau, S, rng=rng)
        k = round(tau * n)
        majorant = sum(S.norm(S.shift(j, b)) for j in range(k)) * S.h
        assert br.upper <= majorant + 1e-9

    def test_witness_reproduces_lower(self, rng):
        for S in (random_nilpotent_model(4, rng), shift_right_l1(128)):
            b = rng.standard_normal(S.dim)
            B = bounded_control(S, b)
            for p in (1.0, 2.0, math.inf):
                br = input_norm(B, p, 0.5, S, rng=rng)
                val = reevaluate_witness(br, B, p, 0.5, S)
                assert val == pytest.approx(br.lower, abs=1e-10 * max(1.0, br.lower))

    def test_random_ball_inputs_stay_below_upper(self, rng):
        S = random_nilpotent_model(4, rng)
        B = bounded_control(S, rng.standard_normal(4))
        tau = 1.0
        for p in (1.0, 2.0, math.inf):
            br = input_norm(B, p, tau, S, rng=rng)
            edges = np.linspace(0.0, tau, 17)
            widths = np.diff(edges)
            for _ in range(25):
                vals = rng.standard_normal(16)
                if p == math.inf:
                    nrm = np.max(np.abs(vals))
                else:
                    nrm = (np.sum(widths * np.abs(vals) ** p)) ** (1 / p)
                u = StepFunction(edges, vals / nrm)
                assert S.norm(input_map(B, u, tau, S)) <= br.upper + 1e-9

    def test_monotone_in_tau_with_witness_injection(self, rng):
        S = shift_right_l1(256)
        B = bounded_control(S, rng.standard_normal(256))
        taus = [0.125, 0.25, 0.5, 1.0]
        prev_lower, prev_witness = 0.0, []
        for tau in taus:
            br = input_norm(B, math.inf, tau, S, rng=rng, extra_witnesses=prev_witness)
            assert br.lower >= prev_lower - 1e-12
            prev_lower = br.lower
            w = br.witness
            prev_witness = []
            if w:
                for tau2 in taus:
                    if tau2 > tau:
                        bps = np.concatenate([[0.0], tau2 - tau + np.asarray(w["breakpoints"])])
                        vals = np.concatenate([[0.0], np.asarray(w["values"])])
                        prev_witness.append(StepFunction(bps, vals))
                        break

    def test_degenerate_tau(self, rng):
        S = scalar_model()
        B = bounded_control(S, np.array([1.0]))
        br = input_norm(B, 2.0, 0.0, S, rng=rng)
        assert br.lower == br.upper == 0.0

    def test_converged_flag_matches_declared_tolerance(self, rng):
        # an unconverged bracket is reported, not raised
        S = shift_right_l1(256)
        B = bounded_control(S, rng.standard_normal(256))
        for maker in (lambda: input_norm(B, math.inf, 0.5, S, rng=rng, tol=1e-12),
                      lambda: c_adm_norm(B, 0.5, S, rng=rng)):
            br = maker()
            assert br.converged == (br.width <= br.tolerance)


class TestOutputNorm:
    def test_scalar_p1(self):
        S = scalar_model()
        C = ObservationOperator(kind="matrix_row", row=[1.0])
        for tau in (0.25, 1.0):
            br = output_norm(C, 1.0, tau, S, rng=np.random.default_rng(0))
            assert br.lower == pytest.approx(tau, rel=1e-9)

    def test_atom_concentration(self):
        n = 1024
        S = shift_right_l1(n)
        C = ObservationOperator(kind="measure", mu=BorelMeasure(atoms=[[0.7, 1.0]]))
        br = output_norm(C, 1.0, 0.25, S)
        assert br.lower >= 0.99

    def test_lebesgue_young_bound(self):
        n = 512
        S = shift_right_l1(n)
        mu = BorelMeasure(ac_density=GridFunction(0, 1, np.ones(n)))
        C = ObservationOperator(kind="measure", mu=mu)
        for tau in (0.125, 0.25, 0.5):
            br = output_norm(C, 1.0, tau, S)
            assert br.upper <= tau + 1e-9


class TestWindowedOutputNorm:
    def test_atom_window_persists(self):
        n = 1024
        S = shift_right_l1(n)
        C = ObservationOperator(kind="measure", mu=BorelMeasure(atoms=[[0.5, 1.0]]))
        for tau in (1 / 16, 1 / 64, 1 / 256):
            br = windowed_output_norm(C, 0.5, tau, S)
            assert br.lower >= 0.9

    def test_lebesgue_window_shrinks(self):
        n = 512
        S = shift_right_l1(n)
        mu = BorelMeasure(ac_density=GridFunction(0, 1, np.ones(n)))
        C = ObservationOperator(kind="measure", mu=mu)
        for xi in (0.0, 0.3, 0.7):
            for tau in (0.125, 0.25):
                assert windowed_output_norm(C, xi, tau, S).upper <= tau + 1e-9

    def test_zero_measure(self):
        S = shift_right_l1(64)
        C = ObservationOperator(kind="measure", mu=BorelMeasure())
        assert windowed_output_norm(C, 0.25, 0.25, S).upper == 0.0

    def test_window_validation(self):
        S = shift_right_l1(64)
        C = ObservationOperator(kind="measure", mu=BorelMeasure())
        with pytest.raises(InvalidInputError):
            windowed_output_norm(C, 0.9, 0.5, S)


class TestSemivariation:
    def test_scalar_increasing(self):
        S = scalar_model()
        res = semivariation(lambda t: np.array([t]), 1.0, S)
        assert res.value == pytest.approx(1.0, abs=1e-12)

    def test_constant_family(self, rng):
        S = random_nilpotent_model(3, rng)
        w = rng.standard_normal(3)
        res = semivariation(lambda t: w, 1.0, S)
        assert res.value == 0.0

    def test_trace_monotone(self, rng):
        S = random_nilpotent_model(4, rng)
        b = rng.standard_normal(4)
        W = S.resolvent(1.0, b)
        res = semivariation(lambda t: S.apply(t, W), 1.0, S, rng=rng)
        vals = [v for _, v in res.trace]
        assert all(b2 >= a2 - 1e-12 for a2, b2 in zip(vals[:-1], vals[1:]))

    def test_exhaustive_equals_brute_force(self, rng):
        # scalar-signs search equals full enumeration for <= 12 intervals
        for m in (3, 6, 9, 12):
            inc = rng.standard_normal((m, 4))
            S = matrix_model(np.zeros((4, 4)))
            val, _ = _sign_exhaustive(inc, S)
            brute = 0.0
            for bits in range(2 ** m):
                signs = 1.0 - 2.0 * ((bits >> np.arange(m)) & 1)
                brute = max(brute, float(np.linalg.norm(signs @ inc)))
            assert val == pytest.approx(brute, abs=1e-12)


class TestVariation:
    def test_linear(self):
        res = variation(lambda t: t, 1.0)
        assert res.value == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        res = variation(lambda t: 42.0, 1.0)
        assert res.value == 0.0

    def test_dual_trace_below_twice_semivariation(self, rng):
        # Var(<x', F(.)>) <= 2 SV(F) for unit dual vectors on a matrix model
        S = random_nilpotent_model(4, rng)
        b = rng.standard_normal(4)
        W = S.resolvent(1.0, b)
        F = lambda t: S.apply(t, W)
        sv = semivariation(F, 1.0, S, rng=rng)
        for _ in range(10):
            xp = rng.standard_normal(4)
            xp /= np.linalg.norm(xp)
            res = variation(lambda t: float(F(t) @ xp), 1.0, S=S)
            assert res.value <= 2.0 * sv.value + 1e-6
        assert sv.trace == sorted(sv.trace, key=lambda e: e[0])


class TestSemivariationChain:
    def test_scalar_model_forces_zero_semivariation(self, rng):
        S = scalar_model()
        B = bounded_control(S, np.array([1.0]))
        rep = semivariation_chain_check(B, 1.0, 1.0, S, rng=rng)
        assert rep.one_minus_lam_resolvent_norm == pytest.approx(0.0, abs=1e-12)
        assert rep.semivariation == pytest.approx(0.0, abs=1e-12)
        assert rep.passed

    def test_random_nilpotent_chain(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            S = random_nilpotent_model(4, rng)
            B = bounded_control(S, rng.standard_normal(4))
            rep = semivariation_chain_check(B, 1.0, 1.0, S, rng=rng)
            assert rep.mid_ok and rep.upper_ok
            assert rep.passed

    def test_shift_chain_with_active_lower_bound(self, rng):
        S = shift_right_l1(512)
        b = rng.standard_normal(512)
        B = bounded_control(S, b / S.norm(b))
        rep = semivariation_chain_check(B, 1.0, 1.0, S, rng=rng)
        assert rep.lower_chain_active  # ||lam R|| < 1 on the nilpotent shift
        assert rep.passed


class TestRegCEquivalence:
    def test_bridged_inputs_converge(self, rng):
        # |  ||Phi u_eps|| - ||Phi u||  | bounded by the L1 rate times the
        # impulse-response norm
        n = 256
        S = shift_right_l1(n)
        b = rng.standard_normal(n)
        B = bounded_control(S, b)
        tau = 0.5
        p1 = input_norm(B, 1.0, tau, S, rng=rng)
        bps = np.array([0.0, 0.125, 0.25, 0.375, 0.5])
        vals = np.array([1.0, -1.0, 0.5, -0.25])
        u = StepFunction(bps, vals)
        base = S.norm(input_map(B, u, tau, S))
        njumps = u.num_pieces - 1
        from admlab.grid import continuous_interpolant
        for eps_cells in (16, 4, 1):
            eps = eps_cells / n
            interp = continuous_interpolant(u, eps, n=4 * n)
            fine_edges = np.arange(round(tau * n) + 1) / n
            mids = 0.5 * (fine_edges[:-1] + fine_edges[1:])
            u_eps = StepFunction(fine_edges, interp.evaluate(mids))
            val = S.norm(input_map(B, u_eps, tau, S))
            bound = p1.upper * eps * njumps * 2.0 * u.sup_norm()
            assert abs(val - base) <= bound + 1e-9


class TestCAdmNorm:
    def test_upper_matches_sup_norm_bound(self, rng):
        S = shift_right_l1(128)
        B = bounded_control(S, rng.standard_normal(128))
        bc = c_adm_norm(B, 0.5, S, rng=rng)
        linf = input_norm(B, math.inf, 0.5, S, rng=rng)
        assert bc.upper == pytest.approx(linf.upper)
        assert bc.lower <= linf.lower + 1e-9


class TestZeroClassClassify:
    @staticmethod
    def make_curve(taus, lowers, uppers):
        return [(t, NormBracket(lo, up, converged=True))
                for t, lo, up in zip(taus, lowers, uppers)]

    def test_zero_curve(self):
        taus = np.geomspace(0.5, 1e-3, 8)
        curve = self.make_curve(taus, np.zeros(8), np.zeros(8))
        assert zero_class_classify(curve).verdict == "zero_class"

    def test_linear_decay(self):
        taus = np.geomspace(0.5, 1e-3, 8)
        curve = self.make_curve(taus, 0.9 * taus, taus)
        v = zero_class_classify(curve)
        assert v.verdict == "zero_class"
        assert v.slope == pytest.approx(1.0, abs=1e-6)
        assert v.extrapolated_limit + v.uncertainty < v.threshold

    def test_flat_curve(self):
        taus = np.geomspace(0.5, 1e-3, 8)
        curve = self.make_curve(taus, np.full(8, 0.8), np.full(8, 1.0))
        v = zero_class_classify(curve)
        assert v.verdict == "not_zero_class"
        assert min(v.lowers) >= v.threshold

    def test_power_law_extrapolation(self):
        # slowly decaying singular-continuous style curve
        taus = np.geomspace(0.5, 1e-3, 8)
        vals = taus ** 0.63
        v = zero_class_classify(self.make_curve(taus, vals, vals))
        assert v.verdict == "zero_class"

    def test_needs_six_points(self):
        taus = np.geomspace(0.5, 1e-2, 4)
        curve = self.make_curve(taus, taus, taus)
        with pytest.raises(InvalidInputError):
            zero_class_classify(curve)

    def test_needs_geometric_decrease(self):
        # an arithmetic grid over a narrow range does not decay geometrically
        taus = np.linspace(0.5, 0.4, 8)
        curve = self.make_curve(taus, taus, taus)
        with pytest.raises(InvalidInputError):
            zero_class_classify(curve)
