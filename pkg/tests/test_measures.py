import math

import numpy as np
import pytest

from admlab.errors import InvalidInputError
from admlab.grid import GridFunction
from admlab.measures import (
    BorelMeasure,
    BVFunction,
    cantor_support_midpoints,
    conv_reflect,
    derivative_measure,
    detect_atoms,
    total_variation,
)


def density(vals):
    return GridFunction(0.0, 1.0, np.asarray(vals, dtype=float))


def random_bv(rng, max_jumps=5, with_cantor=False):
    k = int(rng.integers(0, max_jumps + 1))
    jumps = None
    if k:
        locs = np.sort(rng.uniform(0.05, 0.95, size=k))
        while k > 1 and np.min(np.diff(locs)) < 0.02:
            locs = np.sort(rng.uniform(0.05, 0.95, size=k))
        hts = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.3, 1.0, size=k)
        jumps = np.column_stack([locs, hts])
    n = 128
    mids = (np.arange(n) + 0.5) / n
    rho = rng.uniform(-1, 1) * np.sin(2 * np.pi * mids) + rng.uniform(-1, 1) * mids
    scale = float(rng.uniform(0.2, 1.0)) if (with_cantor and rng.random() < 0.5) else 0.0
    return BVFunction(jumps=jumps, ac_density=density(rho),
                      singular_depth=10, singular_scale=scale)


# -- test-function family: phi(0) = 0 with closed-form antiderivatives ------

def phi_family(count=50):
    fams = []
    k = 1
    while len(fams) < count:
        fams.append((lambda x, k=k: np.sin(k * x),
                     lambda x, k=k: -np.cos(k * x) / k))
        if len(fams) < count:
            fams.append((lambda x, k=k: 1.0 - np.cos(k * x),
                         lambda x, k=k: x - np.sin(k * x) / k))
        k += 1
    return fams[:count]


def measure_pairing_exact(mu: BorelMeasure, phi, Phi):
    """<mu, phi> with the AC part integrated exactly via the antiderivative."""
    total = 0.0
    if mu.atoms.size:
        total += float(np.sum(mu.atoms[:, 1] * phi(mu.atoms[:, 0])))
    pts, wts = mu.sc_points_weights()
    if pts.size:
        total += float(np.sum(wts * phi(pts)))
    if mu.ac_density is not None:
        dens = mu.ac_density
        edges = dens.edges()
        total += float(np.sum(dens.values * np.diff(Phi(edges))))
    return total


def bv_pairing_oracle(c: BVFunction, phi, Phi):
    """-<c, phi'> from c's construction data (independent of derivative_measure)."""
    total = 0.0
    for x, h in c.jumps:
        total += h * (phi(x) - phi(1.0))
    if c.singular_scale:
        pts = cantor_support_midpoints(c.singular_depth)
        w = c.singular_scale / pts.size
        total += float(np.sum(w * (phi(pts) - phi(1.0))))
    if c.ac_density is not None:
        dens = c.ac_density
        edges = dens.edges()
        total += float(np.sum(dens.values * np.diff(Phi(edges))))  # int rho phi
        total += -float(dens.primitive_at(1.0)) * phi(1.0)
    return total


class TestDerivativeMeasure:
    def test_zero_function(self):
        mu = derivative_measure(BVFunction())
        assert mu.total_variation_norm() == 0.0

    def test_unit_step_gives_two_atoms(self):
        # c = 1_{[1/2, 1]}: dc = delta_{1/2}, boundary atom -c(1) delta_1
        mu = derivative_measure(BVFunction(jumps=[[0.5, 1.0]]))
        atoms = {loc: w for loc, w in mu.atoms}
        assert atoms == pytest.approx({0.5: 1.0, 1.0: -1.0})

    def test_ramp_gives_lebesgue_plus_boundary_atom(self):
        c = BVFunction(ac_density=density(np.ones(256)))
        mu = derivative_measure(c)
        assert mu.atom_weight_at(1.0) == pytest.approx(-1.0)
        assert mu.ac_norm() == pytest.approx(1.0)

    def test_pairing_oracle_50_test_functions(self):
        # -<c, phi'> against the realized measure, 50 smooth phi with phi(0)=0
        rng = np.random.default_rng(12)
        for trial in range(6):
            c = random_bv(rng, with_cantor=(trial % 2 == 0))
            mu = derivative_measure(c)
            for phi, Phi in phi_family(50):
                lhs = bv_pairing_oracle(c, phi, Phi)
                rhs = measure_pairing_exact(mu, phi, Phi)
                assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_quadrature_pairing_close(self):
        # the production midpoint pairing agrees at its quadrature accuracy
        c = BVFunction(jumps=[[0.3, 0.5]], ac_density=density(np.ones(256)))
        mu = derivative_measure(c)
        phi = lambda x: np.sin(3.0 * x)
        Phi = lambda x: -np.cos(3.0 * x) / 3.0
        assert mu.pairing(phi) == pytest.approx(
            measure_pairing_exact(mu, phi, Phi), abs=1e-4)

    def test_total_mass_vs_variation(self):
        # |mu|([0,1]) = Var(c) + |boundary atom| on random BV functions
        rng = np.random.default_rng(77)
        for _ in range(20):
            c = random_bv(rng, with_cantor=True)
            mu = derivative_measure(c)
            boundary = abs(mu.atom_weight_at(1.0))
            assert mu.total_variation_norm() == pytest.approx(
                total_variation(c, (0.0, 1.0)) + boundary, abs=1e-6)


class TestTotalVariation:
    def test_unit_jump(self):
        c = BVFunction(jumps=[[0.5, 1.0]])
        assert total_variation(c, (0.0, 1.0)) == pytest.approx(1.0)

    def test_ramp(self):
        c = BVFunction(ac_density=density(np.ones(512)))
        assert total_variation(c, (0.0, 1.0)) == pytest.approx(1.0)

    def test_cantor_depth_12(self):
        c = BVFunction(singular_depth=12, singular_scale=1.0)
        assert total_variation(c, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_window_with_atom(self):
        c = BVFunction(jumps=[[0.5, -0.7]])
        assert total_variation(c, (0.5, 0.5)) == pytest.approx(0.7)
        assert total_variation(c, (0.25, 0.25)) == 0.0

    def test_window_monotone(self):
        rng = np.random.default_rng(5)
        c = random_bv(rng, with_cantor=True)
        mu = derivative_measure(c)
        xi = 0.3
        prev = 0.0
        for tau in np.linspace(0.0, 0.7, 29):
            mass = mu.window_variation(xi, xi + tau)
            assert mass >= prev - 1e-12
            prev = mass


class TestDecomposition:
    def test_part_norms_add_exactly(self):
        mu = BorelMeasure(atoms=[[0.2, 1.5], [0.8, -0.5]],
                          ac_density=density(np.linspace(-1, 1, 64)),
                          sc_depth=8, sc_scale=0.25)
        assert mu.total_variation_norm() == mu.atom_norm() + mu.ac_norm() + mu.sc_norm()

    def test_lumped_density_mass(self):
        mu = BorelMeasure(atoms=[[0.37, 2.0]], ac_density=density(np.ones(64)))
        dens = mu.lumped_density(256)
        assert np.sum(dens) / 256 == pytest.approx(3.0, abs=1e-12)


class TestConvReflect:
    def test_sifting(self):
        n = 256
        rng = np.random.default_rng(1)
        f = GridFunction(0.0, 1.0, rng.standard_normal(n))
        a = 0.6
        mu = BorelMeasure(atoms=[[a, 1.0]])
        out = conv_reflect(f, mu, 1.0)
        s = out.midpoints()
        expect = np.where(s <= a, f.evaluate(a - s), 0.0)
        assert np.allclose(out.values, expect)

    def test_lebesgue_overlap(self):
        n = 512
        f = GridFunction(0.0, 1.0, np.ones(n))
        mu = BorelMeasure(ac_density=density(np.ones(n)))
        out = conv_reflect(f, mu, 1.0)
        # int_0^1 1_{[0,1]}(x - s) dx = 1 - s, up to the quadrature cell width
        assert np.allclose(out.values, 1.0 - out.midpoints(), atol=out.cell_width)

    def test_zero_measure(self):
        f = GridFunction(0.0, 1.0, np.ones(64))
        out = conv_reflect(f, BorelMeasure(), 0.5)
        assert np.all(out.values == 0.0)

    def test_young_bound(self):
        # discrete Young: ||f * mu||_L1 <= ||mu|| ||f||_L1 holds exactly here
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = 128
            f = GridFunction(0.0, 1.0, rng.standard_normal(n))
            c = random_bv(rng, with_cantor=True)
            mu = derivative_measure(c)
            tau = float(rng.choice([0.25, 0.5, 1.0]))
            out = conv_reflect(f, mu, tau)
            lhs = float(np.sum(np.abs(out.values)) * out.cell_width)
            rhs = mu.total_variation_norm() * float(np.sum(np.abs(f.values)) / n)
            assert lhs <= rhs + 1e-6

    def test_brute_force_riemann_stieltjes(self):
        # independent double-loop oracle at n = 256
        rng = np.random.default_rng(21)
        n = 256
        for trial in range(4):
            f = GridFunction(0.0, 1.0, rng.standard_normal(n))
            c = random_bv(rng, with_cantor=(trial % 2 == 0))
            mu = derivative_measure(c)
            tau = 0.5
            out = conv_reflect(f, mu, tau)
            oracle = _conv_oracle(f, mu, tau, out.n)
            assert np.max(np.abs(out.values - oracle)) < 1e-8


def _conv_oracle(f, mu, tau, m):
    """Plain double-loop Riemann-Stieltjes sum; no vectorization."""
    fv = f.values
    n = f.n
    out = []
    pts, wts = mu.point_masses()
    dens = mu.ac_density
    for k in range(m):
        s = (k + 0.5) * tau / m
        acc = 0.0
        for loc, w in zip(pts, wts):
            arg = loc - s
            if 0.0 <= arg <= 1.0:
                idx = n - 1 if arg == 1.0 else int(math.floor(arg * n))
                acc += w * fv[idx]
        if dens is not None:
            hd = dens.cell_width
            for i in range(dens.n):
                arg = (i + 0.5) * hd - s
                if 0.0 <= arg <= 1.0:
                    idx = n - 1 if arg == 1.0 else int(math.floor(arg * n))
                    acc += hd * dens.values[i] * fv[idx]
        out.append(acc)
    return np.asarray(out)


class TestDetectAtoms:
    def test_single_atom(self):
        mu = BorelMeasure(atoms=[[0.5, 1.0]])
        found = detect_atoms(mu, 1e-3)
        assert len(found) == 1
        loc, w = found[0]
        assert loc == pytest.approx(0.5, abs=1e-5)
        assert w == pytest.approx(1.0, abs=1e-3)

    def test_lebesgue_clean(self):
        mu = BorelMeasure(ac_density=density(np.ones(256)))
        assert detect_atoms(mu, 1e-3) == []

    def test_cantor_clean(self):
        c = BVFunction(singular_depth=12, singular_scale=1.0)
        mu = derivative_measure(c).drop_atom_at(1.0)
        assert detect_atoms(mu, 1e-2) == []

    def test_recovers_jump_list(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            c = random_bv(rng, max_jumps=5)
            if not c.jumps.size:
                continue
            mu = derivative_measure(c).drop_atom_at(1.0)
            found = detect_atoms(mu, 1e-2)
            assert len(found) == c.jumps.shape[0]
            for (loc, w), (x, h) in zip(found, c.jumps):
                assert loc == pytest.approx(x, abs=1.0 / 1024)
                assert w == pytest.approx(abs(h), rel=0.05)

    def test_tol_validation(self):
        with pytest.raises(InvalidInputError):
            detect_atoms(BorelMeasure(), 0.0)


class TestBVJson:
    def test_roundtrip(self, tmp_path):
        c = BVFunction(jumps=[[0.25, 1.0], [0.7, -0.4]],
                       ac_density=density(np.linspace(0, 1, 32)),
                       singular_depth=6, singular_scale=0.5)
        path = tmp_path / "c.json"
        c.save(path)
        d = BVFunction.load(path)
        assert np.allclose(c.jumps, d.jumps)
        assert np.allclose(c.ac_density.values, d.ac_density.values)
        assert (c.singular_depth, c.singular_scale) == (d.singular_depth, d.singular_scale)

    def test_schema_fields(self, tmp_path):
        import json
        c = BVFunction(jumps=[[0.5, 1.0]])
        path = tmp_path / "c.json"
        c.save(path)
        with open(path) as fh:
            payload = json.load(fh)
        assert set(payload) == {"jumps", "ac_density", "singular"}
        assert payload["jumps"] == [[0.5, 1.0]]
        assert set(payload["singular"]) == {"kind", "depth", "scale"}

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            BVFunction(jumps=[[0.0, 1.0]])     # location must be > 0
        with pytest.raises(InvalidInputError):
            BVFunction(jumps=[[0.5, 0.0]])     # zero height
        with pytest.raises(InvalidInputError):
            BVFunction(ac_density=GridFunction(0.0, 2.0, np.ones(4)))
