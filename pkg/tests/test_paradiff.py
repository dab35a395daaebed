import numpy as np
import pytest

from hypdiss.errors import GridMismatch, InvalidEpsilon, PrecheckFailed
from hypdiss.paradiff import (
    CutoffSpec,
    DiscreteSymbol,
    GridFunction,
    Lattice,
    SeparableFamily,
    apply_op,
    check_adjoint_product_errors,
    check_garding,
    load_field,
    load_symbol,
    lp_decompose,
    make_cutoff,
    multiplication_symbol,
    multiplier_symbol,
    op_matrix,
    operator_norm_power,
    operator_sobolev_norm,
    para_op,
    save_field,
    save_symbol,
    separable_symbol,
    smooth_symbol,
    symbol_product,
)

LAT = Lattice(d=1, N=128)
CHI = make_cutoff(0.2, 0.5)
X = LAT.x_vectors()[:, 0]


def bracket(xi):
    return np.sqrt(1.0 + np.sum(xi**2, axis=1))


def bump_function(scale=1.0, width=0.6):
    return GridFunction(LAT, scale * np.exp(-((X - np.pi) ** 2) / (2 * width**2)) + 0j)


def powerlaw_state(p=2.0):
    # state with algebraically decaying spectrum, so cut-off tails are visible
    mags = LAT.xi_mags()
    coeff = (1.0 + mags) ** (-p)
    vals = LAT.ifft(coeff[:, None].astype(complex))
    vals = vals.real
    return (vals / np.abs(vals).max())[:, 0]


class TestCutoff:
    def test_plateau_and_support(self):
        assert CHI(0.0, 2.0) == 1.0
        assert CHI(0.3, 2.0) == 1.0          # |eta| <= eps1 |xi|
        assert CHI(0.0, 0.5) == 0.0          # |xi| <= eps2
        assert CHI(2.0, 2.0) == 0.0          # |eta| >= eps2 <xi>
        vals = CHI(np.linspace(0, 3, 100), np.full(100, 2.0))
        assert np.all((0.0 <= vals) & (vals <= 1.0))

    def test_evenness(self):
        rng = np.random.default_rng(0)
        eta = rng.uniform(-5, 5, size=50)
        xi = rng.uniform(-5, 5, size=50)
        assert np.allclose(CHI(eta, xi), CHI(-eta, xi))
        assert np.allclose(CHI(eta, xi), CHI(eta, -xi))

    def test_derivative_decay_along_rays(self):
        # |d chi / d eta| and |d chi / d xi| decay at least like <xi>^{-1}
        rng = np.random.default_rng(1)
        h = 1e-5
        worst = 0.0
        for _ in range(100):
            direction = rng.uniform(0.0, 0.45)
            for scale in (2.0, 8.0, 32.0, 128.0):
                eta = direction * scale
                br = np.sqrt(1 + scale**2)
                deta = (CHI(eta + h, scale) - CHI(eta - h, scale)) / (2 * h)
                dxi = (CHI(eta, scale + h) - CHI(eta, scale - h)) / (2 * h)
                worst = max(worst, abs(deta) * br, abs(dxi) * br)
        assert worst < 20.0

    def test_invalid_epsilons(self):
        with pytest.raises(InvalidEpsilon):
            make_cutoff(0.5, 0.2)
        with pytest.raises(InvalidEpsilon):
            make_cutoff(0.0, 0.5)


class TestSmoothing:
    def test_constant_in_x(self):
        a = multiplier_symbol(LAT, lambda v: bracket(v), order_m=1.0)
        sm = smooth_symbol(a, CHI)
        ximag = np.abs(LAT.xi_vectors()[:, 0])
        expect = CHI(0.0, ximag) * bracket(LAT.xi_vectors())
        assert np.abs(sm.values[:, :, 0, 0] - expect[None, :]).max() < 1e-12
        high = ximag >= 1.0
        assert np.abs(sm.values[:, high, 0, 0] - expect[None, high]).max() < 1e-13

    def test_single_mode_annihilated(self):
        # A(x, xi) = e^{i eta x} with |eta| >= eps2 <xi> is wiped out
        k = 40  # eta = 40 >= 0.5 <xi> for every lattice xi (max <xi> ~ 64)
        gx = np.exp(1j * k * X)
        ximag = np.abs(LAT.xi_vectors()[:, 0])
        sel = 40 >= CHI.eps2 * np.sqrt(1 + ximag**2)
        a = separable_symbol(LAT, gx, lambda v: np.ones(len(v)), 0.0)
        sm = smooth_symbol(a, CHI)
        assert np.abs(sm.values[:, sel]).max() < 1e-12

    def test_forbidden_region_spectrum_vanishes(self):
        gx = np.exp(np.cos(X))
        a = separable_symbol(LAT, gx, bracket, 1.0)
        sm = smooth_symbol(a, CHI)
        hat = LAT.fft(sm.values[:, :, 0, 0])
        eta = LAT.xi_mags()
        br = LAT.brackets()
        forbidden = eta[:, None] >= CHI.eps2 * br[None, :]
        scale = np.abs(sm.values).max()
        assert np.abs(hat[forbidden]).max() / scale < 1e-12

    def test_order_reduction_of_smoothing_error(self):
        # for A = f(x) <xi> with algebraically decaying f-spectrum the
        # residual R(A) - A grows one order slower than A along xi
        f = powerlaw_state(2.0)
        a = separable_symbol(LAT, f, bracket, 1.0)
        sm = smooth_symbol(a, CHI)
        resid = np.abs(sm.values - a.values)[:, :, 0, 0].max(axis=0)
        amax = np.abs(a.values)[:, :, 0, 0].max(axis=0)
        ximag = np.abs(LAT.xi_vectors()[:, 0])
        slopes = []
        base = []
        for lo, hi in ((4, 8), (8, 16), (16, 32)):
            ilo = int(np.argmin(np.abs(ximag - lo)))
            ihi = int(np.argmin(np.abs(ximag - hi)))
            slopes.append(np.log2(resid[ihi] / resid[ilo]))
            base.append(np.log2(amax[ihi] / amax[ilo]))
        assert np.mean(base) > 0.8          # the symbol itself grows like <xi>
        assert np.mean(slopes) < np.mean(base) - 0.7  # residual one order lower


class TestApplyOp:
    def test_identity(self):
        rng = np.random.default_rng(5)
        f = GridFunction(LAT, rng.normal(size=(LAT.points, 1)) + 0j)
        one = multiplier_symbol(LAT, lambda v: np.ones(len(v)))
        assert np.abs(apply_op(one, f).values - f.values).max() < 1e-12

    def test_fourier_derivative(self):
        f = GridFunction(LAT, np.exp(1j * X))
        d = multiplier_symbol(LAT, lambda v: 1j * v[:, 0], order_m=1.0)
        got = apply_op(d, f).values[:, 0]
        assert np.abs(got - 1j * np.exp(1j * X)).max() < 1e-12

    def test_multiplication_degenerate_case(self):
        g = np.cos(X)
        f = GridFunction(LAT, np.sin(2 * X) + 0j)
        got = apply_op(multiplication_symbol(LAT, g), f).values[:, 0]
        assert np.abs(got - g * np.sin(2 * X)).max() < 1e-12

    def test_linearity(self):
        rng = np.random.default_rng(6)
        a = separable_symbol(LAT, np.exp(np.sin(X)), bracket, 1.0)
        f = GridFunction(LAT, rng.normal(size=(LAT.points, 1)) + 0j)
        g = GridFunction(LAT, rng.normal(size=(LAT.points, 1)) + 0j)
        left = apply_op(a, GridFunction(LAT, 2.0 * f.values + 3.0 * g.values)).values
        right = 2.0 * apply_op(a, f).values + 3.0 * apply_op(a, g).values
        assert np.abs(left - right).max() < 1e-12 * max(1.0, np.abs(right).max())

    def test_grid_mismatch(self):
        other = Lattice(d=1, N=64)
        f = GridFunction(other, np.zeros(64) + 0j)
        a = multiplier_symbol(LAT, lambda v: np.ones(len(v)))
        with pytest.raises(GridMismatch):
            apply_op(a, f)


class TestParaOp:
    def test_constant_symbol_high_frequencies_exact(self):
        # for x-independent symbols para and exact quantization agree on all
        # lattice frequencies with chi(0, xi) = 1
        b = multiplier_symbol(LAT, lambda v: bracket(v), order_m=1.0)
        rng = np.random.default_rng(7)
        f = GridFunction(LAT, rng.normal(size=(LAT.points, 1)) + 0j)
        exact = apply_op(b, f)
        para = para_op(b, CHI, f)
        dh = LAT.fft(exact.values - para.values)
        ximag = np.abs(LAT.xi_vectors()[:, 0])
        assert np.abs(dh[ximag >= 1.0]).max() < 1e-12
        # and they genuinely differ at low frequencies
        assert np.abs(dh[ximag < 0.5]).max() > 1e-8

    def test_para_product_bound(self):
        # || g f - Op[g] f ||_k controlled by ||g||_{H^k} ||f||_inf +
        # ||g||_{W^{1,inf}} ||f||_{H^{k-1}}
        k = 1.0
        rng = np.random.default_rng(8)
        for scale in (1.0, 0.3):
            g = scale * np.exp(np.cos(X))
            f = GridFunction(LAT, (np.sin(3 * X) + 0.2 * rng.normal(size=LAT.points)) + 0j)
            gf = GridFunction(LAT, g[:, None] * f.values)
            pa = para_op(multiplication_symbol(LAT, g), CHI, f)
            lhs = GridFunction(LAT, gf.values - pa.values).sobolev_norm(k)
            gfun = GridFunction(LAT, g + 0j)
            dg = apply_op(multiplier_symbol(LAT, lambda v: 1j * v[:, 0]), gfun)
            g_w1inf = max(np.abs(g).max(), np.abs(dg.values).max())
            rhs = gfun.sobolev_norm(k) * np.abs(f.values).max() + g_w1inf * f.sobolev_norm(k - 1.0)
            assert lhs <= 10.0 * rhs

    def test_zero_function(self):
        a = separable_symbol(LAT, np.exp(np.cos(X)), bracket, 1.0)
        f = GridFunction(LAT, np.zeros(LAT.points) + 0j)
        assert np.abs(para_op(a, CHI, f).values).max() == 0.0


class TestLittlewoodPaley:
    def test_exact_reconstruction(self):
        a = separable_symbol(LAT, np.exp(np.cos(X)), bracket, 1.0)
        parts = lp_decompose(a)
        rec = sum(p.values for p in parts)
        assert np.abs(rec - a.values).max() < 1e-13

    def test_annulus_membership(self):
        vals = np.zeros((LAT.points, LAT.points), dtype=complex)
        k32 = int(np.where(np.isclose(LAT.xi_vectors()[:, 0], 32.0))[0][0])
        vals[:, k32] = 1.0
        parts = lp_decompose(DiscreteSymbol(LAT, vals))
        live = [nu for nu, p in enumerate(parts, start=-1) if np.abs(p.values).max() > 0]
        assert set(live) <= {4, 5}

    def test_dyadic_derivative_bound(self):
        # sup |d_xi a_nu| <= C 2^{nu (m-1)} for a symbol of order m = 1
        f = powerlaw_state(2.0)
        a = separable_symbol(LAT, f, bracket, 1.0)
        parts = lp_decompose(a)
        ximag = LAT.xi_vectors()[:, 0]
        order = np.argsort(ximag)
        dxi = np.diff(ximag[order]).mean()
        sups = {}
        for nu, p in enumerate(parts, start=-1):
            if nu < 2:
                continue
            vals = p.values[:, order, 0, 0]
            dv = np.abs(np.diff(vals, axis=1) / dxi).max()
            if dv > 0:
                sups[nu] = dv
        nus = sorted(sups)[-3:]  # asymptotic dyadic regime
        slopes = [np.log2(sups[b] / sups[a]) / (b - a) for a, b in zip(nus[:-1], nus[1:])]
        assert max(slopes) < 0.3  # m - 1 = 0 plus tolerance
        # and the symbol itself grows a full order faster
        amax = {nu: np.abs(p.values).max() for nu, p in enumerate(parts, start=-1)}
        growth = np.log2(amax[nus[-1]] / amax[nus[0]]) / (nus[-1] - nus[0])
        assert growth > 0.7


class TestOperatorNorms:
    def test_power_iteration_matches_svd(self):
        rng = np.random.default_rng(9)
        G = rng.normal(size=(60, 60)) + 1j * rng.normal(size=(60, 60))
        want = np.linalg.norm(G, 2)
        assert operator_norm_power(G) == pytest.approx(want, rel=1e-7)

    def test_adjoint_self_consistency(self):
        # the norm oracle agrees on M and M^H
        g = np.exp(np.cos(X))
        T = op_matrix(multiplication_symbol(LAT, g))
        n1 = operator_sobolev_norm(T, LAT, 0.0, 0.0)
        n2 = operator_sobolev_norm(T.conj().T, LAT, 0.0, 0.0)
        assert n1 == pytest.approx(n2, abs=1e-6 * max(n1, 1.0))

    def test_op_matrix_consistency(self):
        rng = np.random.default_rng(10)
        a = separable_symbol(LAT, np.exp(np.sin(X)), bracket, 1.0)
        T = op_matrix(a)
        f = GridFunction(LAT, rng.normal(size=(LAT.points, 1)) + 0j)
        assert np.abs(T @ f.values[:, 0] - apply_op(a, f).values[:, 0]).max() < 1e-11


class TestScalingChecks:
    def test_zero_state_errors_vanish(self):
        F = SeparableFamily(lambda uv: uv[:, 0], bracket, 1.0)
        G = SeparableFamily(lambda uv: 1.0 + uv[:, 0], bracket, 1.0)
        u0 = GridFunction(LAT, np.zeros(LAT.points) + 0j)
        rep = check_adjoint_product_errors(F, G, CHI, u0, amplitudes=(1.0, 0.5))
        assert rep.adjoint_norms.max() < 1e-10
        assert rep.product_norms.max() < 1e-10

    def test_linear_scaling_slopes(self):
        F = SeparableFamily(lambda uv: uv[:, 0], bracket, 1.0)
        G = SeparableFamily(lambda uv: 1.0 + uv[:, 0], bracket, 1.0)
        u0 = bump_function(scale=0.5)
        rep = check_adjoint_product_errors(F, G, CHI, u0)
        assert abs(rep.adjoint_slope - 1.0) <= 0.2
        assert abs(rep.product_slope - 1.0) <= 0.2

    def test_product_error_one_order_lower(self):
        # ||Op[G]Op[F]|| / ||error|| grows about like <xi_max> under refinement
        ratios = []
        for N in (64, 128):
            lat = Lattice(d=1, N=N)
            x = lat.x_vectors()[:, 0]
            u0 = GridFunction(lat, 0.5 * np.exp(-((x - np.pi) ** 2) / (2 * 0.6**2)) + 0j)
            F = SeparableFamily(lambda uv: uv[:, 0], bracket, 1.0)
            G = SeparableFamily(lambda uv: 1.0 + uv[:, 0], bracket, 1.0)
            AF = smooth_symbol(F.symbol(lat, u0.values), CHI)
            AG = smooth_symbol(G.symbol(lat, u0.values), CHI)
            TF, TG = op_matrix(AF), op_matrix(AG)
            TGF = op_matrix(smooth_symbol(symbol_product(G.symbol(lat, u0.values), F.symbol(lat, u0.values)), CHI))
            # both measured H^1 -> H^0: the order-2 product grows like
            # <xi_max> there while the order-1 error stays bounded
            err = operator_sobolev_norm(TG @ TF - TGF, lat, 0.0, 1.0, 1)
            big = operator_sobolev_norm(TG @ TF, lat, 0.0, 1.0, 1)
            ratios.append(big / err)
        growth = ratios[1] / ratios[0]
        assert 1.4 < growth < 3.0


class TestGarding:
    def test_positive_multiplier_nonnegative(self):
        F = SeparableFamily(lambda uv: np.ones(len(uv)), bracket, 1.0)
        u0 = bump_function()
        rep = check_garding(F, u0, CHI, samples=16)
        assert not rep.any_negativity

    def test_precheck_failure(self):
        F = SeparableFamily(lambda uv: -np.ones(len(uv)), bracket, 1.0)
        with pytest.raises(PrecheckFailed):
            check_garding(F, bump_function(), CHI, samples=4)

    def test_positive_family_bound_shrinks(self):
        # F = (1 + y^2) <xi>: the measured bound goes to zero with the state
        F = SeparableFamily(lambda uv: 1.0 + uv[:, 0] ** 2, bracket, 1.0)
        rep = check_garding(F, bump_function(), CHI, samples=16, exact=True)
        assert rep.negativity[0] >= rep.negativity[-1]

    def test_skew_family_linear_scaling(self):
        F = SeparableFamily(lambda uv: 1j * uv[:, 0], bracket, 1.0)
        rep = check_garding(F, bump_function(), CHI, samples=16, exact=True)
        assert rep.any_negativity
        assert rep.negativity_slope == pytest.approx(1.0, abs=0.1)
        assert -0.1 <= rep.constant_slope <= 0.7

    def test_sampled_matches_exact_scaling(self):
        F = SeparableFamily(lambda uv: 1j * uv[:, 0], bracket, 1.0)
        rs = check_garding(F, bump_function(), CHI, samples=32, seed=2)
        re = check_garding(F, bump_function(), CHI, samples=8, exact=True)
        assert rs.negativity_slope == pytest.approx(re.negativity_slope, abs=0.1)
        # sampling only probes a subset of directions: it must lower-bound
        # the exact worst constant
        assert np.all(rs.negativity <= re.negativity * (1 + 1e-9))

    def test_high_frequency_mode_refinement(self):
        # a single high-frequency test mode sees vanishing negativity under
        # grid refinement for a nonnegative multiplier family
        vals = []
        for N in (64, 128):
            lat = Lattice(d=1, N=N)
            x = lat.x_vectors()[:, 0]
            u0 = GridFunction(lat, 0.5 * np.exp(-((x - np.pi) ** 2) / 0.72) + 0j)
            F = SeparableFamily(lambda uv: 1.0 + uv[:, 0] ** 2, bracket, 1.0)
            sym = smooth_symbol(F.symbol(lat, u0.values), CHI)
            T = op_matrix(sym)
            S = T + T.conj().T
            kmax = int(np.argmax(lat.xi_vectors()[:, 0]))
            v = np.zeros(lat.points, dtype=complex)
            v[kmax] = 1.0
            vphys = lat.ifft(v[:, None])[:, 0]
            q = float(np.real(np.vdot(vphys, S @ vphys)) * lat.L_box / lat.points)
            nh = GridFunction(lat, vphys).sobolev_norm(0.0) ** 2
            vals.append(max(0.0, -q) / nh)
        assert vals[1] <= vals[0] + 1e-12


class TestBinaryContainer:
    def test_field_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        f = GridFunction(LAT, rng.normal(size=(LAT.points, 2)) + 1j * rng.normal(size=(LAT.points, 2)))
        path = tmp_path / "field.bin"
        save_field(path, f)
        g = load_field(path)
        assert g.lattice == LAT
        assert np.array_equal(g.values, f.values.astype(np.complex64).astype(complex))
        assert (tmp_path / "field.bin.json").exists()

    def test_symbol_roundtrip(self, tmp_path):
        a = separable_symbol(LAT, np.exp(np.cos(X)), bracket, 1.0)
        a.class_tag = "Gamma_k"
        path = tmp_path / "symbol.bin"
        save_symbol(path, a)
        b = load_symbol(path)
        assert b.order_m == a.order_m
        assert b.class_tag == a.class_tag
        assert np.array_equal(b.values, a.values.astype(np.complex64).astype(complex))


def test_grid_function_roundtrip_fft():
    rng = np.random.default_rng(12)
    vals = rng.normal(size=(LAT.points, 3)) + 1j * rng.normal(size=(LAT.points, 3))
    back = LAT.ifft(LAT.fft(vals))
    assert np.abs(back - vals).max() < 1e-12
