"""Discrete para-differential calculus on a periodic lattice.

Symbols a(x, xi) live on the product of a periodic x-lattice and its dual
frequency lattice.  An admissible cut-off chi(eta, xi) localizes a symbol's
x-dependence to frequencies |eta| small against <xi>; applying it through
the first-variable discrete Fourier transform realizes symbol smoothing,
and the para-differential operator is the quantization of the smoothed
symbol.  Dyadic Littlewood-Paley masks, dense operator matrices, Sobolev
operator norms by power iteration, and the quantitative checks (adjoint and
product error scaling, sharp lower bounds of nonnegative symbols) complete
the toolbox.

Lattice orders follow numpy's FFT layout; Fourier coefficients are the DFT
divided by the point count, so a(x, xi) = 1 quantizes to the identity map
exactly.
"""

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    GridMismatch,
    InvalidEpsilon,
    PowerIterationDivergence,
    PrecheckFailed,
)
from .profiles import ramp_down, ramp_up


@dataclass(frozen=True)
class Lattice:
    """Periodic lattice with N points per axis on a box of length L_box."""

    d: int = 1
    N: int = 256
    L_box: float = 2.0 * np.pi

    @property
    def points(self):
        return self.N**self.d

    def axis_x(self):
        return self.L_box * np.arange(self.N) / self.N

    def axis_xi(self):
        return 2.0 * np.pi / self.L_box * self.N * np.fft.fftfreq(self.N)

    def x_vectors(self):
        ax = self.axis_x()
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def xi_vectors(self):
        ax = self.axis_xi()
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def xi_mags(self):
        return np.linalg.norm(self.xi_vectors(), axis=1)

    def brackets(self):
        return np.sqrt(1.0 + self.xi_mags() ** 2)

    def phase_matrix(self):
        # e^{i x_j . xi_k}; P x P, cached per lattice
        key = (self.d, self.N, self.L_box)
        if key not in _PHASE_CACHE:
            x = self.x_vectors()
            xi = self.xi_vectors()
            _PHASE_CACHE[key] = np.exp(1j * (x @ xi.T))
        return _PHASE_CACHE[key]

    def fft(self, values):
        """Fourier coefficients of lattice samples, shape preserved (P, n)."""
        v = np.asarray(values)
        shp = (self.N,) * self.d + v.shape[1:]
        out = np.fft.fftn(v.reshape(shp), axes=tuple(range(self.d)))
        return out.reshape(v.shape) / self.points

    def ifft(self, coeff):
        c = np.asarray(coeff)
        shp = (self.N,) * self.d + c.shape[1:]
        out = np.fft.ifftn(c.reshape(shp), axes=tuple(range(self.d)))
        return out.reshape(c.shape) * self.points


_PHASE_CACHE = {}


@dataclass
class GridFunction:
    """C^n-valued lattice samples with a cached dual representation."""

    lattice: Lattice
    values: np.ndarray
    _hat: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.lattice.points:
            raise GridMismatch(
                f"{v.shape[0]} samples for a lattice of {self.lattice.points} points"
            )
        self.values = v

    @property
    def n(self):
        return self.values.shape[1]

    def hat(self):
        if self._hat is None:
            self._hat = self.lattice.fft(self.values)
        return self._hat

    def sobolev_norm(self, s):
        w = self.lattice.brackets() ** (2.0 * s)
        return float(
            np.sqrt(
                self.lattice.L_box**self.lattice.d
                * np.sum(w[:, None] * np.abs(self.hat()) ** 2)
            )
        )


@dataclass(frozen=True)
class CutoffSpec:
    """Admissible cut-off: 1 on {|eta| <= eps1 |xi|, |xi| >= 1}, 0 on
    {|eta| >= eps2 <xi>} and {|xi| <= eps2}, smooth monotone in between."""

    eps1: float
    eps2: float
    order: int = 7

    def __call__(self, eta_mag, xi_mag):
        eta_mag = np.abs(np.asarray(eta_mag, dtype=float))
        xi_mag = np.abs(np.asarray(xi_mag, dtype=float))
        br = np.sqrt(1.0 + xi_mag**2)
        lo = self.eps1 * xi_mag
        hi = self.eps2 * br
        t = (eta_mag - lo) / (hi - lo)
        eta_part = 1.0 - _smooth01(t, self.order)
        xi_part = _smooth01((xi_mag - self.eps2) / (1.0 - self.eps2), self.order)
        return eta_part * xi_part


def _smooth01(t, order):
    from .profiles import smoothstep

    return smoothstep(t, order)


def make_cutoff(eps1, eps2, order=7):
    if not (0.0 < eps1 < eps2 < 1.0):
        raise InvalidEpsilon(f"need 0 < eps1 < eps2 < 1, got ({eps1}, {eps2})")
    return CutoffSpec(eps1=float(eps1), eps2=float(eps2), order=order)


@dataclass
class DiscreteSymbol:
    """Matrix symbol sampled on (x-lattice) x (dual lattice).

    values has shape (P, P, n, n); order_m is the nominal symbol order and
    class_tag one of 'Gamma_k', 'S_11', 'smoothed'.
    """

    lattice: Lattice
    values: np.ndarray
    order_m: float = 0.0
    class_tag: str = "Gamma_k"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        P = self.lattice.points
        if v.ndim == 2:
            v = v[:, :, None, None]
        if v.shape[0] != P or v.shape[1] != P or v.shape[2] != v.shape[3]:
            raise GridMismatch(f"symbol values shape {v.shape} incompatible with P={P}")
        self.values = v

    @property
    def n(self):
        return self.values.shape[2]


def multiplier_symbol(lattice, mfun, order_m=0.0, n=1):
    """x-independent symbol from a function of the frequency vectors."""
    xi = lattice.xi_vectors()
    vals = np.asarray(mfun(xi), dtype=complex)
    if vals.ndim == 1:
        vals = vals[:, None, None] * np.eye(n)[None, :, :]
    P = lattice.points
    full = np.broadcast_to(vals[None, :, :, :], (P, P, vals.shape[1], vals.shape[2]))
    return DiscreteSymbol(lattice, full.copy(), order_m=order_m)


def multiplication_symbol(lattice, gvals):
    """xi-independent symbol: quantizes to pointwise multiplication."""
    g = np.asarray(gvals, dtype=complex)
    if g.ndim == 1:
        g = g[:, None, None] * np.eye(1)[None, :, :]
    P = lattice.points
    full = np.broadcast_to(g[:, None, :, :], (P, P, g.shape[1], g.shape[2]))
    return DiscreteSymbol(lattice, full.copy(), order_m=0.0)


def separable_symbol(lattice, gvals, mfun, order_m):
    """Product symbol g(x) m(xi) from state and frequency factors."""
    g = np.asarray(gvals, dtype=complex)
    xi = lattice.xi_vectors()
    m = np.asarray(mfun(xi), dtype=complex)
    if g.ndim == 1 and m.ndim == 1:
        vals = g[:, None, None, None] * m[None, :, None, None]
    elif g.ndim == 3 and m.ndim == 1:
        vals = g[:, None, :, :] * m[None, :, None, None]
    elif g.ndim == 1 and m.ndim == 3:
        vals = g[:, None, None, None] * m[None, :, :, :]
    else:
        vals = np.einsum("iab,jbc->ijac", g, m)
    return DiscreteSymbol(lattice, vals, order_m=order_m)


def smooth_symbol(symbol, chi):
    """Frequency-localize the x-dependence: multiply the first-variable DFT
    by chi(eta, xi) and transform back.

    The output's x-spectrum vanishes identically on {|eta| >= eps2 <xi>}, so
    it realizes the restricted symbol class membership exactly on the lattice.
    """
    lat = symbol.lattice
    P = lat.points
    eta = lat.xi_mags()
    ximag = lat.xi_mags()
    mask = chi(eta[:, None], ximag[None, :])
    v = symbol.values
    shp = (lat.N,) * lat.d + v.shape[1:]
    hat = np.fft.fftn(v.reshape(shp), axes=tuple(range(lat.d))).reshape(v.shape)
    hat = hat * mask[:, :, None, None]
    out = np.fft.ifftn(hat.reshape(shp), axes=tuple(range(lat.d))).reshape(v.shape)
    return DiscreteSymbol(lat, out, order_m=symbol.order_m, class_tag="smoothed")


def apply_op(symbol, f):
    """(op[a] f)(x) = sum_xi e^{i x xi} a(x, xi) fhat(xi)."""
    lat = symbol.lattice
    if f.lattice != lat:
        raise GridMismatch("function and symbol live on different lattices")
    if f.n != symbol.n:
        raise GridMismatch(f"function has {f.n} components, symbol {symbol.n}")
    phase = lat.phase_matrix()
    out = np.einsum("jk,jkab,kb->ja", phase, symbol.values, f.hat(), optimize=True)
    return GridFunction(lat, out)


def para_op(symbol, chi, f):
    """Op_chi[A] f = op[R_chi(A)] f."""
    return apply_op(smooth_symbol(symbol, chi), f)


def op_matrix(symbol):
    """Dense matrix of op[a] acting on stacked lattice values (P*n square)."""
    lat = symbol.lattice
    P, n = lat.points, symbol.n
    phase = lat.phase_matrix()
    dft = phase.conj().T / P  # fhat_k = sum_l dft[k,l] f_l
    T = np.einsum("jk,jkab,kl->jalb", phase, symbol.values, dft, optimize=True)
    return T.reshape(P * n, P * n)


def sobolev_weight_matrix(lattice, s, n=1):
    """Dense matrix of the <D>^s multiplier on stacked lattice values."""
    P = lattice.points
    phase = lattice.phase_matrix()
    dft = phase.conj().T / P
    w = lattice.brackets() ** s
    W = phase @ (w[:, None] * dft)
    if n == 1:
        return W
    return np.kron(W, np.eye(n))


def operator_norm_power(G, tol=1e-9, maxit=2000, seed=7, block=8):
    """Largest singular value of G by subspace (block power) iteration.

    Iterates an orthonormal block under G^H G and reads the top Ritz value
    off the projected block; the block absorbs clustered top singular
    values, which a single power vector cannot separate.
    """
    rng = np.random.default_rng(seed)
    m = G.shape[1]
    block = min(block, m)
    V = rng.normal(size=(m, block)) + 1j * rng.normal(size=(m, block))
    V, _ = np.linalg.qr(V)
    prev = -1.0
    for _ in range(maxit):
        W = G @ V
        s = np.linalg.norm(W, axis=0)
        cur = float(np.max(s))
        if cur == 0.0:
            return 0.0
        V, _ = np.linalg.qr(G.conj().T @ W)
        if abs(cur - prev) <= tol * max(cur, 1e-30):
            return cur
        prev = cur
    if abs(cur - prev) <= 1e-6 * max(cur, 1e-30):
        # clustered top singular values: the value has settled even though
        # the strict tolerance was not met
        return cur
    raise PowerIterationDivergence(
        f"block power iteration did not converge in {maxit} steps (last {prev:.6e})"
    )


def operator_sobolev_norm(T, lattice, s_out, s_in, n=1):
    """||T|| between H^{s_in} and H^{s_out} on the lattice."""
    Wout = sobolev_weight_matrix(lattice, s_out, n)
    Win = sobolev_weight_matrix(lattice, -s_in, n)
    return operator_norm_power(Wout @ T @ Win)


# ---------------------------------------------------------------------------
# Littlewood-Paley decomposition
# ---------------------------------------------------------------------------

def lp_masks(lattice, order=7):
    """Dyadic partition of unity on the dual lattice: masks zeta_nu with
    sum_nu zeta_nu = 1 exactly, supp zeta_nu in the annulus
    2^{nu-1} <= |xi| <= 2^{nu+1} for nu >= 0."""
    mags = lattice.xi_mags()
    mmax = float(mags.max())
    nu_max = max(0, int(np.ceil(np.log2(max(mmax, 1.0)))))

    def rho(x):  # 1 on |xi| <= 1/2, 0 on |xi| >= 1
        return ramp_down(x, 0.5, 1.0, order)

    masks = []
    prev = rho(mags)  # rho_0
    masks.append(prev.copy())  # zeta_{-1} = rho
    for nu in range(0, nu_max + 1):
        cur = rho(mags / 2.0 ** (nu + 1))
        masks.append(cur - prev)
        prev = cur
    # by construction prev == 1 on the whole lattice now
    return masks


def lp_decompose(symbol, order=7):
    """Split a symbol into dyadic frequency annuli; exact reconstruction."""
    masks = lp_masks(symbol.lattice, order)
    out = []
    for nu, mk in enumerate(masks, start=-1):
        vals = symbol.values * mk[None, :, None, None]
        out.append(DiscreteSymbol(symbol.lattice, vals, order_m=symbol.order_m,
                                  class_tag=symbol.class_tag))
    return out


# ---------------------------------------------------------------------------
# Symbol families induced by gridded states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparableFamily:
    """Symbol family F(u, xi) = state_factor(u) * freq_factor(xi).

    state_factor maps (P, n_state) samples to (P,) or (P, n, n); freq_factor
    maps (Q, d) frequencies to (Q,) or (Q, n, n).
    """

    state_factor: Callable
    freq_factor: Callable
    order: float

    def symbol(self, lattice, u_values):
        return separable_symbol(
            lattice, self.state_factor(u_values), self.freq_factor, self.order
        )


def _adjoint_family(fam):
    def state_conj(u):
        g = np.asarray(fam.state_factor(u), dtype=complex)
        return g.conj() if g.ndim == 1 else np.conj(np.swapaxes(g, 1, 2))

    def freq_conj(xi):
        m = np.asarray(fam.freq_factor(xi), dtype=complex)
        return m.conj() if m.ndim == 1 else np.conj(np.swapaxes(m, 1, 2))

    return SeparableFamily(state_conj, freq_conj, fam.order)


def symbol_product(a, b):
    """Pointwise matrix product of two symbols on the same lattices."""
    if a.lattice != b.lattice:
        raise GridMismatch("symbols on different lattices")
    vals = np.einsum("ijab,ijbc->ijac", a.values, b.values, optimize=True)
    return DiscreteSymbol(a.lattice, vals, order_m=a.order_m + b.order_m)


@dataclass
class ScalingReport:
    """Measured operator norms under a state-amplitude sweep."""

    amplitudes: np.ndarray
    adjoint_norms: np.ndarray
    product_norms: np.ndarray
    adjoint_slope: float
    product_slope: float


def _loglog_slope(x, y, floor=1e-15):
    x = np.asarray(x, dtype=float)
    y = np.maximum(np.asarray(y, dtype=float), floor)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def check_adjoint_product_errors(F, G, chi, u_base, amplitudes=(1.0, 0.5, 0.25, 0.125),
                                 l=0.0):
    """Scaling of the adjoint and product quantization errors in the state.

    Measures ||Op[F_u]^* - Op[F_u^*]|| from H^{l+m-1} to H^l and
    ||Op[G_u] Op[F_u] - Op[G_u F_u]|| from H^{l+m+mu-1} to H^l while the
    state amplitude is swept; the fitted log-log slopes should be ~1 for
    symbol families depending smoothly on the state (proportional bounds).
    """
    lat = u_base.lattice
    amps = np.asarray(amplitudes, dtype=float)
    adn = np.zeros(len(amps))
    prn = np.zeros(len(amps))
    Fadj = _adjoint_family(F)
    for k, a in enumerate(amps):
        uv = a * u_base.values
        AF = F.symbol(lat, uv)
        AG = G.symbol(lat, uv)
        TF = op_matrix(smooth_symbol(AF, chi))
        TFs = op_matrix(smooth_symbol(Fadj.symbol(lat, uv), chi))
        E1 = TF.conj().T - TFs
        adn[k] = operator_sobolev_norm(E1, lat, l, l + F.order - 1.0, AF.n)
        TG = op_matrix(smooth_symbol(AG, chi))
        TGF = op_matrix(smooth_symbol(symbol_product(AG, AF), chi))
        E2 = TG @ TF - TGF
        prn[k] = operator_sobolev_norm(E2, lat, l, l + F.order + G.order - 1.0, AF.n)
    return ScalingReport(
        amplitudes=amps,
        adjoint_norms=adn,
        product_norms=prn,
        adjoint_slope=_loglog_slope(amps, adn),
        product_slope=_loglog_slope(amps, prn),
    )


@dataclass
class GardingReport:
    """Lower-bound measurements for a pointwise nonnegative symbol family.

    negativity[k] is the worst (smoothing-corrected) negative part of the
    quadratic form at amplitude k, normalized by ||v||^2_{(m-1)/2};
    normalized_constant[k] = negativity[k] / ||u||_{s+2}^{1/2}.  When the
    negativity scales linearly in the state (the generic case), the
    normalized constant scales like ||u||^{1/2}, i.e. its log-log slope is
    about 0.5; a slope much above 0.7 or below 0 would contradict the
    square-root lower-bound law.
    """

    amplitudes: np.ndarray
    u_norms: np.ndarray
    negativity: np.ndarray
    normalized_constant: np.ndarray
    negativity_slope: float
    constant_slope: float
    smoothing_constant: float
    any_negativity: bool
    exact: bool


def _band_limited_samples(lattice, n, count, rng):
    mags = lattice.xi_mags()
    band = mags <= mags.max() / 3.0
    out = []
    for _ in range(count):
        c = np.zeros((lattice.points, n), dtype=complex)
        c[band] = rng.normal(size=(band.sum(), n)) + 1j * rng.normal(size=(band.sum(), n))
        out.append(GridFunction(lattice, lattice.ifft(c)))
    return out


def check_garding(F, u_base, chi, amplitudes=(1.0, 0.5, 0.25, 0.125), samples=32,
                  q_ord=2.0, radius=0.0, seed=11, s_ref=2.0, exact=False):
    """Sharp-lower-bound check for a nonnegative symbol family.

    Precondition: F(y, xi) + F(y, xi)^* >= 0 for |xi| > radius, verified by
    sampling on the swept states (PrecheckFailed otherwise).  For random
    band-limited test functions v the form
    q(v) = Re<(Op[F_u] + Op[F_u]^*) v, v> is measured; the reported
    negativity at each amplitude is max(0, -q(v) - c ||v||_{-q_ord}^2)
    normalized by ||v||^2_{(m-1)/2}, where c is the smoothing-tail constant
    calibrated at u = 0.  With exact=True the worst constant is computed by
    a dense eigenvalue problem instead of sampling.
    """
    lat = u_base.lattice
    rng = np.random.default_rng(seed)
    amps = np.asarray(amplitudes, dtype=float)
    mags = lat.xi_mags()
    hi = mags > radius

    # pointwise nonnegativity precheck on the swept states
    for a in amps:
        sym = F.symbol(lat, a * u_base.values)
        vals = sym.values[:, hi]
        herm = vals + np.conj(np.swapaxes(vals, 2, 3))
        wmin = np.min(np.linalg.eigvalsh(herm))
        if wmin < -1e-10:
            raise PrecheckFailed(
                f"symbol not nonnegative for |xi| > {radius:g}: min eig {wmin:.3e}"
            )

    n = F.symbol(lat, 0.0 * u_base.values).n
    vs = _band_limited_samples(lat, n, samples, rng)
    halfw = 0.5 * (F.order - 1.0)

    def norms(v):
        return v.sobolev_norm(halfw), v.sobolev_norm(-q_ord)

    def sym_matrix(uv):
        T = op_matrix(smooth_symbol(F.symbol(lat, uv), chi))
        return T + T.conj().T

    # calibrate the smoothing-tail constant at u = 0
    S0 = sym_matrix(0.0 * u_base.values)
    voln = lat.L_box**lat.d / lat.points
    c0 = 0.0
    for v in vs:
        f = v.values.reshape(-1)
        q = float(np.real(np.vdot(f, S0 @ f)) * voln)
        _, nq = norms(v)
        c0 = max(c0, -q / nq**2)
    c0 = max(c0, 0.0) * 1.05 + 1e-14

    neg = np.zeros(len(amps))
    unorms = np.zeros(len(amps))
    for k, a in enumerate(amps):
        uv = a * u_base.values
        unorms[k] = GridFunction(lat, uv).sobolev_norm(s_ref + 2.0)
        S = sym_matrix(uv)
        worst = 0.0
        if exact:
            Whalf = sobolev_weight_matrix(lat, -halfw, n)
            Wq = sobolev_weight_matrix(lat, -q_ord, n)
            Mneg = -S - c0 * (Wq.conj().T @ Wq)
            # worst constant: largest eigenvalue of the (m-1)/2-weighted
            # negative part (volume factors cancel in the Rayleigh quotient)
            Gm = Whalf.conj().T @ Mneg @ Whalf
            worst = max(0.0, float(np.max(np.linalg.eigvalsh(0.5 * (Gm + Gm.conj().T)))))
        else:
            for v in vs:
                f = v.values.reshape(-1)
                q = float(np.real(np.vdot(f, S @ f)) * voln)
                nh, nq = norms(v)
                worst = max(worst, (-q - c0 * nq**2) / nh**2)
        neg[k] = max(worst, 0.0)

    any_neg = bool(np.any(neg > 1e-12))
    normalized = neg / np.sqrt(unorms)
    return GardingReport(
        amplitudes=amps,
        u_norms=unorms,
        negativity=neg,
        normalized_constant=normalized,
        negativity_slope=_loglog_slope(amps, neg) if any_neg else 0.0,
        constant_slope=_loglog_slope(amps, normalized) if any_neg else 0.0,
        smoothing_constant=c0,
        any_negativity=any_neg,
        exact=exact,
    )


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------

_MAGIC = b"HYPDBIN1"


def _write_container(path, kind, lattice, n, order_m, class_tag, payload):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<qqqq", kind, lattice.d, lattice.N, n))
        f.write(struct.pack("<dd", lattice.L_box, order_m))
        f.write(np.ascontiguousarray(payload, dtype=np.complex64).tobytes())
    os.replace(tmp, path)
    meta = {
        "kind": "symbol" if kind else "field",
        "d": lattice.d,
        "N": lattice.N,
        "n": n,
        "L_box": lattice.L_box,
        "order_m": order_m,
        "class_tag": class_tag,
        "dtype": "complex64",
        "layout": "row-major",
    }
    tmp = str(path) + ".json.tmp"
    with open(tmp, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, str(path) + ".json")


def _read_container(path):
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise GridMismatch(f"{path} is not a hypdiss binary container")
        kind, d, N, n = struct.unpack("<qqqq", f.read(32))
        L_box, order_m = struct.unpack("<dd", f.read(16))
        payload = np.frombuffer(f.read(), dtype=np.complex64)
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    return kind, Lattice(d=d, N=N, L_box=L_box), n, order_m, meta, payload


def save_field(path, f):
    _write_container(path, 0, f.lattice, f.n, 0.0, "", f.values)


def load_field(path):
    kind, lat, n, _, _, payload = _read_container(path)
    if kind != 0:
        raise GridMismatch("container holds a symbol, not a field")
    return GridFunction(lat, payload.reshape(lat.points, n).astype(complex))


def save_symbol(path, sym):
    _write_container(path, 1, sym.lattice, sym.n, sym.order_m, sym.class_tag, sym.values)


def load_symbol(path):
    kind, lat, n, order_m, meta, payload = _read_container(path)
    if kind != 1:
        raise GridMismatch("container holds a field, not a symbol")
    P = lat.points
    return DiscreteSymbol(
        lat,
        payload.reshape(P, P, n, n).astype(complex),
        order_m=order_m,
        class_tag=meta.get("class_tag", "Gamma_k"),
    )
