"""Pseudo-spectral time integration of the nonlinear first-order system.

The state is U = (u, u_t) on a periodic lattice; spatial derivatives are
exact in Fourier space, coefficient products are formed pointwise in
physical space with 2/3-rule dealiasing, and time stepping is classical
RK4 under a spectral-radius CFL bound.  An energy monitor assembles the
symmetrized para-differential quadratic form built from the per-frequency
dissipation symbol and checks the decay inequality

    1/2 d/dt <G_u W, W> + c ||W||^2  <=  C_low ||W_low||^2 + K ||W||^3

with W = <D>^s (<D> u, u_t), an explicitly computed low-frequency allowance
C_low, and a pinned nonlinear slack constant K.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BlowUp, CFLViolation, DomainExit, PrerequisiteMissing
from .model import ensure_normalized
from .paradiff import DiscreteSymbol, GridFunction, Lattice, apply_op, smooth_symbol
from .profiles import ramp_down, ramp_up
from .symbols import assemble_M, assemble_Mbar

#: RK4 absolute-stability radius along the imaginary axis.
RK4_IMAG_LIMIT = 2.8

#: Nonlinear slack constant in the energy-inequality budget.
ENERGY_BUDGET_SLACK = 10.0


@dataclass
class FieldState:
    """Periodic-grid physical state (u, u_t)."""

    lattice: Lattice
    u: np.ndarray
    ut: np.ndarray
    time: float = 0.0
    dealias_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        iif = np.asarray(self.u, dtype=complex)
        self.u = iif if iif.ndim == 2 else iif[:, None]
        vt = np.asarray(self.ut, dtype=complex)
        self.ut = vt if vt.ndim == 2 else vt[:, None]
        if self.dealias_mask is None:
            self.dealias_mask = two_thirds_mask(self.lattice)

    @property
    def n(self):
        return self.u.shape[1]

    def copy(self):
        return FieldState(self.lattice, self.u.copy(), self.ut.copy(), self.time,
                          self.dealias_mask)


def two_thirds_mask(lattice):
    mags = np.abs(lattice.xi_vectors())
    cut = (2.0 / 3.0) * np.max(np.abs(lattice.axis_xi()))
    return np.all(mags <= cut + 1e-12, axis=1)


def apply_mask(lattice, values, mask):
    hat = lattice.fft(values)
    hat[~mask] = 0.0
    return lattice.ifft(hat)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigData:
    """amplitude * sin/cos(k . x) in one component (mean-free for k != 0)."""

    amplitude: float
    wavenumber: tuple = (1,)
    component: int = 0
    target: str = "u0"
    phase: str = "sin"


@dataclass(frozen=True)
class PeriodicBumpData:
    """Periodized Gaussian bump, optionally with its lattice mean removed."""

    amplitude: float
    width: float = 0.6
    center: Optional[tuple] = None
    component: int = 0
    target: str = "u0"
    mean_free: bool = True


def initial_state(model, data_spec, lattice):
    model = ensure_normalized(model)
    specs = data_spec if isinstance(data_spec, (list, tuple)) else [data_spec]
    x = lattice.x_vectors()
    u = np.tile(model.reference_state.astype(complex), (lattice.points, 1))
    ut = np.zeros((lattice.points, model.n), dtype=complex)
    for spec in specs:
        if isinstance(spec, TrigData):
            k = np.array(spec.wavenumber, dtype=float) * 2.0 * np.pi / lattice.L_box
            ph = x @ k
            vals = spec.amplitude * (np.sin(ph) if spec.phase == "sin" else np.cos(ph))
        elif isinstance(spec, PeriodicBumpData):
            c = np.full(lattice.d, 0.5 * lattice.L_box) if spec.center is None else np.array(spec.center)
            r2 = np.sum((x - c[None, :]) ** 2, axis=1)
            vals = spec.amplitude * np.exp(-r2 / (2.0 * spec.width**2))
            if spec.mean_free:
                vals = vals - vals.mean()
        else:
            raise TypeError(f"unsupported simulator data spec {type(spec).__name__}")
        if spec.target == "u0":
            u[:, spec.component] += vals
        else:
            ut[:, spec.component] += vals
    state = FieldState(lattice, u, ut)
    state.u = apply_mask(lattice, state.u, state.dealias_mask)
    state.ut = apply_mask(lattice, state.ut, state.dealias_mask)
    return state


# ---------------------------------------------------------------------------
# Right-hand side and stepping
# ---------------------------------------------------------------------------

def _coefficient_fields(model, u_phys):
    """Evaluate all coefficient matrices along the grid; (n, n) arrays for
    constant models, (P, n, n) otherwise."""
    n, d = model.n, model.d
    if model.constant_coefficients:
        ub = model.reference_state
        A0 = np.asarray(model.A(0, ub), float)
        Aj = [np.asarray(model.A(j, ub), float) for j in range(1, d + 1)]
        Cj = [
            np.asarray(model.B(0, j, ub) + model.B(j, 0, ub), float)
            for j in range(1, d + 1)
        ]
        Bjk = {
            (j, k): np.asarray(model.B(j, k, ub), float)
            for j in range(1, d + 1)
            for k in range(1, d + 1)
        }
        return A0, Aj, Cj, Bjk
    P = u_phys.shape[0]
    A0 = np.empty((P, n, n))
    Aj = [np.empty((P, n, n)) for _ in range(d)]
    Cj = [np.empty((P, n, n)) for _ in range(d)]
    Bjk = {(j, k): np.empty((P, n, n)) for j in range(1, d + 1) for k in range(1, d + 1)}
    for p in range(P):
        up = u_phys[p].real
        A0[p] = model.A(0, up)
        for j in range(1, d + 1):
            Aj[j - 1][p] = model.A(j, up)
            Cj[j - 1][p] = model.B(0, j, up) + model.B(j, 0, up)
            for k in range(1, d + 1):
                Bjk[(j, k)][p] = model.B(j, k, up)
    return A0, Aj, Cj, Bjk


def _matvec(mat, vec):
    if mat.ndim == 2:
        return vec @ mat.T
    return np.einsum("pij,pj->pi", mat, vec)


def _check_domain(model, u_phys, time):
    lo, hi = model.state_domain
    ur = u_phys.real
    if np.any(ur < lo[None, :] - 1e-12) or np.any(ur > hi[None, :] + 1e-12):
        raise DomainExit(
            f"state left the domain box at t={time:g}",
            report={
                "time": time,
                "min": ur.min(axis=0).tolist(),
                "max": ur.max(axis=0).tolist(),
                "lo": lo.tolist(),
                "hi": hi.tolist(),
            },
        )


def rhs(model, state):
    """Time derivative (u_t, v_t) of the first-order system.

    v_t = sum_j (B^{j0}+B^{0j})(u) v_{x_j} + sum_jk B^{jk}(u) u_{x_j x_k}
          - A^0(u) v - sum_j A^j(u) u_{x_j} + Q(u, Du)
    with spectral derivatives and dealiased physical-space products.
    """
    model = ensure_normalized(model)
    lat = state.lattice
    d = model.d
    _check_domain(model, state.u, state.time)

    xi = lat.xi_vectors()
    uhat = lat.fft(state.u)
    vhat = lat.fft(state.ut)
    u_x = [lat.ifft(1j * xi[:, j : j + 1] * uhat) for j in range(d)]
    v_x = [lat.ifft(1j * xi[:, j : j + 1] * vhat) for j in range(d)]
    u_xx = {
        (j, k): lat.ifft(-xi[:, j : j + 1] * xi[:, k : k + 1] * uhat)
        for j in range(d)
        for k in range(d)
    }

    A0, Aj, Cj, Bjk = _coefficient_fields(model, state.u)
    vt = -_matvec(A0, state.ut)
    for j in range(d):
        vt = vt + _matvec(Cj[j], v_x[j]) - _matvec(Aj[j], u_x[j])
        for k in range(d):
            vt = vt + _matvec(Bjk[(j + 1, k + 1)], u_xx[(j, k)])
    if model.Q is not None:
        du = np.stack([state.ut] + u_x, axis=1)
        vt = vt + model.Q(state.u, du)
    ut = state.ut.copy()
    ut = apply_mask(lat, ut, state.dealias_mask)
    vt = apply_mask(lat, vt, state.dealias_mask)
    return ut, vt


def spectral_radius_bound(model, lattice, mask=None):
    """Upper bound for |spec(Mbar)| over the resolved (dealiased) frequencies."""
    model = ensure_normalized(model)
    mask = two_thirds_mask(lattice) if mask is None else mask
    xi = lattice.xi_vectors()[mask]
    mags = np.linalg.norm(xi, axis=1)
    probes = [xi[np.argmax(mags)]]
    for j in range(lattice.d):
        probes.append(xi[np.argmax(np.abs(xi[:, j]))])
    rad = 0.0
    for p in probes:
        rad = max(rad, float(np.max(np.abs(np.linalg.eigvals(assemble_Mbar(model, model.reference_state, p))))))
    return 1.05 * rad


def max_stable_dt(model, lattice, cfl_factor=0.9):
    return cfl_factor * RK4_IMAG_LIMIT / spectral_radius_bound(model, lattice)


def step_rk4(model, state, dt, dt_max=None):
    """One classical RK4 step; raises CFLViolation above the stability bound."""
    if dt_max is None:
        dt_max = max_stable_dt(model, state.lattice)
    if dt > dt_max:
        raise CFLViolation(f"dt = {dt:g} exceeds stability bound {dt_max:g}")

    def f(u, ut, t):
        s = FieldState(state.lattice, u, ut, t, state.dealias_mask)
        return rhs(model, s)

    u, v, t = state.u, state.ut, state.time
    k1u, k1v = f(u, v, t)
    k2u, k2v = f(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v, t + 0.5 * dt)
    k3u, k3v = f(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v, t + 0.5 * dt)
    k4u, k4v = f(u + dt * k3u, v + dt * k3v, t + dt)
    un = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    un = apply_mask(state.lattice, un, state.dealias_mask)
    vn = apply_mask(state.lattice, vn, state.dealias_mask)
    return FieldState(state.lattice, un, vn, t + dt, state.dealias_mask)


# ---------------------------------------------------------------------------
# Sobolev norms on the lattice
# ---------------------------------------------------------------------------

def state_norms(model, state, s):
    """(||u - ubar||_{H^{s+1}}, ||u_t||_{H^s}) on the lattice."""
    ubar = ensure_normalized(model).reference_state
    du = GridFunction(state.lattice, state.u - ubar[None, :])
    vt = GridFunction(state.lattice, state.ut)
    return du.sobolev_norm(s + 1.0), vt.sobolev_norm(s)


def w_hat(model, state, s):
    """Fourier coefficients of W = <D>^s (<D>(u - ubar), u_t)."""
    model = ensure_normalized(model)
    lat = state.lattice
    br = lat.brackets()
    du_hat = lat.fft(state.u - model.reference_state[None, :])
    vt_hat = lat.fft(state.ut)
    top = (br ** (1.0 + s))[:, None] * du_hat
    bot = (br**s)[:, None] * vt_hat
    return np.concatenate([top, bot], axis=1)


# ---------------------------------------------------------------------------
# Energy monitor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonitorSetup:
    """Frequency layout of the energy functional.

    The dissipation symbol is active for |xi| >= 2r (fully from 3r) and the
    identity patch covers |xi| <= 4r (gone from 5r), with the same
    polynomial smoothstep profile used by the cut-offs.
    """

    r: float = 1.0
    s: float = 2.0
    c_monitor_fraction: float = 0.25
    slack: float = ENERGY_BUDGET_SLACK

    def phi(self, mags):
        return ramp_up(mags, 2.0 * self.r, 3.0 * self.r)

    def psi(self, mags):
        return ramp_down(mags, 4.0 * self.r, 5.0 * self.r)


def _batched_lyapunov(Ms):
    """Solve D M + M^* D = -I for a stack of matrices via the kron system."""
    b, m, _ = Ms.shape
    eye = np.eye(m)
    A = np.einsum("bij,kl->bikjl", np.swapaxes(Ms, 1, 2), eye).reshape(b, m * m, m * m)
    A = A + np.einsum("ij,bkl->bikjl", eye, np.conj(Ms)).reshape(b, m * m, m * m)
    rhs_v = -np.tile(eye.reshape(-1), (b, 1))
    D = np.linalg.solve(A, rhs_v[..., None])[..., 0].reshape(b, m, m)
    D = np.swapaxes(D, 1, 2)
    return 0.5 * (D + np.conj(np.swapaxes(D, 1, 2)))


def dissipation_symbol_field(model, u_phys, lattice, setup):
    """D-tilde(u(x), xi) = phi(xi) D(u(x), xi) + psi(xi) I on the lattice."""
    model = ensure_normalized(model)
    P = u_phys.shape[0]
    n2 = 2 * model.n
    xi = lattice.xi_vectors()
    mags = np.linalg.norm(xi, axis=1)
    phi = setup.phi(mags)
    psi = setup.psi(mags)
    Q = lattice.points
    vals = np.zeros((P, Q, n2, n2), dtype=complex)
    vals += psi[None, :, None, None] * np.eye(n2)[None, None, :, :]

    active = phi > 0.0
    if np.any(active):
        if model.constant_coefficients:
            states = model.reference_state[None, :]
            back = np.zeros(P, dtype=int)
        else:
            states, back = np.unique(
                np.round(u_phys.real, 12), axis=0, return_inverse=True
            )
        xa = xi[active]
        for si, uval in enumerate(states):
            Ms = np.stack([assemble_M(model, uval, x) for x in xa])
            Ds = _batched_lyapunov(Ms)
            rows = np.where(back == si)[0]
            contrib = phi[active][:, None, None] * Ds
            for p in rows:
                vals[p, active] += contrib
    return DiscreteSymbol(lattice, vals, order_m=0.0, class_tag="Gamma_k")


@dataclass
class MonitorResult:
    value: float
    derivative: float
    w_norm2: float
    w_low_norm2: float
    c_monitor: float
    budget: float
    lhs: float

    @property
    def satisfied(self):
        return self.lhs <= self.budget


def _g_form_value(model, state, s, chi, setup, symbol_ref=None):
    """<G_u W, W> with G_u the symmetrized para-operator of D-tilde."""
    lat = state.lattice
    what = w_hat(model, state, s)
    W = GridFunction(lat, lat.ifft(what))
    sym = dissipation_symbol_field(model, state.u, lat, setup)
    opw = apply_op(smooth_symbol(sym, chi), W)
    voln = lat.L_box**lat.d / lat.points
    val = float(np.real(np.sum(np.conj(W.values) * opw.values)) * voln)
    # multiplier correction op[D_ref] - Op_chi[D_ref] (reference-state symbol)
    ref = symbol_ref
    if ref is None:
        ref = _reference_multiplier(model, lat, setup)
    mags = lat.xi_mags()
    chi0 = chi(np.zeros_like(mags), mags)
    corr_mult = ref * (1.0 - chi0)[:, None, None]
    corr = float(
        np.real(
            np.sum(np.conj(what) * np.einsum("qab,qb->qa", corr_mult, what))
        )
        * lat.L_box**lat.d
    )
    return val + corr


def _reference_multiplier(model, lattice, setup):
    model = ensure_normalized(model)
    xi = lattice.xi_vectors()
    mags = np.linalg.norm(xi, axis=1)
    phi = setup.phi(mags)
    psi = setup.psi(mags)
    n2 = 2 * model.n
    out = psi[:, None, None] * np.eye(n2)[None, :, :].astype(complex)
    active = phi > 0.0
    if np.any(active):
        Ms = np.stack([assemble_M(model, model.reference_state, x) for x in xi[active]])
        out[active] += phi[active][:, None, None] * _batched_lyapunov(Ms)
    return out


def low_band_allowance(model, lattice, setup):
    """Computed allowance C_low: the worst positive drift of the quadratic
    form on frequencies where the dissipation symbol is not fully active."""
    model = ensure_normalized(model)
    ref = _reference_multiplier(model, lattice, setup)
    xi = lattice.xi_vectors()
    mags = np.linalg.norm(xi, axis=1)
    sel = setup.phi(mags) < 1.0
    worst = 0.0
    for q in np.where(sel)[0]:
        M = assemble_M(model, model.reference_state, xi[q])
        H = ref[q] @ M
        lam = float(np.max(np.linalg.eigvalsh(H + H.conj().T))) / 2.0
        worst = max(worst, lam + setup.c_monitor_fraction)
    return worst


def energy_monitor(model, state, s=2.0, chi=None, setup=None, dt_fd=1e-3,
                   dt_max=None):
    """Value and decay test of the para-differential energy functional.

    Returns the quadratic form <G_u W, W>, a centered finite-difference time
    derivative (stepping the full nonlinear dynamics), and the budget test
    1/2 d/dt + c ||W||^2 <= C_low ||W_low||^2 + K ||W||^3.
    """
    from .paradiff import make_cutoff

    model = ensure_normalized(model)
    chi = make_cutoff(0.2, 0.5) if chi is None else chi
    setup = MonitorSetup(s=s) if setup is None else setup
    if dt_max is None:
        dt_max = max_stable_dt(model, state.lattice)
    h = min(dt_fd, 0.25 * dt_max)

    val0 = _g_form_value(model, state, s, chi, setup)
    fwd = step_rk4(model, state, h, dt_max)
    bwd = step_rk4(model, state, -h, dt_max)
    valp = _g_form_value(model, fwd, s, chi, setup)
    valm = _g_form_value(model, bwd, s, chi, setup)
    deriv = (valp - valm) / (2.0 * h)

    lat = state.lattice
    what = w_hat(model, state, s)
    voln = lat.L_box**lat.d
    w2 = float(np.sum(np.abs(what) ** 2) * voln)
    mags = lat.xi_mags()
    low = setup.phi(mags) < 1.0
    wlow2 = float(np.sum(np.abs(what[low]) ** 2) * voln)
    c_mon = setup.c_monitor_fraction
    c_low = low_band_allowance(model, lat, setup)
    budget = c_low * wlow2 + setup.slack * w2**1.5
    lhs = 0.5 * deriv + c_mon * w2
    return MonitorResult(
        value=val0,
        derivative=deriv,
        w_norm2=w2,
        w_low_norm2=wlow2,
        c_monitor=c_mon,
        budget=budget,
        lhs=lhs,
    )


def monitor_rayleigh_floor(model, state, s=2.0, chi=None, setup=None, count=50, seed=3):
    """Sampled positivity of G_u: min <G w, w>/<w, w> over random fields."""
    from .paradiff import make_cutoff

    model = ensure_normalized(model)
    chi = make_cutoff(0.2, 0.5) if chi is None else chi
    setup = MonitorSetup(s=s) if setup is None else setup
    lat = state.lattice
    sym = dissipation_symbol_field(model, state.u, lat, setup)
    smoothed = smooth_symbol(sym, chi)
    ref = _reference_multiplier(model, lat, setup)
    mags = lat.xi_mags()
    chi0 = chi(np.zeros_like(mags), mags)
    corr_mult = ref * (1.0 - chi0)[:, None, None]
    rng = np.random.default_rng(seed)
    n2 = 2 * model.n
    voln = lat.L_box**lat.d / lat.points
    floor = np.inf
    for _ in range(count):
        vals = rng.normal(size=(lat.points, n2)) + 1j * rng.normal(size=(lat.points, n2))
        W = GridFunction(lat, vals)
        opw = apply_op(smoothed, W)
        num = float(np.real(np.sum(np.conj(vals) * opw.values)) * voln)
        what = lat.fft(vals)
        num += float(
            np.real(np.sum(np.conj(what) * np.einsum("qab,qb->qa", corr_mult, what)))
            * lat.L_box**lat.d
        )
        den = float(np.sum(np.abs(vals) ** 2) * voln)
        floor = min(floor, num / den)
    return floor


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    lattice: Lattice = field(default_factory=lambda: Lattice(d=1, N=128))
    dt: Optional[float] = None
    t_final: float = 10.0
    snapshots: int = 41
    cfl_factor: float = 0.9
    s_values: tuple = (2.0,)
    norm_ceiling_factor: float = 10.0
    monitor: bool = False
    monitor_s: float = 2.0


@dataclass
class EnergyTrace:
    times: np.ndarray
    norms_u: dict
    norms_ut: dict
    w_norm: np.ndarray
    dissipation_integral: np.ndarray
    energy: Optional[np.ndarray] = None
    final_state: Optional[FieldState] = None

    def write_csv(self, path):
        import csv
        import os

        tmp = str(path) + ".tmp"
        ss = sorted(self.norms_u)
        with open(tmp, "w", newline="") as f:
            w = csv.writer(f)
            hdr = ["t"]
            for s in ss:
                hdr += [f"norm_H{s + 1:g}_u", f"norm_H{s:g}_ut"]
            hdr += ["w_norm", "dissipation_integral"]
            if self.energy is not None:
                hdr.append("energy_functional")
            w.writerow(hdr)
            for k in range(len(self.times)):
                row = [self.times[k]]
                for s in ss:
                    row += [self.norms_u[s][k], self.norms_ut[s][k]]
                row += [self.w_norm[k], self.dissipation_integral[k]]
                if self.energy is not None:
                    row.append(self.energy[k])
                w.writerow([format(float(v), ".17g") for v in row])
        os.replace(tmp, path)


def run(model, data_spec, config=SimConfig()):
    """Integrate to t_final recording Sobolev norms and the energy functional.

    Raises BlowUp when the primary combined norm exceeds the configured
    multiple of its initial value, DomainExit when the state leaves the
    model's box, CFLViolation for an unstable step size.
    """
    from .paradiff import make_cutoff

    model = ensure_normalized(model)
    lat = config.lattice
    state = initial_state(model, data_spec, lat)
    dt_max = max_stable_dt(model, lat, config.cfl_factor)
    dt = dt_max if config.dt is None else config.dt
    if dt > dt_max:
        raise CFLViolation(f"configured dt = {dt:g} exceeds bound {dt_max:g}")

    snap_times = np.linspace(0.0, config.t_final, config.snapshots)
    chi = make_cutoff(0.2, 0.5)
    setup = MonitorSetup(s=config.monitor_s)

    norms_u = {s: np.zeros(config.snapshots) for s in config.s_values}
    norms_ut = {s: np.zeros(config.snapshots) for s in config.s_values}
    wn = np.zeros(config.snapshots)
    diss = np.zeros(config.snapshots)
    energy = np.zeros(config.snapshots) if config.monitor else None

    def record(k, st):
        for s in config.s_values:
            nu, nut = state_norms(model, st, s)
            norms_u[s][k] = nu
            norms_ut[s][k] = nut
        what = w_hat(model, st, config.monitor_s)
        wn[k] = np.sqrt(np.sum(np.abs(what) ** 2) * lat.L_box**lat.d)
        if k > 0:
            dtk = snap_times[k] - snap_times[k - 1]
            diss[k] = diss[k - 1] + 0.5 * dtk * (wn[k] ** 2 + wn[k - 1] ** 2)
        if config.monitor:
            energy[k] = _g_form_value(model, st, config.monitor_s, chi, setup)

    record(0, state)
    ceiling = config.norm_ceiling_factor * max(wn[0], 1e-300)
    for k in range(1, config.snapshots):
        t_target = snap_times[k]
        while state.time < t_target - 1e-12:
            step = min(dt, t_target - state.time)
            state = step_rk4(model, state, step, dt_max)
        record(k, state)
        if wn[k] > ceiling:
            raise BlowUp(
                f"W-norm {wn[k]:.3e} exceeded ceiling {ceiling:.3e} at t={state.time:g}"
            )
    return EnergyTrace(
        times=snap_times,
        norms_u=norms_u,
        norms_ut=norms_ut,
        w_norm=wn,
        dissipation_integral=diss,
        energy=energy,
        final_state=state,
    )
