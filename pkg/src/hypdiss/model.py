"""Coefficient-matrix families for second-order systems of the form

    sum_j A^j(u) u_{x_j} = sum_{j,k} (B^{jk}(u) u_{x_j})_{x_k},   x_0 = t,

with built-in damped-wave models and a barotropic relativistic viscous
fluid frozen at its rest state.

A model is a pair of evaluators ``A(j, u)`` and ``B(j, k, u)`` returning real
n x n matrices (index 0 is time), together with the reference state, a box
state domain, and an optional quadratic remainder ``Q(u, du)``.  Evaluators
must be deterministic; built-ins return copies of precomputed arrays.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import InvalidParameter, NotFluidModel, SingularB00
from .grids import check_unit

#: Number of low-discrepancy state samples used by domain-wide checks.
STATE_SAMPLES = 256

#: Condition-number ceiling for -B^{00}(u) during normalization.
B00_COND_CEILING = 1e8


@dataclass(frozen=True)
class FluidParameters:
    """Parameters of the barotropic relativistic viscous fluid.

    r is the equation-of-state parameter (p = rho / r), mu and nu are frame
    parameters, eta and zeta shear and bulk viscosities.  The standing
    constraint is mu > eta_tilde = (4/3) eta + zeta.
    """

    r: float
    mu: float
    nu: float
    eta: float
    zeta: float = 0.0
    allow_boundary: bool = False

    def __post_init__(self):
        if not self.r >= 1.0:
            raise InvalidParameter(f"need r >= 1, got {self.r}")
        if self.mu <= 0 or self.nu <= 0 or self.eta <= 0:
            raise InvalidParameter("mu, nu, eta must be positive")
        if self.zeta < 0:
            raise InvalidParameter("zeta must be nonnegative")
        if self.allow_boundary:
            if self.mu < self.eta_tilde:
                raise InvalidParameter("need mu >= eta_tilde with allow_boundary")
        elif not self.mu > self.eta_tilde:
            raise InvalidParameter(
                f"need mu > eta_tilde = (4/3)*eta + zeta = {self.eta_tilde}"
            )

    @property
    def eta_tilde(self):
        return 4.0 * self.eta / 3.0 + self.zeta


@dataclass(frozen=True)
class CoefficientModel:
    """Matrix families A^j(u), B^{jk}(u) with state metadata.

    Fields
    ------
    n, d : state and space dimensions
    state_domain : (lo, hi) arrays bounding the admissible states
    reference_state : the homogeneous state the analysis linearizes at
    A : evaluator (j, u) -> n x n array, j = 0..d
    B : evaluator (j, k, u) -> n x n array, j, k = 0..d
    Q : optional evaluator (u, du) -> n-vector quadratic remainder, with du
        the (d+1, n) array of time and space derivatives; None means zero
    constant_coefficients : evaluators ignore u (enables fast paths)
    is_fluid : carries the longitudinal/transverse decomposition structure
    """

    n: int
    d: int
    reference_state: np.ndarray
    state_domain: tuple
    A: Callable[[int, np.ndarray], np.ndarray]
    B: Callable[[int, int, np.ndarray], np.ndarray]
    Q: Optional[Callable] = None
    label: str = "model"
    constant_coefficients: bool = False
    is_fluid: bool = False
    fluid_params: Optional[FluidParameters] = None
    normalized: bool = False

    def quadratic_remainder(self, u, du):
        if self.Q is None:
            return np.zeros(self.n)
        return np.asarray(self.Q(u, du), dtype=float)

    def state_samples(self, count=STATE_SAMPLES):
        """Deterministic low-discrepancy sample of the state domain."""
        lo, hi = self.state_domain
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if self.constant_coefficients:
            return self.reference_state[None, :].copy()
        pts = qmc.Halton(d=self.n, scramble=False).random(count)
        return lo[None, :] + pts * (hi - lo)[None, :]


def _const(mat):
    mat = np.asarray(mat, dtype=float)

    def ev(u, _m=mat):
        return _m.copy()

    return ev


def _constant_model(n, d, A0, Aj, B, label, ref=None, **kw):
    """Build a constant-coefficient model from explicit matrix tables.

    Aj is a list of d matrices (space part); B a dict keyed by (j, k) over
    0..d with missing blocks zero.
    """
    ref = np.zeros(n) if ref is None else np.asarray(ref, float)
    Amats = [np.asarray(A0, float)] + [np.asarray(a, float) for a in Aj]
    Bmats = {}
    for j in range(d + 1):
        for k in range(d + 1):
            Bmats[(j, k)] = np.asarray(B.get((j, k), np.zeros((n, n))), float)

    def A_eval(j, u, _A=Amats):
        return _A[j].copy()

    def B_eval(j, k, u, _B=Bmats):
        return _B[(j, k)].copy()

    return CoefficientModel(
        n=n,
        d=d,
        reference_state=ref,
        state_domain=(ref - 1.0, ref + 1.0),
        A=A_eval,
        B=B_eval,
        label=label,
        constant_coefficients=True,
        **kw,
    )


def builtin_damped_wave(a, d=1):
    """Scalar damped wave u_tt + a u_t = Laplace(u), a > 0."""
    if a <= 0:
        raise InvalidParameter(f"damping coefficient must be positive, got {a}")
    B = {(0, 0): [[-1.0]]}
    for j in range(1, d + 1):
        B[(j, j)] = [[1.0]]
    return _constant_model(
        1, d, [[a]], [[[0.0]]] * d, B, label=f"damped-wave(a={a},d={d})",
        normalized=True,
    )


def builtin_convected_damped_wave(a_conv):
    """Damped wave with convection, u_tt + u_t + a u_x = u_xx (d=1).

    Satisfies the low-frequency dissipativity condition (D1) exactly when
    |a_conv| < 1 (sub-characteristic condition).
    """
    B = {(0, 0): [[-1.0]], (1, 1): [[1.0]]}
    return _constant_model(
        1, 1, [[1.0]], [[[float(a_conv)]]], B,
        label=f"convected-damped-wave(a={a_conv})", normalized=True,
    )


def builtin_barotropic_fluid(p: FluidParameters):
    """Barotropic relativistic viscous fluid frozen at the rest state.

    n=4, d=3 constant-coefficient model in psi = (four-velocity)/temperature
    with A^0 = diag(r, I_3), antisymmetric-free couplings through B^{0j} and
    the shear/bulk structure in B^{ij}.
    """
    n, d = 4, 3
    r, mu, nu, eta, zeta = p.r, p.mu, p.nu, p.eta, p.zeta
    eye3 = np.eye(3)

    A0 = np.zeros((4, 4))
    A0[0, 0] = r
    A0[1:, 1:] = eye3

    Aj = []
    for j in range(3):
        m = np.zeros((4, 4))
        m[0, 1 + j] = 1.0
        m[1 + j, 0] = 1.0
        Aj.append(m)

    B = {}
    B00 = np.zeros((4, 4))
    B00[0, 0] = -(r**2) * mu
    B00[1:, 1:] = -nu * eye3
    B[(0, 0)] = B00

    for j in range(3):
        m = np.zeros((4, 4))
        m[0, 1 + j] = -(mu * r + nu) / 2.0
        m[1 + j, 0] = -(mu * r + nu) / 2.0
        B[(0, j + 1)] = m
        B[(j + 1, 0)] = m

    coef = -mu + eta / 3.0 + zeta
    for i in range(3):
        for j in range(3):
            m = np.zeros((4, 4))
            if i == j:
                m[0, 0] = -nu
                m[1:, 1:] += eta * eye3
            sym = np.outer(eye3[i], eye3[j]) + np.outer(eye3[j], eye3[i])
            m[1:, 1:] += 0.5 * coef * sym
            B[(i + 1, j + 1)] = m

    ref = np.array([1.0, 0.0, 0.0, 0.0])  # rest frame at unit temperature
    return _constant_model(
        n, d, A0, Aj, B,
        label=f"fluid(r={r},mu={mu},nu={nu},eta={eta},zeta={zeta})",
        ref=ref, is_fluid=True, fluid_params=p,
    )


def normalize_b00(model, samples=STATE_SAMPLES, cond_ceiling=B00_COND_CEILING):
    """Left-multiply all coefficients by (-B^{00}(u))^{-1} so B^{00} = -I.

    The transformed system has the same solutions and the same dispersion
    roots at every (u, xi).  Raises SingularB00 when -B^{00}(u) is singular
    or worse conditioned than cond_ceiling at any sampled state.
    """
    us = model.state_samples(samples)
    ident = np.eye(model.n)
    already = True
    for u in us:
        b00 = model.B(0, 0, u)
        if not np.all(np.isfinite(b00)):
            raise SingularB00("B^{00} evaluated to non-finite entries")
        c = np.linalg.cond(-b00)
        if not np.isfinite(c) or c > cond_ceiling:
            raise SingularB00(
                f"-B^(00) condition number {c:.3e} exceeds ceiling at u={u}"
            )
        if not np.allclose(b00, -ident, rtol=0.0, atol=1e-14):
            already = False
    if already and model.normalized:
        return model
    if already:
        return replace(model, normalized=True)

    if model.constant_coefficients:
        u0 = model.reference_state
        inv = np.linalg.inv(-np.asarray(model.B(0, 0, u0), float))
        Aj = [inv @ model.A(j, u0) for j in range(model.d + 1)]
        Bm = {
            (j, k): inv @ model.B(j, k, u0)
            for j in range(model.d + 1)
            for k in range(model.d + 1)
        }
        norm = _constant_model(
            model.n, model.d, Aj[0], Aj[1:], Bm,
            label=model.label + "|b00-normalized", ref=u0,
            is_fluid=model.is_fluid, fluid_params=model.fluid_params,
            normalized=True,
        )
        return replace(norm, state_domain=model.state_domain)

    A_old, B_old, Q_old = model.A, model.B, model.Q

    def inv_factor(u):
        return np.linalg.inv(-np.asarray(B_old(0, 0, u), float))

    def A_new(j, u):
        return inv_factor(u) @ np.asarray(A_old(j, u), float)

    def B_new(j, k, u):
        return inv_factor(u) @ np.asarray(B_old(j, k, u), float)

    Q_new = None
    if Q_old is not None:
        def Q_new(u, du):
            return inv_factor(u) @ np.asarray(Q_old(u, du), float)

    return replace(
        model, A=A_new, B=B_new, Q=Q_new, normalized=True,
        label=model.label + "|b00-normalized",
    )


def ensure_normalized(model):
    """Return a model with B^{00} = -I, normalizing if necessary."""
    if model.normalized:
        return model
    return normalize_b00(model)


@dataclass(frozen=True)
class FluidBlocks:
    """Longitudinal and transverse 2x2 reductions of the fluid symbols.

    longitudinal/transverse map the five families "A0", "A", "B00", "B", "C"
    to 2x2 arrays; basis_l and basis_t hold the orthonormal embedding
    vectors as columns of 4x2 arrays.
    """

    longitudinal: dict
    transverse: dict
    basis_l: np.ndarray
    basis_t: np.ndarray

    def reassemble(self, key):
        Fl, Ft = self.basis_l, self.basis_t
        return (
            Fl @ self.longitudinal[key] @ Fl.conj().T
            + Ft @ self.transverse[key] @ Ft.conj().T
        )


def _transverse_pair(omega):
    # deterministic orthonormal completion of omega in R^3
    k = int(np.argmin(np.abs(omega)))
    t1 = np.zeros(3)
    t1[k] = 1.0
    t1 -= np.dot(t1, omega) * omega
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(omega, t1)
    return t1, t2


def fluid_block_decomposition(model, omega):
    """Split the fluid's directional symbols along C^4 = (C x wC) + ({0} x w^perp).

    Returns FluidBlocks whose longitudinal part carries the sound/frame
    dynamics and whose transverse part is a pair of damped wave equations
    (A0_t = I, A_t = 0, B00_t = -nu I, B_t = eta I, C_t = 0).
    """
    if not model.is_fluid:
        raise NotFluidModel(f"model {model.label!r} has no fluid block structure")
    om = check_unit(omega)
    u = model.reference_state
    from .symbols import assemble_directional

    A_dir, B_dir, C_dir = assemble_directional(model, u, om)
    A0 = model.A(0, u)
    B00 = model.B(0, 0, u)

    f1 = np.zeros(4)
    f1[0] = 1.0
    f2 = np.concatenate([[0.0], om])
    t1, t2 = _transverse_pair(om)
    Fl = np.stack([f1, f2], axis=1)
    Ft = np.stack([np.concatenate([[0.0], t1]), np.concatenate([[0.0], t2])], axis=1)

    full = {"A0": A0, "A": A_dir, "B00": B00, "B": B_dir, "C": C_dir}
    longitudinal = {k: Fl.T @ v @ Fl for k, v in full.items()}
    transverse = {k: Ft.T @ v @ Ft for k, v in full.items()}
    return FluidBlocks(longitudinal, transverse, Fl, Ft)


# ---------------------------------------------------------------------------
# JSON model documents
# ---------------------------------------------------------------------------

_BUILTINS = {
    "damped-wave": lambda p: builtin_damped_wave(p["a"], int(p.get("d", 1))),
    "convected-damped-wave": lambda p: builtin_convected_damped_wave(p["a"]),
    "fluid": lambda p: builtin_barotropic_fluid(
        FluidParameters(
            r=p["r"], mu=p["mu"], nu=p["nu"], eta=p["eta"], zeta=p.get("zeta", 0.0)
        )
    ),
}


def _poly_entry(spec, n):
    """An entry is a number or a list of monomials [coeff, e_1, ..., e_n]."""
    if isinstance(spec, (int, float)):
        return None, float(spec)
    terms = []
    for mono in spec:
        if len(mono) != n + 1:
            raise InvalidParameter(
                f"monomial needs 1 + n = {n + 1} numbers, got {len(mono)}"
            )
        terms.append((float(mono[0]), np.array(mono[1:], dtype=int)))

    def ev(u, _t=terms):
        return sum(c * np.prod(u**e) for c, e in _t)

    return ev, None


def _matrix_table(doc, n):
    """Parse {"j" or "j,k": [[entry ...] ...]} into an evaluator."""
    table = {}
    state_dependent = False
    for key, rows in doc.items():
        idx = tuple(int(s) for s in str(key).split(","))
        const = np.zeros((n, n))
        funcs = {}
        for r in range(n):
            for c in range(n):
                ev, val = _poly_entry(rows[r][c], n)
                if ev is None:
                    const[r, c] = val
                else:
                    funcs[(r, c)] = ev
                    state_dependent = True
        table[idx] = (const, funcs)

    def evaluate(idx, u):
        if idx not in table:
            return np.zeros((n, n))
        const, funcs = table[idx]
        m = const.copy()
        for (r, c), ev in funcs.items():
            m[r, c] += ev(u)
        return m

    return evaluate, state_dependent


def model_from_dict(doc):
    """Build a model from a JSON document.

    Either {"builtin": {"name": ..., "params": {...}}} or explicit dense
    matrices {"n": ..., "d": ..., "reference_state": [...], "A": {...},
    "B": {...}} with entries that are numbers or monomial lists
    [coeff, e_1, ..., e_n] in the state components.
    """
    if "builtin" in doc:
        b = doc["builtin"]
        name = b["name"]
        if name not in _BUILTINS:
            raise InvalidParameter(
                f"unknown builtin {name!r}; known: {sorted(_BUILTINS)}"
            )
        return _BUILTINS[name](b.get("params", {}))

    try:
        n, d = int(doc["n"]), int(doc["d"])
    except KeyError as e:
        raise InvalidParameter(f"model document missing key {e}") from e
    ref = np.array(doc.get("reference_state", np.zeros(n)), dtype=float)
    if ref.shape != (n,):
        raise InvalidParameter("reference_state must have length n")
    A_eval, a_dep = _matrix_table(doc.get("A", {}), n)
    B_eval, b_dep = _matrix_table(doc.get("B", {}), n)
    lo = np.array(doc.get("domain_lo", ref - 1.0), dtype=float)
    hi = np.array(doc.get("domain_hi", ref + 1.0), dtype=float)
    return CoefficientModel(
        n=n,
        d=d,
        reference_state=ref,
        state_domain=(lo, hi),
        A=lambda j, u: A_eval((j,), u),
        B=lambda j, k, u: B_eval((j, k), u),
        label=doc.get("label", "json-model"),
        constant_coefficients=not (a_dep or b_dep),
    )


def load_model(path):
    """Load a model from a JSON file."""
    with open(path) as f:
        return model_from_dict(json.load(f))
