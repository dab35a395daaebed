"""Numerical checkers for the hyperbolicity and dissipativity conditions.

Six conditions are certified on sampled grids:

* HA: A^0(u) admits a positive symmetric symmetrizer, and
  (A^0)^{-1} A(u, omega) has real semi-simple spectrum with constant
  multiplicities (constant hyperbolicity of the first-order part).
* HB: i calB(u, omega) has real semi-simple spectrum with constant
  multiplicities (constant hyperbolicity of the second-order part).
* D1: low-frequency eigenspace dissipativity, the quadratic form of
  W1 = H (A^0)^{-1}(-B + (A^0)^{-1}A (A^0)^{-1}A + C (A^0)^{-1}A)
  restricted to eigenspaces of W0 = (A^0)^{-1}A is uniformly negative.
* D2: high-frequency eigenspace dissipativity, the form of calH calA
  restricted to eigenspaces of calB is uniformly negative.
* D3: strict spectral stability, all dispersion roots have Re < 0 for
  xi != 0.
* UNIFORM: all Fourier modes decay at least like exp(-c rho(xi) t) with
  rho(xi) = |xi|^2 / (1 + |xi|^2); certified both through the spectral
  abscissa and through a per-frequency Lyapunov equation.

Margins follow one convention: pass <=> margin < -floor at every grid
point.  For the definiteness conditions (D1, D2) the margin is the largest
eigenvalue of the tested quadratic form; for D3 the largest real part; for
structural conditions (HA, HB) a dimensionless violation score (imaginary
mass + defectiveness + multiplicity jumps, minus the structural tolerance).
"""

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    ClusterAmbiguity,
    GridEmpty,
    InvalidParameter,
    LyapunovSolveFailure,
    NotDissipativeAtPoint,
    NotSymmetrizable,
    PrerequisiteMissing,
)
from .grids import radial_loggrid, unit_directions
from .model import ensure_normalized
from .symbols import (
    assemble_calA,
    assemble_calB,
    assemble_directional,
    assemble_M,
    dispersion_roots,
)


@dataclass(frozen=True)
class CheckConfig:
    """Tolerances and grid resolutions shared by all checkers."""

    strictness_floor: float = 1e-10
    cluster_tolerance: float = 1e-7
    structural_tol: float = 1e-8
    xi_lo: float = 1e-3
    xi_hi: float = 1e3
    xi_count: int = 49
    directions_2d: int = 64
    state_samples: int = 256
    cond_ceiling: float = 1e8
    cbar_digits: int = 3
    dissipation_threshold: float = 1.0
    trend_xi_min: float = 10.0
    trend_xi_max_low: float = 1e-2


def rho_profile(xi_mag):
    """Uniform decay-rate profile rho(xi) = |xi|^2 / (1 + |xi|^2)."""
    x2 = np.asarray(xi_mag, dtype=float) ** 2
    return x2 / (1.0 + x2)


# ---------------------------------------------------------------------------
# Eigenstructure and symmetrizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenCluster:
    value: complex
    values: np.ndarray
    multiplicity: int
    projection: np.ndarray
    basis: np.ndarray
    semi_simple: bool


@dataclass(frozen=True)
class EigenStructure:
    clusters: tuple
    cluster_tolerance: float
    spectral_radius: float

    @property
    def multiplicities(self):
        return tuple(c.multiplicity for c in self.clusters)

    def multiplicity_multiset(self):
        return tuple(sorted(self.multiplicities))

    def all_semi_simple(self):
        return all(c.semi_simple for c in self.clusters)

    def max_imag(self):
        return max(float(np.max(np.abs(c.values.imag))) for c in self.clusters)


def _cluster_eigenvalues(lam, thr):
    # connected components of the graph with edges |li - lj| <= thr
    m = len(lam)
    order = np.lexsort((lam.imag, lam.real))
    lam_s = lam[order]
    dist = np.abs(lam_s[:, None] - lam_s[None, :])
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if dist[i, j] <= thr:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    clusters = [np.array(g, dtype=int) for g in groups.values()]
    # inter-cluster separation guard
    for a in range(len(clusters)):
        for b in range(a + 1, len(clusters)):
            gap = dist[np.ix_(clusters[a], clusters[b])].min()
            if gap < 10.0 * thr:
                raise ClusterAmbiguity(
                    f"clusters separated by {gap:.3e} < 10 x tolerance "
                    f"{thr:.3e}; refine cluster_tolerance"
                )
    means = [lam_s[g].mean() for g in clusters]
    key = np.lexsort((np.imag(means), np.real(means)))
    return [lam_s[clusters[k]] for k in key]


def eigstructure(matrix, cluster_tolerance=1e-7):
    """Cluster the spectrum and compute per-cluster spectral projections.

    Eigenvalues closer than cluster_tolerance * (1 + spectral radius) are
    merged; projections come from reordered Schur factorizations, so they
    are reliable also for defective clusters.  Semi-simplicity is decided
    by the numerical kernel dimension of (K - lambda I).
    """
    K = np.asarray(matrix, dtype=complex)
    m = K.shape[0]
    lam = np.linalg.eigvals(K)
    radius = float(np.max(np.abs(lam))) if m else 0.0
    thr = cluster_tolerance * (1.0 + radius)
    groups = _cluster_eigenvalues(lam, thr)

    clusters = []
    for vals in groups:
        mult = len(vals)
        center = complex(vals.mean())
        if mult == m:
            proj = np.eye(m, dtype=complex)
            basis = np.eye(m, dtype=complex)
        else:
            def select(x, _c=center, _t=thr):
                return bool(abs(x - _c) <= max(5.0 * _t, 1e-300))

            T, Z, sdim = sla.schur(K, output="complex", sort=select)
            if sdim != mult:
                raise ClusterAmbiguity(
                    f"Schur reordering selected {sdim} eigenvalues for a "
                    f"cluster of size {mult}"
                )
            T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
            R = sla.solve_sylvester(T11, -T22, T12)
            P_t = np.zeros((m, m), dtype=complex)
            P_t[:sdim, :sdim] = np.eye(sdim)
            P_t[:sdim, sdim:] = R
            proj = Z @ P_t @ Z.conj().T
            basis = Z[:, :sdim]
        # geometric multiplicity from the numerical rank of K - center*I
        sv = np.linalg.svd(K - center * np.eye(m), compute_uv=False)
        geo = int(np.sum(sv <= thr))
        clusters.append(
            EigenCluster(
                value=center,
                values=vals,
                multiplicity=mult,
                projection=proj,
                basis=basis,
                semi_simple=(geo == mult),
            )
        )
    return EigenStructure(tuple(clusters), cluster_tolerance, radius)


@dataclass(frozen=True)
class Symmetrizer:
    """Hermitian positive-definite S with S K hermitian."""

    S: np.ndarray
    lower_bound: float
    structure: EigenStructure


def build_symmetrizer(K, cluster_tolerance=1e-7, structural_tol=1e-8):
    """Construct S = (V^{-1})^* V^{-1} from an eigenbasis V of K.

    Requires a real semi-simple spectrum.  The returned S satisfies
    S = S^* >= c I with c = lambda_min(S) > 0 reported, and
    ||S K - (S K)^*|| <= 1e-8 ||S|| ||K||.
    """
    K = np.asarray(matrix_as_complex(K))
    m = K.shape[0]
    es = eigstructure(K, cluster_tolerance)
    scale = 1.0 + es.spectral_radius
    if es.max_imag() > structural_tol * scale:
        raise NotSymmetrizable(
            f"spectrum not real: max |Im| = {es.max_imag():.3e}"
        )
    if not es.all_semi_simple():
        raise NotSymmetrizable("spectrum defective beyond tolerance")

    blocks = []
    for c in es.clusters:
        Q = c.basis
        if c.multiplicity == 1:
            blocks.append(Q)
            continue
        Mc = Q.conj().T @ K @ Q
        w, Vc = np.linalg.eig(Mc)
        Vc = Vc / np.linalg.norm(Vc, axis=0, keepdims=True)
        blocks.append(Q @ Vc)
    V = np.concatenate(blocks, axis=1)
    Vinv = np.linalg.inv(V)
    S = Vinv.conj().T @ Vinv
    S = 0.5 * (S + S.conj().T)
    herm_defect = np.linalg.norm(S @ K - (S @ K).conj().T, 2)
    bound = 1e-8 * np.linalg.norm(S, 2) * max(np.linalg.norm(K, 2), 1e-300)
    if herm_defect > bound:
        raise NotSymmetrizable(
            f"symmetrizer residual {herm_defect:.3e} exceeds contract {bound:.3e}"
        )
    return Symmetrizer(S=S, lower_bound=float(np.min(np.linalg.eigvalsh(S))), structure=es)


def matrix_as_complex(a):
    return np.asarray(a, dtype=complex)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ConditionReport:
    """Verdict, worst margin, and the witness grid point of one condition."""

    condition: str
    verdict: str
    margin: float
    witness: dict
    grid_spec: str
    c_bar: Optional[float] = None
    trace: Optional[dict] = None
    per_point: list = field(default_factory=list)

    def to_json_dict(self):
        d = {
            "condition": self.condition,
            "verdict": self.verdict,
            "margin": self.margin,
            "c_bar": self.c_bar,
            "witness": self.witness,
            "grid_spec": self.grid_spec,
        }
        if self.trace is not None:
            d["trace"] = self.trace
        return d

    def write_json(self, path):
        write_json_atomic(path, self.to_json_dict())

    def write_margins_csv(self, path):
        write_csv_atomic(path, ["xi", "omega_index", "margin"], self.per_point)


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json_atomic(path, payload):
    import os

    text = json.dumps(_jsonify(payload), indent=2, sort_keys=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        f.write(text + "\n")
    os.replace(tmp, path)


def write_csv_atomic(path, header, rows):
    import os

    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else format(v, ".17g") if isinstance(v, float) else v for v in row])
    os.replace(tmp, path)


def _verdict(margin, floor):
    if margin < -floor:
        return "pass"
    if margin > floor:
        return "fail"
    return "marginal"


# ---------------------------------------------------------------------------
# HA / HB
# ---------------------------------------------------------------------------

@dataclass
class StructuralCache:
    """Per-direction symmetrizers and eigenstructures built at the reference state."""

    report: ConditionReport
    omegas: np.ndarray
    by_omega: dict


def _structural_score(es, ref_multiset, scale, structural_tol):
    s = es.max_imag() / scale
    if not es.all_semi_simple():
        s += 1.0
    if ref_multiset is not None and es.multiplicity_multiset() != ref_multiset:
        s += 1.0
    return s - structural_tol


def _omega_grid(model, omega_grid, config):
    if omega_grid is None:
        omega_grid, _ = unit_directions(model.d, config.directions_2d)
    omega_grid = np.atleast_2d(np.asarray(omega_grid, dtype=float))
    if omega_grid.size == 0:
        raise GridEmpty("empty direction grid")
    return omega_grid


def check_ha(model, state_samples=None, omega_grid=None, config=CheckConfig()):
    """Hyperbolicity of the first-order part.

    (a) A^0(u) is diagonalizable with positive real spectrum at every
    sampled state; (b) (A^0)^{-1} A(u, omega) has real semi-simple spectrum
    with multiplicities constant over the grid.  The symmetrizer of W0 at
    the reference state is cached per direction for the D1 checker.
    """
    model = ensure_normalized(model)
    omegas = _omega_grid(model, omega_grid, config)
    us = model.state_samples(config.state_samples) if state_samples is None else np.atleast_2d(state_samples)
    if us.size == 0:
        raise GridEmpty("empty state sample set")

    worst = -np.inf
    witness = {}
    per_point = []
    trace = {"part_a": [], "multiplicities": None}

    # part (a)
    for u in us:
        A0 = np.asarray(model.A(0, u), dtype=float)
        try:
            sym = build_symmetrizer(A0, config.cluster_tolerance, config.structural_tol)
            h = 0.5 * (sym.S @ A0 + (sym.S @ A0).conj().T)
            mg = -float(np.min(np.linalg.eigvalsh(h))) / max(np.linalg.norm(h, 2), 1e-300)
        except NotSymmetrizable:
            es = eigstructure(A0, config.cluster_tolerance)
            mg = _structural_score(es, None, 1.0 + es.spectral_radius, 0.0)
            mg = max(mg, config.structural_tol * 2)
        trace["part_a"].append(mg)
        if mg > worst:
            worst, witness = mg, {"u": u.tolist(), "omega": None, "xi": None, "part": "a"}

    # part (b)
    ref_multiset = None
    by_omega = {}
    ubar = model.reference_state
    for i, om in enumerate(omegas):
        for u in us:
            A0 = np.asarray(model.A(0, u), dtype=float)
            A_dir, _, _ = assemble_directional(model, u, om)
            W0 = np.linalg.solve(A0, A_dir)
            es = eigstructure(W0, config.cluster_tolerance)
            if ref_multiset is None:
                ref_multiset = es.multiplicity_multiset()
                trace["multiplicities"] = list(ref_multiset)
            scale = 1.0 + es.spectral_radius
            mg = _structural_score(es, ref_multiset, scale, config.structural_tol)
            per_point.append((None, i, mg))
            if mg > worst:
                worst, witness = mg, {"u": u.tolist(), "omega": om.tolist(), "xi": None, "part": "b"}
        A0b = np.asarray(model.A(0, ubar), dtype=float)
        A_dirb, _, _ = assemble_directional(model, ubar, om)
        W0b = np.linalg.solve(A0b, A_dirb)
        try:
            by_omega[i] = build_symmetrizer(W0b, config.cluster_tolerance, config.structural_tol)
        except NotSymmetrizable:
            by_omega[i] = None

    report = ConditionReport(
        condition="HA",
        verdict=_verdict(worst, config.strictness_floor),
        margin=float(worst),
        witness=witness,
        grid_spec=f"{len(us)} states x {len(omegas)} directions",
        trace=trace,
        per_point=per_point,
    )
    return StructuralCache(report=report, omegas=omegas, by_omega=by_omega)


def check_hb(model, state_samples=None, omega_grid=None, config=CheckConfig()):
    """Hyperbolicity of the second-order part: i calB(u, omega) is real
    semi-simple with constant multiplicities; symmetrizers cached per
    direction at the reference state for D2 and the dissipation symbol."""
    model = ensure_normalized(model)
    omegas = _omega_grid(model, omega_grid, config)
    us = model.state_samples(config.state_samples) if state_samples is None else np.atleast_2d(state_samples)
    if us.size == 0:
        raise GridEmpty("empty state sample set")

    worst = -np.inf
    witness = {}
    per_point = []
    ref_multiset = None
    by_omega = {}
    trace = {"multiplicities": None, "degenerate": False}

    for i, om in enumerate(omegas):
        for u in us:
            iB = 1j * assemble_calB(model, u, om)
            es = eigstructure(iB, config.cluster_tolerance)
            if ref_multiset is None:
                ref_multiset = es.multiplicity_multiset()
                trace["multiplicities"] = list(ref_multiset)
            scale = 1.0 + es.spectral_radius
            mg = _structural_score(es, ref_multiset, scale, config.structural_tol)
            if not es.all_semi_simple():
                trace["degenerate"] = True
            per_point.append((None, i, mg))
            if mg > worst:
                worst, witness = mg, {"u": u.tolist(), "omega": om.tolist(), "xi": None}
        iBb = 1j * assemble_calB(model, model.reference_state, om)
        try:
            by_omega[i] = build_symmetrizer(iBb, config.cluster_tolerance, config.structural_tol)
        except NotSymmetrizable:
            by_omega[i] = None

    report = ConditionReport(
        condition="HB",
        verdict=_verdict(worst, config.strictness_floor),
        margin=float(worst),
        witness=witness,
        grid_spec=f"{len(us)} states x {len(omegas)} directions",
        trace=trace,
        per_point=per_point,
    )
    return StructuralCache(report=report, omegas=omegas, by_omega=by_omega)


# ---------------------------------------------------------------------------
# D1 / D2
# ---------------------------------------------------------------------------

def _largest_cbar(F, digits):
    """Largest c with lambda_max(F + c I) <= 0, bisected to `digits` significant digits."""
    lmax = float(np.max(np.linalg.eigvalsh(F)))
    if lmax >= 0.0:
        return 0.0
    lo, hi = 0.0, -2.0 * lmax
    # bisection against the definiteness predicate
    while hi - lo > 10.0 ** (-digits) * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if np.max(np.linalg.eigvalsh(F + mid * np.eye(F.shape[0]))) <= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def d1_form_margin(model, omega, symmetrizer):
    """Worst eigenvalue of the D1 quadratic form over the eigenspaces of W0."""
    model = ensure_normalized(model)
    u = model.reference_state
    A0 = np.asarray(model.A(0, u), dtype=float)
    A_dir, B_dir, C_dir = assemble_directional(model, u, omega)
    A0inv = np.linalg.inv(A0)
    W0A = A0inv @ A_dir
    Y = A0inv @ (-B_dir + W0A @ W0A + C_dir @ W0A)
    W1 = symmetrizer.S @ Y
    Wsym = W1 + W1.conj().T
    margins = []
    for cl in symmetrizer.structure.clusters:
        J = cl.basis
        F = J.conj().T @ Wsym @ J
        margins.append(float(np.max(np.linalg.eigvalsh(F))))
    return max(margins), Wsym


def check_d1(model, omega_grid=None, ha=None, config=CheckConfig()):
    """Low-frequency eigenspace dissipativity at the reference state."""
    model = ensure_normalized(model)
    if ha is None:
        ha = check_ha(model, omega_grid=omega_grid, config=config)
    if ha.report.verdict != "pass":
        raise PrerequisiteMissing("HA did not pass; no symmetrizer cache for D1")
    omegas = ha.omegas

    worst = -np.inf
    witness = {}
    per_point = []
    cbars = []
    for i, om in enumerate(omegas):
        sym = ha.by_omega.get(i)
        if sym is None:
            raise PrerequisiteMissing(f"no W0 symmetrizer for direction index {i}")
        mg, _ = d1_form_margin(model, om, sym)
        per_point.append((None, i, mg))
        cbars.append(_largest_cbar_from_margin(model, om, sym, config))
        if mg > worst:
            worst, witness = mg, {"u": model.reference_state.tolist(), "omega": om.tolist(), "xi": None}

    c_bar = min(cbars) if cbars else None
    report = ConditionReport(
        condition="D1",
        verdict=_verdict(worst, config.strictness_floor),
        margin=float(worst),
        witness=witness,
        grid_spec=f"{len(omegas)} directions",
        c_bar=c_bar,
        per_point=per_point,
    )
    return report


def _largest_cbar_from_margin(model, om, sym, config):
    model = ensure_normalized(model)
    u = model.reference_state
    A0 = np.asarray(model.A(0, u), dtype=float)
    A_dir, B_dir, C_dir = assemble_directional(model, u, om)
    A0inv = np.linalg.inv(A0)
    W0A = A0inv @ A_dir
    Y = A0inv @ (-B_dir + W0A @ W0A + C_dir @ W0A)
    W1 = sym.S @ Y
    Wsym = W1 + W1.conj().T
    cs = []
    for cl in sym.structure.clusters:
        J = cl.basis
        F = J.conj().T @ Wsym @ J
        cs.append(_largest_cbar(F, config.cbar_digits))
    return min(cs)


def d2_form_margin(model, omega, symmetrizer):
    """Worst eigenvalue of the D2 quadratic form over the eigenspaces of calB."""
    model = ensure_normalized(model)
    u = model.reference_state
    calA = assemble_calA(model, u, omega)
    W1 = symmetrizer.S @ calA
    Wsym = W1 + W1.conj().T
    margins = []
    for cl in symmetrizer.structure.clusters:
        J = cl.basis
        F = J.conj().T @ Wsym @ J
        margins.append(float(np.max(np.linalg.eigvalsh(F))))
    return max(margins), Wsym


def check_d2(model, omega_grid=None, hb=None, config=CheckConfig()):
    """High-frequency eigenspace dissipativity at the reference state."""
    model = ensure_normalized(model)
    if hb is None:
        hb = check_hb(model, omega_grid=omega_grid, config=config)
    if hb.report.verdict != "pass":
        raise PrerequisiteMissing("HB did not pass; no symmetrizer cache for D2")
    omegas = hb.omegas

    worst = -np.inf
    witness = {}
    per_point = []
    cbars = []
    for i, om in enumerate(omegas):
        sym = hb.by_omega.get(i)
        if sym is None:
            raise PrerequisiteMissing(f"no calB symmetrizer for direction index {i}")
        mg, Wsym = d2_form_margin(model, om, sym)
        per_point.append((None, i, mg))
        cs = []
        for cl in sym.structure.clusters:
            F = cl.basis.conj().T @ Wsym @ cl.basis
            cs.append(_largest_cbar(F, config.cbar_digits))
        cbars.append(min(cs))
        if mg > worst:
            worst, witness = mg, {"u": model.reference_state.tolist(), "omega": om.tolist(), "xi": None}

    report = ConditionReport(
        condition="D2",
        verdict=_verdict(worst, config.strictness_floor),
        margin=float(worst),
        witness=witness,
        grid_spec=f"{len(omegas)} directions",
        c_bar=min(cbars) if cbars else None,
        per_point=per_point,
    )
    return report


# ---------------------------------------------------------------------------
# D3 and uniform dissipativity
# ---------------------------------------------------------------------------

def check_d3(model, omega_grid=None, xi_loggrid=None, config=CheckConfig()):
    """Strict spectral stability over a log frequency grid (0 excluded)."""
    model = ensure_normalized(model)
    omegas = _omega_grid(model, omega_grid, config)
    xis = radial_loggrid(config.xi_lo, config.xi_hi, config.xi_count) if xi_loggrid is None else np.asarray(xi_loggrid, float)
    if np.any(xis <= 0):
        raise InvalidParameter("xi grid must exclude 0")
    ubar = model.reference_state

    worst = -np.inf
    witness = {}
    per_point = []
    for i, om in enumerate(omegas):
        for x in xis:
            mg = dispersion_roots(model, ubar, x * om).max_real_part
            per_point.append((float(x), i, mg))
            if mg > worst:
                worst, witness = mg, {"u": ubar.tolist(), "omega": om.tolist(), "xi": float(x)}

    return ConditionReport(
        condition="D3",
        verdict=_verdict(worst, config.strictness_floor),
        margin=float(worst),
        witness=witness,
        grid_spec=f"xi in [{config.xi_lo:g}, {config.xi_hi:g}] x {len(xis)} log points, {len(omegas)} directions",
        per_point=per_point,
    )


def lyapunov_certificate(M, rho):
    """Solve P M + M^* P = -rho I for hermitian P; returns (P, cond)."""
    n2 = M.shape[0]
    try:
        P = sla.solve_lyapunov(M.conj().T, -rho * np.eye(n2, dtype=complex))
    except Exception as e:  # scipy raises LinAlgError or ValueError
        raise LyapunovSolveFailure(f"Lyapunov solve failed: {e}") from e
    P = 0.5 * (P + P.conj().T)
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0.0 or not np.all(np.isfinite(w)):
        raise LyapunovSolveFailure(
            f"Lyapunov solution not positive definite (lambda_min = {w[0]:.3e})"
        )
    return P, float(w[-1] / w[0])


def _linkage_groups(lam, theta):
    # single-linkage groups, merged until inter-group gaps are >= 3*theta
    idx = np.lexsort((lam.imag, lam.real))
    lam = lam[idx]
    groups = [[0]]
    order = np.argsort(lam.real**2 + lam.imag**2, kind="stable")
    # single linkage on sorted-by-modulus chain is not sufficient in C; use
    # full pairwise linkage
    m = len(lam)
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    thr = theta
    while True:
        for i in range(m):
            parent[i] = i
        for i in range(m):
            for j in range(i + 1, m):
                if abs(lam[i] - lam[j]) <= thr:
                    parent[find(i)] = find(j)
        comp = {}
        for i in range(m):
            comp.setdefault(find(i), []).append(i)
        groups = list(comp.values())
        ok = True
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                gap = min(
                    abs(lam[i] - lam[j]) for i in groups[a] for j in groups[b]
                )
                if gap < 3.0 * thr:
                    ok = False
        if ok or len(groups) == 1:
            break
        thr *= 2.0
    out = [lam[np.array(g, dtype=int)] for g in groups]
    centers = [g.mean() for g in out]
    key = np.lexsort((np.imag(centers), np.real(centers)))
    return [out[k] for k in key]


def _lyap_unit(M, rho):
    P = sla.solve_lyapunov(M.conj().T, -rho * np.eye(M.shape[0], dtype=complex))
    P = 0.5 * (P + P.conj().T)
    top = float(np.max(np.linalg.eigvalsh(P)))
    if not np.isfinite(top) or top <= 0.0:
        raise LyapunovSolveFailure("Lyapunov block solve degenerate")
    return P / top


#: A direct per-point Lyapunov solve is accepted when its conditioning is
#: below this value; otherwise the spectrum is split at its gaps.
BALANCE_COND_TARGET = 200.0


def _balanced_adaptive(M, rho):
    P = _lyap_unit(M, rho)
    w = np.linalg.eigvalsh(P)
    if w[0] > 0.0 and w[-1] / w[0] <= BALANCE_COND_TARGET:
        return P
    lam = np.linalg.eigvals(M)
    theta = 3.0 * float(np.min(-lam.real))
    groups = _linkage_groups(lam, theta)
    if len(groups) == 1:
        return P
    g = groups[0]
    rest = np.concatenate(groups[1:])

    def sel(x, _g=g, _r=rest):
        return bool(np.min(np.abs(x - _g)) < np.min(np.abs(x - _r)))

    T, Z, sdim = sla.schur(M, output="complex", sort=sel)
    if sdim != len(g):
        # grouping not realizable in this factorization; keep the direct solve
        return P
    T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
    # V = Z [[I, R], [0, I]] block-diagonalizes M: T11 R - R T22 = -T12
    R = sla.solve_sylvester(T11, -T22, -T12)
    W = np.eye(M.shape[0], dtype=complex)
    W[:sdim, sdim:] = R
    V = Z @ W
    P1 = _balanced_adaptive(T11, rho)
    P2 = _balanced_adaptive(T22, rho)
    Vinv = np.linalg.inv(V)
    Pb = Vinv.conj().T @ sla.block_diag(P1, P2) @ Vinv
    return 0.5 * (Pb + Pb.conj().T)


def balanced_lyapunov_certificate(M, rho):
    """Spectral-gap-balanced decay certificate with bounded conditioning.

    The plain solution of P M + M^* P = -rho I has lambda_min(P) ~ rho as
    xi -> 0 (the zero-frequency symbol is singular), so its condition number
    grows like 1/rho for every model.  When the direct solve is badly
    conditioned, the spectrum is split at its gaps, one Lyapunov equation is
    solved per group, and each block is rescaled to unit norm; the result is
    an equally valid decay certificate P M + M^* P <= -c rho P whose
    conditioning stays bounded uniformly in xi exactly when the mode decay
    is uniform.  Returns (P, cond).
    """
    lam = np.linalg.eigvals(M)
    if np.max(lam.real) >= 0.0:
        raise LyapunovSolveFailure(
            f"spectral abscissa {np.max(lam.real):.3e} >= 0"
        )
    try:
        P = _balanced_adaptive(M, rho)
    except Exception as e:
        raise LyapunovSolveFailure(f"balanced certificate failed: {e}") from e
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0.0 or not np.all(np.isfinite(w)):
        raise LyapunovSolveFailure(
            f"balanced certificate not positive definite (lambda_min = {w[0]:.3e})"
        )
    return P, float(w[-1] / w[0])


def check_uniform_dissipativity(model, omega_grid=None, xi_loggrid=None, config=CheckConfig()):
    """Certify uniform Fourier-mode decay -c rho(xi) at the reference state.

    Per grid point: (i) abscissa certificate c_abs = inf -alpha(xi)/rho(xi)
    with alpha the spectral abscissa of M(0, xi); (ii) Lyapunov certificate
    P M + M^* P = -rho(xi) I with P positive definite and uniformly bounded
    condition number.  Pass iff c_abs > 0 and sup cond(P) stays below the
    configured ceiling.
    """
    model = ensure_normalized(model)
    omegas = _omega_grid(model, omega_grid, config)
    xis = radial_loggrid(config.xi_lo, config.xi_hi, config.xi_count) if xi_loggrid is None else np.asarray(xi_loggrid, float)
    if np.any(xis <= 0):
        raise InvalidParameter("xi grid must exclude 0 (rho(0) = 0)")
    ubar = model.reference_state

    c_abs = np.inf
    cond_max = 0.0
    worst = -np.inf
    witness = {}
    per_point = []
    conds = np.zeros((len(xis), len(omegas)))
    conds_raw = np.zeros((len(xis), len(omegas)))
    for i, om in enumerate(omegas):
        for k, x in enumerate(xis):
            M = assemble_M(model, ubar, x * om)
            alpha = float(np.max(np.linalg.eigvals(M).real))
            r = float(rho_profile(x))
            if alpha >= 0.0:
                raise LyapunovSolveFailure(
                    f"spectral abscissa {alpha:.3e} >= 0 at xi={x:g}, omega index {i}"
                )
            c_pt = -alpha / r
            c_abs = min(c_abs, c_pt)
            _, cond_raw = lyapunov_certificate(M, r)
            _, cond = balanced_lyapunov_certificate(M, r)
            conds[k, i] = cond
            conds_raw[k, i] = cond_raw
            cond_max = max(cond_max, cond)
            mg = -c_pt
            per_point.append((float(x), i, mg))
            if mg > worst:
                worst, witness = mg, {"u": ubar.tolist(), "omega": om.tolist(), "xi": float(x)}

    cond_by_xi = conds.max(axis=1)
    slope = float(np.polyfit(np.log(xis), np.log(cond_by_xi), 1)[0])
    tail = xis >= config.trend_xi_min
    tail_slope = (
        float(np.polyfit(np.log(xis[tail]), np.log(cond_by_xi[tail]), 1)[0])
        if np.sum(tail) >= 3
        else slope
    )
    head = xis <= config.trend_xi_max_low
    head_slope = (
        float(np.polyfit(np.log(xis[head]), np.log(cond_by_xi[head]), 1)[0])
        if np.sum(head) >= 3
        else slope
    )
    ok_cond = cond_max <= config.cond_ceiling
    margin = float(worst) if ok_cond else float(cond_max / config.cond_ceiling)
    return ConditionReport(
        condition="UNIFORM",
        verdict=_verdict(margin, config.strictness_floor),
        margin=margin,
        witness=witness,
        grid_spec=f"xi in [{config.xi_lo:g}, {config.xi_hi:g}] x {len(xis)} log points, {len(omegas)} directions",
        c_bar=float(c_abs),
        trace={
            "c_abs": float(c_abs),
            "cond_max": float(cond_max),
            "cond_loglog_slope": slope,
            "cond_tail_slope": tail_slope,
            "cond_head_slope": head_slope,
            "cond_by_xi": cond_by_xi.tolist(),
            "cond_raw_by_xi": conds_raw.max(axis=1).tolist(),
            "xi_grid": xis.tolist(),
        },
        per_point=per_point,
    )


# ---------------------------------------------------------------------------
# Dissipation symbol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationSymbol:
    """Hermitian D with D >= c_inf I and D M + (D M)^* = -I <= -c_inf I."""

    D: np.ndarray
    c_inf: float
    xi_vec: np.ndarray
    residual: float


def build_dissipation_symbol(model, u, xi_vec, config=CheckConfig()):
    """Lyapunov-canonical dissipation symbol at a single high frequency.

    Solves D M + M^* D = -I; D is hermitian positive definite whenever the
    spectral abscissa of M(u, xi) is negative, and c_inf = min(lambda_min(D), 1)
    makes both defining inequalities hold.
    """
    xi_vec = np.asarray(xi_vec, dtype=float)
    if np.linalg.norm(xi_vec) < config.dissipation_threshold:
        raise InvalidParameter(
            f"|xi| = {np.linalg.norm(xi_vec):g} below dissipation threshold "
            f"{config.dissipation_threshold:g}"
        )
    model = ensure_normalized(model)
    M = assemble_M(model, u, xi_vec)
    alpha = float(np.max(np.linalg.eigvals(M).real))
    if alpha >= 0.0:
        raise NotDissipativeAtPoint(f"spectral abscissa {alpha:.3e} >= 0 at xi={xi_vec}")
    try:
        D = sla.solve_lyapunov(M.conj().T, -np.eye(M.shape[0], dtype=complex))
    except Exception as e:
        raise NotDissipativeAtPoint(f"Lyapunov solve failed: {e}") from e
    D = 0.5 * (D + D.conj().T)
    w = np.linalg.eigvalsh(D)
    if w[0] <= 0.0:
        raise NotDissipativeAtPoint(f"dissipation symbol not positive definite at xi={xi_vec}")
    residual = float(np.linalg.norm(D @ M + M.conj().T @ D + np.eye(M.shape[0]), 2))
    c_inf = float(min(w[0], 1.0))
    return DissipationSymbol(D=D, c_inf=c_inf, xi_vec=xi_vec, residual=residual)


def dissipation_derivative_bounds(model, u, xi_vec, config=CheckConfig(), rel_step=1e-5):
    """Finite-difference boundedness measurements for the dissipation symbol.

    Returns the max over coordinate directions of ||d D/d xi_j|| * <xi> and
    ||d D/d u_k|| (first-order derivatives scaled per symbol-class order).
    """
    from .symbols import xi_bracket

    xi_vec = np.asarray(xi_vec, dtype=float)
    br = xi_bracket(xi_vec)
    h_xi = rel_step * br
    d_xi = 0.0
    for j in range(model.d):
        e = np.zeros(model.d)
        e[j] = h_xi
        Dp = build_dissipation_symbol(model, u, xi_vec + e, config).D
        Dm = build_dissipation_symbol(model, u, xi_vec - e, config).D
        d_xi = max(d_xi, np.linalg.norm((Dp - Dm) / (2 * h_xi), 2) * br)
    d_u = 0.0
    h_u = rel_step
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h_u
        Dp = build_dissipation_symbol(model, u + e, xi_vec, config).D
        Dm = build_dissipation_symbol(model, u - e, xi_vec, config).D
        d_u = max(d_u, np.linalg.norm((Dp - Dm) / (2 * h_u), 2))
    return {"dxi_scaled": float(d_xi), "du": float(d_u)}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

CONDITION_ORDER = ("HA", "HB", "D1", "D2", "D3", "UNIFORM")


def run_all_checks(model, config=CheckConfig(), omega_grid=None):
    """Run all six checkers in dependency order; returns {condition: report}.

    Conditions whose prerequisites failed are reported as 'fail' with a
    'prerequisite_missing' trace reason rather than raising.
    """
    model = ensure_normalized(model)
    reports = {}
    ha = check_ha(model, omega_grid=omega_grid, config=config)
    reports["HA"] = ha.report
    hb = check_hb(model, omega_grid=omega_grid, config=config)
    reports["HB"] = hb.report

    def skipped(name, why):
        return ConditionReport(
            condition=name, verdict="fail", margin=1.0,
            witness={}, grid_spec="", trace={"reason": why},
        )

    if ha.report.verdict == "pass":
        reports["D1"] = check_d1(model, ha=ha, config=config)
    else:
        reports["D1"] = skipped("D1", "prerequisite_missing:HA")
    if hb.report.verdict == "pass":
        reports["D2"] = check_d2(model, hb=hb, config=config)
    else:
        reports["D2"] = skipped("D2", "prerequisite_missing:HB")
    reports["D3"] = check_d3(model, omega_grid=omega_grid, config=config)
    if reports["D3"].verdict == "pass":
        try:
            reports["UNIFORM"] = check_uniform_dissipativity(
                model, omega_grid=omega_grid, config=config
            )
        except LyapunovSolveFailure as e:
            reports["UNIFORM"] = skipped("UNIFORM", f"lyapunov_failure:{e}")
    else:
        reports["UNIFORM"] = skipped("UNIFORM", "prerequisite_missing:D3")
    return reports
