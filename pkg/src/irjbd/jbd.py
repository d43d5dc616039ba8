"""The joint bidiagonalization process with full reorthogonalization.

One process run maintains three orthonormal bases — left vectors U for the
A side, left vectors Uhat for the L side, and projected right vectors
Vprime living in range([A; L]) — together with small projected factors
B (lower bidiagonal against U) and Bbar (upper bidiagonal against Uhat,
sign-adjusted so that B.T B + Bbar.T Bbar = I).  Each expansion step costs
one inner least-squares solve with [A; L].

The state also carries the pending right vector ``vp_next`` plus its
coupling coefficients into the two left bases.  For a plain run those
couplings are single trailing scalars (alpha_{k+1} and the signed trailing
superdiagonal), but they are stored as full vectors so that restarted
states — whose projected factors need not stay strictly bidiagonal — expand
through exactly the same code path.

Every right vector is realized as [A; L] applied to an explicitly
maintained preimage.  The literal three-term recurrence would divide
accumulated out-of-range rounding noise by alpha at each step, which can
compound across restarts until the basis leaves range([A; L]) entirely;
running the recurrence on preimages and applying the operator once per step
pins the basis to the range at the cost of one extra pair of matvecs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bidiag import LowerBidiagonal, UpperBidiagonal
from .stackedls import LsqrConfig, lsqr_solve, project_onto_range

__all__ = ["JbdState", "BreakdownError", "StateDefects", "jbd_init", "jbd_expand", "verify_state"]

_EPS = float(np.finfo(np.float64).eps)


class BreakdownError(RuntimeError):
    """A normalization coefficient fell below the breakdown threshold."""

    def __init__(self, coefficient, index, value):
        self.coefficient = coefficient
        self.index = index
        self.value = value
        super().__init__(
            f"joint bidiagonalization breakdown: {coefficient}_{index} = {value:.3e}"
        )


def _reorth_tracked(vec, basis, seed_coefficients):
    """CGS2 that also returns the total projection coefficients.

    ``seed_coefficients`` is the recurrence-predicted column, subtracted
    first; the per-pass corrections are accumulated on top so the returned
    coefficients are the true projections of the input onto the basis.
    Committing those (instead of the bare prediction) keeps the stored
    factors consistent with the stored vectors, which stops relation errors
    inherited from a restart from compounding through later columns.
    """
    coefficients = seed_coefficients.copy()
    vec = vec - basis @ seed_coefficients
    if basis.shape[1]:
        for _ in range(2):
            extra = basis.T @ vec
            vec = vec - basis @ extra
            coefficients += extra
    return vec, coefficients


class JbdState:
    """State of a k-step joint bidiagonalization run.

    Bases are preallocated to ``capacity`` columns and exposed as views.
    ``n_left`` equals k+1 except after a left-side lucky breakdown, where the
    run closes with a square projected factor and ``n_left == k``.
    """

    def __init__(self, m, p, n, capacity, breakdown_tol):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.m = m
        self.p = p
        self.n = n
        self.capacity = capacity
        self.breakdown_tol = breakdown_tol
        self.k = 0
        self.n_left = 1
        self._U = np.zeros((m, capacity + 1), order="F")
        self._Uhat = np.zeros((p, capacity), order="F")
        self._Vp = np.zeros((m + p, capacity), order="F")
        self._T = np.zeros((n, capacity), order="F")  # preimages of the Vp columns
        self._B = np.zeros((capacity + 1, capacity), order="F")
        self._Bbar = np.zeros((capacity, capacity), order="F")
        self.vp_next = np.zeros(m + p)
        self.t_next = np.zeros(n)
        self.coupling_u = np.zeros(1)
        self.coupling_uhat = np.zeros(0)
        self.exhausted = False
        self.exhaustion = None  # ("left"|"right", index, coefficient) when exhausted
        self.lsqr_iterations = 0
        self.lsqr_failures = 0

    # -- views -------------------------------------------------------------

    @property
    def U(self):
        return self._U[:, : self.n_left]

    @property
    def Uhat(self):
        return self._Uhat[:, : self.k]

    @property
    def Vprime(self):
        return self._Vp[:, : self.k]

    @property
    def preimages(self):
        """Coefficient vectors t with [A; L] t = the matching Vprime column."""
        return self._T[:, : self.k]

    @property
    def Bdense(self):
        """The projected factor against U, shape (n_left, k)."""
        return self._B[: self.n_left, : self.k]

    @property
    def Bbardense(self):
        """The signed projected factor against Uhat, shape (k, k)."""
        return self._Bbar[: self.k, : self.k]

    @property
    def alpha_next(self):
        """Trailing coupling of the pending right vector into U."""
        return float(self.coupling_u[-1]) if len(self.coupling_u) else 0.0

    @property
    def betabar(self):
        """Trailing (signed) coupling of the pending right vector into Uhat."""
        return float(self.coupling_uhat[-1]) if len(self.coupling_uhat) else 0.0

    @property
    def is_canonical(self):
        """True when the pending couplings are single trailing scalars."""
        return (np.all(self.coupling_u[:-1] == 0.0)
                and np.all(self.coupling_uhat[:-1] == 0.0))

    def _pattern_tol(self):
        # committed columns are true projections, so a run carries harmless
        # off-pattern entries at the level of its relation defects
        return 1e-10 * max(1.0, float(np.max(np.abs(self._B[: self.n_left, : self.k]),
                                              initial=0.0)))

    @property
    def B(self):
        """Lower bidiagonal view of the projected factor (canonical states only)."""
        if self.n_left != self.k + 1:
            raise ValueError("projected factor is square after left-side closure")
        return LowerBidiagonal.from_dense(self.Bdense, pattern_tol=self._pattern_tol())

    @property
    def Bbar(self):
        return UpperBidiagonal.from_dense(self.Bbardense, pattern_tol=self._pattern_tol())

    @property
    def Bhat(self):
        """The companion factor with the alternating column signs folded out."""
        signs = _sign_diagonal(self.k)
        return UpperBidiagonal.from_dense(self.Bbardense * signs[None, :],
                                          pattern_tol=self._pattern_tol())

    def sign_diagonal(self):
        return _sign_diagonal(self.k)

    def _blank_like(self, capacity=None):
        return JbdState(self.m, self.p, self.n, capacity or self.capacity,
                        self.breakdown_tol)


def _sign_diagonal(k):
    signs = np.ones(k)
    signs[1::2] = -1.0
    return signs


def jbd_init(op, u1, ls_cfg=None, capacity=None):
    """Seed a joint bidiagonalization run from a unit starting vector.

    Projects (u1; 0) onto range([A; L]) to obtain the first right vector;
    breakdown is raised if the projection or its lower block vanishes (the
    starting vector is orthogonal to the relevant range, or the L side
    contributes nothing).
    """
    ls_cfg = ls_cfg or LsqrConfig()
    u1 = np.asarray(u1, dtype=np.float64)
    if u1.shape != (op.m,):
        raise ValueError(f"u1 must have length {op.m}")
    if abs(np.linalg.norm(u1) - 1.0) > 1e-14:
        raise ValueError("u1 must have unit norm")
    capacity = capacity or max(2, op.n)

    tol = max(op.n * _EPS * op.rnorm_estimate, 32.0 * _EPS)
    state = JbdState(op.m, op.p, op.n, capacity, tol)
    state._U[:, 0] = u1

    proj, outcome = project_onto_range(op, u1, ls_cfg.tol, ls_cfg.resolve_maxit(op.n))
    state.lsqr_iterations += outcome.iterations
    state.lsqr_failures += 0 if outcome.converged else 1

    alpha1 = float(np.linalg.norm(proj))
    if alpha1 < tol:
        raise BreakdownError("alpha", 1, alpha1)
    vp1 = proj / alpha1
    alphahat1 = float(np.linalg.norm(vp1[op.m:]))
    if alphahat1 < tol:
        raise BreakdownError("alphahat", 1, alphahat1)

    state.vp_next = vp1
    state.t_next = outcome.solution / alpha1
    state.coupling_u = np.array([alpha1])
    state.coupling_uhat = np.zeros(0)
    return state


def _expand_one(state, op, ls_cfg):
    """One step: new left vector, new companion left vector, new right vector."""
    k = state.k
    m = state.m
    if state.n_left != k + 1:
        raise ValueError("cannot expand a state closed by left-side breakdown")
    if k + 1 > state.capacity:
        raise ValueError("state capacity exhausted; allocate a larger run")
    U = state._U[:, : k + 1]
    Uhat = state._Uhat[:, :k]
    vp = state.vp_next

    # next left vector from the upper block of the pending right vector
    cand, u_coefficients = _reorth_tracked(vp[:m].copy(), U, state.coupling_u)
    beta = float(np.linalg.norm(cand))
    if beta < state.breakdown_tol:
        _close_left(state)
        return
    u_new = cand / beta

    # companion left vector paired with the pending right vector; the signed
    # diagonal keeps all runs on the alternating-sign convention
    candh, uhat_coefficients = _reorth_tracked(vp[m:].copy(), Uhat, state.coupling_uhat)
    anorm = float(np.linalg.norm(candh))
    if anorm < state.breakdown_tol:
        raise BreakdownError("alphahat", k + 1, anorm)
    abar = anorm if k % 2 == 0 else -anorm
    uhat_new = candh / abar

    # commit column k
    state._Vp[:, k] = vp
    state._T[:, k] = state.t_next
    state._B[: k + 1, k] = u_coefficients
    state._B[k + 1, k] = beta
    state._U[:, k + 1] = u_new
    state._Uhat[:, k] = uhat_new
    state._Bbar[:k, k] = uhat_coefficients
    state._Bbar[k, k] = abar

    # next right vector: three-term recurrence on the preimages, realized
    # through the operator, then reorthogonalized with preimage bookkeeping
    rhs = np.zeros(m + state.p)
    rhs[:m] = u_new
    outcome = lsqr_solve(op, rhs, ls_cfg.tol, ls_cfg.resolve_maxit(op.n))
    state.lsqr_iterations += outcome.iterations
    state.lsqr_failures += 0 if outcome.converged else 1
    t_cand = outcome.solution - beta * state.t_next
    cand2 = op.apply(t_cand)
    Vpk = state._Vp[:, : k + 1]
    Tk = state._T[:, : k + 1]
    for _ in range(2):
        coef = Vpk.T @ cand2
        cand2 = cand2 - Vpk @ coef
        t_cand = t_cand - Tk @ coef
    alpha = float(np.linalg.norm(cand2))

    state.k = k + 1
    state.n_left = k + 2
    if alpha < state.breakdown_tol:
        state.vp_next = np.zeros(m + state.p)
        state.t_next = np.zeros(state.n)
        state.coupling_u = np.zeros(k + 2)
        state.coupling_uhat = np.zeros(k + 1)
        state.exhausted = True
        state.exhaustion = ("right", k + 2, alpha)
        return
    state.vp_next = cand2 / alpha
    state.t_next = t_cand / alpha
    state.coupling_u = np.zeros(k + 2)
    state.coupling_u[-1] = alpha
    # trailing companion coupling via the coupled-recurrence identity
    state.coupling_uhat = np.zeros(k + 1)
    state.coupling_uhat[-1] = -alpha * beta / abar


def _close_left(state):
    """Left-side lucky breakdown: absorb the pending right vector, close square.

    The pending vector is exactly representable in the current left basis, so
    it joins Vprime with no new subdiagonal entry; the projected factor ends
    square and every Ritz value it carries is exact.
    """
    k = state.k
    m = state.m
    vp = state.vp_next
    U = state._U[:, : k + 1]
    Uhat = state._Uhat[:, :k]

    candh, uhat_coefficients = _reorth_tracked(vp[m:].copy(), Uhat, state.coupling_uhat)
    anorm = float(np.linalg.norm(candh))
    if anorm < state.breakdown_tol:
        raise BreakdownError("alphahat", k + 1, anorm)
    abar = anorm if k % 2 == 0 else -anorm

    state._Vp[:, k] = vp
    state._T[:, k] = state.t_next
    state._B[: k + 1, k] = U.T @ vp[:m]
    state._Uhat[:, k] = candh / abar
    state._Bbar[:k, k] = uhat_coefficients
    state._Bbar[k, k] = abar

    state.k = k + 1
    state.n_left = k + 1
    state.vp_next = np.zeros(m + state.p)
    state.t_next = np.zeros(state.n)
    state.coupling_u = np.zeros(k + 1)
    state.coupling_uhat = np.zeros(k + 1)
    state.exhausted = True
    state.exhaustion = ("left", k + 2, 0.0)


def jbd_expand(state, op, to_k, ls_cfg=None):
    """Grow the state to ``to_k`` columns (in place; also returned).

    Stops early, with ``state.exhausted`` set, when either side finds an
    invariant subspace: the corresponding Ritz data is then exact and the
    pending couplings are zero.  A vanishing companion coefficient raises
    ``BreakdownError`` because the coupled recurrence cannot continue
    through it.
    """
    ls_cfg = ls_cfg or LsqrConfig()
    if to_k > state.capacity:
        raise ValueError(f"to_k={to_k} exceeds state capacity {state.capacity}")
    while state.k < to_k and not state.exhausted:
        _expand_one(state, op, ls_cfg)
    return state


@dataclass
class StateDefects:
    """Max-norm defects of the state invariants; never mutates the state."""

    u_orthogonality: float
    uhat_orthogonality: float
    vprime_orthogonality: float
    relation_upper: float
    relation_hat: float
    joint_identity: float
    projection: float | None = None

    def max_defect(self):
        vals = [self.u_orthogonality, self.uhat_orthogonality, self.vprime_orthogonality,
                self.relation_upper, self.relation_hat, self.joint_identity]
        if self.projection is not None:
            vals.append(self.projection)
        return max(vals)


def _orth_defect(basis):
    if basis.shape[1] == 0:
        return 0.0
    gram = basis.T @ basis
    return float(np.max(np.abs(gram - np.eye(basis.shape[1]))))


def verify_state(state, op=None, ls_cfg=None, rng=None):
    """Measure every maintained invariant of a state.

    With ``op`` given, additionally probes the projected recurrence
    QQ^T (U w; 0) = Vprime B^T w + vp_next (coupling . w) on one random unit
    w, which costs a single inner solve.
    """
    k = state.k
    m = state.m
    U = state.U
    Uhat = state.Uhat
    Vp = state.Vprime
    B = state.Bdense
    Bbar = state.Bbardense

    rel_upper = 0.0
    rel_hat = 0.0
    identity = 0.0
    if k:
        rel_upper = float(np.max(np.abs(Vp[:m] - U @ B)))
        rel_hat = float(np.max(np.abs(Vp[m:] - Uhat @ Bbar)))
        identity = float(np.max(np.abs(B.T @ B + Bbar.T @ Bbar - np.eye(k))))

    projection = None
    if op is not None and k:
        rng = rng or np.random.default_rng(0)
        ls_cfg = ls_cfg or LsqrConfig()
        w = rng.standard_normal(state.n_left)
        w /= np.linalg.norm(w)
        uw = U @ w
        proj, _ = project_onto_range(op, uw / np.linalg.norm(uw), ls_cfg.tol,
                                     ls_cfg.resolve_maxit(op.n))
        proj *= np.linalg.norm(uw)
        model = Vp @ (B.T @ w) + state.vp_next * float(state.coupling_u @ w)
        projection = float(np.max(np.abs(proj - model)))

    return StateDefects(
        u_orthogonality=_orth_defect(U),
        uhat_orthogonality=_orth_defect(Uhat),
        vprime_orthogonality=_orth_defect(Vp),
        relation_upper=rel_upper,
        relation_hat=rel_hat,
        joint_identity=identity,
        projection=projection,
    )
