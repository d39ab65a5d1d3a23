"""Closed-form problem constants, Lipschitz bounds and sample-size estimates."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

INT64_MAX = 2**63 - 1

USER, HEURISTIC, CLOSED_FORM = "user", "heuristic", "closed-form"


def friedrichs_constant(d):
    """``1 / (pi sqrt(d))`` for the unit cube, from the first Dirichlet eigenvalue."""
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")
    return 1.0 / (math.pi * math.sqrt(d))


def embedding_constant_p4(friedrichs, d=2):
    """Upper bound for the ``H^1_0 -> L^4`` constant via Ladyzhenskaya's inequality."""
    if d != 2:
        raise ValueError("the Ladyzhenskaya bound is only used for d=2")
    return 2.0**0.25 * math.sqrt(friedrichs)


def kappa_min_case_study():
    """Infimum of the left-half diffusion branch; the right half is at least 3/2."""
    k = np.arange(1, 26, dtype=float)
    return math.exp(-2.5 * float(np.sum(1.0 / k**2)))


@dataclass(frozen=True)
class ProblemConstants:
    """Scalar inputs of the Lipschitz and sample-size formulas.

    ``provenance`` maps field names to ``user``, ``heuristic`` or
    ``closed-form``; unlisted fields count as ``user``.
    """

    kappa_min: float
    b_max: float
    g_max: float
    r_ad: float
    c_q: float
    d_q: float
    p: float
    friedrichs: float
    c_p: float
    domain_measure: float = 1.0
    yd_norm: float = 1.0
    alpha: float = 1e-3
    d: int = 2
    rho: float = 1.0
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("kappa_min", "b_max", "g_max", "r_ad", "friedrichs", "c_p", "domain_measure", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("c_q", "d_q", "yd_norm", "rho"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if not (self.p > 3 and (self.d == 2 or self.p <= 6)):
            raise ValueError(f"p={self.p} outside the admissible range for d={self.d}")

    def origin(self, name):
        return self.provenance.get(name, USER)

    @property
    def heuristic(self):
        return any(v == HEURISTIC for v in self.provenance.values())

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def D_scripted(self):
        return compact_radius(self)[0]

    @property
    def R_scripted(self):
        return compact_radius(self)[1]

    @property
    def tau(self):
        return tau_scripted(self)


def _kappa(c):
    if not c.kappa_min > 0:
        raise ValueError("kappa_min must be positive")
    return c.kappa_min


def lipschitz_grad(c):
    """Lipschitz constant of the per-sample gradient on the feasible set."""
    k, C, g, b, r = _kappa(c), c.friedrichs, c.g_max, c.b_max, c.r_ad
    growth = b / k + 3.0 * (C / k) * g * r
    q_term = c.c_q * c.domain_measure ** ((c.p - 3.0) / c.p) + c.d_q * c.c_p ** (c.p - 3.0) * growth ** (c.p - 3.0)
    adj = (C**2 / k**2) * b + (C**3 / k**2) * g * r + (C / k) * c.yd_norm
    bracket = (C / k**2) * c.c_p**3 * g * q_term * adj
    return C * g * ((C**3 / k**2) * g + bracket)


def compact_radius(c):
    """``(D, R)``: the constant bounding ``||S u - y_d||`` and the H1 radius numerator."""
    k, C = _kappa(c), c.friedrichs
    D = (C / k) * c.b_max + (C**2 / k) * c.g_max * c.r_ad + c.yd_norm
    R = (C + 1.0) ** 2 * (C / k) * c.g_max * D
    return D, R


def tau_scripted(c):
    k, C = _kappa(c), c.friedrichs
    return 2.0 * (C**2 / k) * c.g_max * compact_radius(c)[0]


def _ceil(x):
    if not math.isfinite(x):
        return None
    r = round(x)
    # absorb round-off when the bound is an integer up to a few ulps
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        x = r
    n = math.ceil(x)
    return n if n <= INT64_MAX else None


def expectation_sample_size(tau, lipschitz, radius, alpha, eps, rho=1.0, d=2):
    """Real-valued sample size guaranteeing ``E ||Phi(v_N)|| <= eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    cover = rho * (4.0 * max(lipschitz, 1.0) * radius / (alpha * eps)) ** d
    return 12.0 * math.log(2.0) * tau**2 / eps**2 * (cover + 1.0)


def tail_sample_size(tau, lipschitz, radius, alpha, eps, delta, rho=1.0, d=2):
    """Real-valued sample size guaranteeing the inclusion with probability ``1 - delta``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    cover = rho * (4.0 * lipschitz * radius / (alpha * eps)) ** d
    return 48.0 * tau**2 / eps**2 * (math.log(2.0) * cover + math.log(2.0 / delta))


def sample_size_expectation(c, eps):
    return _ceil(expectation_sample_size(tau_scripted(c), lipschitz_grad(c), c.R_scripted, c.alpha, eps, c.rho, c.d))


def sample_size_tail(c, eps, delta):
    return _ceil(tail_sample_size(tau_scripted(c), lipschitz_grad(c), c.R_scripted, c.alpha, eps, delta, c.rho, c.d))


def expectation_bound(tau, lipschitz, radius, alpha, N, eps, rho=1.0, d=2):
    """Right-hand side of the expected-criticality bound for one ``eps``."""
    cover = rho * (4.0 * max(lipschitz, 1.0) * radius / (alpha * eps)) ** d
    return eps / (2.0 * alpha) + math.sqrt(3.0) * tau / (alpha * math.sqrt(N)) * math.sqrt(math.log(2.0) * (cover + 1.0))


def expectation_bound_curve(c, N_grid, per_decade=64, decades=8, tau=None, lipschitz=None, radius=None):
    """Per-``N`` minimum over a log grid of ``eps`` centered at ``tau / sqrt(N)``."""
    N_grid = list(N_grid)
    if not N_grid:
        raise ValueError("N_grid must be nonempty")
    tau = tau_scripted(c) if tau is None else tau
    lipschitz = lipschitz_grad(c) if lipschitz is None else lipschitz
    radius = c.R_scripted if radius is None else radius
    out = []
    for N in N_grid:
        center = math.log10(tau / math.sqrt(N))
        eps = np.logspace(center - decades / 2, center + decades / 2, per_decade * decades + 1)
        vals = [expectation_bound(tau, lipschitz, radius, c.alpha, N, e, c.rho, c.d) for e in eps]
        out.append(float(np.min(vals)))
    return out


@dataclass
class PlanResult:
    eps: float
    delta: float
    N_expectation: int | None
    N_tail: int | None
    N_expectation_real: float
    N_tail_real: float
    lipschitz: float
    D_scripted: float
    R_scripted: float
    tau: float
    provenance: str
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def rows(self):
        def fmt_n(n, real):
            return str(n) if n is not None else f"astronomical ({real:.6g})"

        return [
            ("eps", repr(self.eps)),
            ("delta", repr(self.delta)),
            ("L_grad", repr(self.lipschitz)),
            ("D_scripted", repr(self.D_scripted)),
            ("R_scripted", repr(self.R_scripted)),
            ("tau", repr(self.tau)),
            ("N_expectation", fmt_n(self.N_expectation, self.N_expectation_real)),
            ("N_tail", fmt_n(self.N_tail, self.N_tail_real)),
            ("provenance", self.provenance),
        ]


def plan(c, eps, delta):
    """Evaluate every constant and both sample sizes for ``(eps, delta)``."""
    L = lipschitz_grad(c)
    D, R = compact_radius(c)
    tau = tau_scripted(c)
    n_exp = expectation_sample_size(tau, L, R, c.alpha, eps, c.rho, c.d)
    n_tail = tail_sample_size(tau, L, R, c.alpha, eps, delta, c.rho, c.d)
    notes = []
    if c.origin("rho") != USER:
        notes.append("rho (covering constant) has no known value; results scale with the assumed rho")
    if c.heuristic:
        notes.append("heuristic inputs: " + ", ".join(sorted(k for k, v in c.provenance.items() if v == HEURISTIC)))
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return PlanResult(
        eps=eps,
        delta=delta,
        N_expectation=_ceil(n_exp),
        N_tail=_ceil(n_tail),
        N_expectation_real=n_exp,
        N_tail_real=n_tail,
        lipschitz=L,
        D_scripted=D,
        R_scripted=R,
        tau=tau,
        provenance=HEURISTIC if c.heuristic else "bound",
        notes=notes,
    )


def case_study_constants(alpha=1e-3, rho=1.0, maxima=None, **overrides):
    """Constants of the random-field case study.

    ``b_max`` and ``g_max`` come from grid maximization (see
    :func:`saapde.fields.field_maxima`) and are tagged heuristic.
    """
    from .fields import field_maxima

    if maxima is None:
        maxima = field_maxima()
    C = friedrichs_constant(2)
    prov = {
        "kappa_min": CLOSED_FORM,
        "friedrichs": CLOSED_FORM,
        "c_p": CLOSED_FORM,
        "r_ad": CLOSED_FORM,
        "c_q": CLOSED_FORM,
        "d_q": CLOSED_FORM,
        "p": CLOSED_FORM,
        "domain_measure": CLOSED_FORM,
        "yd_norm": CLOSED_FORM,
        "b_max": HEURISTIC,
        "g_max": HEURISTIC,
        "rho": HEURISTIC,
        "alpha": USER,
    }
    base = dict(
        kappa_min=kappa_min_case_study(),
        # ||b||_{H^-1} <= C_D ||b||_{L^2} <= C_D sup |b|
        b_max=C * maxima["b_sup"],
        # C^{0,1} norm taken as sup |g| + Lipschitz modulus
        g_max=maxima["g_sup"] + maxima["g_lip"],
        r_ad=10.0,
        c_q=0.0,
        d_q=6.0,
        p=4.0,
        friedrichs=C,
        c_p=embedding_constant_p4(C),
        domain_measure=1.0,
        yd_norm=1.0,
        alpha=alpha,
        d=2,
        rho=rho,
    )
    for k in overrides:
        prov[k] = USER
    base.update(overrides)
    return ProblemConstants(**base, provenance=prov)


_FLOAT_FIELDS = {f.name for f in fields(ProblemConstants)} - {"provenance", "d"}


def read_constants(path):
    """Parse a ``key = value`` file into :class:`ProblemConstants`.

    Missing keys fall back to the case-study defaults.  A value followed by
    ``# heuristic`` is tagged as such.
    """
    values, prov = {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line, _, comment = raw.partition("#")
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key == "d":
                values[key] = int(val)
            elif key in _FLOAT_FIELDS:
                values[key] = float(val)
            else:
                raise ValueError(f"{path}:{lineno}: unknown constant {key!r}")
            prov[key] = HEURISTIC if "heuristic" in comment else USER
    c = case_study_constants(**values)
    merged = dict(c.provenance)
    merged.update(prov)
    return replace(c, provenance=merged)
