"""Stage-parameter schedules and their admissibility conditions.

A schedule lists, per stage q, the window length tau_q, shell radius N_q,
shell cardinality kappa_q, and friction scale eps_q. Two modes exist:

* desk mode: small shells that a simulation can actually advance, with
  kappa taken from the real lattice count and eps_q = kappa_q^-2 4^-q;
* paper mode: tau_q = 4^-q, N_q = tau_q^-10, kappa_q = N_q^3 and
  eps_q = 2^(-4^q) kappa_q^-36 N_q^-72, which are astronomically large and
  exist only to be checked symbolically (never simulated).

All admissibility conditions are evaluated in base-2 log arithmetic on exact
rational quantities, so paper-mode magnitudes (log2 eps ~ -10^4) cause no
overflow and reported margins are exact up to float rounding of the log.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .lattice import shell_wavevectors


def log2_int(n: int) -> float:
    """log2 of a positive integer of arbitrary size."""
    if n <= 0:
        raise ValueError("log2 of non-positive integer")
    bits = n.bit_length()
    if bits <= 512:
        return math.log2(n)
    shift = bits - 64
    return math.log2(n >> shift) + shift


def log2_fraction(x) -> float:
    x = Fraction(x)
    return log2_int(x.numerator) - log2_int(x.denominator)


def log2_sum(a, b) -> float:
    """log2(a + b) from log2 a and log2 b without forming huge numbers."""
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log2(1.0 + 2.0 ** (lo - hi))


@dataclass
class Stage:
    q: int
    tau: Fraction
    n_shell: int
    kappa: int
    eps: Fraction

    @property
    def log2_tau(self) -> float:
        return log2_fraction(self.tau)

    @property
    def log2_n(self) -> float:
        return log2_int(self.n_shell)

    @property
    def log2_kappa(self) -> float:
        return log2_int(self.kappa)

    @property
    def log2_eps(self) -> float:
        return log2_fraction(self.eps)


@dataclass
class ParameterSchedule:
    mode: str                 # "desk" | "paper"
    beta: float
    delta: float
    stages: list[Stage]
    nu_list: list[float]
    dim: int | None = None    # desk mode only

    def __post_init__(self):
        if self.mode not in ("desk", "paper"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        taus = [s.tau for s in self.stages]
        if taus[0] != 1:
            raise ValueError("tau_0 must equal 1")
        for a, b in zip(taus, taus[1:]):
            if not b < a:
                raise ValueError("tau must decrease strictly")
            if a - 2 * b < a / 2:  # window separation used by the decay argument
                raise ValueError(f"tau separation violated: {a} -> {b}")

    def stage(self, q: int) -> Stage:
        return self.stages[q]

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def window(self, q: int) -> tuple[Fraction, Fraction]:
        """Simulated time window of stage q: (1 - tau_q, 1 - tau_{q+1}]."""
        start = 1 - self.stages[q].tau
        if q + 1 < len(self.stages):
            end = 1 - self.stages[q + 1].tau
        else:
            end = 1 - self.stages[q].tau / 4
        return Fraction(start), Fraction(end)

    def diagnostics_window(self, q: int) -> tuple[Fraction, Fraction]:
        """Window [1 - tau_q/2, 1 - tau_{q+1}] holding the low-mode supremum."""
        start = 1 - self.stages[q].tau / 2
        _, end = self.window(q)
        return Fraction(start), end


def desk_schedule(n_stages: int, dim: int = 2, n0: int = 1,
                  nu_list=(1e-2, 1e-3, 1e-4), beta: float = 12 / 5,
                  delta: float = 4 / 5) -> ParameterSchedule:
    """Simulatable schedule: tau_q = 4^-q, N_q = n0 2^q, kappa from the lattice."""
    stages = []
    for q in range(n_stages):
        n_shell = n0 * 2**q
        kappa = shell_wavevectors(n_shell, dim).shape[0]
        stages.append(Stage(
            q=q,
            tau=Fraction(1, 4**q),
            n_shell=n_shell,
            kappa=kappa,
            eps=Fraction(1, kappa**2 * 4**q),
        ))
    return ParameterSchedule(mode="desk", beta=beta, delta=delta,
                             stages=stages, nu_list=list(nu_list), dim=dim)


def paper_schedule(q_max: int, nu_list=(0.5,), beta: float = 12 / 5,
                   delta: float = 4 / 5) -> ParameterSchedule:
    """The paper-mode schedule, exact (kappa uses the N^3 shell scaling)."""
    stages = []
    for q in range(q_max + 1):
        n_shell = 4 ** (10 * q)
        kappa = n_shell**3
        eps = Fraction(1, 2 ** (4**q) * kappa**36 * n_shell**72)
        stages.append(Stage(q=q, tau=Fraction(1, 4**q), n_shell=n_shell,
                            kappa=kappa, eps=eps))
    return ParameterSchedule(mode="paper", beta=beta, delta=delta,
                             stages=stages, nu_list=list(nu_list))


# ---------------------------------------------------------------------------
# admissibility conditions
# ---------------------------------------------------------------------------

CONDITION_NAMES = (
    "shell_vs_semigroup",   # kappa^(2e) N^(-2 delta) <~ (nu+kappa)^(delta-1)
    "window_vs_rate",       # (nu+kappa)^(1+delta) tau^2 >~ 1
    "friction_chain",       # eps_{q-1}^-1 kappa_{q-1}^(1/2) <~ eps_q^(-1/2)
    "remainder_budget_24_72",  # eps kappa^24 N^72 <= 1 (hard inequality)
    "remainder_budget_3_30",   # eps kappa^3 N^30 <= 1 (hard inequality)
)

INFO_CONDITION = "window_vs_delta"  # (nu+kappa)^(-delta) <= tau

#: conditions stated with an implied universal constant get one doubling of
#: slack; the remainder budgets are literal inequalities and get none
LESSSIM_SLACK = -1.0
HARD_SLACK = -1e-9
_SLACK = {
    "shell_vs_semigroup": LESSSIM_SLACK,
    "window_vs_rate": LESSSIM_SLACK,
    "friction_chain": LESSSIM_SLACK,
    INFO_CONDITION: LESSSIM_SLACK,
    "remainder_budget_24_72": HARD_SLACK,
    "remainder_budget_3_30": HARD_SLACK,
}


@dataclass
class ConditionResult:
    q: int
    nu: float | None
    name: str
    log2_margin: float   # log2(allowed / actual); >= 0 means the condition holds
    passed: bool


@dataclass
class ValidationReport:
    schedule_mode: str
    q_max: int
    eps_hat: float
    results: list[ConditionResult] = field(default_factory=list)

    def passed(self, names=CONDITION_NAMES) -> bool:
        return all(r.passed for r in self.results if r.name in names)

    def failing(self) -> list[ConditionResult]:
        return [r for r in self.results if not r.passed and r.name in CONDITION_NAMES]

    def rows(self):
        return [
            {"q": r.q, "nu": r.nu, "condition": r.name,
             "log2_margin": r.log2_margin, "pass": r.passed}
            for r in self.results
        ]

    def to_json(self) -> str:
        return json.dumps({
            "schedule_mode": self.schedule_mode,
            "q_max": self.q_max,
            "eps_hat": self.eps_hat,
            "all_pass": self.passed(),
            "rows": self.rows(),
        }, sort_keys=True, indent=1)


def validate_schedule(schedule: ParameterSchedule, q_max: int,
                      eps_hat: float = 0.01) -> ValidationReport:
    """Evaluate every admissibility condition for q <= q_max and each nu.

    eps_hat is the small Sobolev exponent of the semigroup estimate. Margins
    are reported in doublings (log2 of allowed/actual); conditions carrying
    an implied universal constant pass down to one doubling of deficit, the
    literal remainder budgets pass only at margin >= 0.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if q_max >= schedule.n_stages:
        raise ValueError(f"schedule has {schedule.n_stages} stages, cannot check q={q_max}")
    delta = schedule.delta
    report = ValidationReport(schedule_mode=schedule.mode, q_max=q_max, eps_hat=eps_hat)

    def add(q, nu, name, margin):
        report.results.append(ConditionResult(q, nu, name, margin,
                                              margin >= _SLACK[name]))

    for q in range(q_max + 1):
        st = schedule.stage(q)
        lk, ln, lt, le = st.log2_kappa, st.log2_n, st.log2_tau, st.log2_eps
        for nu in schedule.nu_list:
            l_nuk = log2_sum(math.log2(nu), lk)
            add(q, nu, "shell_vs_semigroup",
                (delta - 1.0) * l_nuk - (2 * eps_hat * lk - 2 * delta * ln))
            add(q, nu, "window_vs_rate", (1.0 + delta) * l_nuk + 2 * lt)
            add(q, nu, INFO_CONDITION, lt + delta * l_nuk)
        if q >= 1:
            prev = schedule.stage(q - 1)
            lhs = -prev.log2_eps + 0.5 * prev.log2_kappa
            add(q, None, "friction_chain", -0.5 * le - lhs)
        add(q, None, "remainder_budget_24_72", -(le + 24 * lk + 72 * ln))
        add(q, None, "remainder_budget_3_30", -(le + 3 * lk + 30 * ln))
    return report
