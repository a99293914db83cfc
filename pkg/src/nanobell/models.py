"""Hamiltonians, collapse sets and closed-form states of the parametric oscillator.

Three-mode model (pump a0, signal a1, idler a2) in the drive frame::

    H = DL a0^dag a0 + sum_k Dk ak^dag ak + i kappa (a1^dag a2^dag a0 - a1 a2 a0^dag)
        - i (E a0^dag - E^* a0),          D1 = D2 = (D0 - DL) / 2

Eliminating the strongly damped pump leaves two modes with two-phonon loss
``gamma D[a1 a2]``, a two-mode squeezing drive ``mu`` and a cross-Kerr ``chi``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import fock
from .lindblad import CollapseTerm
from .special import bessel_i0, bessel_ratio_i1_i0

FIG3_DEFAULTS = dict(kappa=0.15, E=0.094, gamma0=1.0, gamma1=0.0, gamma2=0.0,
                     Delta0=0.0, DeltaL=0.0, N1=0.0, N2=0.0)
DEFAULT_DIMS = (12, 12)
DEFAULT_PUMP_DIM = 6


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""


class TruncationError(ValueError):
    """The Fock truncation is too small for the requested state."""


@dataclass(frozen=True)
class ModelSpec:
    kappa: float = FIG3_DEFAULTS["kappa"]
    E: complex = FIG3_DEFAULTS["E"]
    gamma0: float = FIG3_DEFAULTS["gamma0"]
    gamma1: float = 0.0
    gamma2: float = 0.0
    Delta0: float = 0.0
    DeltaL: float = 0.0
    N1: float = 0.0
    N2: float = 0.0
    dims: tuple[int, ...] = DEFAULT_DIMS

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        for name in ("gamma0", "gamma1", "gamma2", "N1", "N2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3) or any(d < 2 for d in dims):
            raise ValueError(f"dims must list 2 or 3 truncations >= 2, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        E = complex(self.E)
        object.__setattr__(self, "E", E.real if E.imag == 0 else E)

    @property
    def elimination_valid(self) -> bool:
        """Whether the pump is damped much faster than signal and idler."""
        return self.gamma0 >= 10 * max(self.gamma1, self.gamma2)

    @property
    def time_unit(self) -> float:
        """gamma0 / kappa^2, the natural time scale of the two-mode dynamics."""
        if self.kappa == 0:
            raise ValueError("the time unit gamma0/kappa^2 needs kappa > 0")
        return self.gamma0 / self.kappa**2

    def with_dims(self, *dims: int) -> "ModelSpec":
        return replace(self, dims=tuple(dims))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        if isinstance(self.E, complex):
            d["E"] = [self.E.real, self.E.imag]
        return d


@dataclass(frozen=True)
class EffectiveParams:
    gamma_2ph: float
    mu: complex
    chi: float
    r: float


def effective_params(spec: ModelSpec) -> EffectiveParams:
    """Rates of the pump-eliminated model.

    ``r = sqrt(2|E|/kappa)`` labels the ideal steady state; it is meaningful
    for real E on resonance (DeltaL = 0).
    """
    denom = complex(spec.gamma0 / 2, spec.DeltaL)
    mod2 = abs(denom) ** 2
    if mod2 == 0:
        raise ValueError("the effective model needs gamma0 > 0 or DeltaL != 0")
    gamma = spec.kappa**2 * spec.gamma0 / 2 / mod2
    mu = spec.E * spec.kappa / denom
    chi = -spec.kappa**2 * spec.DeltaL / mod2
    if spec.kappa > 0:
        r = math.sqrt(2 * abs(spec.E) / spec.kappa)
    else:
        r = 0.0 if spec.E == 0 else math.inf
    return EffectiveParams(gamma_2ph=gamma, mu=complex(mu), chi=chi + 0.0, r=r)


def consistent_effective_params(spec: ModelSpec) -> EffectiveParams:
    """Rates obtained by eliminating the pump from ``three_mode_model`` directly.

    Setting ``a0 -> -(E + kappa a1 a2) / (gamma0/2 + i DL)`` in the three-mode
    master equation gives twice the two-phonon loss of ``effective_params`` and
    a squeezing drive of opposite sign; the ideal steady state then has
    ``a1 a2`` eigenvalue ``-E/kappa`` instead of ``2E/kappa``. Only the
    resonant case is checked against the full model, so chi is left as is.
    """
    p = effective_params(spec)
    return EffectiveParams(gamma_2ph=2 * p.gamma_2ph, mu=-p.mu, chi=p.chi, r=p.r / math.sqrt(2))


def _check_ideal_validity(spec: ModelSpec):
    if not spec.elimination_valid:
        warnings.warn(f"gamma0={spec.gamma0} is not >> gamma1, gamma2; the "
                      "pump elimination may be inaccurate", stacklevel=3)


def thermal_collapses(dims, mode: int, rate: float, n_th: float) -> list[CollapseTerm]:
    a = fock.annihilation(dims, mode)
    return [CollapseTerm(a, rate * (n_th + 1)),
            CollapseTerm(a.conj().T.tocsr(), rate * n_th)]


def three_mode_hamiltonian(spec: ModelSpec):
    if len(spec.dims) != 3:
        raise ValueError("the three-mode model needs dims = (pump, signal, idler)")
    dims = spec.dims
    a0, a1, a2 = (fock.annihilation(dims, k) for k in range(3))
    dk = (spec.Delta0 - spec.DeltaL) / 2
    E = complex(spec.E)
    h = (spec.DeltaL * (a0.conj().T @ a0)
         + dk * (a1.conj().T @ a1 + a2.conj().T @ a2)
         + 1j * spec.kappa * (a1.conj().T @ a2.conj().T @ a0 - a1 @ a2 @ a0.conj().T)
         - 1j * (E * a0.conj().T - E.conjugate() * a0))
    return h.tocsr()


def three_mode_model(spec: ModelSpec):
    """Hamiltonian and collapse terms of the full model; the pump bath is at zero temperature."""
    H = three_mode_hamiltonian(spec)
    dims = spec.dims
    collapses = [CollapseTerm(fock.annihilation(dims, 0), spec.gamma0)]
    collapses += thermal_collapses(dims, 1, spec.gamma1, spec.N1)
    collapses += thermal_collapses(dims, 2, spec.gamma2, spec.N2)
    return H, collapses


def two_mode_effective_model(spec: ModelSpec, params: EffectiveParams | None = None):
    """Effective (H', collapse terms, EffectiveParams) for signal and idler."""
    if len(spec.dims) != 2:
        raise ValueError("the effective model needs dims = (signal, idler)")
    _check_ideal_validity(spec)
    p = effective_params(spec) if params is None else params
    dims = spec.dims
    a1, a2 = fock.annihilation(dims, 0), fock.annihilation(dims, 1)
    n1, n2 = a1.conj().T @ a1, a2.conj().T @ a2
    dk = (spec.Delta0 - spec.DeltaL) / 2
    pair = a1 @ a2
    H = (dk * (n1 + n2)
         + 1j * (p.mu * pair.conj().T - p.mu.conjugate() * pair)
         + p.chi * (n1 @ n2))
    collapses = [CollapseTerm(pair, p.gamma_2ph)]
    collapses += thermal_collapses(dims, 0, spec.gamma1, spec.N1)
    collapses += thermal_collapses(dims, 1, spec.gamma2, spec.N2)
    return H.tocsr(), collapses, p


def pair_coherent_amplitudes(r: float, dim: int) -> np.ndarray:
    """Normalized amplitudes c_m ~ r^{2m}/m! of the pure ideal steady state."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    m = np.arange(dim)
    if r == 0:
        c = (m == 0).astype(float)
        return c
    logc = 2 * m * math.log(r) - np.array([math.lgamma(k + 1) for k in m])
    c = np.exp(logc - logc.max())
    return c / np.linalg.norm(c)


def analytic_steady_state(r: float, dims=DEFAULT_DIMS, tail_tol: float = 1e-8) -> np.ndarray:
    """Ideal-model steady state ``sum_{mn} r^{2m+2n}/(m! n!) |m,m><n,n| / I0(2r^2)``.

    Raises TruncationError when the population outside the truncation,
    ``1 - sum_{m<dim} r^{4m}/(m!)^2 / I0(2r^2)``, exceeds ``tail_tol``.
    """
    dims = tuple(dims)
    if len(dims) != 2 or dims[0] != dims[1]:
        raise ValueError("the ideal steady state needs two equal truncations")
    d = dims[0]
    if r < 0:
        raise ValueError("r must be nonnegative")
    x = 2 * r * r
    if r > 0:
        kept = sum(math.exp(4 * m * math.log(r) - 2 * math.lgamma(m + 1)) for m in range(d))
        tail = 1 - kept / bessel_i0(x)
        if tail > tail_tol:
            raise TruncationError(f"truncation dim {d} leaves population {tail:.2e} "
                                  f"> {tail_tol:g} for r={r}")
    c = pair_coherent_amplitudes(r, d)
    psi = np.zeros(d * d, dtype=complex)
    psi[np.arange(d) * (d + 1)] = c
    return np.outer(psi, psi.conj())


def mean_phonons_analytic(r: float) -> float:
    """<n> per mode of the ideal steady state, r^2 I1(2r^2)/I0(2r^2)."""
    return r * r * bessel_ratio_i1_i0(2 * r * r) if r > 0 else 0.0


def var_x_diff_analytic(r: float) -> float:
    """Var(x1 - x2) of the ideal steady state, x = a + a^dag."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    x = 2 * r * r
    return 1 + x * (bessel_ratio_i1_i0(x) if r > 0 else 0.0) - x


def bose_einstein(omega: float, temperature: float) -> float:
    """Mean thermal occupation 1/(exp(omega/T) - 1), with hbar = k_B = 1."""
    if temperature <= 0:
        return 0.0
    return 1.0 / math.expm1(omega / temperature)


def e_opt(r_opt: float, kappa: float) -> float:
    """Drive amplitude that puts the ideal steady state at ``r_opt``."""
    return r_opt**2 * kappa / 2


# --- flat key = value config files -------------------------------------------

_KEYS = {f.name for f in fields(ModelSpec)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key == "dims":
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if key == "E":
            return complex(raw.replace(" ", "").replace("i", "j"))
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config(text: str, allowed: set[str] | None = None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    allowed = _KEYS if allowed is None else allowed
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def spec_from_mapping(values: dict) -> ModelSpec:
    kwargs = {}
    for key, raw in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        kwargs[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    try:
        return ModelSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path) -> ModelSpec:
    return spec_from_mapping(parse_config(Path(path).read_text()))


def format_spec(spec: ModelSpec) -> str:
    lines = []
    for f in fields(ModelSpec):
        v = getattr(spec, f.name)
        if f.name == "dims":
            v = ",".join(str(d) for d in v)
        elif isinstance(v, complex):
            v = f"{v.real!r}{v.imag:+}j"
        else:
            v = repr(float(v))
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_spec(spec: ModelSpec, path) -> None:
    Path(path).write_text(format_spec(spec))
