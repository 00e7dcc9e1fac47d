"""Problem instances: the real three-dimensional system and its normal form.

The real system in coordinates v = (v1, v2, v3) reads

    v1' = Omega1 v1^3             + f1(phi, v) + eps g1(phi, v)
    v2' = -Omega2 v3 + d1 v1^3    + f2(phi, v) + eps g2(phi, v)
    v3' =  Omega2 v2 + d2 v1^3    + f3(phi, v) + eps g3(phi, v)

with phi' = omega.  Everything may depend on a scalar parameter a.  A *model*
supplies the a-dependent data; ``SystemSpec`` adds the interval, eps and the
numerical settings.
"""
import json
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .qp_field import FourierGrid, QPPolyField, monomial_basis


@dataclass(frozen=True)
class NormalForm:
    """Omega1 w1^3 + e2 w1^2 + e1 w1 in component 1, Omega2 w2 and Omega3 w3 below."""
    Omega1: np.ndarray
    Omega2: np.ndarray
    Omega3: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @classmethod
    def initial(cls, Omega1, Omega2_real):
        Omega1 = np.asarray(Omega1, dtype=float)
        om2 = np.asarray(Omega2_real, dtype=float)
        z = np.zeros_like(Omega1)
        return cls(Omega1, 1j * om2, -1j * om2, z, z.copy())

    def select(self, idx):
        return NormalForm(*(np.asarray(getattr(self, k))[idx] for k in ("Omega1", "Omega2", "Omega3", "e1", "e2")))

    def as_field(self, like):
        """The normal part as a field with the layout of ``like``."""
        N = QPPolyField.zeros(like.grid, like.basis, like.params, r=like.r, s=like.s)
        z = (slice(None),) + (0,) * like.grid.n0
        idx = like.basis.idx
        c = N.coeffs
        c[(slice(None), 0, idx((3, 0, 0))) + z[1:]] = self.Omega1
        c[(slice(None), 0, idx((2, 0, 0))) + z[1:]] = self.e2
        c[(slice(None), 0, idx((1, 0, 0))) + z[1:]] = self.e1
        c[(slice(None), 1, idx((0, 1, 0))) + z[1:]] = self.Omega2
        c[(slice(None), 2, idx((0, 0, 1))) + z[1:]] = self.Omega3
        return N

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() if np.isrealobj(getattr(self, k))
                else [[float(x.real), float(x.imag)] for x in np.asarray(getattr(self, k))]
                for k in ("Omega1", "Omega2", "Omega3", "e1", "e2")}


def _poly_in_a(coeffs, a):
    return np.polynomial.polynomial.polyval(np.asarray(a, dtype=float), np.asarray(coeffs, dtype=float))


def _real_terms_to_field(terms, params, grid, basis, coef_fn):
    """Assemble a real field from (component, l, k, cos, sin) records."""
    F = QPPolyField.zeros(grid, basis, params, coords="v")
    for t in terms:
        j = int(t["component"]) - 1
        m = basis.idx(tuple(t["l"]))
        k = np.asarray(t.get("k", [0] * grid.n0), dtype=int)
        if np.abs(k).sum() > grid.kmax:
            raise ValueError(f"harmonic {k.tolist()} exceeds kmax={grid.kmax}")
        c, s = coef_fn(t, params)
        pos = (slice(None), j, m) + tuple(k % grid.N)
        if not k.any():
            F.coeffs[pos] += c
        else:
            neg = (slice(None), j, m) + tuple((-k) % grid.N)
            F.coeffs[pos] += 0.5 * (c - 1j * s)
            F.coeffs[neg] += 0.5 * (c + 1j * s)
    return F


class PolynomialModel:
    """Normal-form data as polynomials in a and phi-dependent tables of real terms.

    ``higher`` and ``perturbation`` are lists of records
    ``{"component": 1..3, "l": [l1, l2, l3], "k": [...], "cos": c, "sin": s}``
    meaning ``(c cos<k,phi> + s sin<k,phi>) v^l``; in ``higher`` the entries c, s
    may be coefficient lists (polynomials in a).
    """

    kind = "polynomial"

    def __init__(self, frequencies, Omega1, Omega2, d1=(0.0,), d2=(0.0,), higher=(), perturbation=()):
        self.omega = np.asarray(frequencies, dtype=float)
        self.n0 = len(self.omega)
        self.coef = {"Omega1": list(np.atleast_1d(Omega1)), "Omega2": list(np.atleast_1d(Omega2)),
                     "d1": list(np.atleast_1d(d1)), "d2": list(np.atleast_1d(d2))}
        self.higher = [dict(t) for t in higher]
        self.perturbation = [dict(t) for t in perturbation]

    def frequencies(self, a):
        a = np.atleast_1d(a)
        return np.broadcast_to(self.omega, (len(a), self.n0)).copy()

    def normal_data(self, a):
        return {k: _poly_in_a(v, a) for k, v in self.coef.items()}

    def real_parts(self, params, grid, basis):
        def coef(t, a):
            return (_poly_in_a(np.atleast_1d(t.get("cos", 0.0)), a),
                    _poly_in_a(np.atleast_1d(t.get("sin", 0.0)), a))
        return (_real_terms_to_field(self.higher, params, grid, basis, coef),
                _real_terms_to_field(self.perturbation, params, grid, basis, coef))

    def to_dict(self):
        return {"model": self.kind, "frequencies": self.omega.tolist(), **self.coef,
                "higher": self.higher, "perturbation": self.perturbation}

    @classmethod
    def from_dict(cls, d):
        return cls(d["frequencies"], d["Omega1"], d["Omega2"], d.get("d1", [0.0]), d.get("d2", [0.0]),
                   d.get("higher", []), d.get("perturbation", []))


@dataclass
class Numerics:
    degree: int = 6
    fourier_n: int = 16
    kmax: int = 5
    work_points: int = 9
    grid_points: int = 257
    r0: float = 0.5
    s0: float = 1.0
    tol: float = 1e-12
    max_steps: int = 8
    kcap: int = 512
    bound_factor: float = 10.0


@dataclass
class SystemSpec:
    model: object
    interval: tuple
    eps: float
    gamma0: float = 1e-3
    case: "int | None" = None
    gate_override: bool = False
    numerics: Numerics = field(default_factory=Numerics)

    @property
    def n0(self):
        return self.model.n0

    def fourier_grid(self):
        return FourierGrid(self.n0, self.numerics.fourier_n, self.numerics.kmax)

    def basis(self):
        return monomial_basis(self.numerics.degree)

    def work_params(self):
        lo, hi = self.interval
        return np.linspace(lo, hi, self.numerics.work_points)

    def fine_params(self):
        lo, hi = self.interval
        return np.linspace(lo, hi, self.numerics.grid_points)

    def normal_field(self, params, grid, basis):
        """Linear and cubic normal part in real coordinates."""
        data = self.model.normal_data(params)
        F = QPPolyField.zeros(grid, basis, params, coords="v")
        z = (0,) * grid.n0
        c = F.coeffs
        c[(slice(None), 0, basis.idx((3, 0, 0))) + z] = data["Omega1"]
        c[(slice(None), 1, basis.idx((0, 0, 1))) + z] = -data["Omega2"]
        c[(slice(None), 2, basis.idx((0, 1, 0))) + z] = data["Omega2"]
        c[(slice(None), 1, basis.idx((3, 0, 0))) + z] = data.get("d1", 0.0)
        c[(slice(None), 2, basis.idx((3, 0, 0))) + z] = data.get("d2", 0.0)
        return F

    def real_parts(self, params=None, grid=None, basis=None):
        """(unperturbed field, perturbation g) in real coordinates."""
        params = self.work_params() if params is None else np.atleast_1d(params)
        grid = self.fourier_grid() if grid is None else grid
        basis = self.basis() if basis is None else basis
        higher, pert = self.model.real_parts(params, grid, basis)
        return self.normal_field(params, grid, basis) + higher, pert

    def real_field(self, params=None, grid=None, basis=None):
        unpert, pert = self.real_parts(params, grid, basis)
        return unpert + pert.scaled(self.eps)

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def to_dict(self):
        return {"model": self.model.to_dict(), "interval": list(self.interval), "eps": self.eps,
                "gamma0": self.gamma0, "case": self.case, "gate_override": self.gate_override,
                "numerics": asdict(self.numerics)}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d):
        check_spec_dict(d)
        m = d["model"]
        if m.get("model") == "vdp":
            from .vdp import VdpModel
            model = VdpModel.from_dict(m)
        else:
            model = PolynomialModel.from_dict(m)
        num = Numerics(**d.get("numerics", {}))
        return cls(model, tuple(d["interval"]), float(d["eps"]), float(d.get("gamma0", 1e-3)),
                   d.get("case"), bool(d.get("gate_override", False)), num)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def check_spec_dict(d):
    """Structural validation mirroring schema/system_spec.schema.json."""
    for key in ("model", "interval", "eps"):
        if key not in d:
            raise ValueError(f"spec is missing '{key}'")
    lo, hi = d["interval"]
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if d["eps"] < 0:
        raise ValueError("eps must be non-negative")
    if d.get("case") not in (None, 1, 2):
        raise ValueError("case must be 1, 2 or null")
    m = d["model"]
    kind = m.get("model", "polynomial")
    if kind == "polynomial":
        for key in ("frequencies", "Omega1", "Omega2"):
            if key not in m:
                raise ValueError(f"polynomial model is missing '{key}'")
    elif kind != "vdp":
        raise ValueError(f"unknown model '{kind}'")
    unknown = set(d.get("numerics", {})) - set(Numerics.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown numerics keys {sorted(unknown)}")
