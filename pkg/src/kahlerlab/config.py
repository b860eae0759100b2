"""Run configuration: YAML parsing, validation and construction of backgrounds."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .cheb import WORK


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    backend: str = "torus"
    n: int = 1
    N: int = 32
    K: int = 48
    # torus: list of {freq: [k1(, k2)], cos: a, sin: b}; cp1: list of [degree, coefficient] for h(x)
    background: list = field(default_factory=list)
    tol: float = 1e-10
    max_iter: int = 40
    fd_step: float = 1e-7
    linearize_step: float = 1e-4
    trust_u: float = 0.1
    trust_t: float = 0.2
    dt_min: float = 1e-4
    pool: int = 1
    t_end: float = 0.9
    steps: int = 11
    twist_a: float = 0.0
    twist_b: float = 0.0
    energy_path: str = "straight"
    energy_samples: int = 65
    energy_t: float = 0.9
    energy_c_range: tuple = (-1.0, 1.0)
    out: str = "out"
    seed: int = 0

    @classmethod
    def default(cls, backend: str = "torus") -> "RunConfig":
        if backend == "torus":
            return cls(backend="torus", background=[{"freq": [1], "cos": 0.3, "sin": 0.0}])
        return cls(backend="cp1", background=[[3, 0.1]], energy_path="orbit")

    # -- parsing ------------------------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        backend = data.get("backend", "torus")
        if backend not in ("torus", "cp1"):
            raise ConfigError(f"backend must be 'torus' or 'cp1', got {backend!r}")
        cfg = cls.default(backend)
        geom = data.get("geometry", {}) or {}
        solver = data.get("solver", {}) or {}
        path = data.get("path", {}) or {}
        twist = data.get("twist", {}) or {}
        energy = data.get("energy", {}) or {}
        known = {"backend", "geometry", "background", "solver", "path", "twist", "energy", "out", "seed"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        try:
            for key in ("n", "N", "K"):
                if key in geom:
                    setattr(cfg, key, int(geom[key]))
            if "background" in data:
                cfg.background = list(data["background"] or [])
            for key in ("tol", "fd_step", "linearize_step", "trust_u", "trust_t", "dt_min"):
                if key in solver:
                    setattr(cfg, key, float(solver[key]))
            for key in ("max_iter", "pool"):
                if key in solver:
                    setattr(cfg, key, int(solver[key]))
            if "t_end" in path:
                cfg.t_end = float(path["t_end"])
            if "steps" in path:
                cfg.steps = int(path["steps"])
            cfg.twist_a = float(twist.get("a", cfg.twist_a))
            cfg.twist_b = float(twist.get("b", cfg.twist_b))
            if "path" in energy:
                cfg.energy_path = str(energy["path"])
            if "samples" in energy:
                cfg.energy_samples = int(energy["samples"])
            if "t" in energy:
                cfg.energy_t = float(energy["t"])
            if "c_range" in energy:
                cfg.energy_c_range = tuple(float(v) for v in energy["c_range"])
            if "out" in data:
                cfg.out = str(data["out"])
            if "seed" in data:
                cfg.seed = int(data["seed"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed configuration value: {exc}") from exc
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"configuration is not valid YAML: {exc}") from exc
        return cls.from_mapping(data or {})

    def validate(self) -> "RunConfig":
        for key in ("tol", "fd_step", "linearize_step", "trust_u", "trust_t", "dt_min"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"tolerance {key} must be positive")
        if self.max_iter < 1 or self.pool < 1:
            raise ConfigError("max_iter and pool must be at least 1")
        if not 0.5 <= self.t_end < 1:
            raise ConfigError(f"t_end must lie in [0.5, 1), got {self.t_end}")
        if self.steps < 2:
            raise ConfigError("path needs at least two steps")
        if self.backend == "torus":
            if self.n not in (1, 2):
                raise ConfigError("torus dimension n must be 1 or 2")
            if self.N < 8 or self.N > 256 or self.N & (self.N - 1):
                raise ConfigError("N must be a power of two in [8, 256]")
            if self.twist_a != 0.0:
                raise ConfigError("the torus admits only the zero twist")
            for term in self.background:
                if not isinstance(term, dict) or "freq" not in term:
                    raise ConfigError("torus background terms need a 'freq' entry")
                if len(term["freq"]) != self.n:
                    raise ConfigError(f"frequency {term['freq']} does not match n = {self.n}")
        else:
            if self.K < 32:
                raise ConfigError("K must be at least 32")
            for term in self.background:
                if not (isinstance(term, (list, tuple)) and len(term) == 2):
                    raise ConfigError("cp1 background terms are [degree, coefficient] pairs")
        if self.energy_path not in ("straight", "orbit"):
            raise ConfigError("energy.path must be 'straight' or 'orbit'")
        if self.energy_path == "orbit" and self.backend != "cp1":
            raise ConfigError("orbit paths exist only on cp1")
        if self.energy_samples < 5 or self.energy_samples % 2 == 0:
            raise ConfigError("energy.samples must be odd and at least 5")
        if not 0 <= self.energy_t <= 1:
            raise ConfigError("energy.t must lie in [0, 1]")
        return self

    # -- identity -----------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_c_range"] = list(self.energy_c_range)
        return d

    def hash(self) -> str:
        """Digest of every computational setting (the output directory is excluded)."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    # -- construction ---------------------------------------------------------------
    def solver_options(self):
        from .continuation import SolverOptions
        return SolverOptions(tol=self.tol, max_iter=self.max_iter, fd_step=self.fd_step,
                             linearize_step=self.linearize_step, trust_u=self.trust_u,
                             trust_t=self.trust_t, dt_min=self.dt_min)

    def twist(self):
        from .toric import ToricTwist
        return ToricTwist(self.twist_a, self.twist_b)

    def build_background(self):
        if self.backend == "torus":
            from .kahler import KahlerBackground
            from .lattice import TorusGrid
            grid = TorusGrid(self.n, self.N)
            psi = np.zeros(grid.shape)
            for term in self.background:
                arg = sum(int(k) * c for k, c in zip(term["freq"], grid.coords))
                psi = psi + float(term.get("cos", 0.0)) * np.cos(arg) + float(term.get("sin", 0.0)) * np.sin(arg)
            return KahlerBackground(grid, psi)
        from .sphere import SphereBackground
        from .toric import MomentGrid, ToricPotential
        grid = MomentGrid(self.K)
        terms = [(int(d), WORK(c)) for d, c in self.background]
        u = ToricPotential.from_function(grid, lambda x: sum(c * x ** d for d, c in terms) + 0 * x)
        return SphereBackground.from_toric(u)

    def tolerance_table(self) -> dict:
        """Verification tolerances; coarse grids get the resolution-scaled entries."""
        if self.backend == "torus":
            relax = 1.0 if self.N >= 16 else 1e2
            return {"self_adjoint": 1e-8 * relax, "positivity": 1e-8 * relax, "kernel_dim": 1,
                    "commutator": 1e-6 * relax, "leibniz": 1e-6 * relax, "gradient": 1e-6 * relax}
        relax = 1.0 if self.K >= 48 else 1e4
        return {"self_adjoint": 1e-8, "positivity": 1e-8, "kernel_dim": 2,
                "commutator": 1e-6, "leibniz": 1e-6 * relax,
                "gradient": 1e-6, "orthogonality": 1e-8}
