"""Plain-text ``key = value`` study configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

_LIST_KEYS = {"n_list", "variants", "scales"}
_OPTIONAL_KEYS = {"geometry_depth", "error_extra_depth", "out_csv", "levelset"}


@dataclass
class StudyConfig:
    problem: str = "flower2d"
    # optional geometry override: "name arg1 arg2 ..." from the level-set catalogue
    levelset: str | None = None
    order: int = 1
    n_list: list = field(default_factory=lambda: [8, 16, 32, 64])
    n: int = 16
    beta: float = 50.0
    gamma0: float = 50.0
    gamma1: float = 0.1
    gamma2: float = 0.1
    gamma3: float = 0.1
    gamma_proj: float = 0.1
    gp_variant: str = "face_jumps"
    weighting: str = "harmonic"
    beta_gamma_tilde: float = 50.0
    scale_ghost_by_kappa: bool = True
    geometry_depth: int | None = None
    quad_order_factor: int = 2
    c_s: float = 0.1
    penalty_length: str = "spacing"
    error_extra_depth: int | None = None
    eps: float = 1e-12
    out_csv: str | None = None
    # translation sweeps
    delta_step: float = 0.002
    steps: int = 200
    variants: list = field(default_factory=lambda: ["face_jumps", "none"])
    condition: bool = True
    errors: bool = True
    # parameter scaling
    scales: list = field(default_factory=lambda: [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6])
    # opt-in for meshes beyond desk scale
    allow_large: bool = False

    @property
    def gamma(self):
        return (self.gamma0, self.gamma1, self.gamma2, self.gamma3)

    def depth_for(self, order):
        return order + 1 if self.geometry_depth is None else self.geometry_depth

    def quad_order(self, order):
        return max(self.quad_order_factor * order, 1)

    def update(self, **kwargs):
        return replace(self, **kwargs)


def _convert(name, raw, current):
    raw = raw.strip()
    if name in _LIST_KEYS:
        items = [t for t in raw.replace(",", " ").split() if t]
        if name == "n_list":
            return [int(t) for t in items]
        if name == "scales":
            return [float(t) for t in items]
        return items
    if raw.lower() in ("none", "") and name in _OPTIONAL_KEYS:
        return None
    kind = type(current)
    if name in ("geometry_depth", "error_extra_depth"):
        return int(raw)
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text, base=None):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = StudyConfig() if base is None else base
    known = {f.name for f in fields(StudyConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _convert(key, value, getattr(cfg, key))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return replace(cfg, **updates)


def parse_levelset(text):
    """``"circle2d 0.3"`` -> (``"circle2d"``, [0.3])."""
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("empty level-set description")
    return parts[0], [float(t) for t in parts[1:]]


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base)


def dump_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = ", ".join(str(t) for t in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
