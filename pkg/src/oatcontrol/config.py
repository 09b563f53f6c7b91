"""Run configuration: TOML files, shipped presets and validation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import ControlProfile, ModelParams
from .optimizer import OptimizerSettings
from .protocols import OatScheme

SCHEMES = ("oat", "tnt", "profile", "optimize-qfi", "optimize-cfi", "husimi", "sweep-chi")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


@dataclass(frozen=True)
class HusimiSettings:
    taus: tuple = (0.0, 0.1, 0.4, 0.7, 1.0)
    n_theta: int = 100
    n_phi: int = 100
    source: str = "profile"  # evolution used when scheme == "husimi"

    def __post_init__(self):
        if self.n_theta < 2 or self.n_phi < 2:
            raise ConfigError("husimi grid needs at least 2 points per axis")
        if any(not 0 <= t <= 1 for t in self.taus):
            raise ConfigError("husimi snapshot times must lie in [0, 1]")
        if self.source not in ("oat", "tnt", "profile"):
            raise ConfigError(f"husimi source must be oat, tnt or profile, got {self.source!r}")


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    format: str = "csv"
    n_samples: int = 201
    states: bool = False

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be at least 2")


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    scheme: str
    oat: OatScheme | None = None
    profile: ControlProfile | None = None
    optimizer: OptimizerSettings | None = None
    sigma: float | None = None
    husimi: HusimiSettings | None = None
    sweep_chi: tuple | None = None
    tnt_segments: int = 20
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        need = {
            "oat": "oat",
            "profile": "profile",
            "optimize-qfi": "optimizer",
            "optimize-cfi": "optimizer",
            "husimi": "husimi",
            "sweep-chi": "sweep_chi",
        }.get(self.scheme)
        if need and getattr(self, need) is None:
            raise ConfigError(f"scheme {self.scheme!r} needs a [{need.replace('_', '-')}] block")
        if self.scheme == "optimize-cfi" and self.sigma is None:
            raise ConfigError("scheme 'optimize-cfi' needs a [noise] block")
        if self.scheme == "husimi":
            src = self.husimi.source
            if src != "tnt" and getattr(self, src) is None:
                raise ConfigError(f"husimi source {src!r} needs a [{src}] block")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        if self.sweep_chi is not None and (not self.sweep_chi or min(self.sweep_chi) < 0):
            raise ConfigError("sweep-chi needs a non-empty list of non-negative chi_T values")

    def with_overrides(self, seed=None, out=None, fmt=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            if seed < 0:
                raise ConfigError("seed must be non-negative")
            opt = cfg.optimizer or OptimizerSettings()
            cfg = replace(cfg, optimizer=replace(opt, rng_seed=seed))
        if out is not None or fmt is not None:
            out_set = replace(
                cfg.output,
                dir=cfg.output.dir if out is None else str(out),
                format=cfg.output.format if fmt is None else fmt,
            )
            cfg = replace(cfg, output=out_set)
        return cfg

    def to_dict(self) -> dict:
        d = {
            "scheme": self.scheme,
            "model": asdict(self.model),
            "tnt_segments": self.tnt_segments,
            "output": asdict(self.output),
        }
        if self.oat is not None:
            d["oat"] = asdict(self.oat)
        if self.profile is not None:
            d["profile"] = self.profile.to_dict()
        if self.optimizer is not None:
            d["optimizer"] = self.optimizer.to_dict()
        if self.sigma is not None:
            d["noise"] = {"sigma": self.sigma}
        if self.husimi is not None:
            h = asdict(self.husimi)
            h["taus"] = list(h["taus"])
            d["husimi"] = h
        if self.sweep_chi is not None:
            d["sweep-chi"] = {"chi_T": list(self.sweep_chi)}
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        return parse_config(data, base_dir)


_TOP_KEYS = {
    "scheme", "model", "oat", "profile", "optimizer", "noise",
    "husimi", "sweep-chi", "tnt_segments", "output",
}


def _block(data: dict, name: str, cls):
    raw = data.get(name)
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _profile_block(raw, base_dir: Path | None) -> ControlProfile | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("[profile] must be a table")
    raw = dict(raw)
    pulses = tuple(tuple(p) for p in raw.pop("pulses", ()))
    sources = [k for k in ("segments", "constant", "file") if k in raw]
    if len(sources) != 1:
        raise ConfigError("[profile] needs exactly one of segments, constant, file")
    key = sources[0]
    if key == "segments":
        segs = raw.pop("segments")
        if raw:
            raise ConfigError(f"[profile]: unexpected keys {sorted(raw)}")
        return ControlProfile(segs, pulses)
    if key == "constant":
        value = raw.pop("constant")
        n_seg = raw.pop("n_segments", 20)
        if raw:
            raise ConfigError(f"[profile]: unexpected keys {sorted(raw)}")
        return ControlProfile.constant(value, n_seg, pulses)
    from .export import read_profile_csv

    path = Path(raw.pop("file"))
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    if not path.is_file():
        raise ConfigError(f"profile file not found: {path}")
    prof = read_profile_csv(path)
    return ControlProfile(prof.segments, pulses)


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "scheme" not in data or "model" not in data:
        raise ConfigError("configuration needs 'scheme' and a [model] block")
    try:
        model = _block(data, "model", ModelParams)
        oat = _block(data, "oat", OatScheme)
        optimizer = _block(data, "optimizer", OptimizerSettings)
        profile = _profile_block(data.get("profile"), base_dir)
        noise = data.get("noise")
        sigma = None
        if noise is not None:
            if set(noise) != {"sigma"}:
                raise ConfigError("[noise] takes exactly one key, sigma")
            sigma = float(noise["sigma"])
        husimi = data.get("husimi")
        if husimi is not None:
            husimi = dict(husimi)
            if "taus" in husimi:
                husimi["taus"] = tuple(float(t) for t in husimi["taus"])
            husimi = _block({"husimi": husimi}, "husimi", HusimiSettings)
        sweep = data.get("sweep-chi")
        if sweep is not None:
            if set(sweep) != {"chi_T"}:
                raise ConfigError("[sweep-chi] takes exactly one key, chi_T")
            sweep = tuple(float(c) for c in sweep["chi_T"])
        output = _block(data, "output", OutputSettings) or OutputSettings()
        return RunConfig(
            model=model,
            scheme=data["scheme"],
            oat=oat,
            profile=profile,
            optimizer=optimizer,
            sigma=sigma,
            husimi=husimi,
            sweep_chi=sweep,
            tnt_segments=int(data.get("tnt_segments", 20)),
            output=output,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path.parent)


def preset_names() -> list[str]:
    root = resources.files("oatcontrol") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> RunConfig:
    res = resources.files("oatcontrol") / "presets" / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    with resources.as_file(res) as path:
        return load_config(path)
