"""Run configuration: temperatures, kernels, schedules, model shape.

Everything the guidance loop needs lives in one JSON-serializable
:class:`GuidanceConfig`.  All fields have working defaults, so ``{}`` is
a valid config file and overrides are sparse.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .losses import OBJECTIVES, Temperatures
from .maps import SmoothingKernel, make_kernel
from .toymodel import ToyModelConfig


class ConfigError(ValueError):
    """Config document violates the schema or a field constraint."""


@dataclass(frozen=True)
class LossSchedule:
    """Which objective is active at each gradient iteration.

    ``round_robin`` walks ``order`` cyclically; ``weighted_random`` draws
    one objective per iteration from ``probs`` with a generator derived
    from ``seed`` and the iteration index, so replays are identical.
    """

    mode: str = "round_robin"
    order: tuple[str, ...] = OBJECTIVES
    probs: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("round_robin", "weighted_random"):
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if not self.order:
            raise ConfigError("schedule order is empty")
        for name in self.order:
            if name not in OBJECTIVES:
                raise ConfigError(f"unknown objective {name!r} in schedule order")
        if self.probs is not None:
            if len(self.probs) != len(self.order):
                raise ConfigError("probs length does not match order")
            if any(p < 0 for p in self.probs):
                raise ConfigError("negative probability in schedule")
            if abs(sum(self.probs) - 1.0) > 1e-9:
                raise ConfigError("schedule probabilities must sum to 1")


@dataclass(frozen=True)
class StepSchedule:
    """Outer timestep loop shape and per-timestep step sizes.

    ``alpha`` holds one step size per timestep, indexed by timestep
    number (applied to each of that step's gradient iterations).
    ``guidance_cutoff`` counts processed steps, highest timestep first:
    only the first ``cutoff`` steps receive latent updates.
    """

    timesteps: int = 10
    iterations_per_step: int = 3
    alpha: tuple[float, ...] = ()
    guidance_cutoff: int | None = None

    def __post_init__(self):
        if self.timesteps < 1:
            raise ConfigError("timesteps must be at least 1")
        if self.iterations_per_step < 0:
            raise ConfigError("iterations_per_step must be nonnegative")
        alpha = self.alpha if self.alpha else constant_alpha(10.0, self.timesteps)
        if len(alpha) != self.timesteps:
            raise ConfigError(f"alpha needs {self.timesteps} entries, got {len(alpha)}")
        if any(not (a > 0) for a in alpha):
            raise ConfigError("all step sizes must be positive")
        object.__setattr__(self, "alpha", tuple(float(a) for a in alpha))
        cutoff = self.timesteps if self.guidance_cutoff is None else self.guidance_cutoff
        if not 0 <= cutoff <= self.timesteps:
            raise ConfigError("guidance_cutoff must lie in [0, timesteps]")
        object.__setattr__(self, "guidance_cutoff", cutoff)


def constant_alpha(base: float, timesteps: int) -> tuple[float, ...]:
    return tuple(float(base) for _ in range(timesteps))


def linear_decay_alpha(base: float, timesteps: int) -> tuple[float, ...]:
    """Decays from ``base`` at the first processed step to ``base/T`` at the last."""
    return tuple(
        float(base) * (timesteps - s) / timesteps for s in range(timesteps)
    )[::-1]


@dataclass(frozen=True)
class GuidanceConfig:
    temperatures: Temperatures = field(default_factory=Temperatures)
    small_kernel: tuple[int, float] = (3, 0.5)
    big_kernel: tuple[int, float] = (7, 2.0)
    weights: dict[str, float] = field(
        default_factory=lambda: {name: 1.0 for name in OBJECTIVES}
    )
    schedule: LossSchedule = field(default_factory=LossSchedule)
    steps: StepSchedule = field(default_factory=StepSchedule)
    toy_model: ToyModelConfig = field(default_factory=ToyModelConfig)
    binarize_quantile: float = 0.8

    def __post_init__(self):
        for name in self.weights:
            if name not in OBJECTIVES:
                raise ConfigError(f"unknown objective {name!r} in weights")
            if self.weights[name] < 0:
                raise ConfigError(f"negative weight for {name!r}")
        if not (0 < self.binarize_quantile < 1):
            raise ConfigError("binarize_quantile must lie in (0, 1)")
        # kernel parameters are validated by construction
        self.small()
        self.big()

    def small(self) -> SmoothingKernel:
        return make_kernel(*self.small_kernel)

    def big(self) -> SmoothingKernel:
        return make_kernel(*self.big_kernel)


# -- JSON -----------------------------------------------------------------------


def config_to_dict(cfg: GuidanceConfig) -> dict:
    return {
        "tau1": cfg.temperatures.tau1,
        "tau2": cfg.temperatures.tau2,
        "small_kernel": {"size": cfg.small_kernel[0], "sigma": cfg.small_kernel[1]},
        "big_kernel": {"size": cfg.big_kernel[0], "sigma": cfg.big_kernel[1]},
        "weights": dict(cfg.weights),
        "schedule": {
            "mode": cfg.schedule.mode,
            "order": list(cfg.schedule.order),
            "probs": list(cfg.schedule.probs) if cfg.schedule.probs is not None else None,
            "seed": cfg.schedule.seed,
        },
        "steps": {
            "timesteps": cfg.steps.timesteps,
            "iterations_per_step": cfg.steps.iterations_per_step,
            "alpha": list(cfg.steps.alpha),
            "guidance_cutoff": cfg.steps.guidance_cutoff,
        },
        "toy_model": asdict(cfg.toy_model),
        "binarize_quantile": cfg.binarize_quantile,
    }


def save_config(cfg: GuidanceConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def _kernel_spec(doc: dict, key: str, default: tuple[int, float]) -> tuple[int, float]:
    if key not in doc:
        return default
    spec = doc[key]
    if isinstance(spec, dict):
        return int(spec["size"]), float(spec["sigma"])
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        return int(spec[0]), float(spec[1])
    raise ConfigError(f"{key} must be {{size, sigma}} or [size, sigma]")


def config_from_dict(doc: dict) -> GuidanceConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    known = {
        "tau1", "tau2", "small_kernel", "big_kernel", "weights",
        "schedule", "steps", "toy_model", "binarize_quantile",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        temperatures = Temperatures(
            tau1=float(doc.get("tau1", Temperatures.tau1)),
            tau2=float(doc.get("tau2", Temperatures.tau2)),
        )
        sched_doc = doc.get("schedule", {})
        schedule = LossSchedule(
            mode=sched_doc.get("mode", "round_robin"),
            order=tuple(sched_doc.get("order", OBJECTIVES)),
            probs=tuple(sched_doc["probs"]) if sched_doc.get("probs") is not None else None,
            seed=int(sched_doc.get("seed", 0)),
        )
        steps_doc = dict(doc.get("steps", {}))
        timesteps = int(steps_doc.get("timesteps", 10))
        alpha_spec = steps_doc.get("alpha", 10.0)
        if isinstance(alpha_spec, (int, float)):
            mode = steps_doc.get("alpha_mode", "constant")
            if mode == "constant":
                alpha = constant_alpha(float(alpha_spec), timesteps)
            elif mode == "linear":
                alpha = linear_decay_alpha(float(alpha_spec), timesteps)
            else:
                raise ConfigError(f"unknown alpha_mode {mode!r}")
        else:
            alpha = tuple(float(a) for a in alpha_spec)
        steps = StepSchedule(
            timesteps=timesteps,
            iterations_per_step=int(steps_doc.get("iterations_per_step", 3)),
            alpha=alpha,
            guidance_cutoff=(
                int(steps_doc["guidance_cutoff"])
                if steps_doc.get("guidance_cutoff") is not None
                else None
            ),
        )
        toy_doc = doc.get("toy_model", {})
        toy = ToyModelConfig(
            height=int(toy_doc.get("height", 16)),
            width=int(toy_doc.get("width", 16)),
            embed_dim=int(toy_doc.get("embed_dim", 8)),
            temperature=float(toy_doc.get("temperature", 1.0)),
            perturb_sigma=float(toy_doc.get("perturb_sigma", 0.05)),
            seed=int(toy_doc.get("seed", 0)),
        )
        weights = {name: 1.0 for name in OBJECTIVES}
        weights.update({k: float(v) for k, v in doc.get("weights", {}).items()})
        return GuidanceConfig(
            temperatures=temperatures,
            small_kernel=_kernel_spec(doc, "small_kernel", (3, 0.5)),
            big_kernel=_kernel_spec(doc, "big_kernel", (7, 2.0)),
            weights=weights,
            schedule=schedule,
            steps=steps,
            toy_model=toy,
            binarize_quantile=float(doc.get("binarize_quantile", 0.8)),
        )
    except (TypeError, ValueError, KeyError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"malformed config: {err}") from err


def load_config(path: str | Path) -> GuidanceConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    return config_from_dict(doc)
