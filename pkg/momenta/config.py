import argparse
import dataclasses
import logging
import os
import typing
from dataclasses import dataclass
from typing import Any, Literal, Optional, Tuple, Union

import platformdirs
import toml

from momenta.basis_builder import GenerationSettings, Mode
from momenta.independence import SelectionConfig
from momenta.moments import Flavor
from momenta.utils import validate_part

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(asctime)s pid=%(process)d %(name)s: %(message)s"


class ValidationError(ValueError):
    """Raised when a configuration value is invalid."""


@dataclass
class MomentaConfig:
    # What to build.
    lmax: int = 3
    flavor: str = "volumetric"
    mode: str = "specific"
    robust: str = ""
    seed: int = 0

    # Selection options.
    tolerance: float = 1e-8
    norm_floor: float = 1.0
    max_intermediate_rank: int = 12
    max_order: int = 8
    max_exponent: int = 10
    max_mixed_factors: int = 6
    max_mixed_rank: int = 24
    escalate: bool = True
    vanishing_threshold: float = 1e-10
    verify_seed: int = -1

    # Basis cache options.
    cache_dir: str = platformdirs.user_cache_dir("momenta")
    use_cache: bool = True

    # General options.
    ignore_unknown_attributes: bool = False
    log_level: str = ""

    def __post_init__(self):
        self._provenance = {}
        self._current_provenance = None

    def clone_with(self, **kwargs) -> "MomentaConfig":
        return dataclasses.replace(self, **kwargs)

    def get_provenance(self, name: str) -> str:
        provenance = self._provenance.get(name)
        if provenance is not None:
            return provenance
        field_obj = MomentaConfig.__dataclass_fields__[name]
        if getattr(self, name) == field_obj.default:
            return "default"
        return "set in code"

    def __setattr__(self, name: str, value: Any) -> None:
        super().__setattr__(name, value)
        if name[0] != "_":
            if hasattr(self, "_current_provenance"):
                self._provenance[name] = self._current_provenance

    def to_toml_string(
        self, with_provenance: bool = False, skip_default: bool = False
    ) -> str:
        dic = dataclasses.asdict(self)

        kv_lines = []
        provenances = []
        for name, value in dic.items():
            provenance = self.get_provenance(name)
            if skip_default and provenance == "default":
                continue
            kv_lines.append(toml.dumps({name: value}).strip())
            provenances.append(provenance)

        if not with_provenance:
            return "\n".join(kv_lines) + "\n"

        maxlen = min(32, max(len(line) for line in kv_lines)) if kv_lines else 0
        lines = []
        for line, prov in zip(kv_lines, provenances):
            lines.append(f"{line}{' ' * (maxlen - len(line))}  # {prov}")

        return "\n".join(lines) + "\n"

    def override_from_toml_file(
        self, filename: str, provenance: Optional[str] = None
    ) -> None:
        if provenance is None:
            provenance = f"set from file {os.path.abspath(filename)}"
        with open(filename, "r") as f:
            self.override_from_toml_string(f.read(), provenance=provenance)

    def override_from_toml_string(
        self, string: str, provenance: Optional[str] = None
    ) -> None:
        if provenance is None:
            provenance = "set from toml string"
        self._current_provenance = provenance
        try:
            config = toml.loads(string)
        except toml.TomlDecodeError as e:
            self._current_provenance = None
            raise ValidationError(f"Invalid TOML ({provenance}): {e}") from e
        unknown_keys = set()
        for key, value in config.items():
            if key not in MomentaConfig.__annotations__:
                logger.warning("Unknown config key: %s", key)
                unknown_keys.add(key)
                continue
            normalized = MomentaConfig.validate_and_normalize(key, value, provenance)
            setattr(self, key, normalized)
            logger.debug("Setting config %s = %s (%s)", key, normalized, provenance)
        self._current_provenance = None
        if unknown_keys and not self.ignore_unknown_attributes:
            raise KeyError(f"Unknown config keys: {', '.join(sorted(unknown_keys))}")

    def override_from_dict(
        self, config: dict, provenance: Optional[str] = None
    ) -> None:
        if provenance is None:
            provenance = config.get("provenance", "set from dict")
        self._current_provenance = provenance
        for key, value in config.items():
            if key == "provenance":
                continue
            if value is not None:
                normalized = MomentaConfig.validate_and_normalize(key, value, provenance)
                setattr(self, key, normalized)
                logger.debug("Setting config %s = %s (%s)", key, normalized, provenance)
        self._current_provenance = None

    def override_from_env(self):
        # MOMENTA_CACHE is a short alias of MOMENTA_CACHE_DIR, the latter wins.
        env_names = [("cache_dir", "MOMENTA_CACHE")]
        env_names += [(key, f"MOMENTA_{key.upper()}") for key in MomentaConfig.__annotations__]
        for key, env_var_name in env_names:
            env_value = os.environ.get(env_var_name)
            if env_value is not None:
                provenance = f"set via {env_var_name}"
                self._current_provenance = provenance
                normalized = MomentaConfig.validate_and_normalize(
                    key, env_value, self._current_provenance
                )
                setattr(self, key, normalized)
                logger.debug("Setting config %s = %s (%s)", key, normalized, provenance)
        self._current_provenance = None

    def override(self, provenance: Optional[str] = None, **kwargs) -> None:
        self.override_from_dict(kwargs, provenance=provenance)

    @staticmethod
    def validate_and_normalize(
        name: str, value: Any, provenance: Optional[str] = None
    ) -> Any:
        if name not in MomentaConfig.__annotations__:
            raise KeyError(f"Unknown config key: {name}")
        field_type = MomentaConfig.__annotations__[name]
        if typing.get_origin(field_type) is Union:
            types_in_union = typing.get_args(field_type)
        else:
            types_in_union = (field_type,)

        provenance = f"({provenance})" if provenance else "(set in code)"

        # Normalize values specified as strings.
        try:
            if isinstance(value, str):
                if name == "cache_dir" and value == "":
                    value = platformdirs.user_cache_dir("momenta")
                if int in types_in_union:
                    value = int(value)
                if float in types_in_union:
                    value = float(value)
                if bool in types_in_union:
                    if value.lower() in ["true", "1", "t", "y", "yes"]:
                        value = True
                    elif value.lower() in ["false", "0", "f", "n", "no"]:
                        value = False
                    else:
                        raise ValidationError(
                            f"Invalid boolean value for {name}: '{value}' {provenance}"
                        )
                if name == "flavor":
                    value = str(Flavor.from_string(value))
                if name == "mode":
                    value = str(Mode.from_string(value))
                if name == "robust" and value != "":
                    value = ",".join(str(v) for v in validate_part(value))
            elif isinstance(value, int) and not isinstance(value, bool) and float in types_in_union:
                value = float(value)
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise ValidationError(
                f"Invalid value for {name}: '{value}' {provenance}: {e}"
            ) from e

        if not MomentaConfig._verify_type(value, field_type):
            raise ValidationError(
                f"Option {name} has type {field_type}, but got"
                f" '{value}' of type {type(value)} {provenance}"
            )

        # Verify additional constraints.
        if name == "lmax" and not 0 <= value <= 8:
            raise ValidationError(f"lmax must be in [0, 8]: '{value}' {provenance}")
        if name == "tolerance" and not 0.0 < value < 1e-2:
            raise ValidationError(f"tolerance must be in (0, 0.01): '{value}' {provenance}")
        if name in ("norm_floor", "vanishing_threshold") and not value > 0.0:
            raise ValidationError(f"{name} must be positive: '{value}' {provenance}")
        if name in (
            "max_intermediate_rank",
            "max_order",
            "max_exponent",
            "max_mixed_factors",
            "max_mixed_rank",
        ) and value < 1:
            raise ValidationError(f"{name} must be positive: '{value}' {provenance}")

        return value

    @staticmethod
    def _verify_type(value, type):
        origin = typing.get_origin(type)
        args = typing.get_args(type)
        if origin is Union:
            return any(MomentaConfig._verify_type(value, arg) for arg in args)
        elif origin is Literal:
            return value in args
        elif type is int or type is float:
            return isinstance(value, type) and not isinstance(value, bool)
        else:
            return isinstance(value, type)

    @property
    def flavor_value(self) -> Flavor:
        return Flavor.from_string(self.flavor)

    @property
    def mode_value(self) -> Mode:
        return Mode.from_string(self.mode)

    @property
    def robust_part(self) -> Optional[Tuple[int, int]]:
        return validate_part(self.robust) if self.robust else None

    def selection_config(self, trace_path: Optional[str] = None) -> SelectionConfig:
        return SelectionConfig(
            seed=self.seed,
            tol=self.tolerance,
            norm_floor=self.norm_floor,
            max_rank=self.max_intermediate_rank,
            verify_seed=None if self.verify_seed < 0 else self.verify_seed,
            trace_path=trace_path,
        )

    def generation_settings(self, trace_path: Optional[str] = None) -> GenerationSettings:
        return GenerationSettings(
            selection=self.selection_config(trace_path),
            max_exponent=self.max_exponent,
            max_mixed_factors=self.max_mixed_factors,
            max_mixed_rank=self.max_mixed_rank,
            escalate=self.escalate,
        )


def default_config_file() -> str:
    return os.path.join(platformdirs.user_config_dir("momenta"), "config.toml")


def load_config(config_file: Optional[str] = None, **overrides) -> MomentaConfig:
    """Build the configuration from the defaults, a TOML file, MOMENTA_* environment
    variables and the overrides, in this order.

    The file is `config_file`, or $MOMENTA_CONFIG, or the user config file if it
    exists. "DEFAULT" or an empty string means no file."""
    if config_file is None:
        if os.environ.get("MOMENTA_CONFIG") is not None:
            config_file = os.environ["MOMENTA_CONFIG"]
        elif os.path.exists(default_config_file()):
            config_file = default_config_file()
        else:
            config_file = "DEFAULT"
    config = MomentaConfig()
    if config_file not in ("DEFAULT", ""):
        config.override_from_toml_file(config_file)
    config.override_from_env()
    config.override_from_dict(overrides, provenance="set via command line")
    if config.log_level:
        configure_logging(config.log_level, config.get_provenance("log_level"))
    return config


def configure_logging(log_level: str, provenance: str) -> None:
    """Configure logging for momenta based on the provided log level."""
    try:
        level = int(log_level)
    except ValueError:
        level = getattr(logging, log_level.upper(), logging.DEBUG)
    momenta_logger = logging.getLogger("momenta")
    has_real_handler = any(
        not isinstance(h, logging.NullHandler) for h in momenta_logger.handlers
    )
    if not has_real_handler:
        h = logging.StreamHandler()
        h.setFormatter(logging.Formatter(LOG_FORMAT))
        momenta_logger.addHandler(h)
        momenta_logger.propagate = False
    momenta_logger.setLevel(level)
    logger.debug("Configured logging with level %s (%s)", log_level, provenance)
