"""Run configuration: key=value files, command-line overrides and validation."""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .experiments import ScenarioConfig
from .myerson_auction import AuctionConfig
from .wpcn_channel import WpcnParams

# key -> (section, field); N and seed feed two sections
KEY_MAP: Dict[str, Tuple[Tuple[str, str], ...]] = {
    **{name: (("wpcn", name),) for name in WpcnParams.model_fields},
    "N": (("scenario", "n_devices"), ("auction", "N")),
    "seed": (("scenario", "seed"), ("auction", "seed")),
    "n_samples": (("scenario", "n_samples"),),
    "j_range": (("scenario", "j_range"),),
    "Ns_range": (("scenario", "Ns_range"),),
    "L_range": (("scenario", "L_range"),),
    "b_f": (("scenario", "b_f"),),
    "d_range": (("scenario", "d_range"),),
    "jitter": (("scenario", "jitter"),),
    "Q": (("auction", "Q"),),
    "S": (("auction", "S"),),
    "kappa": (("auction", "kappa"),),
    "lr": (("auction", "lr"),),
    "batch_size": (("auction", "batch_size"),),
    "iterations": (("auction", "iterations"),),
    "eval_every": (("auction", "eval_every"),),
    "keep_best": (("auction", "keep_best"),),
    "out_dir": (("run", "out_dir"),),
    "n_eval": (("run", "n_eval"),),
    "workers": (("run", "workers"),),
    "misreport_points": (("run", "misreport_points"),),
    "misreport_max": (("run", "misreport_max"),),
    "n_ic_instances": (("run", "n_ic_instances"),),
}

RANGE_KEYS = ("j_range", "Ns_range", "L_range", "d_range")

RawValues = Dict[str, Tuple[str, int]]


class RunConfig(BaseModel):
    """Everything a subcommand needs, merged from defaults, file and flags."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    auction: AuctionConfig = Field(default_factory=AuctionConfig)
    out_dir: Path = Path("out")
    n_eval: int = Field(default=1000, ge=1)
    workers: int = Field(default=1, ge=1)
    misreport_points: int = Field(default=201, ge=1)
    misreport_max: float = Field(default=1.2, gt=0)
    n_ic_instances: int = Field(default=1000, ge=1)

    @property
    def wpcn(self) -> WpcnParams:
        return self.scenario.wpcn


def read_config_text(text: str) -> RawValues:
    """Split key=value lines into raw values tagged with their line number.

    Raises:
        ConfigError: On a line without '=' or an unknown key.
    """
    values: RawValues = {}
    for number, line in enumerate(text.splitlines(), start=1):
        # Strip comments and surrounding whitespace
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError("expected key=value", key=content, line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        if key not in KEY_MAP:
            raise ConfigError("unknown key", key=key, line=number)
        values[key] = (value, number)
    return values


def _coerce(key: str, raw: str) -> Any:
    if key in RANGE_KEYS:
        return [part.strip() for part in raw.split(",")]
    return raw


def _first_error(exc: ValidationError) -> Tuple[str, str]:
    error = exc.errors()[0]
    field = str(error["loc"][0]) if error["loc"] else ""
    return field, error["msg"]


def _build(section: str, model: type, data: Dict[str, Any], lines: Dict[str, Tuple[str, int]]) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        field, message = _first_error(exc)
        # Model-level validators carry no location; recover the key from the message
        if not field:
            field = next((name for name in data if name in message), "")
        key, line = lines.get(field, (field, 0))
        raise ConfigError(message, key=key or section, line=line) from exc


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge defaults, an optional config file and command-line overrides.

    Args:
        path: Optional key=value file; '#' starts a comment.
        overrides: key -> raw value from the command line, applied last (line 0).

    Returns:
        The validated run configuration.

    Raises:
        ConfigError: Naming the key and line of an unknown key, an unparsable
            value or a violated invariant.
    """
    raw: RawValues = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}", key="config") from exc
        raw.update(read_config_text(text))
    for key, value in (overrides or {}).items():
        if key not in KEY_MAP:
            raise ConfigError("unknown key", key=key, line=0)
        raw[key] = (str(value), 0)

    sections: Dict[str, Dict[str, Any]] = {"wpcn": {}, "scenario": {}, "auction": {}, "run": {}}
    lines: Dict[str, Dict[str, Tuple[str, int]]] = {name: {} for name in sections}
    for key, (value, number) in raw.items():
        for section, field in KEY_MAP[key]:
            sections[section][field] = _coerce(key, value)
            lines[section][field] = (key, number)

    wpcn = _build("wpcn", WpcnParams, sections["wpcn"], lines["wpcn"])
    scenario = _build("scenario", ScenarioConfig, {**sections["scenario"], "wpcn": wpcn}, lines["scenario"])
    auction = _build("auction", AuctionConfig, sections["auction"], lines["auction"])
    return _build(
        "run",
        RunConfig,
        {**sections["run"], "scenario": scenario, "auction": auction},
        lines["run"],
    )
