from contextvars import ContextVar, Token
from pathlib import Path
from typing import Any, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from upwind_lab.data_types import QuadratureSpec, SemiNormParams, StepperSpec


class Settings(BaseSettings):
    """Process-wide settings of the library."""

    workers: int = Field(default=1, ge=1)
    seed: int = Field(default=0)
    direction_count: int = Field(default=64, ge=4)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)

    model_config = SettingsConfigDict(
        env_prefix="UPWIND_LAB_",
        env_nested_delimiter="__",
        extra="forbid",
        frozen=True,
    )


class MeshSource(BaseModel):
    """Where the mesh of an experiment comes from.

    Attributes:
        generator (str | None): Catalog token or dotted path of a mesh generator.
        file (Path | None): JSON mesh file written by `write_mesh`.
        params (dict[str, Any]): Keyword arguments of the generator.
        mollify (bool): Whether polygon meshes are turned into generalized meshes.
        radius (float | None): Mollification radius; defaults to δx.
        unity_margin (float): Width of the halo on which Σχ_i = 1 is required.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    generator: str | None = "cartesian"
    file: Path | None = None
    params: dict[str, Any] = Field(default_factory=dict)
    mollify: bool = True
    radius: float | None = Field(default=None, gt=0.0)
    unity_margin: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_source(self) -> Self:
        if self.file is not None:
            if not self.file.is_file():
                msg = f"Mesh file '{self.file}' does not exist"
                raise ValueError(msg)
        elif not self.generator:
            msg = "Either a mesh generator or a mesh file is required"
            raise ValueError(msg)
        return self


class FieldSource(BaseModel):
    """Velocity field of an experiment.

    Attributes:
        name (str): Catalog token or dotted path of the field.
        params (dict[str, Any]): Keyword arguments of the field.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "constant"
    params: dict[str, Any] = Field(default_factory=dict)


_toml_file: ContextVar[Path | None] = ContextVar("toml_file", default=None)


class ExperimentConfig(BaseSettings):
    """Definition of one reproducible experiment run."""

    experiment: str = Field(default="advect", min_length=1)
    mesh: MeshSource = Field(default_factory=MeshSource)
    field: FieldSource = Field(default_factory=FieldSource)
    seminorm: SemiNormParams = Field(default_factory=SemiNormParams)
    stepper: StepperSpec = Field(default_factory=StepperSpec)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    output: Path = Field(default=Path("out"))
    seed: int = Field(default=0)
    params: dict[str, Any] = Field(default_factory=dict)

    model_config = SettingsConfigDict(
        env_prefix="UPWIND_LAB_EXPERIMENT__",
        env_nested_delimiter="__",
        extra="forbid",
        frozen=True,
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Layer dotted overrides over the environment over the TOML file."""
        sources = (init_settings, env_settings, dotenv_settings)
        path = _toml_file.get()
        if path is not None:
            sources += (TomlConfigSettingsSource(settings_cls, toml_file=path),)
        return (*sources, file_secret_settings)

    @classmethod
    def from_toml(
        cls, path: str | Path | None = None, overrides: dict[str, Any] | None = None
    ) -> "ExperimentConfig":
        """Load a config from a TOML file, the environment and dotted-key overrides.

        Overrides win over ``UPWIND_LAB_EXPERIMENT__`` variables, which win over
        the file.

        Args:
            path: TOML file; None starts from the defaults.
            overrides: Values keyed by dotted paths such as ``"params.t_end"``.

        Returns:
            ExperimentConfig: The validated configuration.

        Raises:
            FileNotFoundError: If the file does not exist.
        """
        if path is not None:
            path = Path(path)
            if not path.is_file():
                msg = f"Config file '{path}' not found"
                raise FileNotFoundError(msg)
        data: dict[str, Any] = {}
        for key, value in (overrides or {}).items():
            _set_dotted(data, key, value)
        token = _toml_file.set(path)
        try:
            return cls(**data)
        finally:
            _toml_file.reset(token)


def _set_dotted(data: dict[str, Any], key: str, value: object) -> None:
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = value


_current_settings: ContextVar[Settings] = ContextVar(
    "settings",
    default=Settings(),  # noqa: B039
)


def get_settings() -> Settings:
    """Get the current settings.

    Returns:
        Settings: The current settings.
    """
    return _current_settings.get()


def set_settings(settings: Settings) -> Token[Settings]:
    """Set the current settings.

    Args:
        settings (Settings): The settings to set.

    Returns:
        Token[Settings]: A token that can be used to reset the settings.
    """
    return _current_settings.set(settings)


def reset_settings(token: Token[Settings]) -> None:
    """Reset the current settings to the previous value.

    Args:
        token (Token[Settings]): The token returned by `set_settings`.
    """
    _current_settings.reset(token)
