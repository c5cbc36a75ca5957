"""
Pipeline configuration.

One dataclass section per processing stage, loaded from a JSON file and
adjusted with `section.key=value` overrides. Unknown sections or keys are
rejected, and every section is validated before use.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from .data import Modality
from .eda import EdaParams, MIN_FS as EDA_MIN_FS, MAX_FS as EDA_MAX_FS
from .episodes import ClassifierConfig, CpdConfig
from .error_handler import ErrorHandler, ConfigError, MissingFileError, FileWriteError
from .ppg import PpgParams

# Initialize Error Handling
error_handler = ErrorHandler()

EFFECTIVE_CONFIG_NAME = "effective_config.json"

# Modality configurations, in increasing order of processing
CONFIGURATIONS: Dict[str, Tuple[Tuple[Modality, ...], bool]] = {
    "eeg_raw": ((Modality.EEG,), False),
    "eeg_recon": ((Modality.EEG,), True),
    "eeg_recon_gsr": ((Modality.EEG, Modality.GSR), True),
    "eeg_recon_gsr_ppg": ((Modality.EEG, Modality.GSR, Modality.PPG), True),
}

CONFIGURATION_LABELS = {
    "eeg_raw": "EEG(r)",
    "eeg_recon": "EEG(re)",
    "eeg_recon_gsr": "EEG(re)+GSR",
    "eeg_recon_gsr_ppg": "EEG(re)+GSR+PPG",
}


@dataclass(frozen=True)
class DspConfig:
    target_fs: float = 32.0
    anti_alias_cutoff_hz: float = 14.0
    anti_alias_order: int = 4
    gsr_low_hz: float = 0.1
    gsr_high_hz: float = 5.0
    gsr_order: int = 2

    def validate(self) -> None:
        if self.target_fs <= 0:
            raise ConfigError("dsp.target_fs must be positive")
        if not 0 < self.anti_alias_cutoff_hz <= self.target_fs / 2.0:
            raise ConfigError(
                f"dsp.anti_alias_cutoff_hz must not exceed the target Nyquist {self.target_fs / 2.0} Hz"
            )
        if not 0 < self.gsr_low_hz < self.gsr_high_hz:
            raise ConfigError("dsp GSR band edges must satisfy 0 < low < high")
        if self.anti_alias_order < 1 or self.gsr_order < 1:
            raise ConfigError("dsp filter orders must be >= 1")


@dataclass(frozen=True)
class EegConfig:
    n_components: Optional[int] = None
    max_iter: int = 200
    tol: float = 1e-4
    kurtosis_threshold: float = 8.0
    variance_share_threshold: float = 0.6
    similarity_floor: float = 0.7
    exclude: Optional[Tuple[int, ...]] = None
    model_path: Optional[str] = None

    def validate(self) -> None:
        if self.n_components is not None and self.n_components < 1:
            raise ConfigError("eeg.n_components must be >= 1")
        if self.max_iter < 1 or self.tol <= 0:
            raise ConfigError("eeg.max_iter and eeg.tol must be positive")
        if not 0 < self.variance_share_threshold <= 1:
            raise ConfigError("eeg.variance_share_threshold must be in (0, 1]")
        if not -1 <= self.similarity_floor <= 1:
            raise ConfigError("eeg.similarity_floor must be in [-1, 1]")


@dataclass(frozen=True)
class FusionConfig:
    configuration: str = "eeg_recon_gsr_ppg"

    def validate(self) -> None:
        if self.configuration not in CONFIGURATIONS:
            raise ConfigError(
                f"fusion.configuration must be one of {list(CONFIGURATIONS)}, "
                f"got '{self.configuration}'"
            )


@dataclass(frozen=True)
class MetricsConfig:
    tol_s: float = 2.0
    frame_size: int = 64
    dtw_radius: int = 1
    profile_repetitions: int = 5
    data_range: float = 255.0

    def validate(self) -> None:
        if self.tol_s < 0:
            raise ConfigError("metrics.tol_s must be >= 0")
        if self.frame_size < 8:
            raise ConfigError("metrics.frame_size must be >= 8")
        if self.dtw_radius < 0:
            raise ConfigError("metrics.dtw_radius must be >= 0")
        if self.profile_repetitions < 5:
            raise ConfigError("metrics.profile_repetitions must be >= 5")


def _validate_eda(params: EdaParams) -> None:
    if params.tau0 <= 0 or params.tau1 <= 0 or params.tau0 == params.tau1:
        raise ConfigError("eda.tau0 and eda.tau1 must be positive and distinct")
    if params.alpha < 0 or params.gamma < 0 or params.knot_spacing_s <= 0:
        raise ConfigError("eda penalties must be >= 0 and knot spacing positive")
    if params.max_iter < 1:
        raise ConfigError("eda.max_iter must be >= 1")


def _validate_ppg(params: PpgParams) -> None:
    if not 0 < params.low_hz < params.high_hz:
        raise ConfigError("ppg band edges must satisfy 0 < low < high")
    if not 0 < params.min_ibi_s < params.max_ibi_s:
        raise ConfigError("ppg IBI bounds must satisfy 0 < min < max")
    if params.peak_window_s <= 0 or params.beat_window_s <= params.peak_window_s:
        raise ConfigError("ppg beat window must be longer than the peak window")


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    eeg: EegConfig = field(default_factory=EegConfig)
    eda: EdaParams = field(default_factory=EdaParams)
    ppg: PpgParams = field(default_factory=PpgParams)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    cpd: CpdConfig = field(default_factory=CpdConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0
    output_dir: str = "out"

    def validate(self) -> "PipelineConfig":
        """
        Raises:
            ConfigError: If any section violates its module's preconditions.
        """
        self.dsp.validate()
        self.eeg.validate()
        _validate_eda(self.eda)
        if not EDA_MIN_FS <= self.dsp.target_fs <= EDA_MAX_FS:
            raise ConfigError(
                f"dsp.target_fs {self.dsp.target_fs} Hz is outside the EDA range "
                f"[{EDA_MIN_FS}, {EDA_MAX_FS}] Hz"
            )
        _validate_ppg(self.ppg)
        self.fusion.validate()
        self.cpd.validate()
        self.classifier.validate()
        self.metrics.validate()
        return self


SECTIONS = tuple(f.name for f in fields(PipelineConfig) if f.name not in ("seed", "output_dir"))


def _coerce(value: Any, default: Any) -> Any:
    if isinstance(value, list):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _update_section(section: Any, values: Dict[str, Any], name: str) -> Any:
    known = {f.name for f in fields(section)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"Unknown key(s) in section '{name}': {sorted(unknown)}")
    return replace(
        section, **{k: _coerce(v, getattr(section, k)) for k, v in values.items()}
    )


def config_from_dict(raw: Dict[str, Any], base: Optional[PipelineConfig] = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    updates: Dict[str, Any] = {}
    for key, value in raw.items():
        if key in ("seed", "output_dir"):
            updates[key] = value
        elif key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"Section '{key}' must be an object")
            updates[key] = _update_section(getattr(cfg, key), value, key)
        else:
            raise ConfigError(f"Unknown configuration section '{key}'")
    return replace(cfg, **updates).validate()


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """
    Defaults, updated from a JSON file when one is given.

    Raises:
        MissingFileError: If the file does not exist.
        ConfigError: For malformed JSON, unknown keys or invalid values.
    """
    if path is None:
        return PipelineConfig().validate()
    config_path = Path(path)
    if not config_path.exists():
        raise MissingFileError(f"Configuration file not found: {path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} line {e.lineno}: {e.msg}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return config_from_dict(raw)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: PipelineConfig, overrides: Sequence[str]) -> PipelineConfig:
    """Apply `section.key=value` (or `seed=value`) overrides; values parse as JSON."""
    raw: Dict[str, Any] = {}
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"Override '{item}' is not of the form section.key=value")
        section, dot, name = key.strip().partition(".")
        if dot:
            raw.setdefault(section, {})[name] = _parse_value(text)
        else:
            raw[section] = _parse_value(text)
    return config_from_dict(raw, cfg) if raw else cfg


def to_dict(cfg: PipelineConfig) -> Dict[str, Any]:
    # JSON round trip turns tuples into lists
    return json.loads(json.dumps(asdict(cfg)))


def write_effective(cfg: PipelineConfig, directory: str) -> str:
    path = Path(directory) / EFFECTIVE_CONFIG_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(f"Cannot write '{path}': {e}")
    return str(path)
