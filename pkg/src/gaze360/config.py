"""Pipeline configuration file (``key = value`` with ``[section]`` headers).

Unknown sections or keys are rejected. Command-line flags override file
values; see README for the full key list.
"""

import configparser
from dataclasses import dataclass, field, replace
from typing import Optional

from .attention import ThresholdPolicy, WindowConfig
from .dataset import SplitSpec, TRAIN_TOWNS, VAL_TOWNS
from .errors import BadConfig
from .geometry import DEFAULT_MIN_CONFIDENCE
from .metrics import KLD_EPS

SCHEMA = {
    "paths": {"session": str, "output": str},
    "window": {"k": int, "sigma": float},
    "threshold": {"ratio": float, "mode": str},
    "calibration": {"min_confidence": float},
    "metrics": {"eps": float, "lambda_sal": float, "lambda_seg": float},
    "split": {"train_towns": "towns", "val_towns": "towns"},
    "run": {"jobs": int},
    "synth": {"frames": int, "scene_width": int, "scene_height": int, "screens": int,
              "instances": int, "low_confidence_rate": float, "head_motion_px": float,
              "gaze_jitter_px": float, "script": str},
}


@dataclass
class PipelineConfig:
    session: Optional[str] = None
    output: Optional[str] = None
    k: int = 30
    sigma: Optional[float] = None
    tau_ratio: float = 0.5
    tau_mode: str = "relative"
    min_confidence: float = DEFAULT_MIN_CONFIDENCE
    eps: float = KLD_EPS
    lambda_sal: float = 1.0
    lambda_seg: float = 1.0
    train_towns: frozenset = TRAIN_TOWNS
    val_towns: frozenset = VAL_TOWNS
    jobs: Optional[int] = None
    synth: dict = field(default_factory=dict)

    def validate(self) -> "PipelineConfig":
        self.window()
        self.threshold()
        self.split_spec()
        if not 0.0 <= self.min_confidence <= 1.0:
            raise BadConfig("min_confidence must lie in [0, 1]")
        if not 0.0 <= self.eps < 1.0:
            raise BadConfig("eps must lie in [0, 1)")
        if self.lambda_sal < 0 or self.lambda_seg < 0:
            raise BadConfig("loss weights must be nonnegative")
        if self.jobs is not None and self.jobs < 1:
            raise BadConfig("jobs must be >= 1")
        return self

    def window(self) -> WindowConfig:
        return WindowConfig(self.k, self.sigma)

    def threshold(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.tau_ratio, self.tau_mode)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_towns, self.val_towns)

    def override(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_FIELD = {
    ("paths", "session"): "session", ("paths", "output"): "output",
    ("window", "k"): "k", ("window", "sigma"): "sigma",
    ("threshold", "ratio"): "tau_ratio", ("threshold", "mode"): "tau_mode",
    ("calibration", "min_confidence"): "min_confidence",
    ("metrics", "eps"): "eps", ("metrics", "lambda_sal"): "lambda_sal",
    ("metrics", "lambda_seg"): "lambda_seg",
    ("split", "train_towns"): "train_towns", ("split", "val_towns"): "val_towns",
    ("run", "jobs"): "jobs",
}


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise BadConfig(str(e)) from e
    values = {}
    synth = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise BadConfig(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            kind = SCHEMA[section].get(key)
            if kind is None:
                raise BadConfig(f"unknown key {key!r} in [{section}]")
            try:
                if kind == "towns":
                    val = frozenset(int(t) for t in raw.replace(",", " ").split())
                else:
                    val = kind(raw)
            except ValueError as e:
                raise BadConfig(f"[{section}] {key}: {e}") from e
            if section == "synth":
                synth[key] = val
            else:
                values[_FIELD[(section, key)]] = val
    return PipelineConfig(synth=synth, **values).validate()


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return parse_config(fh.read())
