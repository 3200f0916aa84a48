"""tapgaze: infer eye-movement scanpaths from touchscreen typing logs.

The package bundles the inference model with everything around it: a
parametric typist+gaze simulator, amortized per-user parameter inference,
scanpath similarity metrics, and the eye-hand coordination analysis suite.
"""
from .core import (
    DEFAULT_GEOMETRY,
    Fixation,
    HumanParams,
    Key,
    KeyboardLayout,
    KeypressLog,
    Scanpath,
    ScreenGeometry,
    TapEvent,
    TypingMetrics,
    compute_typing_metrics,
    decode_text,
    default_layout,
    interkey_intervals,
    key_at,
    region_of,
)

__version__ = "0.1.0"
