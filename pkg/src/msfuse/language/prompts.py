from __future__ import annotations

from dataclasses import asdict, dataclass, fields

DEFAULT_P_RGB = "In this RGB image, what is in the green box?"
DEFAULT_P_T = "In this thermal image, what is in the green box?"
DEFAULT_P_SINGLE = (
    "First, predict what is in the RGB image based on d_RGB. "
    "And predict what is in the thermal image based on d_T. "
    "Please answer in the format : [class, prediction score]"
)
DEFAULT_P_MULTI = (
    "Based on the descriptions and your answers, predict what is in these aligned "
    "RGB and thermal images. Please answer in the format: [class, prediction score]"
)
REPAIR_PROMPT = "Please answer only in the format: [class, prediction score]"

# marks the second-step context; the mock client keys its reply shape on it
ANSWERS_TAG = "answers:"


@dataclass(frozen=True)
class PromptTemplates:
    p_rgb: str = DEFAULT_P_RGB
    p_t: str = DEFAULT_P_T
    p_single: str = DEFAULT_P_SINGLE
    p_multi: str = DEFAULT_P_MULTI

    @classmethod
    def from_dict(cls, data: dict | None) -> "PromptTemplates":
        data = data or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown prompt keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def single_context(d_rgb: str, d_t: str) -> str:
    return f"RGB image description: {d_rgb}\nthermal image description: {d_t}"


def multi_context(d_rgb: str, d_t: str, s_rgb: float, s_t: float) -> str:
    return f"{single_context(d_rgb, d_t)}\n{ANSWERS_TAG} {s_rgb!r}, and {s_t!r}"
