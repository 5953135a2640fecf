import json
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from admkit.damage import PHASE_CODES, FailureTimes
from admkit.errors import ConfigError
from admkit.models import CensoredSample, Phase, TestConfig

COLUMNS = ["board_id", "time_hours", "censored"]


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def dataset_frame(sample: CensoredSample) -> pd.DataFrame:
    times = [*sample.times, *([sample.config.censor_time] * sample.n_censored)]
    flags = [0] * len(sample.times) + [1] * sample.n_censored
    return pd.DataFrame(
        {
            "board_id": np.arange(1, len(times) + 1, dtype=int),
            "time_hours": np.asarray(times, dtype=float),
            "censored": np.asarray(flags, dtype=int),
        },
        columns=COLUMNS,
    )


def write_dataset(sample: CensoredSample, path: Path) -> tuple[Path, Path]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(sample).to_csv(path, index=False, float_format="%.10g")
    sidecar = sidecar_path(path)
    sidecar.write_text(sample.config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path, sidecar


def read_dataset(path: Path) -> CensoredSample:
    path = Path(path)
    sidecar = sidecar_path(path)
    if not path.exists() or not sidecar.exists():
        raise ConfigError(f"Dataset needs both {path} and {sidecar}.")
    try:
        config = TestConfig.model_validate(json.loads(sidecar.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"{sidecar}: {exc}") from exc

    frame = pd.read_csv(path)
    if list(frame.columns) != COLUMNS:
        raise ConfigError(f"{path}: expected columns {COLUMNS}, found {list(frame.columns)}.")
    if not frame["censored"].isin([0, 1]).all():
        raise ConfigError(f"{path}: censored must be 0 or 1.")
    censored = frame["censored"] == 1
    try:
        return CensoredSample(
            times=frame.loc[~censored, "time_hours"].astype(float).tolist(),
            n_censored=int(censored.sum()),
            config=config.model_copy(update={"n_boards": len(frame)}),
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def phase_breakdown(outcome: FailureTimes, config: TestConfig) -> dict[str, int]:
    observed = outcome.times <= config.censor_time
    ramp = int(np.count_nonzero(observed & (outcome.phases == PHASE_CODES[Phase.RAMP])))
    constant = int(np.count_nonzero(observed & (outcome.phases == PHASE_CODES[Phase.CONSTANT])))
    return {"ramp": ramp, "constant": constant, "censored": len(outcome) - ramp - constant}
