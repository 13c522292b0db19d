"""Pipeline configuration: one JSON document, every section optional."""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from signmap.aggregation import AggregationParams
from signmap.evaluation import EvalParams
from signmap.fs import get_config_path, load_model
from signmap.log import logger
from signmap.mapgraph import ICP, MERGE_ICP, IcpParams
from signmap.placards import PlacardParams

class MappingParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    icp: IcpParams = MERGE_ICP
    merge_strategy: Literal["icp", "seed", "none"] = ICP


class ReconstructionParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolution: float = Field(0.03, gt=0)
    z_min: float = 0.2
    z_max: float = 1.8
    min_column_hits: int = Field(3, ge=1)
    # z every keyframe is pinned to
    camera_height: float = 1.2
    correct_drift: bool = True

    @model_validator(mode="after")
    def _slab(self):
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be below z_max")
        return self


class RenderParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scale: int = Field(2, ge=1, le=16)
    tick_length: float = Field(0.3, gt=0)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mapping: MappingParams = MappingParams()
    placards: PlacardParams = PlacardParams()
    reconstruction: ReconstructionParams = ReconstructionParams()
    aggregation: AggregationParams = AggregationParams()
    evaluation: EvalParams = EvalParams()
    render: RenderParams = RenderParams()
    workers: Optional[int] = Field(None, ge=1)


def load_config(path=None):
    """Config from `path`, else from $SIGNMAP_CONFIG, else the defaults"""
    path = path or get_config_path()
    if not path:
        return PipelineConfig()
    logger.debug("Loading config " + path)
    return load_model(PipelineConfig, path)

def dump_config(config=None):
    return (config or PipelineConfig()).model_dump_json(indent=1) + "\n"
