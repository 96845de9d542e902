"""Request and response bodies of the HTTP service.

Every operation the service exposes is a synchronous desk-scale call; the
schemas carry filesystem paths rather than payloads, since the CLI and the
service share a machine in the default in-process setup.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ArchSpec(BaseModel):
    encoder_filters: List[int] = [8, 16, 32]
    kernel_size: int = 3
    num_classes: int = 2
    decoder_order: Literal["paper", "conventional"] = "paper"


class TrainRequest(BaseModel):
    out_dir: str
    dims: str = "160x320"  # HxW
    synthetic: Optional[int] = Field(default=None, ge=1)
    manifest: Optional[str] = None
    epochs: int = Field(default=1, ge=1)
    batch_size: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=0.1, gt=0)
    seed: int = 0
    normalize_per_pixel: bool = False
    arch: ArchSpec = ArchSpec()


class EpochRow(BaseModel):
    epoch: int
    train_acc: float
    val_acc: float
    mean_loss: float


class TrainResponse(BaseModel):
    arch_path: str
    weights_path: str
    curves_path: str
    epochs: int
    final: EpochRow


class ConfusionRow(BaseModel):
    n_tp: int
    n_fp: int
    n_fn: int
    n_tn: int


class MetricsRow(BaseModel):
    precision: float
    recall: float
    accuracy_standard: float
    accuracy_paper: float
    f1: float
    counts: ConfusionRow


class EvalRequest(BaseModel):
    arch_path: str
    weights_path: str
    synthetic: Optional[int] = Field(default=None, ge=1)
    manifest: Optional[str] = None
    split: Literal["train", "val", "test"] = "test"
    seed: int = 0
    batch_size: int = Field(default=20, ge=1)
    epochs_label: str = ""
    out_path: Optional[str] = None


class EvalResponse(BaseModel):
    metrics: MetricsRow
    pixel_accuracy: float
    mean_loss: float
    csv_path: Optional[str] = None


class PredictRequest(BaseModel):
    arch_path: str
    weights_path: str
    image_path: str
    out_dir: Optional[str] = None


class PredictResponse(BaseModel):
    mask_path: str
    overlay_path: str


class FetchRequest(BaseModel):
    arch_path: str
    weights_path: str
    out_dir: str
    mode: Literal["fixtures", "live"]
    fixtures_dir: Optional[str] = None
    api_key: Optional[str] = None
    size: str = "640x320"  # WxH
    heading: float = 0.0
    fov: float = 90.0
    cache_dir: Optional[str] = None
    record_dir: Optional[str] = None


class FetchResponse(BaseModel):
    outcome: Literal["ok", "no_imagery"]
    lat: float
    lng: float
    pano_id: Optional[str] = None
    source_path: Optional[str] = None
    mask_path: Optional[str] = None
    overlay_path: Optional[str] = None


class GradcheckRequest(BaseModel):
    seed: int = 0
    step: float = Field(default=1e-5, gt=0)
    threshold: float = Field(default=1e-4, gt=0)
    perturb: Optional[Literal["weights"]] = None


class GradcheckCheckRow(BaseModel):
    layer: str
    max_rel_error: float
    passed: bool


class GradcheckResponse(BaseModel):
    passed: bool
    checks: List[GradcheckCheckRow]


class ErrorBody(BaseModel):
    error: str
    detail: str
