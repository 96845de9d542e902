"""HTTP service exposing the full engine: train, evaluate, predict on files,
run the street-view pipeline, and run the gradient-check suite.

Every endpoint is synchronous and desk-scale. Domain failures surface as
HTTP 400 with a typed error name; API keys never appear in responses.
"""

import os

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .data import (
    load_image_rgb,
    load_split,
    image_to_tensor,
    read_manifest,
    resize_bilinear,
    save_image_rgb,
    save_mask_gray,
    synthetic_dataset,
    tensor_to_image,
)
from .errors import ConfigurationError, LanesegError
from .gradcheck import run_gradcheck
from .geo import (
    FixtureTransport,
    LiveTransport,
    NoImagery,
    RecordingTransport,
    overlay_lane,
    predict_at_current_location,
    redact_key,
    resolve_api_key,
)
from .metrics import evaluate_dataset_metrics, write_metrics_csv
from .model import (
    NetworkConfig,
    build_network,
    forward,
    load_model,
    save_model,
)
from .schemas import (
    ArchSpec,
    ConfusionRow,
    EpochRow,
    EvalRequest,
    EvalResponse,
    FetchRequest,
    FetchResponse,
    GradcheckCheckRow,
    GradcheckRequest,
    GradcheckResponse,
    HealthResponse,
    MetricsRow,
    PredictRequest,
    PredictResponse,
    TrainRequest,
    TrainResponse,
)
from .tensor import Rng, argmax_channel
from .training import TrainConfig, evaluate, train

ARCH_FILENAME = "arch.json"
WEIGHTS_FILENAME = "weights.lseg"
CURVES_FILENAME = "curves.csv"

# Validation sets regenerated alongside --synthetic N training sets use this
# offset so they never collide with training sample seeds.
SYNTHETIC_VAL_SALT = 1 << 32


def parse_dims(text):
    """'HxW' -> (h, w)."""
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"dims must look like 32x64 (HxW), got {text!r}") from None
    if h < 1 or w < 1:
        raise ConfigurationError(f"dims must be positive, got {text!r}")
    return h, w


def parse_size(text):
    """'WxH' -> (w, h)."""
    try:
        w, h = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"size must look like 640x320 (WxH), got {text!r}") from None
    return w, h


def _require_file(path, flag):
    if not os.path.isfile(path):
        raise ConfigurationError(f"file not found: {path} ({flag})")


def _load_training_sets(req, dims):
    if (req.synthetic is None) == (req.manifest is None):
        raise ConfigurationError(
            "exactly one of --synthetic and --manifest must be given")
    if req.synthetic is not None:
        train_set = synthetic_dataset(req.seed, req.synthetic, dims)
        val_count = max(2, round(req.synthetic * 0.25))
        val_set = synthetic_dataset(req.seed, val_count, dims,
                                    salt=SYNTHETIC_VAL_SALT)
        return train_set, val_set
    _require_file(req.manifest, "--manifest")
    manifest = read_manifest(req.manifest)
    train_set = load_split(manifest, "train", dims)
    val_set = load_split(manifest, "val", dims)
    return train_set, val_set


def create_app():
    app = FastAPI(title="laneseg", version=__version__)

    @app.exception_handler(LanesegError)
    async def laneseg_error_handler(request: Request, exc: LanesegError):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "detail": redact_key(str(exc))},
        )

    @app.exception_handler(OSError)
    async def os_error_handler(request: Request, exc: OSError):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "detail": redact_key(str(exc))},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest):
        dims = parse_dims(req.dims)
        arch = req.arch or ArchSpec()
        cfg = NetworkConfig(
            input_dims=(3,) + dims,
            encoder_filters=tuple(arch.encoder_filters),
            kernel_size=arch.kernel_size,
            num_classes=arch.num_classes,
            decoder_order=arch.decoder_order,
        )
        tcfg = TrainConfig(epochs=req.epochs, learning_rate=req.learning_rate,
                           seed=req.seed, batch_size=req.batch_size,
                           normalize_per_pixel=req.normalize_per_pixel)
        train_set, val_set = _load_training_sets(req, dims)
        net = build_network(cfg, Rng(req.seed))
        os.makedirs(req.out_dir, exist_ok=True)
        curves_path = os.path.join(req.out_dir, CURVES_FILENAME)
        curves = train(net, train_set, val_set, tcfg, curves_path=curves_path)
        arch_path = os.path.join(req.out_dir, ARCH_FILENAME)
        weights_path = os.path.join(req.out_dir, WEIGHTS_FILENAME)
        save_model(net, arch_path, weights_path)
        last = curves.records[-1]
        return TrainResponse(
            arch_path=arch_path, weights_path=weights_path,
            curves_path=curves_path, epochs=len(curves.records),
            final=EpochRow(epoch=last.epoch, train_acc=last.train_acc,
                           val_acc=last.val_acc, mean_loss=last.mean_loss),
        )

    @app.post("/evaluate", response_model=EvalResponse)
    def evaluate_endpoint(req: EvalRequest):
        _require_file(req.arch_path, "--model")
        _require_file(req.weights_path, "--model")
        net = load_model(req.arch_path, req.weights_path)
        _, h, w = net.config.input_dims
        if (req.synthetic is None) == (req.manifest is None):
            raise ConfigurationError(
                "exactly one of --synthetic and --manifest must be given")
        if req.synthetic is not None:
            dataset = synthetic_dataset(req.seed, req.synthetic, (h, w))
        else:
            _require_file(req.manifest, "--manifest")
            dataset = load_split(read_manifest(req.manifest), req.split, (h, w))
        pixel_accuracy, mean_loss = evaluate(net, dataset, req.batch_size)
        report = evaluate_dataset_metrics(net, dataset, req.batch_size)
        csv_path = None
        if req.out_path:
            parent = os.path.dirname(os.path.abspath(req.out_path))
            os.makedirs(parent, exist_ok=True)
            write_metrics_csv(req.out_path, [(req.epochs_label, report)])
            csv_path = req.out_path
        return EvalResponse(
            metrics=MetricsRow(
                precision=report.precision, recall=report.recall,
                accuracy_standard=report.accuracy_standard,
                accuracy_paper=report.accuracy_paper, f1=report.f1,
                counts=ConfusionRow(n_tp=report.counts.n_tp, n_fp=report.counts.n_fp,
                                    n_fn=report.counts.n_fn, n_tn=report.counts.n_tn),
            ),
            pixel_accuracy=pixel_accuracy,
            mean_loss=mean_loss,
            csv_path=csv_path,
        )

    @app.post("/predict", response_model=PredictResponse)
    def predict_endpoint(req: PredictRequest):
        _require_file(req.arch_path, "--model")
        _require_file(req.weights_path, "--model")
        net = load_model(req.arch_path, req.weights_path)
        pixels = load_image_rgb(req.image_path)
        _, h, w = net.config.input_dims
        resized = resize_bilinear(image_to_tensor(pixels), (h, w))
        probs, _ = forward(net, resized)
        lane = argmax_channel(probs)[0, 0].astype("uint8")
        source = tensor_to_image(resized)
        out_dir = req.out_dir or os.path.dirname(os.path.abspath(req.image_path))
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(req.image_path))[0]
        mask_path = os.path.join(out_dir, f"{stem}_mask.png")
        overlay_path = os.path.join(out_dir, f"{stem}_overlay.png")
        save_mask_gray(mask_path, lane * 255)
        save_image_rgb(overlay_path, overlay_lane(source, lane))
        return PredictResponse(mask_path=mask_path, overlay_path=overlay_path)

    @app.post("/fetch", response_model=FetchResponse)
    def fetch_endpoint(req: FetchRequest):
        _require_file(req.arch_path, "--model")
        _require_file(req.weights_path, "--model")
        net = load_model(req.arch_path, req.weights_path)
        if req.mode == "fixtures":
            if not req.fixtures_dir:
                raise ConfigurationError("fixtures mode needs --fixtures DIR")
            if not os.path.isdir(req.fixtures_dir):
                raise ConfigurationError(
                    f"fixture directory not found: {req.fixtures_dir} (--fixtures)")
            transport = FixtureTransport(req.fixtures_dir)
            api_key = resolve_api_key(req.api_key) or "test"
        else:
            api_key = resolve_api_key(req.api_key)
            if not api_key:
                raise ConfigurationError(
                    "live mode needs an API key (--key or LANESEG_API_KEY)")
            transport = LiveTransport()
            if req.record_dir:
                transport = RecordingTransport(transport, req.record_dir)
        size = parse_size(req.size)
        result = predict_at_current_location(
            transport, api_key, net, size=size, heading=req.heading,
            fov=req.fov, cache_dir=req.cache_dir)
        if isinstance(result, NoImagery):
            return FetchResponse(outcome="no_imagery", lat=result.location.lat,
                                 lng=result.location.lng)
        os.makedirs(req.out_dir, exist_ok=True)
        source_path = os.path.join(req.out_dir, "source.png")
        mask_path = os.path.join(req.out_dir, "mask.png")
        overlay_path = os.path.join(req.out_dir, "overlay.png")
        save_image_rgb(source_path, result.source)
        save_mask_gray(mask_path, result.mask)
        save_image_rgb(overlay_path, result.overlay)
        return FetchResponse(
            outcome="ok", lat=result.location.lat, lng=result.location.lng,
            pano_id=result.pano_id, source_path=source_path,
            mask_path=mask_path, overlay_path=overlay_path,
        )

    @app.post("/gradcheck", response_model=GradcheckResponse)
    def gradcheck_endpoint(req: GradcheckRequest):
        checks = run_gradcheck(seed=req.seed, step=req.step,
                               threshold=req.threshold, perturb=req.perturb)
        rows = [GradcheckCheckRow(layer=c.layer, max_rel_error=c.max_rel_error,
                                  passed=c.passed) for c in checks]
        return GradcheckResponse(passed=all(c.passed for c in checks), checks=rows)

    return app


app = create_app()
