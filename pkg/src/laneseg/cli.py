"""Command-line entry point: a thin client over the HTTP service.

Commands run against an in-process instance of the service by default, so
no socket or daemon is needed; `--server URL` points them at a remote
instance instead, and `laneseg serve` starts one.

Exit codes: 0 success, 1 any error, 2 the street-view pipeline's typed
no-imagery outcome.
"""

import argparse
import asyncio
import os
import sys

import httpx

from .service import ARCH_FILENAME, WEIGHTS_FILENAME

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_IMAGERY = 2


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for no-imagery."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = CliParser(prog="laneseg",
                       description="Lane segmentation: train, evaluate, and "
                                   "run the street-view pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in-process")

    p = sub.add_parser("train", help="train a model", parents=[common])
    p.add_argument("--out", required=True, help="output directory for model and curves")
    p.add_argument("--synthetic", type=int, default=None, metavar="N",
                   help="train on N generated lane samples")
    p.add_argument("--manifest", default=None, help="dataset manifest (TSV)")
    p.add_argument("--dims", default="160x320", help="working resolution HxW")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters", default="8,16,32",
                   help="encoder filter counts, comma separated")
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--decoder-order", choices=("paper", "conventional"),
                   default="paper")
    p.add_argument("--normalize-per-pixel", action="store_true",
                   help="divide the loss by pixel count as well as image count")

    p = sub.add_parser("eval", parents=[common], help="evaluate a model and write a metrics row")
    p.add_argument("--model", required=True, help="directory holding the model files")
    p.add_argument("--synthetic", type=int, default=None, metavar="N")
    p.add_argument("--manifest", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=20)
    p.add_argument("--epochs-label", default="",
                   help="value of the first metrics CSV column")
    p.add_argument("--out", default=None,
                   help="directory for metrics.csv (default: the model directory)")

    p = sub.add_parser("predict", parents=[common], help="segment one image file")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", default=None,
                   help="output directory (default: next to the input)")

    p = sub.add_parser("fetch", parents=[common], help="run the locate-fetch-segment pipeline")
    p.add_argument("--model", required=True)
    p.add_argument("--fixtures", default=None, metavar="DIR",
                   help="replay recorded responses from DIR (offline)")
    p.add_argument("--live", action="store_true", help="talk to the real APIs")
    p.add_argument("--key", default=None,
                   help="API key (default: LANESEG_API_KEY)")
    p.add_argument("--size", default="640x320", help="street-view image WxH")
    p.add_argument("--heading", type=float, default=0.0)
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--cache", default=None, metavar="DIR",
                   help="cache fetched images under DIR")
    p.add_argument("--record", default=None, metavar="DIR",
                   help="record live responses as fixtures under DIR")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--perturb", choices=("weights",), default=None,
                   help="deliberately skew one gradient to prove the harness fails")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _body_of(resp):
    try:
        return resp.json()
    except ValueError:
        return {"error": f"HTTP {resp.status_code}", "detail": resp.text}


def call_service(server, path, payload):
    """POST one JSON request, in-process unless a server URL is given."""
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            resp = client.post(path, json=payload)
            return resp.status_code, _body_of(resp)

    async def _run():
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://laneseg.internal",
                                     timeout=None) as client:
            resp = await client.post(path, json=payload)
            return resp.status_code, _body_of(resp)

    return asyncio.run(_run())


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _report_http_error(body):
    if isinstance(body, dict) and "error" in body:
        return _fail(f"{body['error']}: {body.get('detail', '')}")
    return _fail(str(body))


def _model_paths(model_dir):
    arch = os.path.join(model_dir, ARCH_FILENAME)
    weights = os.path.join(model_dir, WEIGHTS_FILENAME)
    for path in (arch, weights):
        if not os.path.isfile(path):
            raise FileNotFoundError(f"model file not found: {path} (--model)")
    return arch, weights


def _check_file(path, flag):
    if path is not None and not os.path.isfile(path):
        raise FileNotFoundError(f"file not found: {path} ({flag})")


def cmd_train(args):
    _check_file(args.manifest, "--manifest")
    if (args.synthetic is None) == (args.manifest is None):
        return _fail("exactly one of --synthetic and --manifest is required")
    payload = {
        "out_dir": args.out,
        "dims": args.dims,
        "synthetic": args.synthetic,
        "manifest": args.manifest,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "seed": args.seed,
        "normalize_per_pixel": args.normalize_per_pixel,
        "arch": {
            "encoder_filters": [int(f) for f in args.filters.split(",")],
            "kernel_size": args.kernel,
            "decoder_order": args.decoder_order,
        },
    }
    status, body = call_service(args.server, "/train", payload)
    if status != 200:
        return _report_http_error(body)
    final = body["final"]
    print(f"trained {body['epochs']} epochs: "
          f"train_acc={final['train_acc']:.6f} val_acc={final['val_acc']:.6f} "
          f"mean_loss={final['mean_loss']:.6f}")
    print(f"model: {body['arch_path']} + {body['weights_path']}")
    print(f"curves: {body['curves_path']}")
    return EXIT_OK


def cmd_eval(args):
    arch, weights = _model_paths(args.model)
    _check_file(args.manifest, "--manifest")
    if (args.synthetic is None) == (args.manifest is None):
        return _fail("exactly one of --synthetic and --manifest is required")
    out_dir = args.out or args.model
    payload = {
        "arch_path": arch,
        "weights_path": weights,
        "synthetic": args.synthetic,
        "manifest": args.manifest,
        "split": args.split,
        "seed": args.seed,
        "batch_size": args.batch,
        "epochs_label": args.epochs_label,
        "out_path": os.path.join(out_dir, "metrics.csv"),
    }
    status, body = call_service(args.server, "/evaluate", payload)
    if status != 200:
        return _report_http_error(body)
    m = body["metrics"]
    print("epochs,precision,recall,accuracy_standard,accuracy_paper,f1")
    print(f"{args.epochs_label},{m['precision']:.6f},{m['recall']:.6f},"
          f"{m['accuracy_standard']:.6f},{m['accuracy_paper']:.6f},{m['f1']:.6f}")
    print(f"pixel_accuracy={body['pixel_accuracy']:.6f} "
          f"mean_loss={body['mean_loss']:.6f}")
    print(f"metrics: {body['csv_path']}")
    return EXIT_OK


def cmd_predict(args):
    arch, weights = _model_paths(args.model)
    _check_file(args.image, "--image")
    payload = {
        "arch_path": arch,
        "weights_path": weights,
        "image_path": args.image,
        "out_dir": args.out,
    }
    status, body = call_service(args.server, "/predict", payload)
    if status != 200:
        return _report_http_error(body)
    print(f"mask: {body['mask_path']}")
    print(f"overlay: {body['overlay_path']}")
    return EXIT_OK


def cmd_fetch(args):
    arch, weights = _model_paths(args.model)
    if bool(args.fixtures) == bool(args.live):
        return _fail("exactly one of --fixtures and --live is required")
    if args.fixtures and not os.path.isdir(args.fixtures):
        return _fail(f"fixture directory not found: {args.fixtures} (--fixtures)")
    if args.live and not (args.key or os.environ.get("LANESEG_API_KEY")):
        return _fail("live mode needs an API key (--key or LANESEG_API_KEY)")
    payload = {
        "arch_path": arch,
        "weights_path": weights,
        "out_dir": args.out,
        "mode": "fixtures" if args.fixtures else "live",
        "fixtures_dir": args.fixtures,
        "api_key": args.key,
        "size": args.size,
        "heading": args.heading,
        "fov": args.fov,
        "cache_dir": args.cache,
        "record_dir": args.record,
    }
    status, body = call_service(args.server, "/fetch", payload)
    if status != 200:
        return _report_http_error(body)
    if body["outcome"] == "no_imagery":
        print(f"no street-view imagery at ({body['lat']:.6f}, {body['lng']:.6f})")
        return EXIT_NO_IMAGERY
    print(f"location: ({body['lat']:.6f}, {body['lng']:.6f}) pano {body['pano_id']}")
    print(f"source: {body['source_path']}")
    print(f"mask: {body['mask_path']}")
    print(f"overlay: {body['overlay_path']}")
    return EXIT_OK


def cmd_gradcheck(args):
    payload = {
        "seed": args.seed,
        "step": args.step,
        "threshold": args.threshold,
        "perturb": args.perturb,
    }
    status, body = call_service(args.server, "/gradcheck", payload)
    if status != 200:
        return _report_http_error(body)
    for check in body["checks"]:
        verdict = "pass" if check["passed"] else "FAIL"
        print(f"{check['layer']}: max_rel_error={check['max_rel_error']:.3e} "
              f"{verdict}")
    if not body["passed"]:
        failing = [c["layer"] for c in body["checks"] if not c["passed"]]
        return _fail(f"gradient check failed for: {', '.join(failing)}")
    print("all gradients match finite differences")
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    uvicorn.run("laneseg.service:app", host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "fetch": cmd_fetch,
    "gradcheck": cmd_gradcheck,
    "serve": cmd_serve,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command]
    try:
        return handler(args)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    except httpx.HTTPError as exc:
        return _fail(f"cannot reach the service: {exc}")


if __name__ == "__main__":
    sys.exit(main())
