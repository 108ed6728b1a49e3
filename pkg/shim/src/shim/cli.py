import argparse
import sys

from . import __version__
from .finetune import FinetuneConfig, finetune
from .server import ShimConfig, serve_embeddings


def cmd_serve(args) -> int:
    serve_embeddings(ShimConfig(
        model=args.model, device=args.device, host=args.host,
        port=args.port, max_batch=args.max_batch,
    ))
    return 0


def cmd_finetune(args) -> int:
    cfg = FinetuneConfig(
        batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs,
        margin=args.margin, seed=args.seed, device=args.device,
    )
    result = finetune(args.pairs, args.out, args.model, cfg)
    print(f"model ({result.dim}d, {result.n_pairs} pairs) -> {result.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shim", description="Embedding sidecar for the database router."
    )
    parser.add_argument("--version", action="version", version=f"shim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve /v1/embed for one model")
    p.add_argument("--model", default="all-mpnet-base-v2",
                   help="sentence-transformers id, hashed:<dim>, or a fine-tuned directory")
    p.add_argument("--device", default="cpu")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8089)
    p.add_argument("--max-batch", type=int, default=64)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("finetune", help="contrastive fine-tuning from a pair file")
    p.add_argument("--pairs", required=True, help="line-delimited JSON pair file")
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--model", default="all-mpnet-base-v2")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-6)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_finetune)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
