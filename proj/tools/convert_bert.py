"""Convert a Hugging Face BERT checkpoint into a verbknow encoder archive.

Reads config.json, vocab.txt and model.safetensors from --model-dir. The
result loads with `verbknow ... --encoder pretrained-external
--encoder-checkpoint OUT`.
"""

import argparse
import json
import pathlib

import numpy as np
from safetensors.numpy import load_file

MAGIC = "verbknow-archive 1"


def linear(tensors, src, dst, out):
    # Torch stores out x in; the archive wants in x out.
    out[dst + ".weight"] = tensors[src + ".weight"].T
    out[dst + ".bias"] = tensors[src + ".bias"][None, :]


def norm(tensors, src, dst, out):
    out[dst + ".gamma"] = tensors[src + ".weight"][None, :]
    out[dst + ".beta"] = tensors[src + ".bias"][None, :]


def convert(model_dir, lowercase):
    model_dir = pathlib.Path(model_dir)
    config = json.loads((model_dir / "config.json").read_text())
    vocab = (model_dir / "vocab.txt").read_text(encoding="utf-8").splitlines()
    raw = load_file(str(model_dir / "model.safetensors"))
    tensors = {k.removeprefix("bert."): v.astype(np.float64) for k, v in raw.items()}
    if config.get("hidden_act", "gelu") != "gelu":
        raise SystemExit("only exact-GeLU BERT encoders are supported")

    out = {
        "embeddings.token": tensors["embeddings.word_embeddings.weight"],
        "embeddings.position": tensors["embeddings.position_embeddings.weight"],
        "embeddings.type": tensors["embeddings.token_type_embeddings.weight"],
    }
    norm(tensors, "embeddings.LayerNorm", "embeddings.norm", out)
    for i in range(config["num_hidden_layers"]):
        src, dst = f"encoder.layer.{i}", f"layer.{i}"
        for part in ("query", "key", "value"):
            linear(tensors, f"{src}.attention.self.{part}", f"{dst}.attention.{part}", out)
        linear(tensors, f"{src}.attention.output.dense", f"{dst}.attention.output", out)
        norm(tensors, f"{src}.attention.output.LayerNorm", f"{dst}.attention.norm", out)
        linear(tensors, f"{src}.intermediate.dense", f"{dst}.ffn.in", out)
        linear(tensors, f"{src}.output.dense", f"{dst}.ffn.out", out)
        norm(tensors, f"{src}.output.LayerNorm", f"{dst}.output.norm", out)

    meta = {
        "flavor": "pretrained-external",
        "heads": config["num_attention_heads"],
        "hidden": config["hidden_size"],
        "intermediate": config["intermediate_size"],
        "kind": "encoder",
        "layer_norm_eps": repr(float(config.get("layer_norm_eps", 1e-12))),
        "lowercase": int(lowercase),
        "max_len": config["max_position_embeddings"],
        "num_layers": config["num_hidden_layers"],
        "type_vocab": config.get("type_vocab_size", 2),
    }
    return meta, vocab, out


def write_archive(path, meta, vocab, tensors):
    with open(path, "wb") as f:
        f.write(f"{MAGIC}\n".encode())
        for key in sorted(meta):
            f.write(f"meta {key} {meta[key]}\n".encode())
        f.write(f"list vocab {len(vocab)}\n".encode())
        for token in vocab:
            f.write(f"{token}\n".encode("utf-8"))
        for name in sorted(tensors):
            m = np.atleast_2d(tensors[name])
            f.write(f"tensor {name} {m.shape[0]} {m.shape[1]}\n".encode())
            # Column-major little-endian doubles.
            f.write(m.astype("<f8").tobytes(order="F"))
            f.write(b"\n")
        f.write(b"end\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model-dir", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--cased", action="store_true", help="Disable lowercasing (cased models)")
    args = parser.parse_args()
    meta, vocab, tensors = convert(args.model_dir, not args.cased)
    write_archive(args.out, meta, vocab, tensors)
    print(f"wrote {len(tensors)} tensors, vocabulary {len(vocab)} to {args.out}")


if __name__ == "__main__":
    main()
