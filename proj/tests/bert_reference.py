"""Writes a random tiny BERT in Hugging Face layout, converts it, and stores a
numpy forward pass as the reference for the C++ encoder."""

import json
import math
import pathlib
import subprocess
import sys

import numpy as np
from safetensors.numpy import save_file

H, LAYERS, HEADS, INTER, MAXLEN = 8, 2, 2, 16, 16
VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "walk", "march", "##ed"]
IDS = [2, 5, 7, 3, 6, 3]
TYPES = [0, 0, 0, 0, 1, 1]


def gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def layer_norm(x, g, b, eps=1e-12):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def main(out_dir, converter):
    out = pathlib.Path(out_dir)
    rng = np.random.default_rng(0)
    w = {}

    def param(name, *shape):
        w[name] = rng.normal(0, 0.5, shape).astype(np.float32)

    param("bert.embeddings.word_embeddings.weight", len(VOCAB), H)
    param("bert.embeddings.position_embeddings.weight", MAXLEN, H)
    param("bert.embeddings.token_type_embeddings.weight", 2, H)
    param("bert.embeddings.LayerNorm.weight", H)
    param("bert.embeddings.LayerNorm.bias", H)
    for i in range(LAYERS):
        p = f"bert.encoder.layer.{i}"
        for part in ("attention.self.query", "attention.self.key", "attention.self.value", "attention.output.dense"):
            param(f"{p}.{part}.weight", H, H)
            param(f"{p}.{part}.bias", H)
        param(f"{p}.intermediate.dense.weight", INTER, H)
        param(f"{p}.intermediate.dense.bias", INTER)
        param(f"{p}.output.dense.weight", H, INTER)
        param(f"{p}.output.dense.bias", H)
        for ln in ("attention.output.LayerNorm", "output.LayerNorm"):
            param(f"{p}.{ln}.weight", H)
            param(f"{p}.{ln}.bias", H)
    save_file(w, str(out / "model.safetensors"))
    (out / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    (out / "config.json").write_text(json.dumps({
        "hidden_size": H, "num_hidden_layers": LAYERS, "num_attention_heads": HEADS,
        "intermediate_size": INTER, "max_position_embeddings": MAXLEN, "type_vocab_size": 2,
        "layer_norm_eps": 1e-12, "hidden_act": "gelu"}))

    f = {k: v.astype(np.float64) for k, v in w.items()}
    e = "bert.embeddings."
    x = f[e + "word_embeddings.weight"][IDS] + f[e + "position_embeddings.weight"][: len(IDS)]
    x = layer_norm(x + f[e + "token_type_embeddings.weight"][TYPES], f[e + "LayerNorm.weight"], f[e + "LayerNorm.bias"])
    d = H // HEADS
    for i in range(LAYERS):
        p = f"bert.encoder.layer.{i}."

        def lin(name, v):
            return v @ f[p + name + ".weight"].T + f[p + name + ".bias"]

        q, k, v = (lin(f"attention.self.{n}", x) for n in ("query", "key", "value"))
        ctx = np.zeros_like(x)
        for h in range(HEADS):
            s = slice(h * d, (h + 1) * d)
            a = q[:, s] @ k[:, s].T / math.sqrt(d)
            a = np.exp(a - a.max(-1, keepdims=True))
            ctx[:, s] = (a / a.sum(-1, keepdims=True)) @ v[:, s]
        x = layer_norm(lin("attention.output.dense", ctx) + x, f[p + "attention.output.LayerNorm.weight"],
                       f[p + "attention.output.LayerNorm.bias"])
        y = lin("output.dense", gelu(lin("intermediate.dense", x)))
        x = layer_norm(y + x, f[p + "output.LayerNorm.weight"], f[p + "output.LayerNorm.bias"])

    with open(out / "reference.txt", "w") as fh:
        fh.write(" ".join(map(str, IDS)) + "\n" + " ".join(map(str, TYPES)) + "\n")
        for row in x:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    subprocess.run([sys.executable, converter, "--model-dir", str(out), "--out", str(out / "encoder.ckpt"), "--cased"],
                   check=True, stdout=subprocess.DEVNULL)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
