"""Builds the test fixtures that pin the engine and BPE tokenizer to reference implementations.

tests/fixtures/bpe_tiny/      vocab.json, merges.txt from a byte-level BPE trained with
                              HF tokenizers, plus cases.json (text -> reference ids)
tests/fixtures/gpt2_tiny/     randomly initialised transformers GPT-2 (2 layers) in the engine's
                              manifest format, plus golden.json and per-prompt
                              <name>.ids.csv / <name>.logits.f32 from the reference forward

Usage: python scripts/make_parity_fixtures.py
"""

import json
import pathlib
import random
import struct

import torch
from tokenizers import ByteLevelBPETokenizer
from transformers import GPT2Config, GPT2LMHeadModel

from toy_task import SST2_TEMPLATES, make_sentence

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "tests/fixtures"

EXTRA_TEXT = [
    "It's a film we'll remember; they've said so, and you're right.",
    "Prices rose 12.5% in 2023 -- roughly 1,204 units!",
    "Café, naïve, façade: déjà vu.",
    "Ünïcödé   spaced    words\tand\ttabs\nnew lines\r\n",
    "Numbers 1234567 and 42 and 7",
    "日本語のテキスト and 中文 mixed in.",
    "emoji 🙂 and symbols © ® ™ ≠ ≥",
    "Question: what is it? Type: Entity",
]

BPE_CASES = [
    "",
    "Sentence: a great movie Sentiment: positive",
    " positive",
    " negative",
    "hello world",
    "  leading spaces",
    "trailing spaces   ",
    "It's they'll we've I'm you'd she's",
    "IT'S SHOUTING",
    "numbers 123 4567 89",
    "Café naïve déjà vu",
    "tabs\tand\nnewlines\n\n",
    "日本語 中文",
    "🙂🙂 ok",
    "x" * 40,
    "a non-breaking space",
    "mixed123abc 4x4",
    "Review: the plot was dull It was bad\nReview: fun cast It was good\n",
]

PROMPTS = [
    ("short", "Sentence: a great movie Sentiment:"),
    ("demo", "Sentence: the film was very dull Sentiment: negative\nSentence: witty and warm story Sentiment:"),
    ("unicode", "Café naïve 🙂 and 12.5% more"),
    ("long", None),  # filled with generated text up to 60 tokens
]


def corpus():
    rng = random.Random(7)
    lines = []
    for _ in range(3000):
        pattern, verbs = rng.choice(SST2_TEMPLATES)
        label = rng.randrange(2)
        lines.append(pattern.replace("{text}", make_sentence(rng, label)).replace("{answer}", verbs[label]))
    return lines + EXTRA_TEXT * 20


def build_bpe():
    out = FIX / "bpe_tiny"
    out.mkdir(parents=True, exist_ok=True)
    tok = ByteLevelBPETokenizer()
    tok.train_from_iterator(corpus(), vocab_size=600, min_frequency=2, show_progress=False)
    tok.save_model(str(out))
    cases = [{"text": t, "ids": tok.encode(t).ids} for t in BPE_CASES]
    (out / "cases.json").write_text(json.dumps(cases, indent=1, ensure_ascii=False) + "\n")
    return tok


def write_manifest(model, out, vocab_size, cfg):
    sd = {k: v.detach().float().contiguous() for k, v in model.state_dict().items()}
    blob = bytearray()
    tensors = []

    def add(name, t):
        t = t.contiguous()
        off = len(blob)
        blob.extend(struct.pack("<%df" % t.numel(), *t.flatten().tolist()))
        tensors.append({"name": name, "shape": list(t.shape), "dtype": "f32", "file": "weights.bin",
                        "byte_offset": off})
        return off

    d = cfg.n_embd
    wte = add("wte", sd["transformer.wte.weight"])
    add("wpe", sd["transformer.wpe.weight"])
    for l in range(cfg.n_layer):
        p = f"transformer.h.{l}."
        e = f"h.{l}."
        add(e + "ln_1.weight", sd[p + "ln_1.weight"])
        add(e + "ln_1.bias", sd[p + "ln_1.bias"])
        # Conv1D stores [in, out]; the engine wants [out, in]
        w = sd[p + "attn.c_attn.weight"].T
        b = sd[p + "attn.c_attn.bias"]
        for i, n in enumerate("qkv"):
            add(e + f"attn.{n}.weight", w[i * d:(i + 1) * d])
            add(e + f"attn.{n}.bias", b[i * d:(i + 1) * d])
        add(e + "attn.proj.weight", sd[p + "attn.c_proj.weight"].T)
        add(e + "attn.proj.bias", sd[p + "attn.c_proj.bias"])
        add(e + "ln_2.weight", sd[p + "ln_2.weight"])
        add(e + "ln_2.bias", sd[p + "ln_2.bias"])
        add(e + "mlp.fc.weight", sd[p + "mlp.c_fc.weight"].T)
        add(e + "mlp.fc.bias", sd[p + "mlp.c_fc.bias"])
        add(e + "mlp.proj.weight", sd[p + "mlp.c_proj.weight"].T)
        add(e + "mlp.proj.bias", sd[p + "mlp.c_proj.bias"])
    add("ln_f.weight", sd["transformer.ln_f.weight"])
    add("ln_f.bias", sd["transformer.ln_f.bias"])
    tensors.append({"name": "lm_head.weight", "shape": [vocab_size, d], "dtype": "f32", "file": "weights.bin",
                    "byte_offset": wte})
    (out / "weights.bin").write_bytes(bytes(blob))
    manifest = {
        "format_version": 1,
        "config": {"n_layers": cfg.n_layer, "n_heads": cfg.n_head, "d_model": d, "d_ff": 4 * d,
                   "vocab_size": vocab_size, "max_seq_len": cfg.n_positions,
                   "layernorm_eps": cfg.layer_norm_epsilon},
        "tensors": tensors,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def build_model(tok):
    out = FIX / "gpt2_tiny"
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    vocab_size = tok.get_vocab_size()
    cfg = GPT2Config(n_layer=2, n_head=4, n_embd=64, vocab_size=vocab_size, n_positions=128,
                     initializer_range=0.15, bos_token_id=0, eos_token_id=0,
                     resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0)
    model = GPT2LMHeadModel(cfg).eval()
    # non-trivial layernorm affine parameters so they are actually exercised
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "ln_" in name:
                p.add_(0.1 * torch.randn_like(p))
    write_manifest(model, out, vocab_size, cfg)

    rng = random.Random(3)
    long_text = " ".join(make_sentence(rng, rng.randrange(2)) for _ in range(12))
    golden = []
    for name, text in PROMPTS:
        ids = tok.encode(text if text is not None else long_text).ids
        if text is None:
            ids = ids[:60]
        with torch.no_grad():
            logits = model(torch.tensor([ids])).logits[0].float().contiguous()
        (out / f"{name}.ids.csv").write_text(",".join(map(str, ids)) + "\n")
        (out / f"{name}.logits.f32").write_bytes(struct.pack("<%df" % logits.numel(), *logits.flatten().tolist()))
        golden.append({"name": name, "ids": f"{name}.ids.csv", "logits": f"{name}.logits.f32",
                       "shape": list(logits.shape)})
    (out / "golden.json").write_text(json.dumps({"prompts": golden}, indent=1) + "\n")


def main():
    tok = build_bpe()
    build_model(tok)


if __name__ == "__main__":
    main()
