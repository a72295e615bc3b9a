"""Trains the bundled toy checkpoint and writes it in the engine's manifest format.

The model is a 2-layer GPT-2-style decoder over the byte-level toy vocabulary,
meta-trained on in-context sentiment episodes with 1 to 12 shots. A fraction of
the episodes (--flip-p, default 0.25) use the flipped label mapping. An auxiliary
next-character loss on every token keeps the label head from collapsing early.
Outputs data/toy/manifest.json and data/toy/weights.bin.

The bundled checkpoint is `--steps 6000 --seed 0` with the defaults.

Usage: python scripts/train_toy_model.py [--steps N] [--seed S] [--lr LR]
                                         [--flip-p P] [--resume]
"""

import argparse
import json
import math
import pathlib
import random
import struct
import time

import torch
import torch.nn as nn
import torch.nn.functional as F

from toy_task import SST2_TEMPLATES, make_sentence

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data/toy"

N_LAYERS = 2
N_HEADS = 2
D_MODEL = 64
D_FF = 256
MAX_SEQ = 1024
EPS = 1e-5
FLIP_P = 0.25
LM_WEIGHT = 0.3


class Block(nn.Module):
    def __init__(self):
        super().__init__()
        self.ln_1 = nn.LayerNorm(D_MODEL, eps=EPS)
        self.q = nn.Linear(D_MODEL, D_MODEL)
        self.k = nn.Linear(D_MODEL, D_MODEL)
        self.v = nn.Linear(D_MODEL, D_MODEL)
        self.proj = nn.Linear(D_MODEL, D_MODEL)
        self.ln_2 = nn.LayerNorm(D_MODEL, eps=EPS)
        self.fc = nn.Linear(D_MODEL, D_FF)
        self.fc_proj = nn.Linear(D_FF, D_MODEL)

    def forward(self, x):
        b, t, _ = x.shape
        h = self.ln_1(x)
        dh = D_MODEL // N_HEADS
        q = self.q(h).view(b, t, N_HEADS, dh).transpose(1, 2)
        k = self.k(h).view(b, t, N_HEADS, dh).transpose(1, 2)
        v = self.v(h).view(b, t, N_HEADS, dh).transpose(1, 2)
        a = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        x = x + self.proj(a.transpose(1, 2).reshape(b, t, D_MODEL))
        x = x + self.fc_proj(F.gelu(self.fc(self.ln_2(x)), approximate="tanh"))
        return x


class ToyLM(nn.Module):
    def __init__(self, vocab):
        super().__init__()
        self.wte = nn.Embedding(vocab, D_MODEL)
        self.wpe = nn.Embedding(MAX_SEQ, D_MODEL)
        self.blocks = nn.ModuleList(Block() for _ in range(N_LAYERS))
        self.ln_f = nn.LayerNorm(D_MODEL, eps=EPS)
        nn.init.normal_(self.wte.weight, std=0.02)
        nn.init.normal_(self.wpe.weight, std=0.01)

    def forward(self, ids):
        pos = torch.arange(ids.shape[1])
        x = self.wte(ids) + self.wpe(pos)[None]
        for blk in self.blocks:
            x = blk(x)
        return self.ln_f(x) @ self.wte.weight.T


def sample_sequence(rng, vocab, max_len, k=None, flip=None):
    """Returns (ids, loss_mask) for one in-context episode."""
    if rng.random() < 0.5:
        pattern, verbs = SST2_TEMPLATES[0]
    else:
        pattern, verbs = rng.choice(SST2_TEMPLATES)
    if flip is None:
        flip = rng.random() < FLIP_P
    if k is None:
        k = rng.randint(1, 12)
    ids, mask = [], []
    for i in range(k + 1):
        label = rng.randrange(2)
        text = make_sentence(rng, label, rng.random() < 0.1)
        shown = label ^ int(flip)
        if i < k and rng.random() < 0.1:
            shown = 1 - shown
        pre, post = pattern.split("{answer}")
        pre = pre.replace("{text}", text)
        seg = [vocab[c] for c in pre]
        ans = [vocab[c] for c in verbs[shown] + post + "\n"]
        if len(ids) + len(seg) + len(ans) > max_len:
            break
        ids += seg + ans
        mask += [0] * len(seg) + [1] * len(verbs[shown]) + [0] * (len(ans) - len(verbs[shown]))
    return ids, mask


def batch(rng, vocab, size):
    """Padded (ids, label_mask, valid) tensors; valid marks real tokens."""
    seqs = [sample_sequence(rng, vocab, MAX_SEQ) for _ in range(size)]
    t = max(len(s[0]) for s in seqs)
    ids = torch.zeros(size, t, dtype=torch.long)
    mask = torch.zeros(size, t)
    valid = torch.zeros(size, t)
    for i, (s, m) in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(s)
        mask[i, : len(m)] = torch.tensor(m, dtype=torch.float)
        valid[i, : len(s)] = 1.0
    return ids, mask, valid


def evaluate(model, vocab, seed, flip, n=200, k=8):
    """8-shot accuracy on the first answer character of the final example."""
    rng = random.Random(seed)
    correct = 0
    with torch.no_grad():
        for _ in range(n):
            r = random.Random(rng.random())
            ids, mask = sample_sequence(r, vocab, MAX_SEQ, k=k, flip=flip)
            # final example's answer start = first masked position after the last newline of the demos
            starts = [i for i in range(len(mask)) if mask[i] == 1 and (i == 0 or mask[i - 1] == 0)]
            pos = starts[-1]
            logits = model(torch.tensor(ids[:pos])[None])[0, -1]
            cand = {vocab["n"], vocab["p"]} if ids[pos] in (vocab["n"], vocab["p"]) else {vocab["b"], vocab["g"]}
            best = max(cand, key=lambda c: logits[c].item())
            correct += int(best == ids[pos])
    return correct / n


def export(model, vocab_size):
    sd = {k: v.detach().float().contiguous() for k, v in model.state_dict().items()}
    tensors = []
    blob = bytearray()

    def add(name, t):
        offset = len(blob)
        blob.extend(struct.pack("<%df" % t.numel(), *t.flatten().tolist()))
        tensors.append({"name": name, "shape": list(t.shape), "dtype": "f32",
                        "file": "weights.bin", "byte_offset": offset})
        return offset

    wte_off = add("wte", sd["wte.weight"])
    add("wpe", sd["wpe.weight"])
    for l in range(N_LAYERS):
        p = f"blocks.{l}."
        e = f"h.{l}."
        add(e + "ln_1.weight", sd[p + "ln_1.weight"])
        add(e + "ln_1.bias", sd[p + "ln_1.bias"])
        for n in ("q", "k", "v"):
            add(e + f"attn.{n}.weight", sd[p + f"{n}.weight"])
            add(e + f"attn.{n}.bias", sd[p + f"{n}.bias"])
        add(e + "attn.proj.weight", sd[p + "proj.weight"])
        add(e + "attn.proj.bias", sd[p + "proj.bias"])
        add(e + "ln_2.weight", sd[p + "ln_2.weight"])
        add(e + "ln_2.bias", sd[p + "ln_2.bias"])
        add(e + "mlp.fc.weight", sd[p + "fc.weight"])
        add(e + "mlp.fc.bias", sd[p + "fc.bias"])
        add(e + "mlp.proj.weight", sd[p + "fc_proj.weight"])
        add(e + "mlp.proj.bias", sd[p + "fc_proj.bias"])
    add("ln_f.weight", sd["ln_f.weight"])
    add("ln_f.bias", sd["ln_f.bias"])
    # tied unembedding: same bytes as the token embedding
    tensors.append({"name": "lm_head.weight", "shape": [vocab_size, D_MODEL], "dtype": "f32",
                    "file": "weights.bin", "byte_offset": wte_off})

    (OUT / "weights.bin").write_bytes(bytes(blob))
    manifest = {
        "format_version": 1,
        "config": {"n_layers": N_LAYERS, "n_heads": N_HEADS, "d_model": D_MODEL, "d_ff": D_FF,
                   "vocab_size": vocab_size, "max_seq_len": MAX_SEQ, "layernorm_eps": EPS},
        "tensors": tensors,
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_exported(model):
    """Inverse of export(): fills `model` from data/toy/."""
    manifest = json.loads((OUT / "manifest.json").read_text())
    blob = (OUT / "weights.bin").read_bytes()
    names = {"wte": "wte.weight", "wpe": "wpe.weight", "ln_f.weight": "ln_f.weight", "ln_f.bias": "ln_f.bias"}
    for l in range(N_LAYERS):
        p, e = f"blocks.{l}.", f"h.{l}."
        for n in ("ln_1.weight", "ln_1.bias", "ln_2.weight", "ln_2.bias"):
            names[e + n] = p + n
        for n in ("q", "k", "v"):
            names[e + f"attn.{n}.weight"] = p + f"{n}.weight"
            names[e + f"attn.{n}.bias"] = p + f"{n}.bias"
        names[e + "attn.proj.weight"] = p + "proj.weight"
        names[e + "attn.proj.bias"] = p + "proj.bias"
        names[e + "mlp.fc.weight"] = p + "fc.weight"
        names[e + "mlp.fc.bias"] = p + "fc.bias"
        names[e + "mlp.proj.weight"] = p + "fc_proj.weight"
        names[e + "mlp.proj.bias"] = p + "fc_proj.bias"
    sd = {}
    for t in manifest["tensors"]:
        if t["name"] not in names:
            continue
        n = math.prod(t["shape"])
        values = struct.unpack_from("<%df" % n, blob, t["byte_offset"])
        sd[names[t["name"]]] = torch.tensor(values).reshape(t["shape"])
    model.load_state_dict(sd)


def main():
    global FLIP_P
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--flip-p", type=float, default=FLIP_P)
    ap.add_argument("--resume", action="store_true", help="start from the checkpoint in data/toy")
    args = ap.parse_args()
    FLIP_P = args.flip_p

    torch.manual_seed(args.seed)
    torch.set_num_threads(1)
    vocab = json.loads((OUT / "toy_vocab.json").read_text())
    model = ToyLM(len(vocab))
    if args.resume:
        load_exported(model)
    print("params", sum(p.numel() for p in model.parameters()))
    opt = torch.optim.AdamW(model.parameters(), lr=args.lr, weight_decay=0.01)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda s: min(1.0, (s + 1) / 200) * 0.5 * (1 + math.cos(math.pi * min(s, args.steps) / args.steps)))
    rng = random.Random(args.seed)
    t0 = time.time()
    for step in range(args.steps):
        ids, mask, valid = batch(rng, vocab, args.batch)
        logits = model(ids[:, :-1])
        tok = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), ids[:, 1:].reshape(-1), reduction="none")
        label_mask = mask[:, 1:].reshape(-1)
        valid = valid[:, 1:].reshape(-1)
        label_loss = (tok * label_mask).sum() / label_mask.sum()
        # plain next-character loss teaches the word lexicon the labels depend on
        loss = label_loss + LM_WEIGHT * (tok * valid).sum() / valid.sum()
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        opt.step()
        sched.step()
        if step % 100 == 0 or step == args.steps - 1:
            print(f"step {step} loss {loss.item():.4f} label {label_loss.item():.4f} t={time.time() - t0:.0f}s", flush=True)
        if step % 500 == 499 or step == args.steps - 1:
            model.eval()
            print("  acc std", evaluate(model, vocab, 1, False), "flip", evaluate(model, vocab, 2, True), flush=True)
            model.train()
            export(model, len(vocab))
    export(model, len(vocab))


if __name__ == "__main__":
    main()
