"""Model zoo: adapter-augmented windowed-attention encoder, mask decoder,
a small U-Net baseline, and the residual super-resolution network.

Parameters live in a ModelCheckpoint under namespaced keys ("enc.", "dec.",
"adapter.", "unet.", "edsr."); forward functions read them back by name, so
a checkpoint fully describes a model together with the config scalars stored
in its metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid, ShapeMismatch
from . import tensor as T
from .checkpoint import ModelCheckpoint
from .optim import adamw_step
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 128
    patch_embed_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    window_size: int = 4
    global_attention_layers: tuple[int, ...] = (1, 3)
    adapter_tune_dim: int = 16

    def __post_init__(self):
        if self.image_size % self.patch_embed_size:
            raise ConfigInvalid("image_size must be divisible by patch_embed_size")
        if self.patch_embed_size & (self.patch_embed_size - 1):
            raise ConfigInvalid("patch_embed_size must be a power of two")
        if self.embed_dim % self.heads:
            raise ConfigInvalid("embed_dim must be divisible by heads")
        if any(not 0 <= i < self.depth for i in self.global_attention_layers):
            raise ConfigInvalid("global attention layer index out of range")
        stages = int(math.log2(self.patch_embed_size))
        if self.embed_dim % (1 << stages):
            raise ConfigInvalid("embed_dim must be divisible by 2**log2(patch_embed_size)")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_embed_size

    @property
    def tokens(self) -> int:
        return self.grid * self.grid

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def upsample_stages(self) -> int:
        return int(math.log2(self.patch_embed_size))


def evenly_spaced_global_layers(depth: int, count: int = 4) -> tuple[int, ...]:
    """Indices of `count` evenly spaced global-attention layers (the full-scale
    backbone geometry: e.g. depth 32 -> (7, 15, 23, 31))."""
    return tuple(sorted({(i + 1) * depth // count - 1 for i in range(count)}))


@dataclass
class AdapterParams:
    """Per-layer tune projections plus the single shared up projection."""

    tune_w: list[Tensor]
    tune_b: list[Tensor]
    up_w: Tensor
    up_b: Tensor

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint, depth: int) -> "AdapterParams":
        return cls(
            tune_w=[ckpt[f"adapter.tune{i}.w"] for i in range(depth)],
            tune_b=[ckpt[f"adapter.tune{i}.b"] for i in range(depth)],
            up_w=ckpt["adapter.up.w"],
            up_b=ckpt["adapter.up.b"],
        )


def gelu(x: Tensor) -> Tensor:
    return T.gelu(x)


def adapter_forward(f_i: Tensor, params: AdapterParams, layer: int) -> Tensor:
    """Prompt for one layer: shared_up(gelu(tune_i(features)))."""
    if f_i.ndim != 2 or f_i.shape[1] != params.tune_w[layer].shape[0]:
        raise ShapeMismatch(f"adapter input {f_i.shape} incompatible with "
                            f"tune weight {params.tune_w[layer].shape}")
    hidden = T.gelu(_linear(f_i, params.tune_w[layer], params.tune_b[layer]))
    return _linear(hidden, params.up_w, params.up_b)


def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[..., in] @ w[in, out] (+ b), for any leading shape."""
    lead = x.shape[:-1]
    flat = T.reshape(x, (-1, x.shape[-1]))
    out = T.matmul(flat, w)
    if b is not None:
        out = T.add(out, b)
    return T.reshape(out, lead + (w.shape[1],))


def self_attention(x: Tensor, qkv_w: Tensor, qkv_b: Tensor,
                   proj_w: Tensor, proj_b: Tensor, heads: int) -> Tensor:
    """Multi-head self-attention over x[..., S, D]; softmax(QK^T/sqrt(dh))V."""
    *lead, s, d = x.shape
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    qkv = _linear(x, qkv_w, qkv_b)                                   # [..., S, 3D]
    qkv = T.reshape(qkv, tuple(lead) + (s, 3, heads, dh))
    nl = len(lead)
    qkv = T.transpose(qkv, (nl + 1,) + tuple(range(nl)) + (nl + 2, nl, nl + 3))
    q, k, v = qkv[0], qkv[1], qkv[2]                                 # [..., heads, S, dh]
    attn = T.softmax(T.mul(T.matmul(q, T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                           Tensor(np.float32(scale))), axis=-1)
    out = T.matmul(attn, v)                                          # [..., heads, S, dh]
    perm = tuple(range(nl)) + (nl + 1, nl, nl + 2)
    out = T.reshape(T.transpose(out, perm), tuple(lead) + (s, d))
    return _linear(out, proj_w, proj_b)


def _window_partition(x: Tensor, grid: int, window: int):
    """[T, D] -> ([nW, w*w, D], padded grid size)."""
    d = x.shape[-1]
    pad_grid = math.ceil(grid / window) * window
    g = T.reshape(x, (grid, grid, d))
    g = pad_to(g, 0, pad_grid)
    g = pad_to(g, 1, pad_grid)
    nw = pad_grid // window
    g = T.reshape(g, (nw, window, nw, window, d))
    g = T.transpose(g, (0, 2, 1, 3, 4))
    return T.reshape(g, (nw * nw, window * window, d)), pad_grid


def pad_to(x: Tensor, axis: int, target: int) -> Tensor:
    return T.pad_to(x, axis, target)


def _window_merge(wins: Tensor, grid: int, window: int, pad_grid: int) -> Tensor:
    d = wins.shape[-1]
    nw = pad_grid // window
    g = T.reshape(wins, (nw, nw, window, window, d))
    g = T.transpose(g, (0, 2, 1, 3, 4))
    g = T.reshape(g, (pad_grid, pad_grid, d))
    g = g[:grid, :grid, :]
    return T.reshape(g, (grid * grid, d))


def init_adapter_checkpoint(cfg: EncoderConfig = EncoderConfig(), seed: int = 0,
                            freeze_encoder: bool = True) -> ModelCheckpoint:
    """Build a fresh adapter-segmenter checkpoint.

    The backbone ("enc.") is frozen by default; adapters start as an exact
    identity because the shared up projection is zero-initialized.
    """
    rng = np.random.default_rng(seed)
    d, td = cfg.embed_dim, cfg.adapter_tune_dim
    ck = ModelCheckpoint()

    def nrm(*shape, std=0.02):
        return rng.normal(0.0, std, size=shape).astype(np.float32)

    ck.add("enc.patch_embed.w", nrm(d, 3, cfg.patch_embed_size, cfg.patch_embed_size,
                                    std=1.0 / math.sqrt(3 * cfg.patch_embed_size ** 2)))
    ck.add("enc.patch_embed.b", np.zeros(d, np.float32))
    ck.add("enc.pos_embed", nrm(cfg.tokens, d))
    for i in range(cfg.depth):
        p = f"enc.layer{i}."
        ck.add(p + "ln1.g", np.ones(d, np.float32))
        ck.add(p + "ln1.b", np.zeros(d, np.float32))
        ck.add(p + "attn.qkv.w", nrm(d, 3 * d, std=1.0 / math.sqrt(d)))
        ck.add(p + "attn.qkv.b", np.zeros(3 * d, np.float32))
        ck.add(p + "attn.proj.w", nrm(d, d, std=1.0 / math.sqrt(d)))
        ck.add(p + "attn.proj.b", np.zeros(d, np.float32))
        ck.add(p + "ln2.g", np.ones(d, np.float32))
        ck.add(p + "ln2.b", np.zeros(d, np.float32))
        ck.add(p + "mlp.fc1.w", nrm(d, 4 * d, std=1.0 / math.sqrt(d)))
        ck.add(p + "mlp.fc1.b", np.zeros(4 * d, np.float32))
        ck.add(p + "mlp.fc2.w", nrm(4 * d, d, std=1.0 / math.sqrt(4 * d)))
        ck.add(p + "mlp.fc2.b", np.zeros(d, np.float32))
        ck.add(f"adapter.tune{i}.w", nrm(d, td, std=1.0 / math.sqrt(d)))
        ck.add(f"adapter.tune{i}.b", np.zeros(td, np.float32))
    ck.add("adapter.up.w", np.zeros((td, d), np.float32))
    ck.add("adapter.up.b", np.zeros(d, np.float32))

    _init_decoder(ck, cfg, rng)
    if freeze_encoder:
        ck.freeze_prefix("enc.")
    ck.meta.update(encoder_config_to_meta(cfg))
    ck.meta["model_kind"] = 0.0
    return ck


def _init_decoder(ck: ModelCheckpoint, cfg: EncoderConfig, rng) -> None:
    d = cfg.embed_dim

    def nrm(*shape, std=0.02):
        return rng.normal(0.0, std, size=shape).astype(np.float32)

    ck.add("dec.mask_token", nrm(1, d))
    for j in range(2):
        p = f"dec.block{j}."
        for ln in ("ln_q", "ln_kv", "ln_mlp"):
            ck.add(p + ln + ".g", np.ones(d, np.float32))
            ck.add(p + ln + ".b", np.zeros(d, np.float32))
        for m in ("q", "k", "v", "proj"):
            ck.add(p + f"attn.{m}.w", nrm(d, d, std=1.0 / math.sqrt(d)))
            ck.add(p + f"attn.{m}.b", np.zeros(d, np.float32))
        ck.add(p + "mlp.fc1.w", nrm(d, 2 * d, std=1.0 / math.sqrt(d)))
        ck.add(p + "mlp.fc1.b", np.zeros(2 * d, np.float32))
        ck.add(p + "mlp.fc2.w", nrm(2 * d, d, std=1.0 / math.sqrt(2 * d)))
        ck.add(p + "mlp.fc2.b", np.zeros(d, np.float32))

    ch = d
    for k in range(cfg.upsample_stages):
        ck.add(f"dec.up{k}.w", nrm(ch, ch // 2, 2, 2, std=1.0 / math.sqrt(ch)))
        ck.add(f"dec.up{k}.b", np.zeros(ch // 2, np.float32))
        ch //= 2
    ck.add("dec.hyper.fc1.w", nrm(d, d, std=1.0 / math.sqrt(d)))
    ck.add("dec.hyper.fc1.b", np.zeros(d, np.float32))
    ck.add("dec.hyper.fc2.w", nrm(d, ch, std=1.0 / math.sqrt(d)))
    ck.add("dec.hyper.fc2.b", np.zeros(ch, np.float32))
    ck.add("dec.out.b", np.zeros(1, np.float32))


def encoder_forward(image: Tensor, ckpt: ModelCheckpoint, cfg: EncoderConfig,
                    use_adapters: bool = True) -> Tensor:
    """[3, H, W] image -> [tokens, embed_dim] features.

    Pre-norm transformer layers, windowed attention except on the configured
    global layers; when enabled, each layer's output gets its adapter prompt
    added on top.
    """
    if image.shape != (3, cfg.image_size, cfg.image_size):
        raise ShapeMismatch(f"expected (3, {cfg.image_size}, {cfg.image_size}) "
                            f"input, got {image.shape}")
    d = cfg.embed_dim
    x4 = T.reshape(image, (1,) + image.shape)
    emb = T.conv2d(x4, ckpt["enc.patch_embed.w"], ckpt["enc.patch_embed.b"],
                   stride=cfg.patch_embed_size)                    # [1, D, g, g]
    x = T.reshape(T.transpose(T.reshape(emb, (d, cfg.tokens)), (1, 0)),
                  (cfg.tokens, d))
    x = T.add(x, ckpt["enc.pos_embed"])

    adapters = AdapterParams.from_checkpoint(ckpt, cfg.depth) if use_adapters else None
    for i in range(cfg.depth):
        p = f"enc.layer{i}."
        normed = T.layer_norm(x, ckpt[p + "ln1.g"], ckpt[p + "ln1.b"])
        if i in cfg.global_attention_layers or cfg.window_size >= cfg.grid:
            att = self_attention(normed, ckpt[p + "attn.qkv.w"], ckpt[p + "attn.qkv.b"],
                                 ckpt[p + "attn.proj.w"], ckpt[p + "attn.proj.b"],
                                 cfg.heads)
        else:
            wins, pad_grid = _window_partition(normed, cfg.grid, cfg.window_size)
            wins = self_attention(wins, ckpt[p + "attn.qkv.w"], ckpt[p + "attn.qkv.b"],
                                  ckpt[p + "attn.proj.w"], ckpt[p + "attn.proj.b"],
                                  cfg.heads)
            att = _window_merge(wins, cfg.grid, cfg.window_size, pad_grid)
        x = T.add(x, att)
        normed2 = T.layer_norm(x, ckpt[p + "ln2.g"], ckpt[p + "ln2.b"])
        h = _linear(T.gelu(_linear(normed2, ckpt[p + "mlp.fc1.w"],
                                   ckpt[p + "mlp.fc1.b"])),
                    ckpt[p + "mlp.fc2.w"], ckpt[p + "mlp.fc2.b"])
        x = T.add(x, h)
        if adapters is not None:
            x = T.add(x, adapter_forward(x, adapters, i))
    return x


def _cross_attention(tok: Tensor, emb: Tensor, ckpt: ModelCheckpoint, prefix: str) -> Tensor:
    d = tok.shape[-1]
    q = _linear(tok, ckpt[prefix + "attn.q.w"], ckpt[prefix + "attn.q.b"])
    k = _linear(emb, ckpt[prefix + "attn.k.w"], ckpt[prefix + "attn.k.b"])
    v = _linear(emb, ckpt[prefix + "attn.v.w"], ckpt[prefix + "attn.v.b"])
    scale = Tensor(np.float32(1.0 / math.sqrt(d)))
    attn = T.softmax(T.mul(T.matmul(q, T.transpose(k, (1, 0))), scale), axis=-1)
    out = T.matmul(attn, v)
    return _linear(out, ckpt[prefix + "attn.proj.w"], ckpt[prefix + "attn.proj.b"])


def decoder_forward(embeddings: Tensor, ckpt: ModelCheckpoint) -> Tensor:
    """[tokens, embed_dim] -> [1, H, W] logits.

    A learned mask token cross-attends to the embeddings through two blocks;
    the embedding grid is upsampled back to pixel resolution by transposed
    convolutions; per-pixel logits are the dot product of upsampled features
    with the token's hypernetwork output, plus a scalar bias.
    """
    tokens, d = embeddings.shape
    grid = int(math.isqrt(tokens))
    if grid * grid != tokens:
        raise ShapeMismatch(f"token count {tokens} is not a square grid")

    tok = ckpt["dec.mask_token"]
    for j in range(2):
        p = f"dec.block{j}."
        qn = T.layer_norm(tok, ckpt[p + "ln_q.g"], ckpt[p + "ln_q.b"])
        kn = T.layer_norm(embeddings, ckpt[p + "ln_kv.g"], ckpt[p + "ln_kv.b"])
        tok = T.add(tok, _cross_attention(qn, kn, ckpt, p))
        mn = T.layer_norm(tok, ckpt[p + "ln_mlp.g"], ckpt[p + "ln_mlp.b"])
        h = _linear(T.gelu(_linear(mn, ckpt[p + "mlp.fc1.w"], ckpt[p + "mlp.fc1.b"])),
                    ckpt[p + "mlp.fc2.w"], ckpt[p + "mlp.fc2.b"])
        tok = T.add(tok, h)

    feat = T.reshape(T.transpose(embeddings, (1, 0)), (1, d, grid, grid))
    stages = len([n for n in ckpt.names("dec.up")
                  if n.endswith(".w")])
    for k in range(stages):
        feat = T.conv_transpose2d(feat, ckpt[f"dec.up{k}.w"], ckpt[f"dec.up{k}.b"],
                                  stride=2)
        if k < stages - 1:
            feat = T.gelu(feat)
    ch = feat.shape[1]
    side = feat.shape[2]

    hyper = _linear(T.gelu(_linear(tok, ckpt["dec.hyper.fc1.w"], ckpt["dec.hyper.fc1.b"])),
                    ckpt["dec.hyper.fc2.w"], ckpt["dec.hyper.fc2.b"])  # [1, ch]
    flat = T.reshape(feat, (ch, side * side))
    logits = T.matmul(hyper, flat)                                     # [1, side*side]
    logits = T.add(logits, ckpt["dec.out.b"])
    return T.reshape(logits, (1, side, side))


def adapter_model_forward(image: Tensor, ckpt: ModelCheckpoint, cfg: EncoderConfig,
                          use_adapters: bool = True) -> Tensor:
    return decoder_forward(encoder_forward(image, ckpt, cfg, use_adapters), ckpt)


# ---------------------------------------------------------------------------
# U-Net baseline

def init_unet_checkpoint(seed: int = 0, base_channels: int = 16,
                         image_size: int = 128) -> ModelCheckpoint:
    rng = np.random.default_rng(seed)
    ck = ModelCheckpoint()
    c = base_channels

    def conv(name, cin, cout, k=3):
        std = math.sqrt(2.0 / (cin * k * k))
        ck.add(name + ".w", rng.normal(0, std, size=(cout, cin, k, k)).astype(np.float32))
        ck.add(name + ".b", np.zeros(cout, np.float32))

    def convt(name, cin, cout):
        std = math.sqrt(2.0 / (cin * 4))
        ck.add(name + ".w", rng.normal(0, std, size=(cin, cout, 2, 2)).astype(np.float32))
        ck.add(name + ".b", np.zeros(cout, np.float32))

    conv("unet.enc1a", 3, c); conv("unet.enc1b", c, c)
    conv("unet.enc2a", c, 2 * c); conv("unet.enc2b", 2 * c, 2 * c)
    conv("unet.bota", 2 * c, 4 * c); conv("unet.botb", 4 * c, 4 * c)
    convt("unet.up2", 4 * c, 2 * c)
    conv("unet.dec2a", 4 * c, 2 * c); conv("unet.dec2b", 2 * c, 2 * c)
    convt("unet.up1", 2 * c, c)
    conv("unet.dec1a", 2 * c, c); conv("unet.dec1b", c, c)
    conv("unet.out", c, 1, k=1)
    ck.meta["model_kind"] = 1.0
    ck.meta["cfg.image_size"] = float(image_size)
    ck.meta["cfg.base_channels"] = float(base_channels)
    return ck


def unet_baseline_forward(image: Tensor, ckpt: ModelCheckpoint) -> Tensor:
    """[3, H, W] -> [1, H, W] logits; 3-level encoder-decoder with skips."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"unet expects (3, H, W), got {image.shape}")

    def block(x, name):
        x = T.relu(T.conv2d(x, ckpt[f"{name}a.w"], ckpt[f"{name}a.b"], padding=1))
        return T.relu(T.conv2d(x, ckpt[f"{name}b.w"], ckpt[f"{name}b.b"], padding=1))

    x = T.reshape(image, (1,) + image.shape)
    e1 = block(x, "unet.enc1")
    e2 = block(T.max_pool2d(e1), "unet.enc2")
    bt = block(T.max_pool2d(e2), "unet.bot")
    u2 = T.conv_transpose2d(bt, ckpt["unet.up2.w"], ckpt["unet.up2.b"], stride=2)
    d2 = block(T.concat([u2, e2], axis=1), "unet.dec2")
    u1 = T.conv_transpose2d(d2, ckpt["unet.up1.w"], ckpt["unet.up1.b"], stride=2)
    d1 = block(T.concat([u1, e1], axis=1), "unet.dec1")
    out = T.conv2d(d1, ckpt["unet.out.w"], ckpt["unet.out.b"])
    return T.reshape(out, (1,) + out.shape[2:4])


# ---------------------------------------------------------------------------
# super-resolution network

def init_edsr_checkpoint(cfg, seed: int = 0) -> ModelCheckpoint:
    rng = np.random.default_rng(seed)
    ck = ModelCheckpoint()
    c = cfg.feature_channels

    def conv(name, cin, cout, k=3):
        std = math.sqrt(2.0 / (cin * k * k))
        ck.add(name + ".w", rng.normal(0, std, size=(cout, cin, k, k)).astype(np.float32))
        ck.add(name + ".b", np.zeros(cout, np.float32))

    conv("edsr.head", 3, c)
    for i in range(cfg.residual_blocks):
        conv(f"edsr.block{i}.c1", c, c)
        conv(f"edsr.block{i}.c2", c, c)
    conv("edsr.up0", c, 4 * c)
    conv("edsr.up1", c, 4 * c)
    conv("edsr.tail", c, 3)
    ck.meta["model_kind"] = 2.0
    ck.meta["cfg.feature_channels"] = float(cfg.feature_channels)
    ck.meta["cfg.residual_blocks"] = float(cfg.residual_blocks)
    ck.meta["cfg.residual_scaling"] = float(cfg.residual_scaling)
    return ck


def edsr_forward_t(x: Tensor, ckpt: ModelCheckpoint, cfg) -> Tensor:
    """[N, 3, H, W] in [0,1] -> [N, 3, 4H, 4W]; head, residual body, global
    skip, two x2 pixel-shuffle stages, tail."""
    scale = Tensor(np.float32(cfg.residual_scaling))
    head = T.conv2d(x, ckpt["edsr.head.w"], ckpt["edsr.head.b"], padding=1)
    body = head
    for i in range(cfg.residual_blocks):
        h = T.relu(T.conv2d(body, ckpt[f"edsr.block{i}.c1.w"],
                            ckpt[f"edsr.block{i}.c1.b"], padding=1))
        h = T.conv2d(h, ckpt[f"edsr.block{i}.c2.w"], ckpt[f"edsr.block{i}.c2.b"],
                     padding=1)
        body = T.add(body, T.mul(h, scale))
    feat = T.add(body, head)  # global skip
    up = T.pixel_shuffle(T.conv2d(feat, ckpt["edsr.up0.w"], ckpt["edsr.up0.b"],
                                  padding=1), 2)
    up = T.pixel_shuffle(T.conv2d(up, ckpt["edsr.up1.w"], ckpt["edsr.up1.b"],
                                  padding=1), 2)
    return T.conv2d(up, ckpt["edsr.tail.w"], ckpt["edsr.tail.b"], padding=1)


def edsr_net_forward(x: np.ndarray, ckpt: ModelCheckpoint, cfg) -> np.ndarray:
    """Inference entry: [3, H, W] float32 in [0,1] -> [3, 4H, 4W]."""
    with T.no_grad():
        out = edsr_forward_t(Tensor(x[None]), ckpt, cfg)
    return out.values[0]


def fit_edsr_checkpoint(pairs, cfg, epochs: int, lr: float, seed: int,
                        on_epoch=None) -> ModelCheckpoint:
    """Train on (low-res, high-res) RasterGrid pairs with L1 loss.

    The learning rate follows a cosine from lr down to lr/20 over the run."""
    if not pairs:
        raise ConfigInvalid("no training pairs")
    ckpt = init_edsr_checkpoint(cfg, seed)
    rng = np.random.default_rng(seed)

    def to_chw(grid):
        arr = grid.pixels
        if arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        return arr[:, :, :3].astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)

    data = [(to_chw(lo), to_chw(hi)) for lo, hi in pairs]
    for lo, hi in data:
        if hi.shape[1] != lo.shape[1] * 4 or hi.shape[2] != lo.shape[2] * 4:
            raise ShapeMismatch("high-res patch must be exactly 4x the low-res patch")
    lr_min = lr / 20.0
    for epoch in range(epochs):
        t = epoch / max(1, epochs - 1)
        epoch_lr = lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * t))
        order = rng.permutation(len(data))
        total = 0.0
        for idx in order:
            lo, hi = data[idx]
            ckpt.zero_grad()
            pred = edsr_forward_t(Tensor(lo[None]), ckpt, cfg)
            loss = T.l1_loss(pred, Tensor(hi[None]))
            T.backward(loss)
            adamw_step(ckpt, lr=epoch_lr, weight_decay=0.0)
            total += loss.item()
        if on_epoch is not None:
            on_epoch(epoch, total / len(data))
    return ckpt


# ---------------------------------------------------------------------------
# checkpoint <-> config plumbing

def encoder_config_to_meta(cfg: EncoderConfig) -> dict[str, float]:
    meta = {
        "cfg.image_size": float(cfg.image_size),
        "cfg.patch_embed_size": float(cfg.patch_embed_size),
        "cfg.embed_dim": float(cfg.embed_dim),
        "cfg.depth": float(cfg.depth),
        "cfg.heads": float(cfg.heads),
        "cfg.window_size": float(cfg.window_size),
        "cfg.adapter_tune_dim": float(cfg.adapter_tune_dim),
    }
    for i, layer in enumerate(cfg.global_attention_layers):
        meta[f"cfg.global{i}"] = float(layer)
    return meta


def encoder_config_from_meta(meta: dict[str, float]) -> EncoderConfig:
    globals_ = tuple(int(meta[k]) for k in sorted(meta) if k.startswith("cfg.global"))
    return EncoderConfig(
        image_size=int(meta["cfg.image_size"]),
        patch_embed_size=int(meta["cfg.patch_embed_size"]),
        embed_dim=int(meta["cfg.embed_dim"]),
        depth=int(meta["cfg.depth"]),
        heads=int(meta["cfg.heads"]),
        window_size=int(meta["cfg.window_size"]),
        global_attention_layers=globals_,
        adapter_tune_dim=int(meta["cfg.adapter_tune_dim"]),
    )


def predictor_from_checkpoint(ckpt: ModelCheckpoint):
    """Callable mapping a float32 [3, p, p] array in [0,1] to [1, p, p] logits."""
    kind = ckpt.meta.get("model_kind")
    if kind == 0.0:
        cfg = encoder_config_from_meta(ckpt.meta)

        def run(arr: np.ndarray) -> np.ndarray:
            with T.no_grad():
                return adapter_model_forward(Tensor(arr), ckpt, cfg).values
    elif kind == 1.0:
        def run(arr: np.ndarray) -> np.ndarray:
            with T.no_grad():
                return unet_baseline_forward(Tensor(arr), ckpt).values
    else:
        raise ConfigInvalid("checkpoint does not describe a segmentation model")
    return run


def patch_size_of(ckpt: ModelCheckpoint) -> int:
    return int(ckpt.meta["cfg.image_size"])
