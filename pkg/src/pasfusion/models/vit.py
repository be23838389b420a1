"""3D vision-transformer branch: cubic patch embedding, learned positional
embeddings, pre-norm encoder blocks, mean token pooling."""
from __future__ import annotations

import numpy as np

from .. import ndcore as ndc
from ..ndcore import Parameter, ShapeError, Tensor
from .layers import Attention, LayerNorm, Linear, Module, ModuleList
from .profiles import ScaleProfile


class EncoderBlock(Module):
    """Pre-norm: x += MHSA(LN(x)); x += MLP(LN(x)) with GELU in the MLP."""

    def __init__(self, dim: int, heads: int, mlp_hidden: int):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, mlp_hidden)
        self.fc2 = Linear(mlp_hidden, dim)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(ndc.gelu(self.fc1(self.norm2(x))))


class Vit3dBranch(Module):
    """Volume (B, 1, H, W, D) -> global feature embedding (B, embed_dim)."""

    def __init__(self, profile: ScaleProfile):
        super().__init__()
        self.profile = profile
        p, d = profile.patch_size, profile.embed_dim
        from .layers import Conv
        self.patch_embed = Conv(1, d, k=p, stride=p, dims=3)
        self.pos = Parameter(np.zeros((profile.vit_tokens, d), np.float32))
        self.blocks = ModuleList(
            EncoderBlock(d, profile.heads, profile.vit_mlp_hidden)
            for _ in range(profile.encoder_blocks))
        self.final_norm = LayerNorm(d)

    def _init(self, rng):
        self.pos.data = rng.normal(0.0, 0.02, size=self.pos.shape).astype(np.float32)

    def tokenize(self, x: Tensor) -> Tensor:
        """Patchify and add positional embeddings: (B, N, d)."""
        p = self.profile.patch_size
        for ax, ext in enumerate(x.shape[2:]):
            if ext % p:
                raise ShapeError(f"extent {ext} on spatial axis {ax} not divisible by {p}")
        emb = self.patch_embed(x)                       # (B, d, h/p, w/p, d/p)
        b, d = emb.shape[:2]
        tokens = ndc.reshape(emb, (b, d, -1))
        tokens = ndc.transpose(tokens, (0, 2, 1))       # (B, N, d)
        return tokens + self.pos

    def encode(self, tokens: Tensor) -> Tensor:
        """Encoder stack, final LN and mean pooling over the token axis."""
        y = tokens
        for block in self.blocks:
            y = block(y)
        y = self.final_norm(y)
        return ndc.mean(y, axis=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.encode(self.tokenize(x))
