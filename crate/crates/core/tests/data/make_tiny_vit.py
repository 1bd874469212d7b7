# Regenerates tiny_vit.onnx: a 32x32, patch-16 ViT with 2 heads and width 8.
import torch
from torch import nn


class TinyViT(nn.Module):
    def __init__(self, dim=8, heads=2, patch=16):
        super().__init__()
        self.heads = heads
        self.embed = nn.Conv2d(3, dim, patch, patch)
        self.cls = nn.Parameter(torch.randn(1, 1, dim))
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, pixel_values):
        x = self.embed(pixel_values).flatten(2).transpose(1, 2)
        x = torch.cat([self.cls.expand(x.shape[0], -1, -1), x], 1)
        b, t, d = x.shape
        q, k, v = self.qkv(x).reshape(b, t, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        att = (q @ k.transpose(-1, -2) / (d // self.heads) ** 0.5).softmax(-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, d)
        return att, x + self.proj(out)


torch.manual_seed(0)
model = TinyViT().eval()
torch.onnx.export(
    model,
    (torch.zeros(1, 3, 32, 32),),
    "tiny_vit.onnx",
    input_names=["pixel_values"],
    output_names=["attentions", "last_hidden_state"],
    opset_version=17,
    dynamo=False,
)
