"""Convert torchvision VGG19 weights into the CTZVGG19 file read by the extractor.

Usage: python convert_vgg19_weights.py OUT [--layers N] [--state-dict PATH]

Without --state-dict the pretrained ImageNet weights are fetched through
torchvision (needs network access once). With it, PATH is a saved
torchvision vgg19 state_dict (keys features.<i>.weight / features.<i>.bias).
"""
import argparse
import struct

import torch

# Indices of the 16 convolutions inside torchvision's vgg19().features.
CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34]


def load_state_dict(path):
    if path:
        return torch.load(path, map_location="cpu")
    from torchvision.models import VGG19_Weights, vgg19

    return vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()


def write(out, state, layers):
    with open(out, "wb") as f:
        f.write(b"CTZVGG19")
        f.write(struct.pack("<II", 1, layers))
        for idx in CONV_INDICES[:layers]:
            w = state["features.%d.weight" % idx].to(torch.float32).contiguous()
            b = state["features.%d.bias" % idx].to(torch.float32).contiguous()
            out_c, in_c, k, _ = w.shape
            f.write(struct.pack("<III", out_c, in_c, k))
            f.write(w.numpy().astype("<f4").tobytes())
            f.write(b.numpy().astype("<f4").tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    parser.add_argument("--layers", type=int, default=12, help="leading convolutions to keep (12 = up to conv4_4)")
    parser.add_argument("--state-dict", default=None)
    args = parser.parse_args()
    if not 1 <= args.layers <= 16:
        parser.error("--layers must be in [1, 16]")
    write(args.out, load_state_dict(args.state_dict), args.layers)


if __name__ == "__main__":
    main()
