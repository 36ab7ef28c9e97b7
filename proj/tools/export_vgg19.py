#!/usr/bin/env python3
"""Write torchvision's VGG19 conv1_1..conv4_4 weights as a melfill tensor archive."""
import argparse
import json
import struct

import numpy as np
import torch
import torchvision

# Indices of the conv layers in vgg19().features, up to conv4_4.
CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25]
BLOCK_SIZES = [2, 2, 4, 4]


def layer_names():
    for block, size in enumerate(BLOCK_SIZES, start=1):
        for i in range(1, size + 1):
            yield f"conv{block}_{i}"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--state-dict", help="local .pth state dict instead of the torchvision download")
    ap.add_argument("--untrained", action="store_true", help="random init; for testing the format only")
    args = ap.parse_args()

    if args.untrained:
        model = torchvision.models.vgg19(weights=None)
    elif args.state_dict:
        model = torchvision.models.vgg19(weights=None)
        model.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
    else:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)

    tensors = {}
    for name, idx in zip(layer_names(), CONV_INDICES):
        conv = model.features[idx]
        w = conv.weight.detach().numpy().astype("<f4")
        b = conv.bias.detach().numpy().astype("<f4")
        tensors[name + ".weight"] = w
        tensors[name + ".bias"] = b.reshape(1, -1, 1, 1)

    # Same ordering as std::map on the C++ side.
    names = sorted(tensors)
    entries, offset = [], 0
    for n in names:
        t = tensors[n]
        entries.append({"name": n, "shape": list(t.shape), "offset": offset})
        offset += t.size
    meta = {"source": "torchvision vgg19", "untrained": bool(args.untrained)}
    header = json.dumps({"meta": meta, "tensors": entries}).encode()
    with open(args.out, "wb") as f:
        f.write(b"MFTA")
        f.write(struct.pack("<IQ", 1, len(header)))
        f.write(header)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n]).tobytes())


if __name__ == "__main__":
    main()
