#!/usr/bin/env python3
"""Export torchvision ResNet50 ImageNet weights as a flat name -> tensor dict
readable by `tganet` (network.backbone_weights, network.pretrained_backbone)."""

import argparse

import torch
import torchvision


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output file, e.g. resnet50.pt")
    args = parser.parse_args()

    model = torchvision.models.resnet50(weights=torchvision.models.ResNet50_Weights.IMAGENET1K_V1)
    state = {k: v.contiguous() for k, v in model.state_dict().items()
             if not k.startswith(("layer4.", "fc."))}
    torch.save(state, args.out, _use_new_zipfile_serialization=True)
    print(f"wrote {len(state)} tensors to {args.out}")


if __name__ == "__main__":
    main()
