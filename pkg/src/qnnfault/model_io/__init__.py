"""Topologies, bit accounting, weight files and datasets."""
from .datasets import load_cifar10, synth_dataset
from .topology import (arch_image_shape, build_arch, build_cnv, build_toy, count_susceptible_bits,
                       randomize_weights)
from .weightfile import dumps, load_weights, loads, save_weights
