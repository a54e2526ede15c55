"""
RConv-MK: robust convolution blocks with a numpy autograd engine.

Subpackages:
    engine      - tensors, reverse-mode autodiff, gradient checking
    nn          - layers, normalizers, losses, optimizer
    blocks      - DCT bases, channel partitioning, the RConv-MK block
    models      - ResNet-style classifiers built from interchangeable blocks
    robustness  - corruptions, mCE, white-box attacks, (adversarial) training
    data        - dataset loaders, checkpoints
    tasks       - end-to-end workflows used by the CLI
    cli         - the `rcmk` command
"""

__version__ = "1.0.0"
