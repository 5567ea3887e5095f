"""Face super-resolution engine: 16x16 inputs to 128x128 outputs.

Subpackages cover the full pipeline: a small tape-based autodiff engine
over 4-D tensors, image I/O and color conversion, a Canny edge oracle,
the generator/discriminator models, loss functions, a toy identity
embedder, the data pipeline, the trainer, evaluation metrics, and a CLI.
"""

from ._kernels import BACKEND as kernel_backend

__all__ = ["kernel_backend"]
__version__ = "0.1.0"
