import logging

import numpy as np
import torch
from django.conf import settings

logger = logging.getLogger(__name__)


def configure_torch(threads=None):
    """Pin the thread count and switch torch to deterministic kernels."""
    threads = threads or settings.LARAGEN["THREADS"]
    torch.set_num_threads(int(threads))
    torch.use_deterministic_algorithms(True)
    logger.debug(f"torch configured with {threads} thread(s)")
    return threads


def numpy_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def torch_generator(seed):
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator
