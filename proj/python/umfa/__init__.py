from ._umfa import adain, bench, evaluate, gradcheck, gram, ssim, stylize, train

__all__ = ["adain", "bench", "evaluate", "gradcheck", "gram", "ssim", "stylize", "train"]
