from .model import SRModel
from .kernel import KernelEvaluator
