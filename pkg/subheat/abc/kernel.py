import logging
from abc import ABC, abstractmethod

import numpy as np

from subheat.types import KernelSample


class KernelEvaluator(ABC):
    """ Heat kernel p_t(a, b) of a catalogue model

    Implementations work in log-space: in the small-time regime the kernel
    is exponentially small and underflows long before the asymptotics are
    visible.
    """

    def __init__(self, logger: logging.Logger = None):
        self.__logger = logger or logging.root

    @property
    def logger(self) -> logging.Logger:
        """ Logger """
        return self.__logger

    @property
    @abstractmethod
    def name(self) -> str:
        """ Kernel id """

    @abstractmethod
    def sample(self, t: float, a: np.ndarray, b: np.ndarray) -> KernelSample:
        """ p_t(a, b) with its evaluation path and error estimate """

    def log(self, t: float, a: np.ndarray, b: np.ndarray) -> float:
        """ log p_t(a, b) """
        return self.sample(t, a, b).log_value

    def __call__(self, t: float, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.exp(self.log(t, a, b)))

    def batch(self, t: float, a: np.ndarray, bs: np.ndarray) -> np.ndarray:
        """ p_t(a, b) for every row b of bs """
        return np.array([self(t, a, b) for b in np.atleast_2d(bs)])
