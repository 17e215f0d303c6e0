from abc import ABC, abstractmethod

import numpy as np


class SRModel(ABC):
    """ Sub-Riemannian structure on a global chart of R^n

    A model is defined by an orthonormal frame X_1..X_k. Everything the
    geodesic flow needs (the Hamiltonian, its derivatives, the linearized
    flow) is derived here from the frame and its partial derivatives.
    Implementations must be immutable after construction.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """ Model id """

    @property
    @abstractmethod
    def n(self) -> int:
        """ Topological dimension """

    @property
    @abstractmethod
    def k(self) -> int:
        """ Rank of the frame """

    @property
    def Q(self) -> int | None:
        """ Hausdorff dimension, known for Carnot groups only """
        return None

    @property
    def bracket_matrices(self) -> tuple[np.ndarray, ...] | None:
        """ Skew-symmetric structure matrices B_h of a 2-step group """
        return None

    @abstractmethod
    def frame(self, q: np.ndarray) -> np.ndarray:
        """ Frame at q as a (k, n) array, row i is X_i(q) """

    @abstractmethod
    def frame_jacobian(self, q: np.ndarray) -> np.ndarray:
        """ (k, n, n) array of partials dX_i^a / dq^b """

    def frame_hessian(self, q: np.ndarray) -> np.ndarray:
        """ (k, n, n, n) array of second partials; catalogue frames are affine """
        return np.zeros((self.k, self.n, self.n, self.n))

    def volume_density(self, q: np.ndarray) -> float:
        """ Density of the reference volume w.r.t. Lebesgue in the chart """
        return 1.0

    def is_riemannian_at(self, q: np.ndarray) -> bool:
        return bool(np.linalg.matrix_rank(self.frame(np.asarray(q, dtype=float))) == self.n)

    # Arclength covectors: Lambda_x = {p : H(x, p) = 1/2} in model coordinates

    @abstractmethod
    def covector(self, x: np.ndarray, params: np.ndarray) -> np.ndarray:
        """ Covector in Lambda_x for the given chart parameters """

    @abstractmethod
    def covector_jacobian(self, x: np.ndarray, params: np.ndarray) -> np.ndarray:
        """ (n, n-1) derivative of `covector` w.r.t. its parameters """

    @abstractmethod
    def covector_params(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """ Inverse of `covector`; p is projected onto Lambda_x first """

    @abstractmethod
    def start_params(self, x: np.ndarray, n_start: int, scale: float, seed: int = 0) -> np.ndarray:
        """ Deterministic grid of Lambda_x parameters for multi-start shooting """

    def closed_form(self, x: np.ndarray, params: np.ndarray, t: float) -> np.ndarray | None:
        """ Exact exponential map when the model has one, else None """
        return None

    # Hamiltonian machinery

    def hamiltonian(self, q: np.ndarray, p: np.ndarray) -> float:
        u = self.frame(q) @ p
        return 0.5 * float(u @ u)

    def hamiltonian_vector(self, q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """ (dq/dt, dp/dt) of the normal Hamiltonian system """
        X = self.frame(q)
        DX = self.frame_jacobian(q)
        u = X @ p
        dq = X.T @ u
        dp = -np.einsum('i,a,iab->b', u, p, DX)
        return dq, dp

    def linearization(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """ (2n, 2n) Jacobian of the Hamiltonian vector field at (q, p) """
        n = self.n
        X = self.frame(q)
        DX = self.frame_jacobian(q)
        D2X = self.frame_hessian(q)
        u = X @ p
        pDX = np.einsum('a,iab->ib', p, DX)       # d u_i / dq
        A = np.zeros((2 * n, 2 * n))
        A[:n, :n] = np.einsum('ia,ib->ab', X, pDX) + np.einsum('i,iab->ab', u, DX)
        A[:n, n:] = X.T @ X
        A[n:, :n] = -(np.einsum('ib,ic->bc', pDX, pDX) + np.einsum('i,a,iabc->bc', u, p, D2X))
        A[n:, n:] = -(np.einsum('ib,ia->ba', pDX, X) + np.einsum('i,iab->ba', u, DX))
        return A

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.n}, k={self.k})"
