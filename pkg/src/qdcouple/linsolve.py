"""Sparse direct solvers for the complex-symmetric field systems.

The default backend calls MKL PARDISO through ctypes when the MKL runtime
is importable; otherwise SuperLU from scipy is used. Large factorizations
switch PARDISO to its out-of-core mode, which keeps the factor on disk in a
private temporary directory.
"""
from __future__ import annotations

import ctypes
import ctypes.util
import glob
import logging
import os
import shutil
import sys
import tempfile

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class LinearSolverError(RuntimeError):
    """Factorization or solve failed."""


_MKL = None


def _load_mkl():
    global _MKL
    if _MKL is not None:
        return _MKL or None
    names = [os.environ.get("QDCOUPLE_MKL_RT", "")]
    for prefix in {sys.prefix, sys.base_prefix, "/usr/local", "/usr"}:
        names += sorted(glob.glob(os.path.join(prefix, "lib", "libmkl_rt.so*")))
    found = ctypes.util.find_library("mkl_rt")
    if found:
        names.append(found)
    for name in names:
        if not name:
            continue
        try:
            lib = ctypes.CDLL(name)
            lib.pardiso.restype = None
            lib.pardisoinit.restype = None
            _MKL = lib
            return lib
        except (OSError, AttributeError):
            continue
    _MKL = False
    return None


def pardiso_available() -> bool:
    return _load_mkl() is not None


def _available_memory_mb() -> float:
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemAvailable"):
                    return int(line.split()[1]) / 1024
    except OSError:
        pass
    return 4096.0


class PardisoSolver:
    """Complex symmetric (mtype 6) PARDISO factorization of a sparse matrix.

    Only the upper triangle of ``A`` is passed to MKL. ``core_mb`` bounds the
    in-core memory; above it the factor is written to disk.
    """

    def __init__(self, A: sp.spmatrix, core_mb: float | None = None, refine: int = 2):
        lib = _load_mkl()
        if lib is None:
            raise LinearSolverError("MKL runtime (libmkl_rt) not found")
        self.lib = lib
        U = sp.triu(sp.csr_matrix(A), format="csr")
        U.sort_indices()
        self.n = U.shape[0]
        self.ia = U.indptr.astype(np.int32)
        self.ja = U.indices.astype(np.int32)
        self.a = np.ascontiguousarray(U.data, dtype=np.complex128)
        self.pt = np.zeros(64, dtype=np.int64)
        self.iparm = np.zeros(64, dtype=np.int32)
        self.mtype = ctypes.c_int32(6)
        lib.pardisoinit(self.pt.ctypes.data_as(ctypes.c_void_p), ctypes.byref(self.mtype),
                        self.iparm.ctypes.data_as(ctypes.c_void_p))
        self.iparm[34] = 1  # zero-based indexing
        self.iparm[7] = refine  # iterative refinement steps
        if core_mb is None:
            core_mb = float(os.environ.get("QDCOUPLE_PARDISO_CORE_MB",
                                           max(512.0, 0.45 * _available_memory_mb())))
        self._ooc_dir = tempfile.mkdtemp(prefix="qdcouple-pardiso-")
        os.environ["MKL_PARDISO_OOC_PATH"] = os.path.join(self._ooc_dir, "ooc") + "/"
        os.makedirs(os.environ["MKL_PARDISO_OOC_PATH"], exist_ok=True)
        os.environ["MKL_PARDISO_OOC_MAX_CORE_SIZE"] = str(int(core_mb))
        os.environ["MKL_PARDISO_OOC_KEEP_FILE"] = "0"
        self.iparm[59] = 1  # in-core when it fits, out-of-core otherwise
        self._alive = False
        try:
            self._call(12, np.zeros(self.n, complex))
        except LinearSolverError:
            self.free()
            raise
        self._alive = True

    @property
    def factor_nnz(self) -> int:
        return int(self.iparm[17])

    def _call(self, phase: int, b: np.ndarray) -> np.ndarray:
        x = np.zeros_like(b)
        err = ctypes.c_int32(0)
        one = ctypes.c_int32(1)
        n = ctypes.c_int32(self.n)
        ph = ctypes.c_int32(phase)
        nrhs = ctypes.c_int32(1 if b.ndim == 1 else b.shape[1])
        msg = ctypes.c_int32(0)
        perm = np.zeros(1, np.int32)
        bb = np.asfortranarray(b, dtype=np.complex128)
        vp = ctypes.c_void_p
        self.lib.pardiso(self.pt.ctypes.data_as(vp), ctypes.byref(one), ctypes.byref(one),
                         ctypes.byref(self.mtype), ctypes.byref(ph), ctypes.byref(n),
                         self.a.ctypes.data_as(vp), self.ia.ctypes.data_as(vp),
                         self.ja.ctypes.data_as(vp), perm.ctypes.data_as(vp),
                         ctypes.byref(nrhs), self.iparm.ctypes.data_as(vp), ctypes.byref(msg),
                         bb.ctypes.data_as(vp), x.ctypes.data_as(vp), ctypes.byref(err))
        if err.value != 0:
            raise LinearSolverError(f"PARDISO phase {phase} failed with error {err.value}")
        return x

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._call(33, np.asarray(b, dtype=complex))

    def free(self) -> None:
        if self._alive:
            try:
                self._call(-1, np.zeros(self.n, complex))
            except LinearSolverError:
                pass
            self._alive = False
        shutil.rmtree(self._ooc_dir, ignore_errors=True)

    def __del__(self):
        try:
            self.free()
        except Exception:
            pass


class SuperLUSolver:
    def __init__(self, A: sp.spmatrix):
        try:
            self.lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
        except (RuntimeError, MemoryError) as exc:
            raise LinearSolverError(f"SuperLU factorization failed: {exc}") from exc

    @property
    def factor_nnz(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz)

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=complex))

    def free(self):
        self.lu = None


class IterativeSolver:
    """GMRES with an incomplete-LU preconditioner; slow, for small systems only."""

    def __init__(self, A: sp.spmatrix, tol: float = 1e-10, maxiter: int = 2000):
        self.A = sp.csc_matrix(A)
        self.tol = tol
        self.maxiter = maxiter
        try:
            ilu = spla.spilu(self.A, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise LinearSolverError(f"ILU preconditioner failed: {exc}") from exc
        self.M = spla.LinearOperator(self.A.shape, ilu.solve, dtype=complex)

    factor_nnz = 0

    def solve(self, b):
        x, info = spla.gmres(self.A, b, M=self.M, rtol=self.tol, restart=200,
                             maxiter=self.maxiter)
        if info != 0:
            raise LinearSolverError(f"GMRES did not converge (info={info})")
        return x

    def free(self):
        self.M = None


def factorize(A: sp.spmatrix, backend: str = "auto", core_mb: float | None = None):
    """Return a solver object exposing ``solve(b)`` and ``free()``."""
    if backend == "auto":
        backend = "pardiso" if pardiso_available() else "superlu"
    if backend == "pardiso":
        return PardisoSolver(A, core_mb=core_mb)
    if backend == "superlu":
        return SuperLUSolver(A)
    if backend == "iterative":
        return IterativeSolver(A)
    raise ValueError(f"unknown linear-solver backend {backend!r}")
