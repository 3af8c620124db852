"""Patch extraction, orthogonal matching pursuit, and K-SVD training.

Patches are every stride-1 square window of the image, flattened row-major
into columns of an N x S matrix.  OMP codes each patch greedily against a
column-normalized dictionary: pick the atom most correlated with the
residual, re-fit all selected coefficients by least squares, stop when the
squared residual drops to the error bound or the sparsity cap is hit.
Training alternates batch OMP with rank-1 (SVD) atom updates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .projector import ImageGrid

log = logging.getLogger(__name__)

_UNIT_NORM_TOL = 1e-9


@dataclass
class PatchSet:
    """All overlapping patches of one image, as columns."""

    patch_edge: int
    patches: np.ndarray  # (N, S)
    origins: np.ndarray  # (S, 2) top-left (row, col) of each patch
    image_shape: tuple[int, int]

    @property
    def n_patches(self) -> int:
        return self.patches.shape[1]

    @property
    def patch_dim(self) -> int:
        return self.patches.shape[0]


@dataclass
class Dictionary:
    """N x K atom matrix with unit-norm columns (K > N expected)."""

    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim != 2:
            raise ValueError("dictionary atoms must form a 2-D matrix")
        norms = np.linalg.norm(self.atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
            raise ValueError("dictionary columns must be unit-norm")

    @property
    def patch_dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass
class SparseCode:
    """Per-patch supports and coefficients, padded to the sparsity cap.

    Row s holds ``lengths[s]`` valid entries; padding has coefficient 0.
    """

    indices: np.ndarray  # (S, cap) int
    coefficients: np.ndarray  # (S, cap) float
    lengths: np.ndarray  # (S,) int
    n_atoms: int

    @property
    def n_patches(self) -> int:
        return self.indices.shape[0]

    def support(self, s: int) -> np.ndarray:
        return self.indices[s, : self.lengths[s]]

    def coeffs(self, s: int) -> np.ndarray:
        return self.coefficients[s, : self.lengths[s]]

    def to_dense(self) -> np.ndarray:
        """(K, S) coefficient matrix."""
        dense = np.zeros((self.n_atoms, self.n_patches))
        cap = self.indices.shape[1]
        for t in range(cap):
            active = np.flatnonzero(self.lengths > t)
            if active.size == 0:
                break
            dense[self.indices[active, t], active] = self.coefficients[active, t]
        return dense

    def reconstruct(self, dictionary: Dictionary) -> np.ndarray:
        """(N, S) approximations D @ alpha for every patch."""
        recon = np.zeros((dictionary.patch_dim, self.n_patches))
        cap = self.indices.shape[1]
        for t in range(cap):
            active = self.lengths > t
            if not np.any(active):
                break
            recon[:, active] += (
                dictionary.atoms[:, self.indices[active, t]] * self.coefficients[active, t]
            )
        return recon


def extract_patches(image, patch_edge: int) -> PatchSet:
    """Every stride-1 patch_edge x patch_edge window, row-major origin order."""
    values = image.values if isinstance(image, ImageGrid) else np.asarray(image, dtype=float)
    rows, cols = values.shape
    if patch_edge > min(rows, cols):
        raise ValueError(f"patch edge {patch_edge} exceeds image extent {values.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(values, (patch_edge, patch_edge))
    n_r, n_c = windows.shape[:2]
    patches = windows.reshape(n_r * n_c, patch_edge * patch_edge).T.copy()
    rr, cc = np.mgrid[0:n_r, 0:n_c]
    origins = np.column_stack([rr.ravel(), cc.ravel()])
    return PatchSet(patch_edge, patches, origins, (rows, cols))


def patch_count_image(shape: tuple[int, int], patch_edge: int) -> np.ndarray:
    """How many stride-1 patches cover each pixel (separable closed form)."""
    def counts(extent: int) -> np.ndarray:
        idx = np.arange(extent)
        lo = np.maximum(0, idx - patch_edge + 1)
        hi = np.minimum(idx, extent - patch_edge)
        return (hi - lo + 1).astype(float)

    return np.outer(counts(shape[0]), counts(shape[1]))


def accumulate_patches(patch_values: np.ndarray, shape: tuple[int, int], patch_edge: int) -> np.ndarray:
    """Overlap-add (N, S) patch columns back onto the image grid."""
    rows, cols = shape
    n_r, n_c = rows - patch_edge + 1, cols - patch_edge + 1
    if patch_values.shape != (patch_edge * patch_edge, n_r * n_c):
        raise ValueError("patch matrix does not match the grid and patch edge")
    blocks = patch_values.T.reshape(n_r, n_c, patch_edge, patch_edge)
    out = np.zeros(shape)
    for dr in range(patch_edge):
        for dc in range(patch_edge):
            out[dr : dr + n_r, dc : dc + n_c] += blocks[:, :, dr, dc]
    return out


def patch_adjoint_accumulate(
    codes: SparseCode, dictionary: Dictionary, shape: tuple[int, int], patch_edge: int
) -> tuple[np.ndarray, np.ndarray]:
    """Scatter reconstructed patches back additively; also the coverage counts.

    Returns (sum of approximated patches placed at their origins, number of
    patches covering each pixel).
    """
    n_r, n_c = shape[0] - patch_edge + 1, shape[1] - patch_edge + 1
    if codes.n_patches != n_r * n_c:
        raise ValueError("code count does not match the number of patch positions")
    if dictionary.patch_dim != patch_edge * patch_edge:
        raise ValueError("dictionary atom length does not match the patch size")
    recon = codes.reconstruct(dictionary)
    return accumulate_patches(recon, shape, patch_edge), patch_count_image(shape, patch_edge)


def _as_atoms(dictionary) -> np.ndarray:
    atoms = dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary, dtype=float)
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
        raise ValueError("dictionary columns must be unit-norm")
    return atoms


def omp_batch(
    dictionary,
    signals: np.ndarray,
    max_atoms: int,
    tol: float | np.ndarray = 0.0,
) -> SparseCode:
    """Code every column of ``signals`` at once.

    ``tol`` bounds the squared residual (scalar or per-signal); coding stops
    per signal when it is reached or ``max_atoms`` atoms are in use.  Ties in
    the correlation argmax resolve to the lowest atom index.
    """
    atoms = _as_atoms(dictionary)
    signals = np.asarray(signals, dtype=float)
    if signals.ndim == 1:
        signals = signals[:, None]
    if not np.all(np.isfinite(signals)):
        raise ValueError("signals must be finite")
    n_dim, n_sig = signals.shape
    n_atoms = atoms.shape[1]
    if atoms.shape[0] != n_dim:
        raise ValueError("signal length does not match atom length")
    if not 1 <= max_atoms <= n_dim:
        raise ValueError(f"max_atoms must be in [1, {n_dim}]")
    tol_arr = np.broadcast_to(np.asarray(tol, dtype=float), (n_sig,)).copy()
    if np.any(tol_arr < 0):
        raise ValueError("tolerance must be nonnegative")

    gram = atoms.T @ atoms
    corr0 = (signals.T @ atoms)  # (S, K) row-major: per-signal rows are contiguous
    norms2 = np.einsum("ij,ij->j", signals, signals)

    indices = np.zeros((n_sig, max_atoms), dtype=np.int64)
    coefficients = np.zeros((n_sig, max_atoms))
    lengths = np.zeros(n_sig, dtype=np.int64)
    resid2 = norms2.copy()
    corr = corr0.copy()
    active = resid2 > tol_arr

    for t in range(max_atoms):
        if not np.any(active):
            break
        act = np.flatnonzero(active)
        sub_corr = np.abs(corr[act])
        best = np.argmax(sub_corr, axis=1)
        # retire signals whose residual is numerically orthogonal to every atom
        scale = np.sqrt(np.maximum(resid2[act], 0.0))
        dead = sub_corr[np.arange(act.size), best] <= 1e-13 * np.maximum(scale, 1e-300)
        if np.any(dead):
            active[act[dead]] = False
            act = act[~dead]
            best = best[~dead]
            if act.size == 0:
                continue
        indices[act, t] = best
        lengths[act] = t + 1
        sel = indices[act, : t + 1]  # (P, t+1)
        gram_sub = gram[sel[:, :, None], sel[:, None, :]]
        h_sub = np.take_along_axis(corr0[act], sel, axis=1)  # (P, t+1)
        try:
            coef = np.linalg.solve(gram_sub, h_sub[..., None])[..., 0]
        except np.linalg.LinAlgError:
            coef = np.stack(
                [np.linalg.lstsq(g, h, rcond=None)[0] for g, h in zip(gram_sub, h_sub)]
            )
        coefficients[act, : t + 1] = coef
        resid2[act] = np.maximum(norms2[act] - np.einsum("pt,pt->p", coef, h_sub), 0.0)
        active[act] = resid2[act] > tol_arr[act]
        if t + 1 == max_atoms:
            break  # no further selection; the correlations are not needed
        refresh = act[active[act]]
        if refresh.size:
            new_corr = corr0[refresh].copy()
            sel_live = indices[refresh, : t + 1]
            coef_live = coefficients[refresh, : t + 1]
            for j in range(t + 1):
                new_corr -= gram[sel_live[:, j]] * coef_live[:, j, None]
            corr[refresh] = new_corr

    return SparseCode(indices, coefficients, lengths, n_atoms)


def omp(dictionary, signal: np.ndarray, max_atoms: int, tol: float = 0.0) -> SparseCode:
    """Code a single signal; returns a one-patch :class:`SparseCode`."""
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise ValueError("signal must be 1-D")
    return omp_batch(dictionary, signal[:, None], max_atoms, tol)


def coding_residual_sq(dictionary: Dictionary, signals: np.ndarray, codes: SparseCode) -> np.ndarray:
    """Per-signal squared representation error ||x - D alpha||^2."""
    diff = signals - codes.reconstruct(dictionary)
    return np.einsum("ij,ij->j", diff, diff)


def _init_atoms(signals: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Seed atoms from distinct nonzero signals, topping up with random unit vectors."""
    n_dim, n_sig = signals.shape
    norms = np.linalg.norm(signals, axis=0)
    usable = np.flatnonzero(norms > 0)
    take = min(n_atoms, usable.size)
    chosen = rng.choice(usable, size=take, replace=False) if take else np.empty(0, dtype=int)
    atoms = np.empty((n_dim, n_atoms))
    if take:
        atoms[:, :take] = signals[:, chosen] / norms[chosen]
    for k in range(take, n_atoms):
        vec = rng.standard_normal(n_dim)
        atoms[:, k] = vec / np.linalg.norm(vec)
    return atoms


def _rank1_fit(
    residual_block: np.ndarray, atom_init: np.ndarray, iterations: int = 15
) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-1 approximation of a residual block, by alternating least squares.

    Starting the alternation from the current atom makes every step, and
    hence the whole atom update, non-increasing in the training objective.
    Returns (unit atom, coefficient row).
    """
    atom = atom_init
    coefs = residual_block.T @ atom
    for _ in range(iterations):
        direction = residual_block @ coefs
        norm = np.linalg.norm(direction)
        if norm <= 0:
            break
        atom = direction / norm
        coefs = residual_block.T @ atom
    return atom, coefs


def train_dictionary(
    patches: PatchSet | np.ndarray,
    n_atoms: int,
    sweeps: int = 5,
    max_atoms: int = 8,
    tol: float | np.ndarray = 0.0,
    seed: int | None = None,
    objective_out: list[float] | None = None,
) -> Dictionary:
    """K-SVD-style alternation: batch OMP coding, then rank-1 atom refits.

    Each sweep recodes every patch (keeping a patch's previous code when it
    represents the patch better, so the training objective never increases),
    then refits each atom and its coefficients to the rank-1 best fit of the
    residual restricted to the patches that use it.  Atoms that fall out of
    use are replaced by the currently worst-represented patch, normalized.

    When ``objective_out`` is given, the total squared representation error
    after each sweep is appended to it.
    """
    signals = patches.patches if isinstance(patches, PatchSet) else np.asarray(patches, dtype=float)
    if signals.ndim != 2 or signals.size == 0:
        raise ValueError("training set must be a nonempty (N, S) matrix")
    if n_atoms < 1:
        raise ValueError("n_atoms must be positive")
    n_dim, n_sig = signals.shape
    if n_sig < n_atoms:
        log.debug("training set smaller than dictionary (%d < %d)", n_sig, n_atoms)
    rng = np.random.default_rng(seed)
    atoms = _init_atoms(signals, n_atoms, rng)
    cap = min(max_atoms, n_dim)

    dense: np.ndarray | None = None  # (K, S) coefficients carried across sweeps
    for _ in range(max(1, sweeps)):
        codes = omp_batch(atoms, signals, cap, tol)
        new_dense = codes.to_dense()
        if dense is not None:
            # keep whichever code represents each patch better
            old_err = _dense_residual_sq(signals, atoms, dense)
            new_err = _dense_residual_sq(signals, atoms, new_dense)
            worse = new_err > old_err
            if np.any(worse):
                new_dense[:, worse] = dense[:, worse]
        dense = new_dense

        residual = signals - atoms @ dense
        for k in range(n_atoms):
            used = np.flatnonzero(dense[k])
            if used.size == 0:
                err = np.einsum("ij,ij->j", residual, residual)
                worst = int(np.argmax(err))
                norm = np.linalg.norm(signals[:, worst])
                if norm > 0:
                    atoms[:, k] = signals[:, worst] / norm
                continue
            patch_err = residual[:, used] + np.outer(atoms[:, k], dense[k, used])
            new_atom, new_coef = _rank1_fit(patch_err, atoms[:, k])
            residual[:, used] = patch_err - np.outer(new_atom, new_coef)
            atoms[:, k] = new_atom
            dense[k, used] = new_coef
        if objective_out is not None:
            objective_out.append(float(np.einsum("ij,ij->", residual, residual)))

    norms = np.linalg.norm(atoms, axis=0)
    atoms = atoms / np.where(norms > 0, norms, 1.0)
    return Dictionary(atoms)


def _dense_residual_sq(signals: np.ndarray, atoms: np.ndarray, dense: np.ndarray) -> np.ndarray:
    diff = signals - atoms @ dense
    return np.einsum("ij,ij->j", diff, diff)


def training_objective(signals: np.ndarray, dictionary: Dictionary, codes: SparseCode) -> float:
    """Total squared representation error of the coded training set."""
    return float(coding_residual_sq(dictionary, signals, codes).sum())


def atom_mosaic(dictionary: Dictionary) -> np.ndarray:
    """Tile atoms as sqrt(N) x sqrt(N) blocks in a near-square grid."""
    edge = int(round(np.sqrt(dictionary.patch_dim)))
    if edge * edge != dictionary.patch_dim:
        raise ValueError("atom length is not a perfect square")
    grid = int(np.ceil(np.sqrt(dictionary.n_atoms)))
    mosaic = np.zeros((grid * edge, grid * edge))
    for k in range(dictionary.n_atoms):
        r, c = divmod(k, grid)
        mosaic[r * edge : (r + 1) * edge, c * edge : (c + 1) * edge] = dictionary.atoms[
            :, k
        ].reshape(edge, edge)
    return mosaic
