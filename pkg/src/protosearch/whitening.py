"""Embedding whitening: centering, PCA with variance truncation, ICA rotation.

The transform is fit on corpus embeddings only and applied unchanged to
queries. Per-row mapping:

    y = ica_unmixing @ diag(pca_scales) @ pca_components @ (x - mean)

PCA uses the SVD of the centered data with population-convention variance
scaling. ICA is FastICA (logcosh contrast, deflation, max 200 iterations,
tolerance 1e-4) fit on the PCA-whitened data, with the output renormalized to
unit variance afterwards.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from protosearch.io import EmbeddingMatrix, FormatError, ValidationError

TRANSFORM_MAGIC = b"CWWT"
TRANSFORM_VERSION = 1

# Singular values below this fraction of the largest are dropped regardless
# of the explained-variance threshold.
SINGULAR_FLOOR = 1e-8

ICA_MAX_ITER = 200
ICA_TOL = 1e-4


class FitError(ValueError):
    """Whitening could not be fitted (degenerate corpus)."""


@dataclass
class WhiteningTransform:
    mean: np.ndarray                 # (D,)
    pca_components: np.ndarray       # (D', D), orthonormal rows
    pca_scales: np.ndarray           # (D',), positive
    ica_unmixing: np.ndarray         # (D', D')
    input_dim: int
    output_dim: int
    explained_variance_ratio: float
    use_ica: bool
    metadata: dict = field(default_factory=dict)

    def apply_array(self, data: np.ndarray) -> np.ndarray:
        """Transform raw float rows to whitened float64 rows."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.input_dim:
            raise ValidationError(
                f"expected shape (*, {self.input_dim}), got {data.shape}"
            )
        centered = data - self.mean
        whitened = (centered @ self.pca_components.T) * self.pca_scales
        return whitened @ self.ica_unmixing.T


def fit_whitening(corpus: EmbeddingMatrix, threshold: float = 0.96,
                  use_ica: bool = True, seed: int = 0) -> WhiteningTransform:
    """Fit the whitening pipeline on a corpus.

    The output dimension D' is the smallest count of principal components
    whose cumulative explained variance reaches ``threshold``, further capped
    by a numerical floor on singular values.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    if corpus.count < 2:
        raise FitError("need at least 2 rows to fit whitening")

    X = corpus.data64
    n = X.shape[0]
    mean = X.mean(axis=0)
    Xc = X - mean

    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    keep = s > SINGULAR_FLOOR * s[0] if s[0] > 0 else np.zeros(len(s), bool)
    if not keep.any():
        raise FitError("corpus is rank deficient: no dimension survives")

    ev = s**2
    cum = np.cumsum(ev) / ev.sum()
    d_prime = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    d_prime = min(d_prime, int(keep.sum()))

    components = vt[:d_prime].copy()
    # Sign convention: make each component's largest-magnitude coordinate
    # positive so fits are reproducible.
    for row in components:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    scales = np.sqrt(n) / s[:d_prime]  # 1 / sqrt(population variance)

    metadata: dict = {}
    if use_ica:
        whitened = (Xc @ components.T) * scales
        from sklearn.decomposition import FastICA

        ica = FastICA(
            n_components=d_prime,
            algorithm="deflation",
            fun="logcosh",
            whiten=False,
            max_iter=ICA_MAX_ITER,
            tol=ICA_TOL,
            random_state=seed,
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            ica.fit(whitened)
        # deflation-mode FastICA reports exhaustion via n_iter_ only
        converged = int(ica.n_iter_) < ICA_MAX_ITER and not any(
            "did not converge" in str(w.message) for w in caught
        )
        if not converged:
            warnings.warn(
                f"ICA did not converge within {ICA_MAX_ITER} iterations; "
                "using best iterate",
                RuntimeWarning,
                stacklevel=2,
            )
        unmixing = np.asarray(ica.components_, dtype=np.float64)
        # Renormalize each output dimension to unit variance.
        rotated = whitened @ unmixing.T
        std = rotated.std(axis=0)
        std[std == 0] = 1.0
        unmixing = unmixing / std[:, None]
        metadata["ica_converged"] = converged
        metadata["ica_n_iter"] = int(ica.n_iter_)
    else:
        unmixing = np.eye(d_prime)

    return WhiteningTransform(
        mean=mean,
        pca_components=components,
        pca_scales=scales,
        ica_unmixing=unmixing,
        input_dim=X.shape[1],
        output_dim=d_prime,
        explained_variance_ratio=float(threshold),
        use_ica=use_ica,
        metadata=metadata,
    )


def apply_whitening(transform: WhiteningTransform, x: EmbeddingMatrix) -> EmbeddingMatrix:
    """Apply a fitted transform to a matrix, preserving ids and order."""
    if x.dim != transform.input_dim:
        raise ValidationError(
            f"matrix dim {x.dim} != transform input dim {transform.input_dim}"
        )
    if x.count == 0:
        return EmbeddingMatrix(
            np.empty((0, transform.output_dim), dtype=np.float32), []
        )
    out = transform.apply_array(x.data64)
    return EmbeddingMatrix(out.astype(np.float32), x.ids)


def save_transform(transform: WhiteningTransform, path) -> None:
    """Persist a transform as the CWWT binary sidecar."""
    t = transform
    with open(path, "wb") as fh:
        fh.write(TRANSFORM_MAGIC)
        fh.write(struct.pack("<IIIB", TRANSFORM_VERSION, t.input_dim,
                             t.output_dim, 1 if t.use_ica else 0))
        for arr in (t.mean, t.pca_components, t.pca_scales, t.ica_unmixing):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_transform(path) -> WhiteningTransform:
    raw = Path(path).read_bytes()
    if raw[:4] != TRANSFORM_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, d_in, d_out, ica_flag = struct.unpack_from("<IIIB", raw, 4)
    if version != TRANSFORM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IIIB")
    sizes = [d_in, d_out * d_in, d_out, d_out * d_out]
    if len(raw) - offset != sum(sizes) * 8:
        raise FormatError(f"{path}: truncated transform payload")
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(raw, dtype="<f8", count=size, offset=offset).copy())
        offset += size * 8
    mean, components, scales, unmixing = arrays
    return WhiteningTransform(
        mean=mean,
        pca_components=components.reshape(d_out, d_in),
        pca_scales=scales,
        ica_unmixing=unmixing.reshape(d_out, d_out),
        input_dim=d_in,
        output_dim=d_out,
        explained_variance_ratio=1.0,
        use_ica=bool(ica_flag),
    )
