import numpy as np

from .records import DataError

CONTACT_THRESHOLD = 8.0


def contacts_from_coordinates(coords, threshold=CONTACT_THRESHOLD):
    """Binary contact map: 1 where the C-alpha distance is strictly below `threshold` (Å).

    The diagonal is always 1; downstream losses and metrics mask it out.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 3 or len(coords) == 0:
        raise DataError(f"coordinates must be an (n, 3) array with n >= 1, got {coords.shape}")
    if not np.isfinite(coords).all():
        raise DataError("coordinates contain non-finite values")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    return (dist < threshold).astype(np.int8)
