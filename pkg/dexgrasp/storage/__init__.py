"""
On-disk formats: tensor files, episode directories, dataset manifests.
"""

from .episode_io import episode_dir, list_episode_dirs, read_episode, write_episode
from .manifest import compute_manifest, load_manifest, write_manifest
from .tensor_file import open_tensor_memmap, read_tensor, write_tensor

__all__ = [
    "compute_manifest",
    "episode_dir",
    "list_episode_dirs",
    "load_manifest",
    "open_tensor_memmap",
    "read_episode",
    "read_tensor",
    "write_episode",
    "write_manifest",
    "write_tensor",
]
