import pytest

from mmvfd.backbones import BackendSpec, SyntheticBackend
from mmvfd.ingest import ManifestEntry, VideoManifest


def synthetic_manifest(n_real, n_fake, seed0=0, tag="v", frame_count=48):
    entries = [
        ManifestEntry(f"{tag}-r{i}", "real", "synthetic", f"synthetic:{seed0 + i}", frame_count)
        for i in range(n_real)
    ]
    entries += [
        ManifestEntry(
            f"{tag}-f{i}", "fake", "synthetic", f"synthetic:{seed0 + 10_000 + i}", frame_count
        )
        for i in range(n_fake)
    ]
    return VideoManifest(entries)


@pytest.fixture(scope="session")
def backend():
    return SyntheticBackend(BackendSpec(kind="synthetic", separability=0.8))
