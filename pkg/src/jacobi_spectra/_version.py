__version__ = "0.1.0"


def describe() -> str:
    """git-describe-style version string for manifests."""
    try:
        from importlib.metadata import version

        return "v" + version("jacobi-spectra")
    except Exception:
        return "v" + __version__
