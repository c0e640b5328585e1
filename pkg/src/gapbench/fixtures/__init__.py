"""Reference external clients shipped with the package."""
