"""Reference computations used only to check the main implementation."""
