"""HTTP service wrapping the toolkit; see app.py."""
