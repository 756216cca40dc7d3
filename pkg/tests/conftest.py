# Tests import helper modules (oracles.py) from this directory; pytest's
# rootdir-based sys.path insertion makes that work without a package marker.
