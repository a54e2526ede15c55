"""The ``rcmk`` command line."""
